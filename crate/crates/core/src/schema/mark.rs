//! Wrapping subject/object spans with typed entity markers.
//!
//! Both the input text and each filled description go through the same
//! machinery: the subject span is wrapped in `[SUB:t]`/`[/SUB:t]`, the
//! object span in `[OBJ:t]`/`[/OBJ:t]`, then `[CLS]`/`[SEP]` are added.
//! Sequences that exceed the length budget are truncated to a window
//! around the two marked spans; the spans themselves are never cut.

use super::FilledDescription;
use crate::encoder::vocab::{self, MarkerRole, Vocab};
use crate::error::{Error, Result};

/// A token-id sequence ready for the encoder, with the positions of the
/// subject/object start markers recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedSequence {
    pub ids: Vec<u32>,
    pub sub_start_pos: usize,
    pub obj_start_pos: usize,
    pub truncated: bool,
}

/// A token span with its entity type, end exclusive.
#[derive(Debug, Clone, Copy)]
pub struct SpanRef<'a> {
    pub start: usize,
    pub end: usize,
    pub entity_type: &'a str,
}

/// Marks the subject and object spans of an already-tokenized input.
pub fn mark_input(
    tokens: &[String],
    subject: SpanRef<'_>,
    object: SpanRef<'_>,
    vocab: &Vocab,
    max_len: usize,
) -> Result<MarkedSequence> {
    for span in [&subject, &object] {
        if span.start >= span.end || span.end > tokens.len() {
            return Err(Error::Input(format!(
                "span {}..{} out of range for {} tokens",
                span.start,
                span.end,
                tokens.len()
            )));
        }
    }
    if subject.start < object.end && object.start < subject.end {
        return Err(Error::Input(format!(
            "subject span {}..{} overlaps object span {}..{}",
            subject.start, subject.end, object.start, object.end
        )));
    }

    let sub_ids: Vec<u32> = tokens[subject.start..subject.end]
        .iter()
        .map(|t| vocab.id_of(t))
        .collect();
    let obj_ids: Vec<u32> = tokens[object.start..object.end]
        .iter()
        .map(|t| vocab.id_of(t))
        .collect();

    let (first, second, subject_first) = if subject.start < object.start {
        (&subject, &object, true)
    } else {
        (&object, &subject, false)
    };
    let to_ids = |range: std::ops::Range<usize>| -> Vec<u32> {
        tokens[range].iter().map(|t| vocab.id_of(t)).collect()
    };

    let pre = to_ids(0..first.start);
    let mid = to_ids(first.end..second.start);
    let post = to_ids(second.end..tokens.len());
    let (first_span_ids, second_span_ids) = if subject_first {
        (sub_ids, obj_ids)
    } else {
        (obj_ids, sub_ids)
    };

    assemble(
        pre,
        first_span_ids,
        mid,
        second_span_ids,
        post,
        subject_first,
        subject.entity_type,
        object.entity_type,
        vocab,
        max_len,
    )
}

/// Marks the inserted spans of a filled description. Slot positions come
/// from the filling step as byte ranges, so repeated span text cannot
/// confuse the marking.
pub fn mark_description(
    filled: &FilledDescription,
    vocab: &Vocab,
    max_len: usize,
) -> Result<MarkedSequence> {
    let (first_range, second_range, subject_first) =
        if filled.subject_range.start <= filled.object_range.start {
            (&filled.subject_range, &filled.object_range, true)
        } else {
            (&filled.object_range, &filled.subject_range, false)
        };
    let text = &filled.text;
    let pre = vocab::tokenize_raw(&text[..first_range.start]);
    let first_span = vocab::tokenize_raw(&text[first_range.clone()]);
    let mid = vocab::tokenize_raw(&text[first_range.end..second_range.start]);
    let second_span = vocab::tokenize_raw(&text[second_range.clone()]);
    let post = vocab::tokenize_raw(&text[second_range.end..]);

    if first_span.is_empty() || second_span.is_empty() {
        return Err(Error::Input(
            "description span is empty after tokenization".to_string(),
        ));
    }

    let to_ids = |toks: Vec<String>| -> Vec<u32> { toks.iter().map(|t| vocab.id_of(t)).collect() };
    assemble(
        to_ids(pre),
        to_ids(first_span),
        to_ids(mid),
        to_ids(second_span),
        to_ids(post),
        subject_first,
        &filled.subject_type,
        &filled.object_type,
        vocab,
        max_len,
    )
}

/// Removes `[CLS]`, `[SEP]`, and all marker tokens, recovering the plain
/// token-id stream. Only meaningful for untruncated sequences.
pub fn strip_markers(seq: &MarkedSequence, vocab: &Vocab) -> Vec<u32> {
    seq.ids[1..seq.ids.len() - 1]
        .iter()
        .copied()
        .filter(|&id| !vocab.is_marker(id))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    pre: Vec<u32>,
    first_span: Vec<u32>,
    mid: Vec<u32>,
    second_span: Vec<u32>,
    post: Vec<u32>,
    subject_first: bool,
    subject_type: &str,
    object_type: &str,
    vocab: &Vocab,
    max_len: usize,
) -> Result<MarkedSequence> {
    let (sub_open, sub_close) = vocab.marker_ids(MarkerRole::Subject, subject_type)?;
    let (obj_open, obj_close) = vocab.marker_ids(MarkerRole::Object, object_type)?;
    let (first_markers, second_markers) = if subject_first {
        ((sub_open, sub_close), (obj_open, obj_close))
    } else {
        ((obj_open, obj_close), (sub_open, sub_close))
    };

    let mut ids = Vec::with_capacity(
        pre.len() + first_span.len() + mid.len() + second_span.len() + post.len() + 4,
    );
    ids.extend_from_slice(&pre);
    let first_open_pos = ids.len();
    ids.push(first_markers.0);
    ids.extend_from_slice(&first_span);
    ids.push(first_markers.1);
    ids.extend_from_slice(&mid);
    let second_open_pos = ids.len();
    ids.push(second_markers.0);
    ids.extend_from_slice(&second_span);
    let second_close_pos = ids.len();
    ids.push(second_markers.1);
    ids.extend_from_slice(&post);

    let (mut sub_pos, mut obj_pos) = if subject_first {
        (first_open_pos, second_open_pos)
    } else {
        (second_open_pos, first_open_pos)
    };

    if max_len < 8 {
        return Err(Error::Input(format!("max_len {max_len} is too small")));
    }
    let budget = max_len - 2; // room for [CLS]/[SEP]
    let mut truncated = false;
    if ids.len() > budget {
        let lo = first_open_pos;
        let hi = second_close_pos;
        let core = hi - lo + 1;
        if core > budget {
            return Err(Error::Input(format!(
                "marked spans alone span {core} tokens, over the {budget} budget"
            )));
        }
        let extra = budget - core;
        let left_avail = lo;
        let right_avail = ids.len() - 1 - hi;
        let mut left = (extra / 2).min(left_avail);
        let right = (extra - left).min(right_avail);
        left = (extra - right).min(left_avail);
        let window_start = lo - left;
        ids = ids[window_start..=hi + right].to_vec();
        sub_pos -= window_start;
        obj_pos -= window_start;
        truncated = true;
    }

    let mut full = Vec::with_capacity(ids.len() + 2);
    full.push(vocab::CLS);
    full.extend_from_slice(&ids);
    full.push(vocab::SEP);

    Ok(MarkedSequence {
        ids: full,
        sub_start_pos: sub_pos + 1,
        obj_start_pos: obj_pos + 1,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::vocab::{Vocab, CLS, SEP};
    use crate::schema::PredicateSchema;

    fn fixture() -> (PredicateSchema, Vocab) {
        let schema = PredicateSchema::parse_str(
            "[predicates]\nNULL\nTREATS\n[entity_types]\nX\nY\nChemical\nDisease\n[templates]\n\
             NULL = there are no relations between the @subject@ and @object@.\n\
             TREATS|Chemical|Disease = applies a @subject@ remedy with the object of effecting a cure or managing a @object@ condition.\n",
        )
        .unwrap();
        let seq: Vec<String> = ["a", "b", "c", "tamoxifen", "breast", "cancer"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let vocab = Vocab::build([seq.as_slice()], &schema, 1);
        (schema, vocab)
    }

    fn toks(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn constructive_marking() {
        let (_, vocab) = fixture();
        let tokens = toks(&["a", "b", "c"]);
        let seq = mark_input(
            &tokens,
            SpanRef { start: 0, end: 1, entity_type: "X" },
            SpanRef { start: 2, end: 3, entity_type: "Y" },
            &vocab,
            32,
        )
        .unwrap();
        let (sub_open, sub_close) = vocab.marker_ids(MarkerRole::Subject, "X").unwrap();
        let (obj_open, obj_close) = vocab.marker_ids(MarkerRole::Object, "Y").unwrap();
        let expected = vec![
            CLS,
            sub_open,
            vocab.id_of("a"),
            sub_close,
            vocab.id_of("b"),
            obj_open,
            vocab.id_of("c"),
            obj_close,
            SEP,
        ];
        assert_eq!(seq.ids, expected);
        assert_eq!(seq.sub_start_pos, 1);
        assert_eq!(seq.obj_start_pos, 5);
        assert!(!seq.truncated);
    }

    #[test]
    fn object_before_subject_keeps_roles() {
        let (_, vocab) = fixture();
        let tokens = toks(&["a", "b", "c"]);
        let seq = mark_input(
            &tokens,
            SpanRef { start: 2, end: 3, entity_type: "X" },
            SpanRef { start: 0, end: 1, entity_type: "Y" },
            &vocab,
            32,
        )
        .unwrap();
        let (sub_open, _) = vocab.marker_ids(MarkerRole::Subject, "X").unwrap();
        let (obj_open, _) = vocab.marker_ids(MarkerRole::Object, "Y").unwrap();
        assert_eq!(seq.ids[seq.sub_start_pos], sub_open);
        assert_eq!(seq.ids[seq.obj_start_pos], obj_open);
        assert!(seq.obj_start_pos < seq.sub_start_pos, "markers follow text order");
    }

    #[test]
    fn overlap_rejected() {
        let (_, vocab) = fixture();
        let tokens = toks(&["a", "b", "c"]);
        let err = mark_input(
            &tokens,
            SpanRef { start: 0, end: 2, entity_type: "X" },
            SpanRef { start: 1, end: 3, entity_type: "Y" },
            &vocab,
            32,
        )
        .unwrap_err();
        assert!(err.to_string().contains("overlaps"));
    }

    #[test]
    fn strip_markers_roundtrip() {
        let (_, vocab) = fixture();
        let tokens = toks(&["a", "b", "c", "cancer", "b"]);
        let seq = mark_input(
            &tokens,
            SpanRef { start: 1, end: 2, entity_type: "X" },
            SpanRef { start: 3, end: 4, entity_type: "Y" },
            &vocab,
            32,
        )
        .unwrap();
        let stripped = strip_markers(&seq, &vocab);
        let original: Vec<u32> = tokens.iter().map(|t| vocab.id_of(t)).collect();
        assert_eq!(stripped, original);
    }

    #[test]
    fn truncation_preserves_both_spans() {
        let (_, vocab) = fixture();
        let mut tokens = vec!["a".to_string(); 40];
        tokens[18] = "b".to_string();
        tokens[21] = "c".to_string();
        let seq = mark_input(
            &tokens,
            SpanRef { start: 18, end: 19, entity_type: "X" },
            SpanRef { start: 21, end: 22, entity_type: "Y" },
            &vocab,
            16,
        )
        .unwrap();
        assert!(seq.truncated);
        assert_eq!(seq.ids.len(), 16);
        let (sub_open, _) = vocab.marker_ids(MarkerRole::Subject, "X").unwrap();
        let (obj_open, _) = vocab.marker_ids(MarkerRole::Object, "Y").unwrap();
        assert_eq!(seq.ids[seq.sub_start_pos], sub_open);
        assert_eq!(seq.ids[seq.obj_start_pos], obj_open);
        assert_eq!(seq.ids[seq.sub_start_pos + 1], vocab.id_of("b"));
        assert_eq!(seq.ids[seq.obj_start_pos + 1], vocab.id_of("c"));
    }

    #[test]
    fn spans_over_budget_rejected() {
        let (_, vocab) = fixture();
        let tokens = vec!["a".to_string(); 30];
        let err = mark_input(
            &tokens,
            SpanRef { start: 0, end: 12, entity_type: "X" },
            SpanRef { start: 14, end: 26, entity_type: "Y" },
            &vocab,
            16,
        )
        .unwrap_err();
        assert!(err.to_string().contains("budget"));
    }

    #[test]
    fn description_marking_walkthrough() {
        let (schema, vocab) = fixture();
        let filled = schema
            .fill_template("TREATS", "tamoxifen", "breast cancer", "Chemical", "Disease")
            .unwrap();
        let seq = mark_description(&filled, &vocab, 64).unwrap();
        let (sub_open, sub_close) = vocab.marker_ids(MarkerRole::Subject, "Chemical").unwrap();
        assert_eq!(seq.ids[seq.sub_start_pos], sub_open);
        assert_eq!(seq.ids[seq.sub_start_pos + 1], vocab.id_of("tamoxifen"));
        assert_eq!(seq.ids[seq.sub_start_pos + 2], sub_close);
        // object span is two tokens
        assert_eq!(seq.ids[seq.obj_start_pos + 1], vocab.id_of("breast"));
        assert_eq!(seq.ids[seq.obj_start_pos + 2], vocab.id_of("cancer"));
        assert!(!seq.truncated);
        assert_eq!(seq.ids[0], CLS);
        assert_eq!(*seq.ids.last().unwrap(), SEP);
    }

    #[test]
    fn null_description_marks_like_any_other() {
        let (schema, vocab) = fixture();
        let filled = schema
            .fill_template("NULL", "tamoxifen", "cancer", "Chemical", "Disease")
            .unwrap();
        let seq = mark_description(&filled, &vocab, 64).unwrap();
        let (sub_open, _) = vocab.marker_ids(MarkerRole::Subject, "Chemical").unwrap();
        let (obj_open, _) = vocab.marker_ids(MarkerRole::Object, "Disease").unwrap();
        assert_eq!(seq.ids[seq.sub_start_pos], sub_open);
        assert_eq!(seq.ids[seq.obj_start_pos], obj_open);
    }

    #[test]
    fn oversized_description_spans_rejected() {
        let (schema, vocab) = fixture();
        let long_span = vec!["cancer"; 40].join(" ");
        let filled = schema
            .fill_template("NULL", &long_span, "cancer", "Chemical", "Disease")
            .unwrap();
        let err = mark_description(&filled, &vocab, 16).unwrap_err();
        assert!(err.to_string().contains("budget"));
    }
}
