//! Model-ready batches: marked input sequences, one marked description per
//! predicate, padding, and attention masks.

use super::{CandidatePair, Dataset};
use crate::encoder::vocab::{Vocab, PAD};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::schema::mark::{mark_description, mark_input, MarkedSequence, SpanRef};
use crate::schema::PredicateSchema;

/// One padded sequence: ids, a mask that is `true` at real positions, and
/// the recorded marker positions (always within the real prefix).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedSeq {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
    pub sub_start: usize,
    pub obj_start: usize,
    pub real_len: usize,
    pub truncated: bool,
}

impl PaddedSeq {
    fn from_marked(seq: MarkedSequence, target_len: usize) -> Self {
        let real_len = seq.ids.len();
        let mut ids = seq.ids;
        ids.resize(target_len, PAD);
        let mut mask = vec![true; real_len];
        mask.resize(target_len, false);
        Self {
            ids,
            mask,
            sub_start: seq.sub_start_pos,
            obj_start: seq.obj_start_pos,
            real_len,
            truncated: seq.truncated,
        }
    }

    pub fn has_padding(&self) -> bool {
        self.real_len < self.ids.len()
    }
}

/// One candidate pair ready for the model: the marked input and one marked
/// filled description per predicate, in schema predicate order.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub pair: CandidatePair,
    pub input: PaddedSeq,
    pub descriptions: Vec<PaddedSeq>,
    pub gold: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

/// Assembles a batch for the given pairs. Inputs are padded to the batch's
/// longest input, descriptions to the longest description; masks exclude
/// the padding. Errors carry the identity of the offending pair.
pub fn make_batch(
    pairs: &[CandidatePair],
    dataset: &Dataset,
    schema: &PredicateSchema,
    vocab: &Vocab,
    enc_cfg: &EncoderConfig,
    desc_max_len: usize,
) -> Result<Batch> {
    let mut inputs = Vec::with_capacity(pairs.len());
    let mut descriptions = Vec::with_capacity(pairs.len());

    for pair in pairs {
        let instance = dataset.get(&pair.instance_id).ok_or_else(|| {
            Error::Contract(format!("pair references unknown instance '{}'", pair.instance_id))
        })?;
        let with_pair = |e: Error| {
            Error::Input(format!(
                "pair ({}, {}, {}): {e}",
                pair.instance_id, pair.subject_mention, pair.object_mention
            ))
        };
        let subject = &instance.mentions[pair.subject_mention];
        let object = &instance.mentions[pair.object_mention];
        let marked_input = mark_input(
            &instance.tokens,
            SpanRef {
                start: subject.start,
                end: subject.end,
                entity_type: &subject.entity_type,
            },
            SpanRef {
                start: object.start,
                end: object.end,
                entity_type: &object.entity_type,
            },
            vocab,
            enc_cfg.max_len,
        )
        .map_err(with_pair)?;

        let subject_span = instance.tokens[subject.start..subject.end].join(" ");
        let object_span = instance.tokens[object.start..object.end].join(" ");
        let mut per_predicate = Vec::with_capacity(schema.n_predicates());
        for predicate in schema.predicates() {
            let filled = schema
                .fill_template(
                    predicate,
                    &subject_span,
                    &object_span,
                    &subject.entity_type,
                    &object.entity_type,
                )
                .map_err(with_pair)?;
            let marked = mark_description(&filled, vocab, desc_max_len).map_err(with_pair)?;
            per_predicate.push(marked);
        }
        inputs.push(marked_input);
        descriptions.push(per_predicate);
    }

    let input_len = inputs.iter().map(|s| s.ids.len()).max().unwrap_or(0);
    let desc_len = descriptions
        .iter()
        .flatten()
        .map(|s| s.ids.len())
        .max()
        .unwrap_or(0);

    let items = pairs
        .iter()
        .zip(inputs.into_iter().zip(descriptions))
        .map(|(pair, (input, descs))| BatchItem {
            pair: pair.clone(),
            input: PaddedSeq::from_marked(input, input_len),
            descriptions: descs
                .into_iter()
                .map(|d| PaddedSeq::from_marked(d, desc_len))
                .collect(),
            gold: pair.label,
        })
        .collect();
    Ok(Batch { items })
}
