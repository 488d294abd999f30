//! Vocabulary with reserved tokens and typed entity markers.
//!
//! Ids are dense and 0-based with `[PAD] = 0`. Ordinary tokens are stored
//! lowercased; marker tokens keep their exact `[SUB:Type]` spelling and are
//! only ever inserted by id, never produced by the tokenizer.

use crate::error::{Error, Result};
use crate::schema::PredicateSchema;
use std::collections::{HashMap, HashSet};
use std::path::Path;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;

const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Whether a marker opens or closes the subject or the object span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerRole {
    Subject,
    Object,
}

pub fn marker_token(role: MarkerRole, close: bool, entity_type: &str) -> String {
    let tag = match role {
        MarkerRole::Subject => "SUB",
        MarkerRole::Object => "OBJ",
    };
    if close {
        format!("[/{tag}:{entity_type}]")
    } else {
        format!("[{tag}:{entity_type}]")
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    marker_ids: HashSet<u32>,
}

impl Vocab {
    /// Builds a vocabulary over corpus token sequences plus every schema
    /// template's text, keeping tokens whose total count reaches
    /// `min_freq`. Reserved tokens and the four markers per entity type are
    /// always present. Ordering is deterministic: reserved, markers in
    /// schema order, then tokens by frequency (descending) and
    /// lexicographically.
    pub fn build<'a, I>(corpus: I, schema: &PredicateSchema, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seq in corpus {
            for token in seq {
                *counts.entry(token.to_lowercase()).or_insert(0) += 1;
            }
        }
        // Template words must be representable too, or every description
        // would collapse to [UNK] streams. Slots are blanked before
        // counting.
        for template in schema.templates() {
            let neutral = template.fill(" ", " ", "", "").text;
            for token in tokenize_raw(&neutral) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }

        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq)
            .collect();
        kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));

        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for ty in schema.entity_types() {
            for role in [MarkerRole::Subject, MarkerRole::Object] {
                for close in [false, true] {
                    tokens.push(marker_token(role, close, ty));
                }
            }
        }
        let special: HashSet<String> = tokens.iter().cloned().collect();
        for (token, _) in kept {
            if !special.contains(&token) {
                tokens.push(token);
            }
        }
        Self::from_tokens(tokens).expect("construction preserves invariants")
    }

    /// Builds from an explicit id-ordered token list, validating density
    /// (injective token → id) and the reserved prefix.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() {
            return Err(Error::Input(format!(
                "vocabulary needs at least the {} reserved tokens",
                RESERVED.len()
            )));
        }
        for (i, reserved) in RESERVED.iter().enumerate() {
            if tokens[i] != *reserved {
                return Err(Error::Input(format!(
                    "vocabulary id {i} must be {reserved}, got '{}'",
                    tokens[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        let mut marker_ids = HashSet::new();
        for (i, token) in tokens.iter().enumerate() {
            if token.is_empty() || token.chars().any(|c| c == '\n' || c == '\r') {
                return Err(Error::Input(format!("invalid vocabulary token at id {i}")));
            }
            if index.insert(token.clone(), i as u32).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary token '{token}'")));
            }
            if is_marker_spelling(token) {
                marker_ids.insert(i as u32);
            }
        }
        Ok(Self {
            tokens,
            index,
            marker_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of an ordinary token (lowercased first), or `[UNK]`.
    pub fn id_of(&self, token: &str) -> u32 {
        let lower = token.to_lowercase();
        self.index.get(lower.as_str()).copied().unwrap_or(UNK)
    }

    /// Exact-spelling lookup, no lowercasing, no UNK fallback.
    pub fn exact_id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn is_marker(&self, id: u32) -> bool {
        self.marker_ids.contains(&id)
    }

    /// The (open, close) marker ids for a role and entity type.
    pub fn marker_ids(&self, role: MarkerRole, entity_type: &str) -> Result<(u32, u32)> {
        let open = marker_token(role, false, entity_type);
        let close = marker_token(role, true, entity_type);
        match (self.exact_id(&open), self.exact_id(&close)) {
            (Some(o), Some(c)) => Ok((o, c)),
            _ => Err(Error::Schema(format!(
                "vocabulary has no markers for entity type '{entity_type}'"
            ))),
        }
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for token in &self.tokens {
            out.push_str(token);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

fn is_marker_spelling(token: &str) -> bool {
    (token.starts_with("[SUB:")
        || token.starts_with("[/SUB:")
        || token.starts_with("[OBJ:")
        || token.starts_with("[/OBJ:"))
        && token.ends_with(']')
}

/// Word-level tokenization: lowercase, whitespace split, every ASCII
/// punctuation character detached as its own token. Rejects input that is
/// empty after trimming.
pub fn tokenize(text: &str) -> Result<Vec<String>> {
    if text.trim().is_empty() {
        return Err(Error::Input("cannot tokenize empty text".to_string()));
    }
    Ok(tokenize_raw(text))
}

/// Like [`tokenize`] but maps empty input to an empty token list; used for
/// template segments that may legitimately be empty.
pub(crate) fn tokenize_raw(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.to_lowercase().chars() {
            if ch.is_ascii_punctuation() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}
