//! Dataset parsing, candidate-pair generation, and batch assembly.
//!
//! On disk a dataset is JSONL, one instance per line:
//!
//! ```json
//! {"id": "doc1", "tokens": ["tamoxifen", "treats", "cancer"],
//!  "mentions": [[0, 1, "Chemical"], [2, 3, "Disease"]],
//!  "relations": [[0, 1, "TREATS"]]}
//! ```
//!
//! Spans are token-level with exclusive ends; relations refer to mention
//! indices. Every violation is reported with its line number.

pub mod batch;

pub use batch::{make_batch, Batch, BatchItem, PaddedSeq};

use crate::error::{Error, LineViolation, Result};
use crate::schema::{PredicateSchema, NULL_PREDICATE};
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

/// One entity mention as a token span, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

/// One gold relation between two mentions of the same instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub subject: usize,
    pub object: usize,
    pub predicate: String,
}

/// One text with its mentions and gold relations; the unit of ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct REInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
    pub gold: Vec<Relation>,
}

/// One ordered (subject, object) mention pair with its label, the unit of
/// classification. `label` indexes the schema's predicate list; 0 is NULL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePair {
    pub instance_id: String,
    pub subject_mention: usize,
    pub object_mention: usize,
    pub label: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInstance {
    id: String,
    tokens: Vec<String>,
    mentions: Vec<(usize, usize, String)>,
    relations: Vec<(usize, usize, String)>,
}

/// A parsed dataset with id-based lookup.
#[derive(Debug, Clone)]
pub struct Dataset {
    instances: Vec<REInstance>,
    by_id: HashMap<String, usize>,
}

impl Dataset {
    /// Parses and validates a JSONL file against a schema. All violations
    /// are collected; any violation fails the whole load.
    pub fn load(path: &Path, schema: &PredicateSchema) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, schema)
    }

    pub fn parse_str(text: &str, schema: &PredicateSchema) -> Result<Self> {
        let mut violations = Vec::new();
        let mut instances = Vec::new();
        let mut by_id = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawInstance = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    violations.push(LineViolation {
                        line: line_no,
                        message: format!("malformed JSON: {e}"),
                    });
                    continue;
                }
            };
            let instance = REInstance {
                id: raw.id,
                tokens: raw.tokens,
                mentions: raw
                    .mentions
                    .into_iter()
                    .map(|(start, end, entity_type)| Mention {
                        start,
                        end,
                        entity_type,
                    })
                    .collect(),
                gold: raw
                    .relations
                    .into_iter()
                    .map(|(subject, object, predicate)| Relation {
                        subject,
                        object,
                        predicate,
                    })
                    .collect(),
            };
            let mut bad = false;
            for message in validate_instance(&instance, schema) {
                violations.push(LineViolation {
                    line: line_no,
                    message,
                });
                bad = true;
            }
            if by_id.contains_key(&instance.id) {
                violations.push(LineViolation {
                    line: line_no,
                    message: format!("duplicate instance id '{}'", instance.id),
                });
                bad = true;
            }
            if !bad {
                by_id.insert(instance.id.clone(), instances.len());
                instances.push(instance);
            }
        }
        if !violations.is_empty() {
            return Err(Error::DataViolations(violations));
        }
        Ok(Self { instances, by_id })
    }

    pub fn from_instances(instances: Vec<REInstance>, schema: &PredicateSchema) -> Result<Self> {
        let mut text = String::new();
        for inst in &instances {
            text.push_str(&to_json_line(inst)?);
            text.push('\n');
        }
        Self::parse_str(&text, schema)
    }

    pub fn instances(&self) -> &[REInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&REInstance> {
        self.by_id.get(id).map(|&i| &self.instances[i])
    }

    /// All candidate pairs of every instance, without subsampling; this is
    /// what evaluation must see.
    pub fn all_pairs(&self, schema: &PredicateSchema) -> Vec<CandidatePair> {
        self.instances
            .iter()
            .flat_map(|inst| generate_pairs(inst, schema, None, 0))
            .collect()
    }

    /// Ordered (subject type, object type) pairs that appear in gold
    /// relations; the opt-in type filter for candidate generation.
    pub fn gold_type_pairs(&self) -> HashSet<(String, String)> {
        let mut out = HashSet::new();
        for inst in &self.instances {
            for rel in &inst.gold {
                out.insert((
                    inst.mentions[rel.subject].entity_type.clone(),
                    inst.mentions[rel.object].entity_type.clone(),
                ));
            }
        }
        out
    }
}

/// All structural problems of one instance, as human-readable messages.
fn validate_instance(inst: &REInstance, schema: &PredicateSchema) -> Vec<String> {
    let mut problems = Vec::new();
    if inst.id.is_empty() {
        problems.push("instance id is empty".to_string());
    }
    if inst.tokens.is_empty() {
        problems.push(format!("instance '{}' has no tokens", inst.id));
    }
    for (i, t) in inst.tokens.iter().enumerate() {
        if t.is_empty() || t.chars().any(char::is_whitespace) {
            problems.push(format!(
                "instance '{}': token {i} is empty or contains whitespace",
                inst.id
            ));
        }
    }
    for (i, m) in inst.mentions.iter().enumerate() {
        if m.start >= m.end || m.end > inst.tokens.len() {
            problems.push(format!(
                "instance '{}': mention {i} span {}..{} out of range for {} tokens",
                inst.id,
                m.start,
                m.end,
                inst.tokens.len()
            ));
        }
        if !schema.has_entity_type(&m.entity_type) {
            problems.push(format!(
                "instance '{}': mention {i} has unknown entity type '{}'",
                inst.id, m.entity_type
            ));
        }
    }
    let mut seen = HashSet::new();
    for (i, r) in inst.gold.iter().enumerate() {
        if r.subject >= inst.mentions.len() || r.object >= inst.mentions.len() {
            problems.push(format!(
                "instance '{}': relation {i} references mention out of range",
                inst.id
            ));
            continue;
        }
        if r.subject == r.object {
            problems.push(format!(
                "instance '{}': relation {i} relates mention {} to itself",
                inst.id, r.subject
            ));
        }
        match schema.predicate_index(&r.predicate) {
            None => problems.push(format!(
                "instance '{}': relation {i} has unknown predicate '{}'",
                inst.id, r.predicate
            )),
            Some(0) => problems.push(format!(
                "instance '{}': relation {i} uses {NULL_PREDICATE} explicitly; unlabeled pairs are {NULL_PREDICATE} by construction",
                inst.id
            )),
            Some(_) => {}
        }
        if !seen.insert((r.subject, r.object)) {
            problems.push(format!(
                "instance '{}': duplicate gold pair ({}, {}); one predicate per pair",
                inst.id, r.subject, r.object
            ));
        }
    }
    problems
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// All ordered pairs of distinct mentions. Pairs found in gold carry
/// their predicate; the rest are NULL. With `null_cap = Some(c)` the NULL
/// pairs are uniformly subsampled down to `c × (number of labeled pairs)`,
/// deterministically for a given seed; evaluation must pass `None`.
pub fn generate_pairs(
    instance: &REInstance,
    schema: &PredicateSchema,
    null_cap: Option<usize>,
    seed: u64,
) -> Vec<CandidatePair> {
    let gold: HashMap<(usize, usize), usize> = instance
        .gold
        .iter()
        .map(|r| {
            (
                (r.subject, r.object),
                schema
                    .predicate_index(&r.predicate)
                    .expect("validated at parse time"),
            )
        })
        .collect();

    let mut labeled = Vec::new();
    let mut nulls = Vec::new();
    let n = instance.mentions.len();
    for s in 0..n {
        for o in 0..n {
            if s == o {
                continue;
            }
            let pair = CandidatePair {
                instance_id: instance.id.clone(),
                subject_mention: s,
                object_mention: o,
                label: gold.get(&(s, o)).copied().unwrap_or(0),
            };
            if pair.label == 0 {
                nulls.push(pair);
            } else {
                labeled.push(pair);
            }
        }
    }

    if let Some(cap_factor) = null_cap {
        let cap = cap_factor * labeled.len();
        if nulls.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(instance.id.as_bytes()));
            let mut keep: Vec<usize> = sample(&mut rng, nulls.len(), cap).into_vec();
            keep.sort_unstable();
            nulls = keep.into_iter().map(|i| nulls[i].clone()).collect();
        }
    }

    // back to enumeration order
    let mut out = labeled;
    out.extend(nulls);
    out.sort_by_key(|p| (p.subject_mention, p.object_mention));
    out
}

/// Drops pairs whose (subject type, object type) never occurs in the gold
/// training relations. Opt-in; changes both training and evaluation pair
/// spaces when enabled.
pub fn filter_pairs_by_type(
    pairs: Vec<CandidatePair>,
    dataset: &Dataset,
    allowed: &HashSet<(String, String)>,
) -> Vec<CandidatePair> {
    pairs
        .into_iter()
        .filter(|p| {
            let inst = dataset.get(&p.instance_id).expect("pair from this dataset");
            let key = (
                inst.mentions[p.subject_mention].entity_type.clone(),
                inst.mentions[p.object_mention].entity_type.clone(),
            );
            allowed.contains(&key)
        })
        .collect()
}

fn to_json_line(inst: &REInstance) -> Result<String> {
    let raw = RawInstance {
        id: inst.id.clone(),
        tokens: inst.tokens.clone(),
        mentions: inst
            .mentions
            .iter()
            .map(|m| (m.start, m.end, m.entity_type.clone()))
            .collect(),
        relations: inst
            .gold
            .iter()
            .map(|r| (r.subject, r.object, r.predicate.clone()))
            .collect(),
    };
    Ok(serde_json::to_string(&raw)?)
}

/// Writes instances in the JSONL dataset format.
pub fn write_jsonl(instances: &[REInstance], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for inst in instances {
        writeln!(file, "{}", to_json_line(inst)?)?;
    }
    Ok(())
}
