//! Dual-encoder relation extraction with instance-adapted predicate
//! descriptions.
//!
//! The crate trains a two-stream encoder model: one encoder reads the input
//! text with typed entity markers around the candidate subject/object pair,
//! the other reads one predicate description per relation type, with the
//! entity spans from the input inserted into the description's slots. The
//! model is trained with a joint contrastive + cross-entropy objective and
//! predicts by cosine-matching the pair representation against every
//! description representation.
//!
//! Module map:
//!
//! - [`tensor`]: dense f64 tensors with tape-based reverse-mode autodiff
//! - [`encoder`]: vocabulary, word-level tokenizer, toy transformer encoder
//! - [`schema`]: predicate schema, description templates, entity marking
//! - [`data`]: JSONL dataset parsing, candidate-pair generation, batching
//! - [`model`]: the dual-encoder architecture, losses, and inference
//! - [`train`]: optimization loop, micro-F1 evaluation, sweeps and ablations
//! - [`checkpoint`]: self-describing model serialization
//! - [`synthetic`]: seeded cue-word corpus generator for smoke testing

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod model;
pub mod schema;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
