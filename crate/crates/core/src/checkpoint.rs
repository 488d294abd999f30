//! Self-describing checkpoint files.
//!
//! A checkpoint is one JSON document holding the encoder and model
//! configurations, the schema, the vocabulary, and every named parameter
//! array. Loading rebuilds the model bit-exactly: 64-bit floats survive
//! the JSON round trip unchanged, and serialization order is fixed, so
//! identical models produce identical bytes.

use crate::encoder::{EncoderConfig, Vocab};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::schema::PredicateSchema;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "redual.checkpoint";
const VERSION: u32 = 1;

/// A complete, reloadable model: configs, schema, vocabulary, parameters.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub enc_cfg: EncoderConfig,
    pub model_cfg: ModelConfig,
    pub schema: PredicateSchema,
    pub vocab: Vocab,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SchemaParts {
    predicates: Vec<String>,
    entity_types: Vec<String>,
    templates: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    encoder: EncoderConfig,
    model: ModelConfig,
    n_predicates: usize,
    schema: SchemaParts,
    vocab: Vec<String>,
    params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        self.params.visit(&mut |name, tensor| {
            entries.push(ParamEntry {
                name,
                shape: tensor.shape().to_vec(),
                data: tensor.data().to_vec(),
            });
        });
        let file = CheckpointFile {
            format: FORMAT.to_string(),
            version: VERSION,
            encoder: self.enc_cfg.clone(),
            model: self.model_cfg.clone(),
            n_predicates: self.params.n_predicates,
            schema: SchemaParts {
                predicates: self.schema.predicates().to_vec(),
                entity_types: self.schema.entity_types().to_vec(),
                templates: self
                    .schema
                    .templates()
                    .iter()
                    .map(|t| (t.key.render(), t.text.clone()))
                    .collect(),
            },
            vocab: self.vocab.tokens().to_vec(),
            params: entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&file)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_slice(bytes)?;
        if file.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "not a checkpoint: format '{}'",
                file.format
            )));
        }
        if file.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        let schema = PredicateSchema::from_parts(
            file.schema.predicates,
            file.schema.entity_types,
            file.schema.templates,
        )?;
        let vocab = Vocab::from_tokens(file.vocab)?;
        if file.n_predicates != schema.n_predicates() {
            return Err(Error::Checkpoint(format!(
                "checkpoint says {} predicates, schema has {}",
                file.n_predicates,
                schema.n_predicates()
            )));
        }

        // materialize an empty skeleton, then fill every tensor by name
        let mut params = skeleton(&file.encoder, &file.model, file.n_predicates);
        let mut by_name: std::collections::HashMap<String, ParamEntry> = file
            .params
            .into_iter()
            .map(|e| (e.name.clone(), e))
            .collect();
        let mut missing = Vec::new();
        params.visit_mut(&mut |name, tensor| match by_name.remove(&name) {
            Some(entry) => {
                if entry.shape != tensor.shape() {
                    missing.push(format!(
                        "parameter '{name}': shape {:?} does not match expected {:?}",
                        entry.shape,
                        tensor.shape()
                    ));
                } else {
                    *tensor = Tensor::new(entry.shape, entry.data)
                        .expect("validated shape")
                        .with_grad();
                }
            }
            None => missing.push(format!("parameter '{name}' missing from checkpoint")),
        });
        if !missing.is_empty() {
            return Err(Error::Checkpoint(missing.join("; ")));
        }
        if !by_name.is_empty() {
            let extra: Vec<String> = by_name.keys().cloned().collect();
            return Err(Error::Checkpoint(format!(
                "checkpoint has unexpected parameters: {}",
                extra.join(", ")
            )));
        }
        Ok(Self {
            enc_cfg: file.encoder,
            model_cfg: file.model,
            schema,
            vocab,
            params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

/// Zero-valued parameters with the right shapes for the given configs.
fn skeleton(enc_cfg: &EncoderConfig, model_cfg: &ModelConfig, n_predicates: usize) -> ModelParams {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::init(enc_cfg, model_cfg, n_predicates, &mut rng);
    params.visit_mut(&mut |_, t| {
        *t = Tensor::zeros(t.shape().to_vec()).with_grad();
    });
    params
}
