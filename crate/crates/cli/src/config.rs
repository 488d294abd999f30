//! Run configuration: one TOML file plus flag overrides, flags winning.

use redual_core::encoder::EncoderConfig;
use redual_core::model::ModelConfig;
use redual_core::train::TrainConfig;
use redual_core::{Error, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_model: Option<usize>,
    pub d_ff: Option<usize>,
    pub max_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: Option<usize>,
    pub alpha: Option<f64>,
    pub use_cls_concat: Option<bool>,
    pub use_ce_loss: Option<bool>,
    pub dual_encoder: Option<bool>,
    pub temperature: Option<f64>,
    pub desc_max_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    /// 0 disables NULL subsampling.
    pub null_cap: Option<usize>,
    pub min_freq: Option<usize>,
    pub type_filter: Option<bool>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Flag-level overrides; `None` means "not given on the command line".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub null_cap: Option<usize>,
    pub no_cls_concat: bool,
    pub no_ce_loss: bool,
    pub shared_encoder: bool,
    pub type_filter: bool,
    pub temperature: Option<f64>,
}

/// The fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub enc_cfg: EncoderConfig,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
}

/// Merges defaults <- config file <- flags, in that precedence order.
pub fn resolve(file: FileConfig, flags: &Overrides) -> RunConfig {
    let mut enc_cfg = EncoderConfig::default();
    if let Some(v) = file.encoder.n_layers {
        enc_cfg.n_layers = v;
    }
    if let Some(v) = file.encoder.n_heads {
        enc_cfg.n_heads = v;
    }
    if let Some(v) = file.encoder.d_model {
        enc_cfg.d_model = v;
    }
    if let Some(v) = file.encoder.d_ff {
        enc_cfg.d_ff = v;
    }
    if let Some(v) = file.encoder.max_len {
        enc_cfg.max_len = v;
    }

    let mut model_cfg = ModelConfig::default();
    if let Some(v) = file.model.d {
        model_cfg.d = v;
    }
    if let Some(v) = file.model.alpha {
        model_cfg.alpha = v;
    }
    if let Some(v) = file.model.use_cls_concat {
        model_cfg.use_cls_concat = v;
    }
    if let Some(v) = file.model.use_ce_loss {
        model_cfg.use_ce_loss = v;
    }
    if let Some(v) = file.model.dual_encoder {
        model_cfg.dual_encoder = v;
    }
    if let Some(v) = file.model.temperature {
        model_cfg.temperature = v;
    }
    if let Some(v) = file.model.desc_max_len {
        model_cfg.desc_max_len = v;
    }

    let mut train_cfg = TrainConfig::default();
    if let Some(v) = file.train.epochs {
        train_cfg.epochs = v;
    }
    if let Some(v) = file.train.batch_size {
        train_cfg.batch_size = v;
    }
    if let Some(v) = file.train.learning_rate {
        train_cfg.learning_rate = v;
    }
    if let Some(v) = file.train.seed {
        train_cfg.seed = v;
    }
    if let Some(v) = file.train.null_cap {
        train_cfg.null_cap = (v > 0).then_some(v);
    }
    if let Some(v) = file.train.min_freq {
        train_cfg.min_freq = v;
    }
    if let Some(v) = file.train.type_filter {
        train_cfg.type_filter = v;
    }
    if let Some(v) = file.train.beta1 {
        train_cfg.beta1 = v;
    }
    if let Some(v) = file.train.beta2 {
        train_cfg.beta2 = v;
    }
    if let Some(v) = file.train.adam_eps {
        train_cfg.adam_eps = v;
    }

    // flags win
    if let Some(v) = flags.seed {
        train_cfg.seed = v;
    }
    if let Some(v) = flags.alpha {
        model_cfg.alpha = v;
    }
    if let Some(v) = flags.epochs {
        train_cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        train_cfg.batch_size = v;
    }
    if let Some(v) = flags.lr {
        train_cfg.learning_rate = v;
    }
    if let Some(v) = flags.null_cap {
        train_cfg.null_cap = (v > 0).then_some(v);
    }
    if let Some(v) = flags.temperature {
        model_cfg.temperature = v;
    }
    if flags.no_cls_concat {
        model_cfg.use_cls_concat = false;
    }
    if flags.no_ce_loss {
        model_cfg.use_ce_loss = false;
    }
    if flags.shared_encoder {
        model_cfg.dual_encoder = false;
    }
    if flags.type_filter {
        train_cfg.type_filter = true;
    }

    RunConfig {
        train_path: file.paths.train,
        dev_path: file.paths.dev,
        test_path: file.paths.test,
        schema_path: file.paths.schema,
        out_dir: file.paths.out_dir,
        enc_cfg,
        model_cfg,
        train_cfg,
    }
}
