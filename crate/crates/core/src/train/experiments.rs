//! Protocol runs over the training loop: the loss-weight sweep and the
//! four-variant ablation, each with identical seeds and data order across
//! runs.

use super::{evaluate, train_pipeline, TrainConfig};
use crate::data::Dataset;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::schema::PredicateSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One full training run per loss weight, identical seed and data order
/// across runs; rows come back sorted by weight ascending, with dev-set
/// metrics from each run's best epoch.
pub fn alpha_sweep(
    train_data: &Dataset,
    dev_data: &Dataset,
    schema: &PredicateSchema,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::Contract("sweep needs at least one alpha".to_string()));
    }
    let mut sorted: Vec<f64> = alphas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("alphas are finite"));

    let mut rows = Vec::with_capacity(sorted.len());
    for &alpha in &sorted {
        let mut cfg = mcfg.clone();
        cfg.alpha = alpha;
        cfg.validate()
            .map_err(|e| Error::Config(format!("alpha {alpha}: {e}")))?;
        let run = train_pipeline(train_data, dev_data, schema, enc_cfg, &cfg, tcfg)
            .map_err(|e| Error::Contract(format!("sweep run at alpha {alpha} failed: {e}")))?;
        let best = run
            .outcome
            .log
            .iter()
            .find(|r| r.epoch == run.outcome.best_epoch)
            .expect("best epoch is logged");
        rows.push(SweepRow {
            alpha,
            precision: best.dev_p,
            recall: best.dev_r,
            f1: best.dev_f1,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub f1: f64,
}

/// The four ablation variants, in report order. Each differs from the
/// full configuration in exactly one field.
pub fn ablation_variants(base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    let full = ModelConfig {
        use_cls_concat: true,
        use_ce_loss: true,
        dual_encoder: true,
        ..base.clone()
    };
    vec![
        ("full".to_string(), full.clone()),
        (
            "no_cls_concat".to_string(),
            ModelConfig {
                use_cls_concat: false,
                ..full.clone()
            },
        ),
        (
            "no_ce_loss".to_string(),
            ModelConfig {
                use_ce_loss: false,
                ..full.clone()
            },
        ),
        (
            "shared_encoder".to_string(),
            ModelConfig {
                dual_encoder: false,
                ..full
            },
        ),
    ]
}

/// Runs the four-variant ablation with identical seeds and data, and
/// reports each variant's test micro-F1.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    train_data: &Dataset,
    dev_data: &Dataset,
    test_data: &Dataset,
    schema: &PredicateSchema,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(4);
    for (variant, cfg) in ablation_variants(mcfg) {
        let run = train_pipeline(train_data, dev_data, schema, enc_cfg, &cfg, tcfg)
            .map_err(|e| Error::Contract(format!("ablation variant '{variant}' failed: {e}")))?;
        let report = evaluate(
            &run.outcome.params,
            &run.enc_cfg,
            &cfg,
            test_data,
            schema,
            &run.vocab,
        )?;
        rows.push(AblationRow {
            variant,
            f1: report.micro_f1,
        });
    }
    Ok(rows)
}

/// Aligned plain-text table for sweep rows.
pub fn render_sweep_text(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha      P        R        F1\n");
    for r in rows {
        out.push_str(&format!(
            "{:<8.2} {:<8.4} {:<8.4} {:<8.4}\n",
            r.alpha, r.precision, r.recall, r.f1
        ));
    }
    out
}

/// Aligned plain-text table for ablation rows.
pub fn render_ablation_text(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut out = format!("{:<width$}  F1\n", "variant", width = width);
    for r in rows {
        out.push_str(&format!("{:<width$}  {:.4}\n", r.variant, r.f1, width = width));
    }
    out
}
