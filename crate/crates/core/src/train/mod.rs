//! The optimization loop: adaptive-moment gradient descent on the unified
//! loss, per-epoch dev evaluation, and best-epoch model selection.

pub mod eval;
pub mod experiments;

pub use eval::{evaluate, predict_dataset, EvalReport, PredicateCounts, PredictionRecord};

use crate::data::{generate_pairs, make_batch, CandidatePair, Dataset};
use crate::encoder::{EncoderConfig, Vocab};
use crate::error::{Error, Result};
use crate::model::{forward_pair, ModelConfig, ModelParams};
use crate::schema::PredicateSchema;
use crate::tensor::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Cap on NULL pairs per instance during training, as a multiple of
    /// the instance's labeled pairs. `None` disables subsampling.
    pub null_cap: Option<usize>,
    /// Keep corpus tokens with at least this frequency in the vocabulary.
    pub min_freq: usize,
    /// Drop training pairs whose (subject type, object type) never occurs
    /// in the gold training relations. Off by default; evaluation always
    /// sees the full pair space.
    pub type_filter: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 42,
            null_cap: Some(3),
            min_freq: 1,
            type_filter: false,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One training-log record. Serialized as one JSONL line per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_l_ce: f64,
    pub mean_l_ct: f64,
    pub mean_l_u: f64,
    pub dev_p: f64,
    pub dev_r: f64,
    pub dev_f1: f64,
}

/// Adaptive-moment optimizer over the named parameter set.
#[derive(Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.named().iter().map(|(_, t)| t.numel()).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update from the gradients stored on the parameters,
    /// then clears them.
    pub fn step(&mut self, params: &mut ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut group = 0;
        params.visit_mut(&mut |_, tensor| {
            let grad = tensor
                .grad()
                .expect("step called after store_grads")
                .to_vec();
            let m = &mut self.first[group];
            let v = &mut self.second[group];
            let data = tensor.data_mut();
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            tensor.clear_grad();
            group += 1;
        });
    }
}

/// What a finished training run produces.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

fn mix_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Trains on pre-generated pairs. Shuffling is seeded per epoch, dev
/// micro-F1 is computed every epoch, and the parameters of the best dev
/// epoch are returned (ties keep the earlier epoch).
#[allow(clippy::too_many_arguments)]
pub fn train(
    train_data: &Dataset,
    dev_data: &Dataset,
    schema: &PredicateSchema,
    vocab: &Vocab,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    mut params: ModelParams,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    mcfg.validate()?;
    enc_cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::Contract("training set is empty".to_string()));
    }

    let mut pairs: Vec<CandidatePair> = train_data
        .instances()
        .iter()
        .flat_map(|inst| generate_pairs(inst, schema, tcfg.null_cap, tcfg.seed))
        .collect();
    if tcfg.type_filter {
        let allowed = train_data.gold_type_pairs();
        pairs = crate::data::filter_pairs_by_type(pairs, train_data, &allowed);
    }
    if pairs.is_empty() {
        return Err(Error::Contract(
            "no candidate pairs survive pair generation".to_string(),
        ));
    }

    let mut adam = Adam::new(tcfg, &params);
    let mut log = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=tcfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tcfg.seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut sum_ce = 0.0;
        let mut sum_ct = 0.0;
        let mut sum_u = 0.0;
        for (batch_idx, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch_pairs: Vec<CandidatePair> =
                chunk.iter().map(|&i| pairs[i].clone()).collect();
            let batch = make_batch(
                &batch_pairs,
                train_data,
                schema,
                vocab,
                enc_cfg,
                mcfg.desc_max_len,
            )?;

            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let mut pair_losses = Vec::with_capacity(batch.items.len());
            for item in &batch.items {
                let losses = forward_pair(&mut g, &bound, enc_cfg, mcfg, item)?;
                sum_ce += losses.ce_value;
                sum_ct += losses.ct_value;
                sum_u += g.value(losses.unified).item()?;
                pair_losses.push(losses.unified);
            }
            let stacked = g.concat_last(&pair_losses)?;
            let batch_loss = g.mean(stacked);
            let loss_value = g.value(batch_loss).item()?;
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    first_pair: chunk[0],
                    last_pair: *chunk.last().expect("non-empty chunk"),
                });
            }
            g.backward(batch_loss)?;
            params.store_grads(&g, &bound);
            adam.step(&mut params);
        }

        let n = pairs.len() as f64;
        let report = evaluate(&params, enc_cfg, mcfg, dev_data, schema, vocab)?;
        let record = EpochRecord {
            epoch,
            mean_l_ce: sum_ce / n,
            mean_l_ct: sum_ct / n,
            mean_l_u: sum_u / n,
            dev_p: report.micro_precision,
            dev_r: report.micro_recall,
            dev_f1: report.micro_f1,
        };
        let better = match &best {
            None => true,
            Some((best_f1, _, _)) => record.dev_f1 > *best_f1,
        };
        if better {
            best = Some((record.dev_f1, epoch, params.clone()));
        }
        log.push(record);
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
    })
}

/// Everything `train` needs, built from raw datasets: vocabulary,
/// finalized encoder config, and seeded initial parameters.
pub struct Pipeline {
    pub vocab: Vocab,
    pub enc_cfg: EncoderConfig,
    pub outcome: TrainOutcome,
}

/// Builds the vocabulary from the training set and schema, initializes
/// parameters from the seed, and trains.
pub fn train_pipeline(
    train_data: &Dataset,
    dev_data: &Dataset,
    schema: &PredicateSchema,
    enc_cfg_base: &EncoderConfig,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Pipeline> {
    let vocab = Vocab::build(
        train_data.instances().iter().map(|i| i.tokens.as_slice()),
        schema,
        tcfg.min_freq,
    );
    let enc_cfg = enc_cfg_base.clone().with_vocab_size(vocab.len());
    enc_cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let params = ModelParams::init(&enc_cfg, mcfg, schema.n_predicates(), &mut rng);
    let outcome = train(
        train_data, dev_data, schema, &vocab, &enc_cfg, mcfg, tcfg, params,
    )?;
    Ok(Pipeline {
        vocab,
        enc_cfg,
        outcome,
    })
}

/// Renders a training log as JSONL, one record per epoch.
pub fn render_log_jsonl(log: &[EpochRecord]) -> String {
    let mut out = String::new();
    for record in log {
        out.push_str(&serde_json::to_string(record).expect("plain struct serializes"));
        out.push('\n');
    }
    out
}

/// Sanity helper used by tests: whether parameters hold only finite data.
pub fn params_finite(params: &ModelParams) -> bool {
    let mut ok = true;
    params.visit(&mut |_, t: &Tensor| ok &= t.is_finite());
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::unified_loss_value;
    use crate::synthetic;
    use crate::tensor::Tensor;

    fn tiny_setup() -> (PredicateSchema, Dataset, Dataset, EncoderConfig, ModelConfig, TrainConfig) {
        let schema = synthetic::schema();
        let train_set =
            Dataset::from_instances(synthetic::generate(12, 31, "tr"), &schema).unwrap();
        let dev_set = Dataset::from_instances(synthetic::generate(4, 32, "dv"), &schema).unwrap();
        let enc_cfg = EncoderConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_len: 64,
            vocab_size: 0,
        };
        let mcfg = ModelConfig {
            d: 16,
            ..ModelConfig::default()
        };
        let tcfg = TrainConfig {
            epochs: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        (schema, train_set, dev_set, enc_cfg, mcfg, tcfg)
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let (schema, train_set, dev_set, enc_cfg, mcfg, tcfg) = tiny_setup();
        let a = train_pipeline(&train_set, &dev_set, &schema, &enc_cfg, &mcfg, &tcfg).unwrap();
        let b = train_pipeline(&train_set, &dev_set, &schema, &enc_cfg, &mcfg, &tcfg).unwrap();
        assert_eq!(a.outcome.log, b.outcome.log);
        assert_eq!(a.outcome.params, b.outcome.params);
    }

    #[test]
    fn logged_unified_loss_satisfies_the_mixing_identity() {
        let (schema, train_set, dev_set, enc_cfg, mut mcfg, tcfg) = tiny_setup();
        mcfg.alpha = 0.3;
        let run = train_pipeline(&train_set, &dev_set, &schema, &enc_cfg, &mcfg, &tcfg).unwrap();
        for record in &run.outcome.log {
            let expect = unified_loss_value(record.mean_l_ce, record.mean_l_ct, mcfg.alpha);
            assert!(
                (record.mean_l_u - expect).abs() < 1e-9,
                "epoch {}: {} vs {}",
                record.epoch,
                record.mean_l_u,
                expect
            );
        }
    }

    #[test]
    fn alpha_zero_logs_ce_but_never_updates_the_head() {
        let (schema, train_set, dev_set, enc_cfg, mut mcfg, mut tcfg) = tiny_setup();
        mcfg.alpha = 0.0;
        tcfg.epochs = 1;
        let vocab = Vocab::build(
            train_set.instances().iter().map(|i| i.tokens.as_slice()),
            &schema,
            1,
        );
        let enc_cfg = enc_cfg.with_vocab_size(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        let params = crate::model::ModelParams::init(&enc_cfg, &mcfg, schema.n_predicates(), &mut rng);
        let head_before = params.class_w.data().to_vec();
        let outcome = train(
            &train_set, &dev_set, &schema, &vocab, &enc_cfg, &mcfg, &tcfg, params,
        )
        .unwrap();
        assert!(outcome.log[0].mean_l_ce > 0.0, "CE is still logged");
        assert_eq!(
            outcome.params.class_w.data(),
            head_before.as_slice(),
            "alpha = 0 must leave the classification head untouched"
        );
    }

    #[test]
    fn non_finite_loss_aborts_with_batch_diagnostic() {
        let (schema, train_set, dev_set, enc_cfg, mcfg, tcfg) = tiny_setup();
        let vocab = Vocab::build(
            train_set.instances().iter().map(|i| i.tokens.as_slice()),
            &schema,
            1,
        );
        let enc_cfg = enc_cfg.with_vocab_size(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        let mut params =
            crate::model::ModelParams::init(&enc_cfg, &mcfg, schema.n_predicates(), &mut rng);
        // poison one head weight; the first CE term turns NaN
        params.class_w.data_mut()[0] = f64::NAN;
        let err = train(
            &train_set, &dev_set, &schema, &vocab, &enc_cfg, &mcfg, &tcfg, params,
        )
        .unwrap_err();
        match err {
            Error::NonFiniteLoss { epoch, batch, .. } => {
                assert_eq!(epoch, 1);
                assert_eq!(batch, 0);
            }
            other => panic!("expected NonFiniteLoss, got {other}"),
        }
    }

    #[test]
    fn adam_moves_parameters_with_nonzero_gradient() {
        let (schema, train_set, _, enc_cfg, mcfg, tcfg) = tiny_setup();
        let vocab = Vocab::build(
            train_set.instances().iter().map(|i| i.tokens.as_slice()),
            &schema,
            1,
        );
        let enc_cfg = enc_cfg.with_vocab_size(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params =
            crate::model::ModelParams::init(&enc_cfg, &mcfg, schema.n_predicates(), &mut rng);
        let before = params.input_proj.data().to_vec();
        let mut adam = Adam::new(&tcfg, &params);
        params.visit_mut(&mut |_, t: &mut Tensor| {
            t.set_grad(vec![0.25; t.numel()]);
        });
        adam.step(&mut params);
        assert_ne!(params.input_proj.data(), before.as_slice());
        assert!(params_finite(&params));
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(TrainConfig::default().validate().is_ok());
        let no_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(no_epochs.validate().is_err());
        let bad_lr = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad_lr.validate().is_err());
    }
}
