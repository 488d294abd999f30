//! End-to-end gradient checking of the unified loss against central
//! finite differences, one named parameter group at a time.

use super::{forward_pair, ModelConfig, ModelParams};
use crate::data::{generate_pairs, make_batch, BatchItem, Dataset};
use crate::encoder::{EncoderConfig, Vocab};
use crate::error::Result;
use crate::schema::PredicateSchema;
use crate::tensor::check::{rel_error, CheckOutcome, FD_STEP};
use crate::tensor::Graph;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MODEL_TOLERANCE: f64 = 1e-3;

/// The tiny model used for end-to-end gradient checks: d_model = 8, one
/// layer, projection width 4, three predicates, a single pair of at most
/// a dozen tokens.
pub fn toy_setup() -> (EncoderConfig, ModelConfig) {
    let enc = EncoderConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_len: 16,
        vocab_size: 0,
    };
    let model = ModelConfig {
        d: 4,
        desc_max_len: 24,
        ..ModelConfig::default()
    };
    (enc, model)
}

fn toy_fixture() -> (PredicateSchema, Dataset) {
    let schema = PredicateSchema::parse_str(
        "[predicates]\nNULL\nTREATS\nCAUSES\n[entity_types]\nChemical\nDisease\n[templates]\n\
         NULL = no relation links @subject@ and @object@.\n\
         TREATS = @subject@ treats @object@.\n\
         CAUSES = @subject@ causes @object@.\n",
    )
    .expect("fixture schema is valid");
    let jsonl = r#"{"id": "g1", "tokens": ["the", "drug", "aspirin", "treats", "severe", "migraine", "cases"], "mentions": [[2, 3, "Chemical"], [4, 6, "Disease"]], "relations": [[0, 1, "TREATS"]]}"#;
    let dataset = Dataset::parse_str(jsonl, &schema).expect("fixture dataset is valid");
    (schema, dataset)
}

/// Builds the toy model and its single-pair batch item.
pub fn toy_model(seed: u64) -> Result<(EncoderConfig, ModelConfig, ModelParams, BatchItem)> {
    let (enc_cfg, model_cfg) = toy_setup();
    let (schema, dataset) = toy_fixture();
    let vocab = Vocab::build(
        dataset.instances().iter().map(|i| i.tokens.as_slice()),
        &schema,
        1,
    );
    let enc_cfg = enc_cfg.with_vocab_size(vocab.len());
    let pairs = generate_pairs(&dataset.instances()[0], &schema, None, 0);
    let labeled = pairs
        .iter()
        .find(|p| p.label != 0)
        .expect("fixture has a labeled pair")
        .clone();
    let batch = make_batch(
        &[labeled],
        &dataset,
        &schema,
        &vocab,
        &enc_cfg,
        model_cfg.desc_max_len,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(&enc_cfg, &model_cfg, schema.n_predicates(), &mut rng);
    Ok((enc_cfg, model_cfg, params, batch.items[0].clone()))
}

fn loss_value(
    params: &ModelParams,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    item: &BatchItem,
) -> f64 {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let losses = forward_pair(&mut g, &bound, enc_cfg, mcfg, item).expect("forward succeeds");
    g.value(losses.unified).item().expect("scalar loss")
}

/// Compares analytic gradients of the unified loss with central finite
/// differences for every named parameter group.
pub fn gradcheck_model(seed: u64) -> Result<Vec<CheckOutcome>> {
    let (enc_cfg, mcfg, mut params, item) = toy_model(seed)?;

    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let losses = forward_pair(&mut g, &bound, &enc_cfg, &mcfg, &item)?;
    g.backward(losses.unified)?;
    params.store_grads(&g, &bound);

    let names: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
    let mut outcomes = Vec::with_capacity(names.len());
    for name in names {
        let analytic: Vec<f64> = {
            let named = params.named();
            let (_, tensor) = named
                .iter()
                .find(|(n, _)| *n == name)
                .expect("name from the same visit");
            tensor.grad().expect("store_grads filled every group").to_vec()
        };
        let mut worst = 0.0_f64;
        let mut probe = params.clone();
        let set = |probe: &mut ModelParams, target: &str, i: usize, value: f64| {
            probe.visit_mut(&mut |n, t| {
                if n == target {
                    t.data_mut()[i] = value;
                }
            });
        };
        for (i, &a) in analytic.iter().enumerate() {
            let orig = {
                let named = probe.named();
                let (_, tensor) = named.iter().find(|(n, _)| *n == name).expect("same visit");
                tensor.data()[i]
            };
            set(&mut probe, &name, i, orig + FD_STEP);
            let plus = loss_value(&probe, &enc_cfg, &mcfg, &item);
            set(&mut probe, &name, i, orig - FD_STEP);
            let minus = loss_value(&probe, &enc_cfg, &mcfg, &item);
            set(&mut probe, &name, i, orig);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(a, numeric));
        }
        outcomes.push(CheckOutcome {
            name,
            max_rel_err: worst,
        });
    }
    Ok(outcomes)
}
