//! A configurable toy transformer encoder over the shared vocabulary.
//!
//! Pre-norm self-attention blocks with learned absolute positional
//! embeddings and a final layer norm. Small enough to train on one CPU
//! core in minutes, deep enough to exercise attention. All parameters are
//! addressable by name for the optimizer and for gradient checking.

pub mod vocab;

pub use vocab::{tokenize, MarkerRole, Vocab};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Weight init scale for everything that is not a layer-norm gain.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_len: 128,
            vocab_size: 0, // filled in once the vocabulary is built
        }
    }
}

impl EncoderConfig {
    pub fn with_vocab_size(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config(
                "n_heads, d_model and d_ff must be positive".to_string(),
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_len < 8 {
            return Err(Error::Config(format!(
                "max_len {} must be at least 8",
                self.max_len
            )));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config(format!(
                "vocab_size {} is too small to be real",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

/// All learnable arrays of one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub final_gain: Tensor,
    pub final_bias: Tensor,
}

impl EncoderParams {
    pub fn init<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let dm = cfg.d_model;
        let weight = |rows: usize, cols: usize, rng: &mut R| {
            Tensor::randn(vec![rows, cols], INIT_STD, rng).with_grad()
        };
        let zeros_vec = |n: usize| Tensor::zeros(vec![n]).with_grad();
        let ones_vec = |n: usize| {
            Tensor::new(vec![n], vec![1.0; n])
                .expect("static shape")
                .with_grad()
        };
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                wq: weight(dm, dm, rng),
                bq: zeros_vec(dm),
                wk: weight(dm, dm, rng),
                bk: zeros_vec(dm),
                wv: weight(dm, dm, rng),
                bv: zeros_vec(dm),
                wo: weight(dm, dm, rng),
                bo: zeros_vec(dm),
                ln1_gain: ones_vec(dm),
                ln1_bias: zeros_vec(dm),
                w1: weight(dm, cfg.d_ff, rng),
                b1: zeros_vec(cfg.d_ff),
                w2: weight(cfg.d_ff, dm, rng),
                b2: zeros_vec(dm),
                ln2_gain: ones_vec(dm),
                ln2_bias: zeros_vec(dm),
            })
            .collect();
        Self {
            tok_emb: weight(cfg.vocab_size, dm, rng),
            pos_emb: weight(cfg.max_len, dm, rng),
            layers,
            final_gain: ones_vec(dm),
            final_bias: zeros_vec(dm),
        }
    }

    /// Visits every named tensor in a fixed order.
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(format!("{prefix}.tok_emb"), &self.tok_emb);
        f(format!("{prefix}.pos_emb"), &self.pos_emb);
        for (i, l) in self.layers.iter().enumerate() {
            let p = |field: &str| format!("{prefix}.layer{i}.{field}");
            f(p("attn.wq"), &l.wq);
            f(p("attn.bq"), &l.bq);
            f(p("attn.wk"), &l.wk);
            f(p("attn.bk"), &l.bk);
            f(p("attn.wv"), &l.wv);
            f(p("attn.bv"), &l.bv);
            f(p("attn.wo"), &l.wo);
            f(p("attn.bo"), &l.bo);
            f(p("ln1.gain"), &l.ln1_gain);
            f(p("ln1.bias"), &l.ln1_bias);
            f(p("ff.w1"), &l.w1);
            f(p("ff.b1"), &l.b1);
            f(p("ff.w2"), &l.w2);
            f(p("ff.b2"), &l.b2);
            f(p("ln2.gain"), &l.ln2_gain);
            f(p("ln2.bias"), &l.ln2_bias);
        }
        f(format!("{prefix}.final_ln.gain"), &self.final_gain);
        f(format!("{prefix}.final_ln.bias"), &self.final_bias);
    }

    /// Mutable visitor; must traverse in the same order as [`Self::visit`].
    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.tok_emb"), &mut self.tok_emb);
        f(format!("{prefix}.pos_emb"), &mut self.pos_emb);
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(format!("{prefix}.layer{i}.attn.wq"), &mut l.wq);
            f(format!("{prefix}.layer{i}.attn.bq"), &mut l.bq);
            f(format!("{prefix}.layer{i}.attn.wk"), &mut l.wk);
            f(format!("{prefix}.layer{i}.attn.bk"), &mut l.bk);
            f(format!("{prefix}.layer{i}.attn.wv"), &mut l.wv);
            f(format!("{prefix}.layer{i}.attn.bv"), &mut l.bv);
            f(format!("{prefix}.layer{i}.attn.wo"), &mut l.wo);
            f(format!("{prefix}.layer{i}.attn.bo"), &mut l.bo);
            f(format!("{prefix}.layer{i}.ln1.gain"), &mut l.ln1_gain);
            f(format!("{prefix}.layer{i}.ln1.bias"), &mut l.ln1_bias);
            f(format!("{prefix}.layer{i}.ff.w1"), &mut l.w1);
            f(format!("{prefix}.layer{i}.ff.b1"), &mut l.b1);
            f(format!("{prefix}.layer{i}.ff.w2"), &mut l.w2);
            f(format!("{prefix}.layer{i}.ff.b2"), &mut l.b2);
            f(format!("{prefix}.layer{i}.ln2.gain"), &mut l.ln2_gain);
            f(format!("{prefix}.layer{i}.ln2.bias"), &mut l.ln2_bias);
        }
        f(format!("{prefix}.final_ln.gain"), &mut self.final_gain);
        f(format!("{prefix}.final_ln.bias"), &mut self.final_bias);
    }

    pub fn bind(&self, g: &mut Graph) -> BoundEncoder {
        BoundEncoder {
            tok_emb: g.leaf(self.tok_emb.clone()),
            pos_emb: g.leaf(self.pos_emb.clone()),
            layers: self
                .layers
                .iter()
                .map(|l| BoundLayer {
                    wq: g.leaf(l.wq.clone()),
                    bq: g.leaf(l.bq.clone()),
                    wk: g.leaf(l.wk.clone()),
                    bk: g.leaf(l.bk.clone()),
                    wv: g.leaf(l.wv.clone()),
                    bv: g.leaf(l.bv.clone()),
                    wo: g.leaf(l.wo.clone()),
                    bo: g.leaf(l.bo.clone()),
                    ln1_gain: g.leaf(l.ln1_gain.clone()),
                    ln1_bias: g.leaf(l.ln1_bias.clone()),
                    w1: g.leaf(l.w1.clone()),
                    b1: g.leaf(l.b1.clone()),
                    w2: g.leaf(l.w2.clone()),
                    b2: g.leaf(l.b2.clone()),
                    ln2_gain: g.leaf(l.ln2_gain.clone()),
                    ln2_bias: g.leaf(l.ln2_bias.clone()),
                })
                .collect(),
            final_gain: g.leaf(self.final_gain.clone()),
            final_bias: g.leaf(self.final_bias.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
    pub ln1_gain: NodeId,
    pub ln1_bias: NodeId,
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub ln2_gain: NodeId,
    pub ln2_bias: NodeId,
}

/// Graph leaf ids for one encoder's parameters.
#[derive(Debug, Clone)]
pub struct BoundEncoder {
    pub tok_emb: NodeId,
    pub pos_emb: NodeId,
    pub layers: Vec<BoundLayer>,
    pub final_gain: NodeId,
    pub final_bias: NodeId,
}

impl BoundEncoder {
    /// Same traversal as [`EncoderParams::visit`], over node ids.
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, NodeId)) {
        f(format!("{prefix}.tok_emb"), self.tok_emb);
        f(format!("{prefix}.pos_emb"), self.pos_emb);
        for (i, l) in self.layers.iter().enumerate() {
            let p = |field: &str| format!("{prefix}.layer{i}.{field}");
            f(p("attn.wq"), l.wq);
            f(p("attn.bq"), l.bq);
            f(p("attn.wk"), l.wk);
            f(p("attn.bk"), l.bk);
            f(p("attn.wv"), l.wv);
            f(p("attn.bv"), l.bv);
            f(p("attn.wo"), l.wo);
            f(p("attn.bo"), l.bo);
            f(p("ln1.gain"), l.ln1_gain);
            f(p("ln1.bias"), l.ln1_bias);
            f(p("ff.w1"), l.w1);
            f(p("ff.b1"), l.b1);
            f(p("ff.w2"), l.w2);
            f(p("ff.b2"), l.b2);
            f(p("ln2.gain"), l.ln2_gain);
            f(p("ln2.bias"), l.ln2_bias);
        }
        f(format!("{prefix}.final_ln.gain"), self.final_gain);
        f(format!("{prefix}.final_ln.bias"), self.final_bias);
    }
}

/// Per-layer attention probability nodes captured during a forward pass,
/// one `[len × len]` node per head.
#[derive(Debug, Default)]
pub struct EncoderTrace {
    pub attention_probs: Vec<NodeId>,
}

/// Runs the encoder over a token-id sequence, returning the
/// `[len × d_model]` node of contextual embeddings.
///
/// `key_mask`, when given, must have one flag per id; `false` positions
/// are excluded as attention keys so padding cannot influence real
/// positions.
pub fn encode(
    g: &mut Graph,
    enc: &BoundEncoder,
    cfg: &EncoderConfig,
    ids: &[u32],
    key_mask: Option<&[bool]>,
    mut trace: Option<&mut EncoderTrace>,
) -> Result<NodeId> {
    let len = ids.len();
    if len == 0 {
        return Err(Error::Input("cannot encode an empty sequence".to_string()));
    }
    if len > cfg.max_len {
        return Err(Error::Length(format!(
            "sequence of {len} tokens exceeds max_len {}",
            cfg.max_len
        )));
    }
    if let Some(mask) = key_mask {
        if mask.len() != len {
            return Err(Error::Contract(format!(
                "mask length {} does not match sequence length {len}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Input("mask excludes every position".to_string()));
        }
    }

    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let tok = g.embedding(enc.tok_emb, &idx)?;
    let positions: Vec<usize> = (0..len).collect();
    let pos = g.embedding(enc.pos_emb, &positions)?;
    let mut x = g.add(tok, pos)?;

    // Additive attention bias: 0 for real keys, a large negative number
    // for padding.
    let attn_bias = match key_mask {
        Some(mask) if mask.iter().any(|&m| !m) => {
            let mut bias = vec![0.0; len * len];
            for (j, &keep) in mask.iter().enumerate() {
                if !keep {
                    for i in 0..len {
                        bias[i * len + j] = -1e9;
                    }
                }
            }
            Some(g.constant(Tensor::new(vec![len, len], bias)?))
        }
        _ => None,
    };

    let head_dim = cfg.d_model / cfg.n_heads;
    for layer in &enc.layers {
        // attention sublayer, pre-norm
        let normed = g.layer_norm(x, layer.ln1_gain, layer.ln1_bias)?;
        let q = g.matmul(normed, layer.wq)?;
        let q = g.add_row(q, layer.bq)?;
        let k = g.matmul(normed, layer.wk)?;
        let k = g.add_row(k, layer.bk)?;
        let v = g.matmul(normed, layer.wv)?;
        let v = g.add_row(v, layer.bv)?;

        let mut heads = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let start = h * head_dim;
            let qh = g.slice_cols(q, start, head_dim)?;
            let kh = g.slice_cols(k, start, head_dim)?;
            let vh = g.slice_cols(v, start, head_dim)?;
            let (out, probs) = g.attention(qh, kh, vh, attn_bias)?;
            if let Some(t) = trace.as_deref_mut() {
                t.attention_probs.push(probs);
            }
            heads.push(out);
        }
        let merged = g.concat_last(&heads)?;
        let projected = g.matmul(merged, layer.wo)?;
        let projected = g.add_row(projected, layer.bo)?;
        x = g.add(x, projected)?;

        // feed-forward sublayer, pre-norm
        let normed = g.layer_norm(x, layer.ln2_gain, layer.ln2_bias)?;
        let hidden = g.matmul(normed, layer.w1)?;
        let hidden = g.add_row(hidden, layer.b1)?;
        let hidden = g.relu(hidden);
        let ff = g.matmul(hidden, layer.w2)?;
        let ff = g.add_row(ff, layer.b2)?;
        x = g.add(x, ff)?;
    }

    g.layer_norm(x, enc.final_gain, enc.final_bias)
}

/// Convenience wrapper: one-off encode with a throwaway graph, returning
/// the output values.
pub fn encode_values(ids: &[u32], params: &EncoderParams, cfg: &EncoderConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let out = encode(&mut g, &bound, cfg, ids, None, None)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::PredicateSchema;
    use crate::tensor::check::{finite_diff, rel_error, FD_STEP, PRIMITIVE_TOLERANCE};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_cfg(vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            max_len: 16,
            vocab_size,
        }
    }

    fn toy_vocab() -> Vocab {
        let schema = PredicateSchema::parse_str(
            "[predicates]\nNULL\nR\n[entity_types]\nX\n[templates]\n\
             NULL = nothing for @subject@ and @object@.\nR = @subject@ links @object@.\n",
        )
        .unwrap();
        let toks: Vec<String> = ["alpha", "beta", "gamma", "delta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Vocab::build([toks.as_slice()], &schema, 1)
    }

    #[test]
    fn output_shape_is_len_by_d_model() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = EncoderParams::init(&cfg, &mut rng);
        let ids = [vocab::CLS, vocab.id_of("alpha"), vocab.id_of("beta"), vocab::SEP];
        let out = encode_values(&ids, &params, &cfg).unwrap();
        assert_eq!(out.shape(), &[4, 8]);
        assert!(out.is_finite());
    }

    #[test]
    fn swapping_tokens_changes_output() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = EncoderParams::init(&cfg, &mut rng);
        let a = [vocab.id_of("alpha"), vocab.id_of("beta"), vocab.id_of("gamma")];
        let b = [vocab.id_of("beta"), vocab.id_of("alpha"), vocab.id_of("gamma")];
        let out_a = encode_values(&a, &params, &cfg).unwrap();
        let out_b = encode_values(&b, &params, &cfg).unwrap();
        assert_ne!(out_a.data(), out_b.data());
    }

    #[test]
    fn encode_is_deterministic() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = EncoderParams::init(&cfg, &mut rng);
        let ids = [vocab.id_of("alpha"), vocab.id_of("beta")];
        let a = encode_values(&ids, &params, &cfg).unwrap();
        let b = encode_values(&ids, &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn over_length_input_rejected() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = EncoderParams::init(&cfg, &mut rng);
        let ids = vec![vocab.id_of("alpha"); cfg.max_len + 1];
        let err = encode_values(&ids, &params, &cfg).unwrap_err();
        assert!(matches!(err, crate::error::Error::Length(_)));
    }

    #[test]
    fn zero_layer_encoder_is_embeddings_plus_final_norm() {
        let vocab = toy_vocab();
        let mut cfg = toy_cfg(vocab.len());
        cfg.n_layers = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = EncoderParams::init(&cfg, &mut rng);
        let ids = [vocab.id_of("alpha"), vocab.id_of("gamma")];
        let out = encode_values(&ids, &params, &cfg).unwrap();

        // by hand: layer_norm(tok_emb[id] + pos_emb[pos])
        let mut g = Graph::new();
        let mut rows = Vec::new();
        for (pos, &id) in ids.iter().enumerate() {
            let tok = &params.tok_emb.data()
                [id as usize * cfg.d_model..(id as usize + 1) * cfg.d_model];
            let pe = &params.pos_emb.data()[pos * cfg.d_model..(pos + 1) * cfg.d_model];
            rows.extend(tok.iter().zip(pe).map(|(a, b)| a + b));
        }
        let sum = g.leaf(Tensor::new(vec![2, cfg.d_model], rows).unwrap());
        let gain = g.leaf(params.final_gain.clone());
        let bias = g.leaf(params.final_bias.clone());
        let normed = g.layer_norm(sum, gain, bias).unwrap();
        assert_eq!(out.data(), g.value(normed).data());
    }

    #[test]
    fn attention_rows_are_distributions() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = EncoderParams::init(&cfg, &mut rng);
        let ids = [vocab.id_of("alpha"), vocab.id_of("beta"), vocab.id_of("gamma")];
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let mut trace = EncoderTrace::default();
        encode(&mut g, &bound, &cfg, &ids, None, Some(&mut trace)).unwrap();
        assert_eq!(trace.attention_probs.len(), cfg.n_layers * cfg.n_heads);
        for &probs in &trace.attention_probs {
            let p = g.value(probs);
            assert_eq!(p.shape(), &[3, 3]);
            for row in 0..3 {
                let s: f64 = p.data()[row * 3..(row + 1) * 3].iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "attention row sums to {s}");
            }
        }
    }

    #[test]
    fn padding_does_not_leak_into_real_positions() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = EncoderParams::init(&cfg, &mut rng);
        let real = [vocab.id_of("alpha"), vocab.id_of("beta")];
        let mask = [true, true, false, false];

        let run = |pad_filler: u32| {
            let ids = [real[0], real[1], pad_filler, pad_filler];
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let out = encode(&mut g, &bound, &cfg, &ids, Some(&mask), None).unwrap();
            g.value(out).data().to_vec()
        };
        let with_pad = run(vocab::PAD);
        let with_garbage = run(vocab.id_of("delta"));
        // first two rows (the unmasked positions) must be identical
        assert_eq!(with_pad[..2 * cfg.d_model], with_garbage[..2 * cfg.d_model]);
    }

    #[test]
    fn token_embedding_gradient_matches_finite_differences() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = EncoderParams::init(&cfg, &mut rng);
        let ids = [vocab.id_of("alpha"), vocab.id_of("beta"), vocab.id_of("alpha")];

        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let out = encode(&mut g, &bound, &cfg, &ids, None, None).unwrap();
        let loss = g.sum(out);
        g.backward(loss).unwrap();
        let analytic = g.grad(bound.tok_emb).unwrap().to_vec();

        let numeric = finite_diff(
            |flat| {
                let mut probe = params.clone();
                probe.tok_emb =
                    Tensor::new(probe.tok_emb.shape().to_vec(), flat.to_vec()).unwrap();
                let out = encode_values(&ids, &probe, &cfg).unwrap();
                out.data().iter().sum()
            },
            params.tok_emb.data(),
            FD_STEP,
        );
        let mut worst = 0.0_f64;
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(rel_error(*a, *n));
        }
        assert!(worst < PRIMITIVE_TOLERANCE, "max rel err {worst}");
    }

    #[test]
    fn bound_visit_matches_params_visit() {
        let vocab = toy_vocab();
        let cfg = toy_cfg(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = EncoderParams::init(&cfg, &mut rng);
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let mut names_a = Vec::new();
        params.visit("enc", &mut |n, _| names_a.push(n));
        let mut names_b = Vec::new();
        bound.visit("enc", &mut |n, _| names_b.push(n));
        assert_eq!(names_a, names_b);
        let mut names_c = Vec::new();
        params.clone().visit_mut("enc", &mut |n, _| names_c.push(n));
        assert_eq!(names_a, names_c);
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let ok = toy_cfg(10);
        assert!(ok.validate().is_ok());
        let mut bad = toy_cfg(10);
        bad.n_heads = 3; // does not divide d_model = 8
        assert!(bad.validate().is_err());
        let mut bad = toy_cfg(10);
        bad.max_len = 4;
        assert!(bad.validate().is_err());
        let bad = toy_cfg(0);
        assert!(bad.validate().is_err());
    }
}
