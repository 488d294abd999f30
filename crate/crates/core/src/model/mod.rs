//! The dual-encoder model: pair representation, instance-adapted
//! description representations, the joint contrastive/cross-entropy
//! objective, and cosine-argmax inference.
//!
//! One encoder reads the marked input; its start-marker embeddings are
//! concatenated and projected to the pair representation. A second encoder
//! (or the same one, in the shared ablation) reads each predicate's filled
//! description; the description representation concatenates the input's
//! `[CLS]` embedding with the description's start-marker embeddings before
//! projection, so both representations live in the same comparison space.
//! Training mixes cross-entropy on a linear head with a contrastive
//! softmax over cosine similarities; inference uses the cosine scores
//! alone.

pub mod check;

use crate::data::{BatchItem, PaddedSeq};
use crate::encoder::{encode, BoundEncoder, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::tensor::{cosine_value, Graph, NodeId, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Weight init scale for the projections and the classification head.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the shared comparison space both projections map into.
    pub d: usize,
    /// Cross-entropy weight in the unified loss, in [0, 1].
    pub alpha: f64,
    /// Concatenate the input's [CLS] embedding into each description
    /// representation; when off, a zero vector keeps the shapes fixed.
    pub use_cls_concat: bool,
    /// Include the cross-entropy term during training.
    pub use_ce_loss: bool,
    /// Separate description encoder; when off, the input encoder is shared.
    pub dual_encoder: bool,
    /// Divisor applied to similarities inside the contrastive softmax.
    pub temperature: f64,
    /// Length budget for marked description sequences.
    pub desc_max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            alpha: 0.5,
            use_cls_concat: true,
            use_ce_loss: true,
            dual_encoder: true,
            temperature: 1.0,
            desc_max_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} must lie in [0, 1]",
                self.alpha
            )));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.d == 0 {
            return Err(Error::Config("projection width d must be positive".to_string()));
        }
        if self.desc_max_len < 8 {
            return Err(Error::Config(format!(
                "desc_max_len {} must be at least 8",
                self.desc_max_len
            )));
        }
        Ok(())
    }
}

/// All learnable arrays of the model, addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub enc_t: EncoderParams,
    /// `None` in shared-encoder mode: the description stream then reads
    /// `enc_t`, and there is exactly one encoder parameter set.
    pub enc_d: Option<EncoderParams>,
    /// `[2·d_model × d]` projection of the concatenated input markers.
    pub input_proj: Tensor,
    /// `[3·d_model × d]` projection of [CLS] ‖ description markers.
    pub desc_proj: Tensor,
    /// `[d × |R|]` cross-entropy head weight.
    pub class_w: Tensor,
    /// `[|R|]` cross-entropy head bias.
    pub class_b: Tensor,
    pub n_predicates: usize,
}

impl ModelParams {
    pub fn init<R: Rng>(
        enc_cfg: &EncoderConfig,
        model_cfg: &ModelConfig,
        n_predicates: usize,
        rng: &mut R,
    ) -> Self {
        let dm = enc_cfg.d_model;
        let d = model_cfg.d;
        Self {
            enc_t: EncoderParams::init(enc_cfg, rng),
            enc_d: model_cfg
                .dual_encoder
                .then(|| EncoderParams::init(enc_cfg, rng)),
            input_proj: Tensor::randn(vec![2 * dm, d], INIT_STD, rng).with_grad(),
            desc_proj: Tensor::randn(vec![3 * dm, d], INIT_STD, rng).with_grad(),
            class_w: Tensor::randn(vec![d, n_predicates], INIT_STD, rng).with_grad(),
            class_b: Tensor::zeros(vec![n_predicates]).with_grad(),
            n_predicates,
        }
    }

    /// Visits every named tensor in a fixed order; the optimizer, gradient
    /// checks, and checkpoints all rely on this order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.enc_t.visit("enc_t", f);
        if let Some(enc_d) = &self.enc_d {
            enc_d.visit("enc_d", f);
        }
        f("input_proj".to_string(), &self.input_proj);
        f("desc_proj".to_string(), &self.desc_proj);
        f("class_head.w".to_string(), &self.class_w);
        f("class_head.b".to_string(), &self.class_b);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.enc_t.visit_mut("enc_t", f);
        if let Some(enc_d) = &mut self.enc_d {
            enc_d.visit_mut("enc_d", f);
        }
        f("input_proj".to_string(), &mut self.input_proj);
        f("desc_proj".to_string(), &mut self.desc_proj);
        f("class_head.w".to_string(), &mut self.class_w);
        f("class_head.b".to_string(), &mut self.class_b);
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t)));
        out
    }

    /// Enters every parameter into a graph once; the description encoder
    /// binding aliases the input encoder's nodes in shared mode.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        let enc_t = self.enc_t.bind(g);
        let enc_d = match &self.enc_d {
            Some(p) => p.bind(g),
            None => enc_t.clone(),
        };
        BoundModel {
            shared_encoder: self.enc_d.is_none(),
            enc_t,
            enc_d,
            input_proj: g.leaf(self.input_proj.clone()),
            desc_proj: g.leaf(self.desc_proj.clone()),
            class_w: g.leaf(self.class_w.clone()),
            class_b: g.leaf(self.class_b.clone()),
        }
    }

    /// Copies gradients out of a finished graph into each parameter's
    /// `grad` buffer. Parameters the loss never reached get zeros.
    pub fn store_grads(&mut self, g: &Graph, bound: &BoundModel) {
        let ids = bound.named_ids();
        let mut idx = 0;
        self.visit_mut(&mut |name, tensor| {
            let (bound_name, node) = &ids[idx];
            assert_eq!(&name, bound_name, "binding order drifted from visit order");
            let grad = g
                .grad(*node)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; tensor.numel()]);
            tensor.set_grad(grad);
            idx += 1;
        });
        assert_eq!(idx, ids.len(), "binding covers every parameter");
    }
}

/// Node ids of all bound parameters within one graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub enc_t: BoundEncoder,
    pub enc_d: BoundEncoder,
    pub shared_encoder: bool,
    pub input_proj: NodeId,
    pub desc_proj: NodeId,
    pub class_w: NodeId,
    pub class_b: NodeId,
}

impl BoundModel {
    /// Same names and order as [`ModelParams::visit`].
    pub fn named_ids(&self) -> Vec<(String, NodeId)> {
        let mut out = Vec::new();
        self.enc_t.visit("enc_t", &mut |name, id| out.push((name, id)));
        if !self.shared_encoder {
            self.enc_d.visit("enc_d", &mut |name, id| out.push((name, id)));
        }
        out.push(("input_proj".to_string(), self.input_proj));
        out.push(("desc_proj".to_string(), self.desc_proj));
        out.push(("class_head.w".to_string(), self.class_w));
        out.push(("class_head.b".to_string(), self.class_b));
        out
    }
}

fn check_marker_positions(seq: &PaddedSeq) -> Result<()> {
    if seq.sub_start >= seq.real_len || seq.obj_start >= seq.real_len {
        return Err(Error::Contract(format!(
            "marker positions ({}, {}) outside the real sequence of length {}",
            seq.sub_start, seq.obj_start, seq.real_len
        )));
    }
    Ok(())
}

/// Encodes the marked input and projects the concatenated subject/object
/// start-marker embeddings into the comparison space. Returns the pair
/// representation and the input's [CLS] embedding node.
pub fn pair_repr(
    g: &mut Graph,
    bound: &BoundModel,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    input: &PaddedSeq,
) -> Result<(NodeId, NodeId)> {
    check_marker_positions(input)?;
    let hidden = encode(
        g,
        &bound.enc_t,
        enc_cfg,
        &input.ids,
        input.has_padding().then_some(input.mask.as_slice()),
        None,
    )?;
    let cls = g.slice_row(hidden, 0)?;
    let sub = g.slice_row(hidden, input.sub_start)?;
    let obj = g.slice_row(hidden, input.obj_start)?;
    let cat = g.concat_last(&[sub, obj])?;
    let row = g.reshape(cat, vec![1, 2 * enc_cfg.d_model])?;
    let projected = g.matmul(row, bound.input_proj)?;
    let rho = g.reshape(projected, vec![mcfg.d])?;
    Ok((rho, cls))
}

/// Encodes one marked filled description and projects
/// `[CLS] ‖ subject marker ‖ object marker` into the comparison space.
/// With `use_cls_concat` off, the [CLS] slot is a zero vector and the
/// output is independent of the input encoder; shapes never change.
pub fn desc_repr(
    g: &mut Graph,
    bound: &BoundModel,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    desc: &PaddedSeq,
    cls_from_input: NodeId,
) -> Result<NodeId> {
    check_marker_positions(desc)?;
    let hidden = encode(
        g,
        &bound.enc_d,
        enc_cfg,
        &desc.ids,
        desc.has_padding().then_some(desc.mask.as_slice()),
        None,
    )?;
    let sub = g.slice_row(hidden, desc.sub_start)?;
    let obj = g.slice_row(hidden, desc.obj_start)?;
    let cls_part = if mcfg.use_cls_concat {
        cls_from_input
    } else {
        g.constant(Tensor::zeros(vec![enc_cfg.d_model]))
    };
    let cat = g.concat_last(&[cls_part, sub, obj])?;
    let row = g.reshape(cat, vec![1, 3 * enc_cfg.d_model])?;
    let projected = g.matmul(row, bound.desc_proj)?;
    g.reshape(projected, vec![mcfg.d])
}

/// Cosine similarity nodes between the pair representation and every
/// predicate's description representation, in schema order.
pub fn similarity_nodes(
    g: &mut Graph,
    bound: &BoundModel,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    item: &BatchItem,
) -> Result<Vec<NodeId>> {
    let (rho_t, cls) = pair_repr(g, bound, enc_cfg, mcfg, &item.input)?;
    let mut sims = Vec::with_capacity(item.descriptions.len());
    for desc in &item.descriptions {
        let rho_d = desc_repr(g, bound, enc_cfg, mcfg, desc, cls)?;
        sims.push(g.cosine(rho_t, rho_d)?);
    }
    Ok(sims)
}

/// Contrastive loss over similarity nodes: the negative log-probability of
/// the gold predicate under a softmax of similarities divided by the
/// temperature, computed via log-sum-exp.
pub fn contrastive_loss(
    g: &mut Graph,
    sims: &[NodeId],
    gold: usize,
    temperature: f64,
) -> Result<NodeId> {
    if sims.is_empty() {
        return Err(Error::Contract("contrastive loss over zero predicates".to_string()));
    }
    if gold >= sims.len() {
        return Err(Error::Contract(format!(
            "gold index {gold} out of range for {} predicates",
            sims.len()
        )));
    }
    let stacked = g.concat_last(sims)?;
    let scaled = g.scale(stacked, 1.0 / temperature);
    let log_probs = g.log_softmax(scaled)?;
    let picked = g.slice_index(log_probs, gold)?;
    Ok(g.scale(picked, -1.0))
}

/// Cross-entropy loss of the linear head applied to the pair
/// representation.
pub fn ce_loss(
    g: &mut Graph,
    bound: &BoundModel,
    mcfg: &ModelConfig,
    rho_t: NodeId,
    gold: usize,
    n_predicates: usize,
) -> Result<NodeId> {
    let row = g.reshape(rho_t, vec![1, mcfg.d])?;
    let logits = g.matmul(row, bound.class_w)?;
    let logits = g.add_row(logits, bound.class_b)?;
    let flat = g.reshape(logits, vec![n_predicates])?;
    ce_loss_from_logits(g, flat, gold)
}

/// Cross-entropy of a logit vector against a one-hot gold index.
pub fn ce_loss_from_logits(g: &mut Graph, logits: NodeId, gold: usize) -> Result<NodeId> {
    let n = g.value(logits).numel();
    if gold >= n {
        return Err(Error::Contract(format!(
            "gold index {gold} out of range for {n} predicates"
        )));
    }
    let log_probs = g.log_softmax(logits)?;
    let picked = g.slice_index(log_probs, gold)?;
    Ok(g.scale(picked, -1.0))
}

/// `α·L_ce + (1−α)·L_ct` as graph nodes.
pub fn unified_loss(g: &mut Graph, l_ce: NodeId, l_ct: NodeId, alpha: f64) -> Result<NodeId> {
    let ce_term = g.scale(l_ce, alpha);
    let ct_term = g.scale(l_ct, 1.0 - alpha);
    g.add(ce_term, ct_term)
}

/// Same combination over plain values (for logging and tests).
pub fn unified_loss_value(l_ce: f64, l_ct: f64, alpha: f64) -> f64 {
    alpha * l_ce + (1.0 - alpha) * l_ct
}

/// Everything the training loop needs from one pair's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct PairLosses {
    pub unified: NodeId,
    /// Forward value of the cross-entropy term; 0 when the term is
    /// disabled outright.
    pub ce_value: f64,
    pub ct_value: f64,
}

/// Full training forward pass for one pair. With `use_ce_loss` off the
/// cross-entropy term is dropped entirely and the unified loss is the
/// contrastive loss alone.
pub fn forward_pair(
    g: &mut Graph,
    bound: &BoundModel,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    item: &BatchItem,
) -> Result<PairLosses> {
    let (rho_t, cls) = pair_repr(g, bound, enc_cfg, mcfg, &item.input)?;
    let mut sims = Vec::with_capacity(item.descriptions.len());
    for desc in &item.descriptions {
        let rho_d = desc_repr(g, bound, enc_cfg, mcfg, desc, cls)?;
        sims.push(g.cosine(rho_t, rho_d)?);
    }
    let l_ct = contrastive_loss(g, &sims, item.gold, mcfg.temperature)?;
    if mcfg.use_ce_loss {
        let n = item.descriptions.len();
        let l_ce = ce_loss(g, bound, mcfg, rho_t, item.gold, n)?;
        let unified = unified_loss(g, l_ce, l_ct, mcfg.alpha)?;
        Ok(PairLosses {
            unified,
            ce_value: g.value(l_ce).item()?,
            ct_value: g.value(l_ct).item()?,
        })
    } else {
        Ok(PairLosses {
            unified: l_ct,
            ce_value: 0.0,
            ct_value: g.value(l_ct).item()?,
        })
    }
}

/// Similarity scores for one pair, forward only (no gradient plumbing).
pub fn score_pair(
    params: &ModelParams,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    item: &BatchItem,
) -> Result<Vec<f64>> {
    Ok(score_items(params, enc_cfg, mcfg, std::slice::from_ref(item))?.remove(0))
}

/// Similarity scores for many pairs; parameters are frozen once so the
/// forward passes skip gradient bookkeeping.
pub fn score_items(
    params: &ModelParams,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    items: &[BatchItem],
) -> Result<Vec<Vec<f64>>> {
    let frozen = params.frozen();
    items
        .iter()
        .map(|item| {
            let mut g = Graph::new();
            let bound = frozen.bind(&mut g);
            let sims = similarity_nodes(&mut g, &bound, enc_cfg, mcfg, item)?;
            sims.iter().map(|&id| g.value(id).item()).collect()
        })
        .collect()
}

impl ModelParams {
    /// A clone whose tensors do not request gradients; scoring passes use
    /// it to skip gradient bookkeeping.
    fn frozen(&self) -> ModelParams {
        let mut clone = self.clone();
        clone.visit_mut(&mut |_, t| {
            *t = Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("same shape");
        });
        clone
    }
}

/// Argmax over similarity scores with deterministic ties: the lowest
/// index wins, so NULL wins an exact tie with any predicate.
pub fn predict(similarities: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in similarities.iter().enumerate().skip(1) {
        if s > similarities[best] {
            best = i;
        }
    }
    best
}

/// Inference from representations: cosine similarities plus the argmax
/// rule. The classification head is never consulted here.
pub fn predict_from_reprs(rho_t: &[f64], rho_ds: &[Vec<f64>]) -> (usize, Vec<f64>) {
    let sims: Vec<f64> = rho_ds.iter().map(|d| cosine_value(rho_t, d)).collect();
    (predict(&sims), sims)
}

#[cfg(test)]
mod tests {
    use super::check::toy_model;
    use super::*;
    use crate::tensor::check::{finite_diff, rel_error, FD_STEP, PRIMITIVE_TOLERANCE};

    fn unit_vectors() -> (Tensor, Vec<Tensor>) {
        // gold similarity 1, the two others 0
        let rho_t = Tensor::vector(vec![1.0, 0.0]);
        let ds = vec![
            Tensor::vector(vec![1.0, 0.0]),
            Tensor::vector(vec![0.0, 1.0]),
            Tensor::vector(vec![0.0, 1.0]),
        ];
        (rho_t, ds)
    }

    fn contrastive_value(rho_t: &Tensor, rho_ds: &[Tensor], gold: usize, tau: f64) -> f64 {
        let mut g = Graph::new();
        let t = g.leaf(rho_t.clone());
        let sims: Vec<NodeId> = rho_ds
            .iter()
            .map(|d| {
                let dn = g.leaf(d.clone());
                g.cosine(t, dn).unwrap()
            })
            .collect();
        let loss = contrastive_loss(&mut g, &sims, gold, tau).unwrap();
        g.value(loss).item().unwrap()
    }

    #[test]
    fn contrastive_uniform_is_ln_n() {
        let rho_t = Tensor::vector(vec![1.0, 0.0]);
        let ds = vec![
            Tensor::vector(vec![0.0, 1.0]),
            Tensor::vector(vec![0.0, 1.0]),
            Tensor::vector(vec![0.0, 1.0]),
        ];
        let loss = contrastive_value(&rho_t, &ds, 0, 1.0);
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12, "got {loss}");
    }

    #[test]
    fn contrastive_separated_anchor() {
        // sims (1, 0, 0), tau = 1: loss = ln(1 + 2/e)
        let (rho_t, ds) = unit_vectors();
        let loss = contrastive_value(&rho_t, &ds, 0, 1.0);
        let expect = (1.0 + 2.0 / std::f64::consts::E).ln();
        assert!((loss - expect).abs() < 1e-12, "got {loss}, want {expect}");
    }

    #[test]
    fn contrastive_singleton_is_zero() {
        let rho_t = Tensor::vector(vec![1.0, 0.0]);
        let ds = vec![Tensor::vector(vec![0.5, 0.5])];
        let loss = contrastive_value(&rho_t, &ds, 0, 1.0);
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn contrastive_rejects_bad_gold() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(0.3));
        let err = contrastive_loss(&mut g, &[a], 1, 1.0).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    fn ce_value_with(logit_bias: &[f64], gold: usize) -> f64 {
        // zero weights + chosen bias gives exactly those logits
        let n = logit_bias.len();
        let mut g = Graph::new();
        let rho = g.leaf(Tensor::vector(vec![0.1, -0.2, 0.3, 0.4]));
        let bound_stub = BoundModel {
            enc_t: BoundEncoder {
                tok_emb: rho,
                pos_emb: rho,
                layers: vec![],
                final_gain: rho,
                final_bias: rho,
            },
            enc_d: BoundEncoder {
                tok_emb: rho,
                pos_emb: rho,
                layers: vec![],
                final_gain: rho,
                final_bias: rho,
            },
            shared_encoder: true,
            input_proj: rho,
            desc_proj: rho,
            class_w: g.leaf(Tensor::zeros(vec![4, n])),
            class_b: g.leaf(Tensor::vector(logit_bias.to_vec())),
        };
        let mcfg = ModelConfig {
            d: 4,
            ..ModelConfig::default()
        };
        let loss = ce_loss(&mut g, &bound_stub, &mcfg, rho, gold, n).unwrap();
        g.value(loss).item().unwrap()
    }

    #[test]
    fn ce_uniform_is_ln_n() {
        let loss = ce_value_with(&[0.0, 0.0, 0.0, 0.0], 2);
        assert!((loss - 4.0_f64.ln()).abs() < 1e-12, "got {loss}");
    }

    #[test]
    fn ce_half_probability_is_ln_two() {
        let loss = ce_value_with(&[0.0, 0.0], 0);
        assert!((loss - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_confident_gold_approaches_zero() {
        let loss = ce_value_with(&[50.0, 0.0, 0.0], 0);
        assert!(loss < 1e-12, "got {loss}");
    }

    #[test]
    fn unified_loss_arithmetic() {
        let mut g = Graph::new();
        let ce = g.leaf(Tensor::scalar(2.0));
        let ct = g.leaf(Tensor::scalar(4.0));
        let u = unified_loss(&mut g, ce, ct, 0.5).unwrap();
        assert_eq!(g.value(u).item().unwrap(), 3.0);
        let u1 = unified_loss(&mut g, ce, ct, 1.0).unwrap();
        assert_eq!(g.value(u1).item().unwrap(), 2.0);
        assert_eq!(unified_loss_value(2.0, 4.0, 0.5), 3.0);
    }

    #[test]
    fn predict_argmax_and_ties() {
        assert_eq!(predict(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(predict(&[0.5, 0.5]), 0);
        assert_eq!(predict(&[0.2, 0.7, 0.7]), 1);
    }

    #[test]
    fn predict_scale_invariance() {
        let rho_t = vec![0.3, -0.2, 0.9];
        let ds = vec![
            vec![0.1, 0.5, -0.3],
            vec![0.3, -0.2, 0.8],
            vec![-0.6, 0.1, 0.2],
        ];
        let (idx, sims) = predict_from_reprs(&rho_t, &ds);
        let scaled_t: Vec<f64> = rho_t.iter().map(|v| v * 7.3).collect();
        let scaled_ds: Vec<Vec<f64>> = ds
            .iter()
            .enumerate()
            .map(|(i, d)| d.iter().map(|v| v * (0.2 + i as f64)).collect())
            .collect();
        let (idx2, sims2) = predict_from_reprs(&scaled_t, &scaled_ds);
        assert_eq!(idx, idx2);
        for (a, b) in sims.iter().zip(&sims2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_repr_is_role_sensitive() {
        let (enc_cfg, mcfg, params, item) = toy_model(11).unwrap();
        let mut swapped = item.clone();
        std::mem::swap(&mut swapped.input.sub_start, &mut swapped.input.obj_start);

        let run = |it: &crate::data::BatchItem| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let (rho, _) = pair_repr(&mut g, &bound, &enc_cfg, &mcfg, &it.input).unwrap();
            g.value(rho).data().to_vec()
        };
        assert_ne!(run(&item), run(&swapped));
    }

    #[test]
    fn pair_repr_rejects_bad_marker_positions() {
        let (enc_cfg, mcfg, params, mut item) = toy_model(12).unwrap();
        item.input.sub_start = item.input.real_len;
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let err = pair_repr(&mut g, &bound, &enc_cfg, &mcfg, &item.input).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn input_projection_gradient_matches_finite_differences() {
        let (enc_cfg, mcfg, params, item) = toy_model(13).unwrap();
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let (rho, _) = pair_repr(&mut g, &bound, &enc_cfg, &mcfg, &item.input).unwrap();
        let loss = g.sum(rho);
        g.backward(loss).unwrap();
        let analytic = g.grad(bound.input_proj).unwrap().to_vec();

        let numeric = finite_diff(
            |flat| {
                let mut probe = params.clone();
                probe.input_proj =
                    Tensor::new(probe.input_proj.shape().to_vec(), flat.to_vec()).unwrap();
                let mut g = Graph::new();
                let bound = probe.bind(&mut g);
                let (rho, _) = pair_repr(&mut g, &bound, &enc_cfg, &mcfg, &item.input).unwrap();
                g.value(rho).data().iter().sum()
            },
            params.input_proj.data(),
            FD_STEP,
        );
        let mut worst = 0.0_f64;
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(rel_error(*a, *n));
        }
        assert!(worst < PRIMITIVE_TOLERANCE, "max rel err {worst}");
    }

    #[test]
    fn cls_off_makes_descriptions_independent_of_input() {
        let (enc_cfg, mut mcfg, params, item) = toy_model(14).unwrap();
        mcfg.use_cls_concat = false;

        let run = |cls_values: Vec<f64>| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let cls = g.leaf(Tensor::vector(cls_values));
            let rho_d =
                desc_repr(&mut g, &bound, &enc_cfg, &mcfg, &item.descriptions[1], cls).unwrap();
            g.value(rho_d).data().to_vec()
        };
        let a = run(vec![0.0; enc_cfg.d_model]);
        let b = run(vec![123.0; enc_cfg.d_model]);
        assert_eq!(a, b, "CLS-off output must ignore the CLS input");
    }

    #[test]
    fn cls_path_carries_gradient_back_to_input_encoder() {
        let (enc_cfg, mcfg, params, item) = toy_model(15).unwrap();
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let (_, cls) = pair_repr(&mut g, &bound, &enc_cfg, &mcfg, &item.input).unwrap();
        // description-only loss: nothing from the input branch except CLS
        let rho_d = desc_repr(&mut g, &bound, &enc_cfg, &mcfg, &item.descriptions[0], cls).unwrap();
        let loss = g.sum(rho_d);
        g.backward(loss).unwrap();
        let grad = g.grad(bound.enc_t.tok_emb).unwrap();
        assert!(
            grad.iter().any(|&v| v != 0.0),
            "input encoder must receive gradient through the CLS path"
        );
    }

    #[test]
    fn ce_off_leaves_class_head_untouched() {
        let (enc_cfg, mut mcfg, mut params, item) = toy_model(16).unwrap();
        mcfg.use_ce_loss = false;
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let losses = forward_pair(&mut g, &bound, &enc_cfg, &mcfg, &item).unwrap();
        assert_eq!(losses.ce_value, 0.0);
        g.backward(losses.unified).unwrap();
        params.store_grads(&g, &bound);
        assert!(params.class_w.grad().unwrap().iter().all(|&v| v == 0.0));
        assert!(params.class_b.grad().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alpha_zero_gives_zero_class_head_gradient() {
        let (enc_cfg, mut mcfg, mut params, item) = toy_model(17).unwrap();
        mcfg.alpha = 0.0;
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let losses = forward_pair(&mut g, &bound, &enc_cfg, &mcfg, &item).unwrap();
        assert!(losses.ce_value > 0.0, "CE still computed for the log");
        g.backward(losses.unified).unwrap();
        params.store_grads(&g, &bound);
        assert!(params.class_w.grad().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shared_encoder_has_single_parameter_set() {
        let (enc_cfg, mut mcfg, _, _) = toy_model(18).unwrap();
        mcfg.dual_encoder = false;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(18);
        use rand_chacha::rand_core::SeedableRng;
        let params = ModelParams::init(&enc_cfg, &mcfg, 3, &mut rng);
        assert!(params.enc_d.is_none());
        let names: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
        assert!(names.iter().all(|n| !n.starts_with("enc_d.")));
        assert!(names.iter().any(|n| n.starts_with("enc_t.")));
    }

    #[test]
    fn copied_dual_encoder_matches_shared_forward_bitwise() {
        let (enc_cfg, mcfg, params, item) = toy_model(19).unwrap();
        // shared: enc_d removed entirely
        let mut shared_params = params.clone();
        shared_params.enc_d = None;
        let mut shared_cfg = mcfg.clone();
        shared_cfg.dual_encoder = false;
        // dual with enc_d initialized as a copy of enc_t
        let mut copied_params = params.clone();
        copied_params.enc_d = Some(copied_params.enc_t.clone());

        let sims_shared = score_pair(&shared_params, &enc_cfg, &shared_cfg, &item).unwrap();
        let sims_copied = score_pair(&copied_params, &enc_cfg, &mcfg, &item).unwrap();
        assert_eq!(sims_shared.len(), sims_copied.len());
        for (a, b) in sims_shared.iter().zip(&sims_copied) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn contrastive_decreases_when_gold_similarity_rises() {
        // scalar route, no tensors: fixed others, rising gold
        let others = [0.2_f64, -0.1];
        let mut prev = f64::INFINITY;
        for gold_sim in [-0.5_f64, 0.0, 0.3, 0.8, 1.0] {
            let exps: f64 = gold_sim.exp() + others.iter().map(|v| v.exp()).sum::<f64>();
            let loss = -(gold_sim.exp() / exps).ln();
            assert!(loss < prev, "loss must strictly decrease");
            prev = loss;
        }
    }

    #[test]
    fn model_config_validation() {
        let mut cfg = ModelConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.5;
        cfg.temperature = 0.0;
        assert!(cfg.validate().is_err());
    }
}
