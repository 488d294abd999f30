//! Micro-averaged precision/recall/F1 over the full candidate-pair space.
//!
//! NULL is excluded from the micro averages, as is standard for relation
//! extraction: a pair counts as TP when its non-NULL gold predicate is
//! predicted exactly; a non-NULL prediction that misses its gold counts as
//! FP for the predicted class and, when the gold is non-NULL, as FN for
//! the gold class.

use crate::data::{generate_pairs, make_batch, Dataset};
use crate::encoder::{EncoderConfig, Vocab};
use crate::error::Result;
use crate::model::{predict, score_items, ModelConfig, ModelParams};
use crate::schema::PredicateSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateCounts {
    pub predicate: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub per_predicate: Vec<PredicateCounts>,
    /// `confusion[gold][predicted]`, indexed like the predicate list.
    pub confusion: Vec<Vec<usize>>,
    pub predicates: Vec<String>,
}

/// Accumulates (gold, predicted) index pairs into a confusion matrix.
pub fn tally(outcomes: impl IntoIterator<Item = (usize, usize)>, n_predicates: usize) -> Vec<Vec<usize>> {
    let mut confusion = vec![vec![0usize; n_predicates]; n_predicates];
    for (gold, predicted) in outcomes {
        confusion[gold][predicted] += 1;
    }
    confusion
}

/// Builds the report from a confusion matrix. F1 is 0 when P + R is 0.
pub fn report_from_confusion(confusion: Vec<Vec<usize>>, predicates: &[String]) -> EvalReport {
    let n = predicates.len();
    let mut per_predicate = Vec::with_capacity(n);
    for r in 0..n {
        let tp = confusion[r][r];
        let fp: usize = (0..n).filter(|&g| g != r).map(|g| confusion[g][r]).sum();
        let fn_: usize = (0..n).filter(|&p| p != r).map(|p| confusion[r][p]).sum();
        per_predicate.push(PredicateCounts {
            predicate: predicates[r].clone(),
            tp,
            fp,
            fn_,
        });
    }
    // micro counts pool every non-NULL predicate
    let tp: usize = per_predicate.iter().skip(1).map(|c| c.tp).sum();
    let fp: usize = (1..n)
        .map(|p| (0..n).filter(|&g| g != p).map(|g| confusion[g][p]).sum::<usize>())
        .sum();
    let fn_: usize = (1..n)
        .map(|g| (0..n).filter(|&p| p != g).map(|p| confusion[g][p]).sum::<usize>())
        .sum();
    let micro_precision = ratio(tp, tp + fp);
    let micro_recall = ratio(tp, tp + fn_);
    let micro_f1 = if micro_precision + micro_recall == 0.0 {
        0.0
    } else {
        2.0 * micro_precision * micro_recall / (micro_precision + micro_recall)
    };
    EvalReport {
        micro_precision,
        micro_recall,
        micro_f1,
        per_predicate,
        confusion,
        predicates: predicates.to_vec(),
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores every candidate pair of the dataset (never subsampled) and
/// reports micro metrics over the non-NULL predicates.
pub fn evaluate(
    params: &ModelParams,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    dataset: &Dataset,
    schema: &PredicateSchema,
    vocab: &Vocab,
) -> Result<EvalReport> {
    let mut outcomes = Vec::new();
    for instance in dataset.instances() {
        let pairs = generate_pairs(instance, schema, None, 0);
        if pairs.is_empty() {
            continue;
        }
        let batch = make_batch(&pairs, dataset, schema, vocab, enc_cfg, mcfg.desc_max_len)?;
        let scores = score_items(params, enc_cfg, mcfg, &batch.items)?;
        for (item, sims) in batch.items.iter().zip(&scores) {
            outcomes.push((item.gold, predict(sims)));
        }
    }
    let confusion = tally(outcomes, schema.n_predicates());
    Ok(report_from_confusion(confusion, schema.predicates()))
}

/// One prediction line: the pair, its gold label, the predicted predicate,
/// and the full similarity vector in schema predicate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub subject: usize,
    pub object: usize,
    pub gold: String,
    pub predicted: String,
    pub similarities: Vec<f64>,
}

/// Scores every candidate pair and returns one record per pair, in
/// dataset order.
pub fn predict_dataset(
    params: &ModelParams,
    enc_cfg: &EncoderConfig,
    mcfg: &ModelConfig,
    dataset: &Dataset,
    schema: &PredicateSchema,
    vocab: &Vocab,
) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    for instance in dataset.instances() {
        let pairs = generate_pairs(instance, schema, None, 0);
        if pairs.is_empty() {
            continue;
        }
        let batch = make_batch(&pairs, dataset, schema, vocab, enc_cfg, mcfg.desc_max_len)?;
        let scores = score_items(params, enc_cfg, mcfg, &batch.items)?;
        for (item, sims) in batch.items.iter().zip(scores) {
            let predicted = predict(&sims);
            records.push(PredictionRecord {
                instance_id: item.pair.instance_id.clone(),
                subject: item.pair.subject_mention,
                object: item.pair.object_mention,
                gold: schema.predicates()[item.gold].clone(),
                predicted: schema.predicates()[predicted].clone(),
                similarities: sims,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let predicates = preds(&["NULL", "A", "B"]);
        let outcomes = vec![(1, 1), (2, 2), (0, 0), (0, 0)];
        let report = report_from_confusion(tally(outcomes, 3), &predicates);
        assert_eq!(report.micro_precision, 1.0);
        assert_eq!(report.micro_recall, 1.0);
        assert_eq!(report.micro_f1, 1.0);
    }

    #[test]
    fn counting_oracle_case() {
        // TP=3, FP=1, FN=2 -> P=0.75, R=0.6, F1≈0.6667
        let predicates = preds(&["NULL", "A", "B"]);
        let outcomes = vec![
            (1, 1),
            (1, 1),
            (2, 2), // 3 TP
            (0, 1), // FP for A
            (1, 0), // FN for A
            (2, 0), // FN for B
        ];
        let report = report_from_confusion(tally(outcomes, 3), &predicates);
        assert!((report.micro_precision - 0.75).abs() < 1e-12);
        assert!((report.micro_recall - 0.6).abs() < 1e-12);
        assert!((report.micro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_null_predictions_score_zero() {
        let predicates = preds(&["NULL", "A"]);
        let outcomes = vec![(1, 0), (1, 0), (0, 0)];
        let report = report_from_confusion(tally(outcomes, 2), &predicates);
        assert_eq!(report.micro_f1, 0.0);
        assert_eq!(report.micro_precision, 0.0);
        assert_eq!(report.micro_recall, 0.0);
    }

    #[test]
    fn wrong_nonnull_prediction_counts_fp_and_fn() {
        let predicates = preds(&["NULL", "A", "B"]);
        let outcomes = vec![(1, 2)];
        let report = report_from_confusion(tally(outcomes, 3), &predicates);
        let a = &report.per_predicate[1];
        let b = &report.per_predicate[2];
        assert_eq!((a.tp, a.fp, a.fn_), (0, 0, 1));
        assert_eq!((b.tp, b.fp, b.fn_), (0, 1, 0));
    }

    #[test]
    fn tp_plus_fn_equals_nonnull_gold_count() {
        let predicates = preds(&["NULL", "A", "B"]);
        let outcomes = vec![(1, 1), (1, 2), (2, 0), (0, 1), (0, 0), (2, 2)];
        let gold_nonnull = outcomes.iter().filter(|(g, _)| *g != 0).count();
        let report = report_from_confusion(tally(outcomes, 3), &predicates);
        let tp: usize = report.per_predicate.iter().skip(1).map(|c| c.tp).sum();
        let fn_: usize = report.per_predicate.iter().skip(1).map(|c| c.fn_).sum();
        assert_eq!(tp + fn_, gold_nonnull);
    }
}
