//! Neuron ranking, sparse probe fitting and F1 evaluation.

use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, LogisticFit};
use super::Site;
use crate::error::{Error, Result};
use crate::linalg::top_k_indices;
use crate::protocol::{PROBE_MAX_ITER, PROBE_THRESHOLD, PROBE_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRanking {
    /// `a_j = |mean(h_j | y=1) - mean(h_j | y=0)|`.
    pub scores: Vec<f64>,
    /// Neurons by descending score, ties to the lower index.
    pub order: Vec<usize>,
}

impl NeuronRanking {
    /// `S_k`, the first `k` neurons of the order.
    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }
}

pub fn rank_neurons<R: AsRef<[f32]>>(activations: &[R], labels: &[bool]) -> Result<NeuronRanking> {
    if activations.len() != labels.len() {
        return Err(Error::Dataset(format!(
            "{} activation rows for {} labels",
            activations.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Dataset(format!(
            "ranking needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let width = activations[0].as_ref().len();
    let mut sum_pos = vec![0.0f64; width];
    let mut sum_neg = vec![0.0f64; width];
    for (row, &y) in activations.iter().zip(labels) {
        let target = if y { &mut sum_pos } else { &mut sum_neg };
        for (s, v) in target.iter_mut().zip(row.as_ref()) {
            *s += *v as f64;
        }
    }
    let scores: Vec<f64> = sum_pos
        .iter()
        .zip(&sum_neg)
        .map(|(p, q)| (p / n_pos as f64 - q / n_neg as f64).abs())
        .collect();
    let order = top_k_indices(&scores, width);
    Ok(NeuronRanking { scores, order })
}

/// Precision, recall and F1 of the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl BinaryScores {
    /// Precision (recall) is 0 when nothing is predicted (present) positive,
    /// and F1 is 0 when precision + recall = 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Evaluation(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(Self::from_counts(tp, fp, fn_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOptions {
    /// `None` means `1 / n_train`.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub threshold: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iter: PROBE_MAX_ITER,
            tol: PROBE_TOL,
            threshold: PROBE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub concept: String,
    pub site: Site,
    pub k: usize,
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub train_loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub test_f1: f64,
    pub test_precision: f64,
    pub test_recall: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Fraction of positives among train + test samples.
    pub positive_ratio: f64,
}

pub fn restrict<R: AsRef<[f32]>>(rows: &[R], selected: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| selected.iter().map(|&j| r.as_ref()[j] as f64).collect())
        .collect()
}

/// Fits a logistic probe on the train rows restricted to `selected`.
pub fn fit_probe<R: AsRef<[f32]>>(
    train: &[R],
    train_labels: &[bool],
    selected: &[usize],
    options: &ProbeOptions,
) -> Result<LogisticFit> {
    if selected.is_empty() {
        return Err(Error::Config("probe needs k >= 1".into()));
    }
    let n_pos = train_labels.iter().filter(|l| **l).count();
    if n_pos < 2 || train_labels.len() - n_pos < 2 {
        return Err(Error::Dataset(format!(
            "probe needs 2 samples per class in the train split, got {n_pos} positive of {}",
            train_labels.len()
        )));
    }
    let lambda = options.lambda.unwrap_or(1.0 / train.len() as f64);
    fit_logistic(&restrict(train, selected), train_labels, lambda, options.max_iter, options.tol)
}

pub fn predict(weights: &[f64], bias: f64, x: &[f64], threshold: f64) -> bool {
    crate::linalg::sigmoid(crate::linalg::dot(weights, x) + bias) >= threshold
}

pub fn evaluate_f1(
    weights: &[f64],
    bias: f64,
    test: &[Vec<f64>],
    labels: &[bool],
    threshold: f64,
) -> Result<BinaryScores> {
    if test.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let predicted: Vec<bool> = test.iter().map(|x| predict(weights, bias, x, threshold)).collect();
    BinaryScores::from_predictions(&predicted, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_means_give_zero_scores_and_identity_order() {
        let acts = vec![vec![1.0f32, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = rank_neurons(&acts, &[true, false]).unwrap();
        assert_eq!(r.scores, vec![0.0; 3]);
        assert_eq!(r.order, vec![0, 1, 2]);
    }

    #[test]
    fn label_copy_neuron_ranks_first() {
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        let acts: Vec<Vec<f32>> = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| vec![1e-4 * (i % 5) as f32, y as u8 as f32, 1e-4 * (i % 7) as f32])
            .collect();
        let r = rank_neurons(&acts, &labels).unwrap();
        assert_eq!(r.order[0], 1);
        assert!((r.scores[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_a_dataset_error() {
        assert!(matches!(rank_neurons(&[vec![1.0f32]], &[true]), Err(Error::Dataset(_))));
    }

    #[test]
    fn f1_conventions() {
        assert_eq!(BinaryScores::from_counts(3, 0, 0).f1, 1.0);
        assert_eq!(BinaryScores::from_counts(0, 0, 4).f1, 0.0);
        assert!((BinaryScores::from_counts(1, 1, 1).f1 - 0.5).abs() < 1e-15);
        assert!(matches!(evaluate_f1(&[1.0], 0.0, &[], &[], 0.5), Err(Error::Evaluation(_))));
    }

    #[test]
    fn separable_one_dimensional_data_gets_perfect_f1() {
        let x: Vec<Vec<f32>> = (0..40).map(|i| vec![i as f32 - 19.5]).collect();
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let options = ProbeOptions {
            lambda: Some(1e-3),
            ..Default::default()
        };
        let fit = fit_probe(&x, &y, &[0], &options).unwrap();
        let test: Vec<Vec<f64>> = vec![vec![-3.0], vec![-0.2], vec![0.3], vec![8.0]];
        let s = evaluate_f1(&fit.weights, fit.bias, &test, &[false, false, true, true], 0.5).unwrap();
        assert_eq!(s.f1, 1.0);
    }
}
