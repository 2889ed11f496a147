//! Metric kernels over prediction batches: entropy, ECE, binary NLL, Brier
//! score, ROC-AUC and accuracy.
//!
//! Every function is pure and accumulates in sample-index order, so results
//! do not depend on how callers partition work.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Tolerance on row sums of probability vectors.
pub const ROW_SUM_TOL: f64 = 1e-6;
/// Clamp applied to probabilities before taking logs in NLL.
pub const LOG_EPS: f64 = 1e-12;
/// Default reliability bin width.
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

/// Class-probability rows with their integer labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    probs: Matrix,
    labels: Vec<usize>,
}

impl PredictionBatch {
    pub fn new(probs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if probs.rows() != labels.len() {
            return Err(invalid(format!(
                "{} probability rows but {} labels",
                probs.rows(),
                labels.len()
            )));
        }
        let k = probs.cols();
        for (i, row) in probs.iter_rows().enumerate() {
            check_prob_row(row).map_err(|e| invalid(format!("row {i}: {e}")))?;
            if labels[i] >= k {
                return Err(invalid(format!(
                    "label {} at row {i} is >= K = {k}",
                    labels[i]
                )));
            }
        }
        Ok(Self { probs, labels })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<usize>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.probs.row(i)
    }

    /// Maximum class probability per sample.
    pub fn confidences(&self) -> Vec<f64> {
        self.probs
            .iter_rows()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Whether `argmax(probs) == label`, per sample.
    pub fn correctness(&self) -> Vec<bool> {
        self.probs
            .iter_rows()
            .zip(&self.labels)
            .map(|(r, &y)| argmax(r) == y)
            .collect()
    }

    /// Probability of class 1, the score used for binary ROC-AUC.
    pub fn positive_scores(&self) -> Result<Vec<f64>> {
        if self.num_classes() != 2 {
            return Err(Error::UnsupportedShape(format!(
                "positive-class scores need K = 2, got K = {}",
                self.num_classes()
            )));
        }
        Ok(self.probs.iter_rows().map(|r| r[1]).collect())
    }

    /// Reorders rows and labels jointly.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            probs: self.probs.select_rows(order),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn check_prob_row(row: &[f64]) -> Result<()> {
    if row.is_empty() {
        return Err(invalid("empty probability row"));
    }
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("probability {p} outside [0, 1]")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(invalid(format!("row sums to {s}, not 1")));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn predictive_entropy(probs_row: &[f64]) -> Result<f64> {
    check_prob_row(probs_row)?;
    Ok(entropy_unchecked(probs_row))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let h = -p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>();
    // -0.0 for one-hot rows
    h.max(0.0)
}

/// One reliability bin over `(lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence; 0 for empty bins.
    pub conf_mean: f64,
    /// Empirical accuracy; 0 for empty bins.
    pub acc: f64,
}

impl ReliabilityBin {
    pub fn gap(&self) -> f64 {
        (self.conf_mean - self.acc).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bin_width: f64,
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityBins {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Bin index for a confidence value under the `(m w, (m + 1) w]` rule.
    pub fn bin_index(bin_width: f64, num_bins: usize, conf: f64) -> usize {
        if conf <= 0.0 {
            return 0;
        }
        let last = num_bins - 1;
        let mut idx = ((conf / bin_width).ceil() as usize)
            .saturating_sub(1)
            .min(last);
        // settle against the same edges reported in the bins
        while idx > 0 && conf <= idx as f64 * bin_width {
            idx -= 1;
        }
        while idx < last && conf > (idx + 1) as f64 * bin_width {
            idx += 1;
        }
        idx
    }
}

/// Expected calibration error, binning each sample by its maximum class
/// probability.
pub fn expected_calibration_error(
    batch: &PredictionBatch,
    bin_width: f64,
) -> Result<(f64, ReliabilityBins)> {
    if batch.is_empty() {
        return Err(invalid("ECE of an empty batch"));
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(invalid(format!("bin width {bin_width} outside (0, 1]")));
    }
    let num_bins = ((1.0 / bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    let mut correct_sum = vec![0.0; num_bins];

    for (conf, ok) in batch.confidences().into_iter().zip(batch.correctness()) {
        let m = ReliabilityBins::bin_index(bin_width, num_bins, conf);
        counts[m] += 1;
        conf_sum[m] += conf;
        if ok {
            correct_sum[m] += 1.0;
        }
    }

    let n = batch.len() as f64;
    let mut ece = 0.0;
    let bins = (0..num_bins)
        .map(|m| {
            let count = counts[m];
            let (conf_mean, acc) = if count > 0 {
                (conf_sum[m] / count as f64, correct_sum[m] / count as f64)
            } else {
                (0.0, 0.0)
            };
            ece += count as f64 / n * (conf_mean - acc).abs();
            ReliabilityBin {
                lo: m as f64 * bin_width,
                hi: ((m + 1) as f64 * bin_width).min(1.0),
                count,
                conf_mean,
                acc,
            }
        })
        .collect();

    Ok((ece, ReliabilityBins { bin_width, bins }))
}

/// Mean negative log-probability of the true class, for binary batches.
pub fn negative_log_likelihood_binary(batch: &PredictionBatch) -> Result<f64> {
    if batch.num_classes() != 2 {
        return Err(Error::UnsupportedShape(format!(
            "binary NLL needs K = 2, got K = {}",
            batch.num_classes()
        )));
    }
    if batch.is_empty() {
        return Err(invalid("NLL of an empty batch"));
    }
    let total: f64 = (0..batch.len())
        .map(|i| {
            let p = batch.row(i)[batch.labels[i]].clamp(LOG_EPS, 1.0 - LOG_EPS);
            -p.ln()
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean over samples of the class-averaged squared error against the one-hot
/// target.
pub fn brier_score(batch: &PredictionBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(invalid("Brier score of an empty batch"));
    }
    let k = batch.num_classes() as f64;
    let total: f64 = (0..batch.len())
        .map(|i| {
            let y = batch.labels[i];
            batch
                .row(i)
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let t = if c == y { 1.0 } else { 0.0 };
                    (t - p).powi(2)
                })
                .sum::<f64>()
                / k
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Fraction of samples whose argmax matches the label.
pub fn accuracy(batch: &PredictionBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(invalid("accuracy of an empty batch"));
    }
    let hits = batch.correctness().into_iter().filter(|&c| c).count();
    Ok(hits as f64 / batch.len() as f64)
}

/// Average (fractional) ranks, 1-based, with ties sharing the mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// ROC-AUC through the Mann-Whitney U statistic with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(invalid(format!("label {l} is not binary")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC-AUC needs both classes present".into(),
        ));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * q))
}

/// ROC-AUC of the class-1 probability for a binary batch.
pub fn batch_roc_auc(batch: &PredictionBatch) -> Result<f64> {
    let scores = batch.positive_scores()?;
    let labels: Vec<u8> = batch.labels().iter().map(|&l| l as u8).collect();
    roc_auc(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn batch_from(conf_correct: &[(f64, bool)]) -> PredictionBatch {
        let rows: Vec<[f64; 2]> = conf_correct.iter().map(|&(c, _)| [c, 1.0 - c]).collect();
        let labels = conf_correct
            .iter()
            .map(|&(c, ok)| {
                let pred = if c >= 0.5 { 0 } else { 1 };
                if ok {
                    pred
                } else {
                    1 - pred
                }
            })
            .collect();
        PredictionBatch::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn rejects_unnormalized_rows() {
        assert!(PredictionBatch::from_rows(&[[0.5, 0.6]], vec![0]).is_err());
        assert!(PredictionBatch::from_rows(&[[1.2, -0.2]], vec![0]).is_err());
        assert!(PredictionBatch::from_rows(&[[0.5, 0.5]], vec![2]).is_err());
        assert!(predictive_entropy(&[0.3, 0.3]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(predictive_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            predictive_entropy(&[0.5, 0.5]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        let by_hand = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert_abs_diff_eq!(
            predictive_entropy(&[0.8, 0.2]).unwrap(),
            by_hand,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            predictive_entropy(&[0.8, 0.2]).unwrap(),
            0.500402,
            epsilon = 1e-6
        );
    }

    #[test]
    fn ece_single_confident_correct_sample() {
        let b = PredictionBatch::from_rows(&[[1.0, 0.0]], vec![0]).unwrap();
        let (ece, bins) = expected_calibration_error(&b, 0.1).unwrap();
        assert_eq!(ece, 0.0);
        assert_eq!(bins.bins.len(), 10);
        assert_eq!(bins.bins[9].count, 1);
    }

    #[test]
    fn ece_bins_partition_and_edges() {
        assert_eq!(ReliabilityBins::bin_index(0.1, 10, 0.0), 0);
        assert_eq!(ReliabilityBins::bin_index(0.1, 10, 0.1), 0);
        assert_eq!(ReliabilityBins::bin_index(0.1, 10, 0.3), 2);
        assert_eq!(ReliabilityBins::bin_index(0.1, 10, 0.30000001), 3);
        assert_eq!(ReliabilityBins::bin_index(0.1, 10, 0.7), 6);
        assert_eq!(ReliabilityBins::bin_index(0.1, 10, 1.0), 9);
        // non-dividing width: M = ceil(1 / 0.3) = 4
        let b = batch_from(&[(0.95, true), (0.55, false)]);
        let (_, bins) = expected_calibration_error(&b, 0.3).unwrap();
        assert_eq!(bins.bins.len(), 4);
        assert_eq!(bins.bins[3].hi, 1.0);
        assert_eq!(bins.total_count(), 2);
    }

    #[test]
    fn ece_rejects_bad_args() {
        let b = batch_from(&[(0.9, true)]);
        assert!(expected_calibration_error(&b, 0.0).is_err());
        assert!(expected_calibration_error(&b, 1.5).is_err());
        let empty = PredictionBatch::new(Matrix::zeros(0, 2), vec![]).unwrap();
        assert!(expected_calibration_error(&empty, 0.1).is_err());
        assert!(accuracy(&empty).is_err());
        assert!(brier_score(&empty).is_err());
    }

    #[test]
    fn nll_requires_binary() {
        let b = PredictionBatch::from_rows(&[[0.2, 0.3, 0.5]], vec![2]).unwrap();
        assert!(matches!(
            negative_log_likelihood_binary(&b),
            Err(Error::UnsupportedShape(_))
        ));
    }

    #[test]
    fn nll_and_brier_zero_for_perfect() {
        let b = PredictionBatch::from_rows(&[[1.0, 0.0], [0.0, 1.0]], vec![0, 1]).unwrap();
        assert!(negative_log_likelihood_binary(&b).unwrap() < 1e-11);
        assert_eq!(brier_score(&b).unwrap(), 0.0);
        let half = PredictionBatch::from_rows(&[[0.5, 0.5]], vec![1]).unwrap();
        assert_abs_diff_eq!(
            negative_log_likelihood_binary(&half).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(brier_score(&half).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn accuracy_counts_and_tie_break() {
        let b = PredictionBatch::from_rows(
            &[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.5, 0.5]],
            vec![0, 1, 1, 0],
        )
        .unwrap();
        // the tied row predicts class 0
        assert_eq!(accuracy(&b).unwrap(), 0.75);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[1.0, 2.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(average_ranks(&[3.0, 3.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }
}
