//! Evaluation analyses: uncertainty referral curves, threshold sweeps,
//! feature-space distance to the training set and Spearman correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{average_ranks, roc_auc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferralPoint {
    pub rejected_fraction: f64,
    pub accuracy: f64,
    /// Absent when the retained set lost a class.
    pub auc: Option<f64>,
    pub n_retained: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferralCurve {
    pub points: Vec<ReferralPoint>,
    /// Why requested fractions were dropped.
    pub diagnostics: Vec<String>,
}

fn check_lengths(n: usize, others: &[(&str, usize)]) -> Result<()> {
    for (name, len) in others {
        if *len != n {
            return Err(invalid(format!("{name} has length {len}, expected {n}")));
        }
    }
    Ok(())
}

fn accuracy_of(correct: &[bool], keep: &[usize]) -> f64 {
    keep.iter().filter(|&&i| correct[i]).count() as f64 / keep.len() as f64
}

/// Rejects the `ceil(f N)` most uncertain samples for each fraction `f`
/// (ties broken by lower sample index first) and scores the rest.
///
/// `scores` and `labels` feed the ROC-AUC of the retained set.
pub fn referral_curve(
    uncertainties: &[f64],
    correctness: &[bool],
    scores: &[f64],
    labels: &[u8],
    fractions: &[f64],
) -> Result<ReferralCurve> {
    let n = uncertainties.len();
    check_lengths(
        n,
        &[
            ("correctness", correctness.len()),
            ("scores", scores.len()),
            ("labels", labels.len()),
        ],
    )?;
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(invalid(format!("rejection fraction {f} outside [0, 1)")));
    }
    let mut by_uncertainty: Vec<usize> = (0..n).collect();
    by_uncertainty.sort_by(|&a, &b| {
        uncertainties[b]
            .total_cmp(&uncertainties[a])
            .then(a.cmp(&b))
    });

    let mut sorted = fractions.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut curve = ReferralCurve::default();
    for f in sorted {
        // guard against products like 0.3 * 10 = 3.0000000000000004
        let rejected = ((f * n as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut keep: Vec<usize> = by_uncertainty[rejected.min(n)..].to_vec();
        if keep.is_empty() {
            curve
                .diagnostics
                .push(format!("fraction {f}: no samples retained"));
            continue;
        }
        if let Some(last) = curve.points.last() {
            if keep.len() >= last.n_retained {
                curve.diagnostics.push(format!(
                    "fraction {f}: retains {} samples, no fewer than fraction {}",
                    keep.len(),
                    last.rejected_fraction
                ));
                continue;
            }
        }
        keep.sort_unstable();
        let s: Vec<f64> = keep.iter().map(|&i| scores[i]).collect();
        let l: Vec<u8> = keep.iter().map(|&i| labels[i]).collect();
        let auc = match roc_auc(&s, &l) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        curve.points.push(ReferralPoint {
            rejected_fraction: f,
            accuracy: accuracy_of(correctness, &keep),
            auc,
            n_retained: keep.len(),
        });
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub accuracy: f64,
    pub n_retained: usize,
}

/// Accuracy of the samples with uncertainty `<= t`, per threshold. Thresholds
/// that retain nothing are reported in the returned diagnostics.
pub fn threshold_curve(
    uncertainties: &[f64],
    correctness: &[bool],
    thresholds: &[f64],
) -> Result<(Vec<ThresholdPoint>, Vec<String>)> {
    check_lengths(uncertainties.len(), &[("correctness", correctness.len())])?;
    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    for &t in thresholds {
        let keep: Vec<usize> = (0..uncertainties.len())
            .filter(|&i| uncertainties[i] <= t)
            .collect();
        if keep.is_empty() {
            diagnostics.push(format!("threshold {t}: no samples retained"));
            continue;
        }
        points.push(ThresholdPoint {
            threshold: t,
            accuracy: accuracy_of(correctness, &keep),
            n_retained: keep.len(),
        });
    }
    Ok((points, diagnostics))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - max cos(query, row)` over the nonzero rows of `bank`.
pub fn min_cosine_distance(query: &[f64], bank: &Matrix) -> Result<f64> {
    let qn = norm(query);
    if qn == 0.0 {
        return Err(invalid("query feature vector has zero norm"));
    }
    if bank.cols() != query.len() {
        return Err(invalid(format!(
            "query has {} features, bank rows have {}",
            query.len(),
            bank.cols()
        )));
    }
    let mut best: Option<f64> = None;
    for row in bank.iter_rows() {
        let rn = norm(row);
        if rn == 0.0 {
            continue;
        }
        let cos = query.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() / (qn * rn);
        best = Some(best.map_or(cos, |b: f64| b.max(cos)));
    }
    let cos = best.ok_or_else(|| invalid("feature bank has no nonzero rows"))?;
    Ok((1.0 - cos.clamp(-1.0, 1.0)).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub sample_index: usize,
    pub min_cosine_distance: f64,
    pub uncertainty: f64,
    pub correct: bool,
}

impl DistanceRecord {
    pub fn similarity(&self) -> f64 {
        1.0 - self.min_cosine_distance
    }
}

/// One record per query row. Rows with zero-norm features are skipped and
/// listed in the diagnostics.
pub fn distance_records(
    query_features: &Matrix,
    train_bank: &Matrix,
    uncertainties: &[f64],
    correctness: &[bool],
) -> Result<(Vec<DistanceRecord>, Vec<String>)> {
    let n = query_features.rows();
    check_lengths(
        n,
        &[
            ("uncertainties", uncertainties.len()),
            ("correctness", correctness.len()),
        ],
    )?;
    let mut records = Vec::with_capacity(n);
    let mut diagnostics = Vec::new();
    for (i, q) in query_features.iter_rows().enumerate() {
        if norm(q) == 0.0 {
            diagnostics.push(format!("sample {i}: zero feature vector skipped"));
            continue;
        }
        records.push(DistanceRecord {
            sample_index: i,
            min_cosine_distance: min_cosine_distance(q, train_bank)?,
            uncertainty: uncertainties[i],
            correct: correctness[i],
        });
    }
    Ok((records, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-tailed p-value.
    pub p_value: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn spearman_rho(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(invalid(format!(
            "spearman needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let rho = pearson(&rx, &ry)
        .ok_or_else(|| Error::UndefinedCorrelation("one of the variables is constant".into()))?;
    Ok((rho, rx, ry))
}

/// Spearman's rho (Pearson correlation of average ranks) with a two-tailed
/// p-value from the Student-t approximation on `N - 2` degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    let (rho, _, _) = spearman_rho(x, y)?;
    let df = (x.len() - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Spearman { rho, p_value })
}

/// Largest N accepted by [`spearman_exact`].
pub const EXACT_PERMUTATION_MAX_N: usize = 10;

/// Spearman's rho with an exact two-tailed permutation p-value: the share of
/// all `N!` reorderings of `y`'s ranks whose `|rho|` reaches the observed one.
pub fn spearman_exact(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() > EXACT_PERMUTATION_MAX_N {
        return Err(invalid(format!(
            "exact permutation test limited to N <= {EXACT_PERMUTATION_MAX_N}, got {}",
            x.len()
        )));
    }
    let (rho, rx, mut ry) = spearman_rho(x, y)?;
    let target = rho.abs() - 1e-12;
    let (mut hits, mut total) = (0u64, 0u64);
    // Heap's algorithm
    let n = ry.len();
    let mut c = vec![0usize; n];
    let mut visit = |ry: &[f64]| {
        total += 1;
        if pearson(&rx, ry).is_some_and(|r| r.abs() >= target) {
            hits += 1;
        }
    };
    visit(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            visit(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(Spearman {
        rho,
        p_value: hits as f64 / total as f64,
    })
}
