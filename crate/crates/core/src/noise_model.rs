//! Two-component Beta mixture over normalized per-sample losses.
//!
//! The low-mean component models clean samples and the high-mean component
//! models label-noise samples. [`noisy_posterior`] gives the per-sample weight
//! `w` consumed by the bootstrapping losses.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{invalid, Result};

/// Clamp margin applied after min-max rescaling of losses.
pub const NORMALIZE_EPS: f64 = 1e-4;
pub const DEFAULT_EM_ITERATIONS: usize = 10;
pub const SHAPE_MIN: f64 = 0.01;
pub const SHAPE_MAX: f64 = 100.0;
pub const VARIANCE_FLOOR: f64 = 1e-6;
const PI_MIN: f64 = 1e-6;
const MIN_FIT_SAMPLES: usize = 10;

/// Min-max rescale to `[0, 1]` then clamp to `[eps, 1 - eps]`. A constant
/// input maps to 0.5 everywhere.
pub fn normalize_losses(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(invalid(format!(
            "need at least 2 losses, got {}",
            raw.len()
        )));
    }
    if let Some(l) = raw.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(invalid(format!(
            "loss {l} is not a finite nonnegative value"
        )));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; raw.len()]);
    }
    let span = hi - lo;
    Ok(raw
        .iter()
        .map(|&l| ((l - lo) / span).clamp(NORMALIZE_EPS, 1.0 - NORMALIZE_EPS))
        .collect())
}

fn ln_beta_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta(alpha, beta)
}

/// Beta density, evaluated in log space.
pub fn beta_pdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("beta density argument {x} outside (0, 1)")));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(invalid(format!(
            "beta shapes ({alpha}, {beta}) must be positive"
        )));
    }
    Ok(ln_beta_pdf(x, alpha, beta).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaComponent {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaComponent {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        ln_beta_pdf(x, self.alpha, self.beta)
    }

    /// Moment matching from a weighted mean and variance. The concentration
    /// is capped so the larger shape stays at `SHAPE_MAX` without moving the
    /// mean.
    fn from_moments(mean: f64, var: f64) -> Self {
        let var = var.max(VARIANCE_FLOOR);
        let cap = SHAPE_MAX / mean.max(1.0 - mean);
        let common = (mean * (1.0 - mean) / var - 1.0).min(cap);
        Self {
            alpha: (mean * common).clamp(SHAPE_MIN, SHAPE_MAX),
            beta: ((1.0 - mean) * common).clamp(SHAPE_MIN, SHAPE_MAX),
        }
    }
}

/// Mixture `pi * Beta(clean) + (1 - pi) * Beta(noisy)`, with `clean` always
/// the lower-mean component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaMixtureModel {
    pub clean: BetaComponent,
    pub noisy: BetaComponent,
    /// Weight of the clean component, in (0, 1).
    pub pi: f64,
    /// Set when the data carried no information (all losses identical).
    pub uninformative: bool,
}

impl BetaMixtureModel {
    pub fn new(clean: BetaComponent, noisy: BetaComponent, pi: f64) -> Result<Self> {
        for c in [clean, noisy] {
            if !(c.alpha > 0.0 && c.beta > 0.0) {
                return Err(invalid(format!(
                    "beta shapes ({}, {}) must be positive",
                    c.alpha, c.beta
                )));
            }
        }
        if !(pi > 0.0 && pi < 1.0) {
            return Err(invalid(format!("mixing weight {pi} outside (0, 1)")));
        }
        let mut model = Self {
            clean,
            noisy,
            pi,
            uninformative: false,
        };
        model.order_components();
        Ok(model)
    }

    /// Placeholder whose posterior is 0.5 everywhere.
    pub fn uninformative() -> Self {
        let flat = BetaComponent {
            alpha: 1.0,
            beta: 1.0,
        };
        Self {
            clean: flat,
            noisy: flat,
            pi: 0.5,
            uninformative: true,
        }
    }

    fn order_components(&mut self) {
        if self.clean.mean() > self.noisy.mean() {
            std::mem::swap(&mut self.clean, &mut self.noisy);
            self.pi = 1.0 - self.pi;
        }
    }

    /// Log joint densities `(ln pi f_clean(x), ln (1 - pi) f_noisy(x))`.
    fn ln_joint(&self, x: f64) -> (f64, f64) {
        (
            self.pi.ln() + self.clean.ln_pdf(x),
            (1.0 - self.pi).ln() + self.noisy.ln_pdf(x),
        )
    }

    /// Responsibility of the noisy component for `x`.
    fn noisy_responsibility(&self, x: f64) -> f64 {
        let (a, b) = self.ln_joint(x);
        let r = 1.0 / (1.0 + (a - b).exp());
        if r.is_nan() {
            0.5
        } else {
            r
        }
    }

    /// Observed-data log-likelihood.
    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let (a, b) = self.ln_joint(x);
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            })
            .sum()
    }
}

/// Result of an EM fit, with the log-likelihood after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmmFit {
    pub model: BetaMixtureModel,
    pub log_likelihoods: Vec<f64>,
}

/// Fits the mixture by EM with a moment-matching M-step.
///
/// Responsibilities are initialized by thresholding at the mean loss, so the
/// fit is fully determined by its inputs.
pub fn fit_bmm(normalized_losses: &[f64], iterations: usize) -> Result<BetaMixtureModel> {
    fit_bmm_traced(normalized_losses, iterations).map(|f| f.model)
}

pub fn fit_bmm_traced(xs: &[f64], iterations: usize) -> Result<BmmFit> {
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(invalid(format!(
            "need at least {MIN_FIT_SAMPLES} losses to fit, got {}",
            xs.len()
        )));
    }
    if iterations == 0 {
        return Err(invalid("EM needs at least one iteration"));
    }
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(invalid(format!("normalized loss {x} outside (0, 1)")));
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Ok(BmmFit {
            model: BetaMixtureModel::uninformative(),
            log_likelihoods: Vec::new(),
        });
    }

    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    // responsibility of the clean (low-loss) component
    let mut resp: Vec<f64> = xs
        .iter()
        .map(|&x| if x < mean { 1.0 } else { 0.0 })
        .collect();
    let mut model = BetaMixtureModel::uninformative();
    model.uninformative = false;
    let mut trace = Vec::with_capacity(iterations);

    for _ in 0..iterations {
        // M-step
        let w_clean: f64 = resp.iter().sum();
        let w_noisy = n - w_clean;
        if let Some(c) = weighted_component(xs, resp.iter().copied(), w_clean) {
            model.clean = c;
        }
        if let Some(c) = weighted_component(xs, resp.iter().map(|r| 1.0 - r), w_noisy) {
            model.noisy = c;
        }
        model.pi = (w_clean / n).clamp(PI_MIN, 1.0 - PI_MIN);

        // E-step
        for (r, &x) in resp.iter_mut().zip(xs) {
            *r = 1.0 - model.noisy_responsibility(x);
        }
        trace.push(model.log_likelihood(xs));
    }

    model.order_components();
    Ok(BmmFit {
        model,
        log_likelihoods: trace,
    })
}

fn weighted_component(
    xs: &[f64],
    weights: impl Iterator<Item = f64> + Clone,
    total: f64,
) -> Option<BetaComponent> {
    if total <= 1e-12 {
        return None;
    }
    let mean = xs
        .iter()
        .zip(weights.clone())
        .map(|(x, w)| w * x)
        .sum::<f64>()
        / total;
    let var = xs
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean).powi(2))
        .sum::<f64>()
        / total;
    Some(BetaComponent::from_moments(mean, var))
}

/// Posterior probability that a normalized loss came from the noisy
/// component. Returns 0.5 for uninformative models.
pub fn noisy_posterior(model: &BetaMixtureModel, normalized_loss: f64) -> Result<f64> {
    if !(normalized_loss > 0.0 && normalized_loss < 1.0) {
        return Err(invalid(format!(
            "normalized loss {normalized_loss} outside (0, 1)"
        )));
    }
    if model.uninformative {
        return Ok(0.5);
    }
    Ok(model.noisy_responsibility(normalized_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_losses(&[0.0, 1.0, 2.0]).unwrap(),
            vec![1e-4, 0.5, 1.0 - 1e-4]
        );
        assert_eq!(normalize_losses(&[3.0, 3.0, 3.0]).unwrap(), vec![0.5; 3]);
        assert_eq!(
            normalize_losses(&[1.0, 3.0]).unwrap(),
            vec![1e-4, 1.0 - 1e-4]
        );
        assert!(normalize_losses(&[1.0]).is_err());
        assert!(normalize_losses(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn beta_pdf_closed_forms() {
        for x in [0.01, 0.3, 0.77, 0.999] {
            assert_abs_diff_eq!(beta_pdf(x, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            beta_pdf(0.5, 2.0, 2.0).unwrap(),
            6.0 * 0.5 * 0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            beta_pdf(0.5, 3.0, 1.0).unwrap(),
            3.0 * 0.25,
            epsilon = 1e-12
        );
        assert!(beta_pdf(0.0, 2.0, 2.0).is_err());
        assert!(beta_pdf(1.0, 2.0, 2.0).is_err());
        assert!(beta_pdf(0.5, 0.0, 2.0).is_err());
    }

    #[test]
    fn degenerate_losses_are_uninformative() {
        let m = fit_bmm(&[0.5; 20], 10).unwrap();
        assert!(m.uninformative);
        assert_eq!(noisy_posterior(&m, 0.1).unwrap(), 0.5);
        assert_eq!(noisy_posterior(&m, 0.9).unwrap(), 0.5);
    }

    #[test]
    fn fit_preconditions() {
        assert!(fit_bmm(&[0.2; 5], 10).is_err());
        assert!(fit_bmm(&[0.2; 20], 0).is_err());
        let mut xs = vec![0.2; 20];
        xs[3] = 1.0;
        assert!(fit_bmm(&xs, 10).is_err());
    }

    #[test]
    fn symmetric_model_posterior_is_half_at_midpoint() {
        let m = BetaMixtureModel::new(
            BetaComponent {
                alpha: 2.0,
                beta: 8.0,
            },
            BetaComponent {
                alpha: 8.0,
                beta: 2.0,
            },
            0.5,
        )
        .unwrap();
        assert_abs_diff_eq!(noisy_posterior(&m, 0.5).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constructor_orders_components() {
        let m = BetaMixtureModel::new(
            BetaComponent {
                alpha: 8.0,
                beta: 2.0,
            },
            BetaComponent {
                alpha: 2.0,
                beta: 8.0,
            },
            0.3,
        )
        .unwrap();
        assert!(m.clean.mean() < m.noisy.mean());
        assert_abs_diff_eq!(m.pi, 0.7, epsilon = 1e-15);
        assert!(noisy_posterior(&m, 0.9).unwrap() > 0.9);
    }

    #[test]
    fn two_tight_clusters_split_evenly() {
        let xs: Vec<f64> = (0..200)
            .map(|i| {
                let jitter = (i / 2) as f64 * 1e-4;
                if i % 2 == 0 {
                    0.1 + jitter
                } else {
                    0.9 - jitter
                }
            })
            .collect();
        let fit = fit_bmm_traced(&xs, 10).unwrap();
        assert!((fit.model.pi - 0.5).abs() < 0.05, "pi = {}", fit.model.pi);
        assert!(fit.model.clean.mean() < 0.2);
        assert!(fit.model.noisy.mean() > 0.8);
    }
}
