//! Mixup pair construction and a feature-space perturbation policy.
//!
//! The perturbation policy stands in for an image pipeline. For reference,
//! the image-space settings it replaces are: brightness, hue, saturation and
//! contrast jitter `U(-0.15, 0.15)`; horizontal flip `Bern(0.5)`; translation
//! `U(-22, 22)` px per axis; rotation `U(-10, 10)` degrees; resize to
//! 224x224. None of these are implemented here.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.3;

/// One draw from `Beta(alpha, alpha)`, as `g1 / (g1 + g2)` of two Gamma draws.
pub fn sample_gamma(alpha: f64, rng: &mut Rng) -> Result<f64> {
    let g = Gamma::new(alpha, 1.0).map_err(|e| invalid(format!("mixup alpha {alpha}: {e}")))?;
    loop {
        let a = g.sample(rng);
        let b = g.sample(rng);
        let x = a / (a + b);
        // underflow in either draw can land on an endpoint
        if x > 0.0 && x < 1.0 {
            return Ok(x);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupPair {
    pub mixed_input: Vec<f64>,
    pub label_i: usize,
    pub label_j: usize,
    pub gamma: f64,
    pub source_indices: (usize, usize),
}

/// Convex combination `gamma x_i + (1 - gamma) x_j`. Equal coordinates are
/// passed through untouched so identical rows mix to themselves exactly.
pub fn mix(x_i: &[f64], x_j: &[f64], gamma: f64) -> Vec<f64> {
    x_i.iter()
        .zip(x_j)
        .map(|(&a, &b)| {
            if a == b {
                a
            } else {
                gamma * a + (1.0 - gamma) * b
            }
        })
        .collect()
}

/// Where each pair's mixing coefficient comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSource {
    Beta { alpha: f64 },
    Fixed(f64),
}

/// Pairs every sample with a partner from a uniform random permutation of
/// the batch, drawing one coefficient per pair.
pub fn mixup_batch(
    inputs: &Matrix,
    labels: &[usize],
    alpha: f64,
    rng: &mut Rng,
) -> Result<Vec<MixupPair>> {
    mixup_batch_with(inputs, labels, GammaSource::Beta { alpha }, rng)
}

pub fn mixup_batch_with(
    inputs: &Matrix,
    labels: &[usize],
    source: GammaSource,
    rng: &mut Rng,
) -> Result<Vec<MixupPair>> {
    let n = inputs.rows();
    if n < 2 {
        return Err(invalid(format!("mixup needs at least 2 samples, got {n}")));
    }
    if labels.len() != n {
        return Err(invalid(format!("{n} inputs but {} labels", labels.len())));
    }
    let mut partners: Vec<usize> = (0..n).collect();
    partners.shuffle(rng);
    partners
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            let gamma = match source {
                GammaSource::Beta { alpha } => sample_gamma(alpha, rng)?,
                GammaSource::Fixed(g) => g,
            };
            Ok(MixupPair {
                mixed_input: mix(inputs.row(i), inputs.row(j), gamma),
                label_i: labels[i],
                label_j: labels[j],
                gamma,
                source_indices: (i, j),
            })
        })
        .collect()
}

/// Additive isotropic noise plus per-dimension multiplicative jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationPolicy {
    pub noise_sigma: f64,
    pub scale_jitter: f64,
}

impl Default for PerturbationPolicy {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            scale_jitter: 0.1,
        }
    }
}

impl PerturbationPolicy {
    pub const IDENTITY: Self = Self {
        noise_sigma: 0.0,
        scale_jitter: 0.0,
    };

    pub fn new(noise_sigma: f64, scale_jitter: f64) -> Result<Self> {
        let p = Self {
            noise_sigma,
            scale_jitter,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite())
            || !(self.scale_jitter >= 0.0 && self.scale_jitter.is_finite())
        {
            return Err(invalid(format!(
                "perturbation parameters must be finite and >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0 && self.scale_jitter == 0.0
    }
}

/// `input * (1 + u) + n` with `u ~ U[-jitter, jitter]` and `n ~ N(0, sigma^2)`
/// drawn independently per dimension.
pub fn perturb(input: &[f64], policy: &PerturbationPolicy, rng: &mut Rng) -> Vec<f64> {
    if policy.is_identity() {
        return input.to_vec();
    }
    let normal = Normal::new(0.0, policy.noise_sigma).expect("validated sigma");
    let jitter = (policy.scale_jitter > 0.0).then(|| {
        Uniform::new_inclusive(-policy.scale_jitter, policy.scale_jitter).expect("validated jitter")
    });
    input
        .iter()
        .map(|&x| {
            let u = jitter.as_ref().map_or(0.0, |d| rng.sample(d));
            let n = if policy.noise_sigma > 0.0 {
                normal.sample(rng)
            } else {
                0.0
            };
            x * (1.0 + u) + n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn forced_unit_gamma_reproduces_source() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let pairs =
            mixup_batch_with(&x, &[0, 1, 0], GammaSource::Fixed(1.0), &mut seeded(3)).unwrap();
        for (i, p) in pairs.iter().enumerate() {
            assert_eq!(p.mixed_input, x.row(i));
            assert_eq!(p.source_indices.0, i);
        }
        let mut partners: Vec<usize> = pairs.iter().map(|p| p.source_indices.1).collect();
        partners.sort();
        assert_eq!(partners, vec![0, 1, 2]);
    }

    #[test]
    fn identical_rows_mix_to_themselves() {
        let x = Matrix::from_rows(&[[0.7, -1.5]; 4]).unwrap();
        for p in mixup_batch(&x, &[0, 1, 1, 0], 0.3, &mut seeded(11)).unwrap() {
            assert_eq!(p.mixed_input, vec![0.7, -1.5]);
            assert!(p.gamma > 0.0 && p.gamma < 1.0);
        }
    }

    #[test]
    fn convex_combination_example() {
        assert_eq!(mix(&[1.0, 0.0], &[0.0, 1.0], 0.25), vec![0.25, 0.75]);
    }

    #[test]
    fn mixup_requires_two_samples() {
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(mixup_batch(&x, &[0], 0.3, &mut seeded(0)).is_err());
    }

    #[test]
    fn mixup_is_reproducible() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let a = mixup_batch(&x, &[0, 1, 0, 1], 0.3, &mut seeded(5)).unwrap();
        let b = mixup_batch(&x, &[0, 1, 0, 1], 0.3, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturb_identity_and_zero_input() {
        let x = [0.3, -2.0, 5.5];
        assert_eq!(
            perturb(&x, &PerturbationPolicy::IDENTITY, &mut seeded(1)),
            x.to_vec()
        );
        let jitter_only = PerturbationPolicy::new(0.0, 0.5).unwrap();
        assert_eq!(
            perturb(&[0.0; 3], &jitter_only, &mut seeded(2)),
            vec![0.0; 3]
        );
        assert!(PerturbationPolicy::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        assert!(sample_gamma(0.0, &mut seeded(0)).is_err());
    }
}
