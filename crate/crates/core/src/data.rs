//! Synthetic binary datasets and symmetric label-noise injection.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Two interleaving half circles.
    TwoMoons,
    /// Two isotropic Gaussians centred at `(-1, -1)` and `(1, 1)`.
    Blobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

/// Inputs with their clean and observed labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub clean_labels: Vec<usize>,
    pub observed_labels: Vec<usize>,
    pub split: Vec<Split>,
}

/// Inputs plus the labels a consumer is allowed to see.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_val: usize,
    pub generator_noise: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::TwoMoons,
            n_train: 2000,
            n_val: 500,
            generator_noise: 0.2,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_train", self.n_train), ("n_val", self.n_val)] {
            if n < 4 || !n.is_multiple_of(2) {
                return Err(invalid(format!("{name} = {n} must be even and >= 4")));
            }
        }
        if !(self.generator_noise >= 0.0 && self.generator_noise.is_finite()) {
            return Err(invalid(format!(
                "generator noise {} must be finite and >= 0",
                self.generator_noise
            )));
        }
        Ok(())
    }
}

/// Balanced binary sample of size `n`, shuffled, deterministic under `seed`.
pub fn generate_dataset(
    kind: DatasetKind,
    n: usize,
    generator_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(invalid(format!("dataset size {n} must be even and >= 4")));
    }
    if !(generator_noise >= 0.0 && generator_noise.is_finite()) {
        return Err(invalid(format!(
            "generator noise {generator_noise} must be finite and >= 0"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Dataset);
    let jitter = Normal::new(0.0, generator_noise).expect("validated noise");
    let angle = Uniform::new_inclusive(0.0, std::f64::consts::PI).expect("valid range");
    let half = n / 2;

    let mut points: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for label in 0..2 {
        for _ in 0..half {
            let base = match kind {
                DatasetKind::TwoMoons => {
                    let t = rng.sample(angle);
                    if label == 0 {
                        [t.cos(), t.sin()]
                    } else {
                        [1.0 - t.cos(), 0.5 - t.sin()]
                    }
                }
                DatasetKind::Blobs => {
                    if label == 0 {
                        [-1.0, -1.0]
                    } else {
                        [1.0, 1.0]
                    }
                }
            };
            let (dx, dy) = if generator_noise > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            points.push(([base[0] + dx, base[1] + dy], label));
        }
    }
    points.shuffle(&mut rng);

    let rows: Vec<[f64; 2]> = points.iter().map(|p| p.0).collect();
    let labels: Vec<usize> = points.iter().map(|p| p.1).collect();
    Ok(Dataset {
        inputs: Matrix::from_rows(&rows)?,
        clean_labels: labels.clone(),
        observed_labels: labels,
        split: vec![Split::Train; n],
    })
}

/// Flips `floor(rate * N)` binary labels chosen uniformly without
/// replacement. Returns the new labels and the sorted flipped indices.
pub fn inject_label_noise(
    labels: &[usize],
    rate: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(invalid(format!("noise rate {rate} outside [0, 1]")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(invalid(format!("label {l} is not binary")));
    }
    let n = labels.len();
    let count = (rate * n as f64).floor() as usize;
    let mut rng = rng::stream(seed, Stream::LabelNoise);
    let mut flipped = index::sample(&mut rng, n, count).into_vec();
    flipped.sort_unstable();
    let mut noisy = labels.to_vec();
    for &i in &flipped {
        noisy[i] = 1 - noisy[i];
    }
    Ok((noisy, flipped))
}

impl Dataset {
    /// Train and validation draws from `spec`, with label noise injected into
    /// the training part only.
    pub fn build(spec: &DatasetSpec, noise_rate: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut train = generate_dataset(spec.kind, spec.n_train, spec.generator_noise, seed)?;
        // validation draws come from a disjoint seed stream
        let val_seed = seed ^ 0x5a5a_5a5a_5a5a_5a5a;
        let val = generate_dataset(spec.kind, spec.n_val, spec.generator_noise, val_seed)?;
        let (observed, _) = inject_label_noise(&train.clean_labels, noise_rate, seed)?;
        train.observed_labels = observed;

        let mut rows: Vec<Vec<f64>> = train.inputs.iter_rows().map(<[f64]>::to_vec).collect();
        rows.extend(val.inputs.iter_rows().map(<[f64]>::to_vec));
        let mut clean = train.clean_labels;
        clean.extend(&val.clean_labels);
        let mut observed = train.observed_labels;
        observed.extend(&val.clean_labels);
        let mut split = vec![Split::Train; spec.n_train];
        split.extend(vec![Split::Validation; spec.n_val]);
        Ok(Self {
            inputs: Matrix::from_rows(&rows)?,
            clean_labels: clean,
            observed_labels: observed,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.clean_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean_labels.is_empty()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.split[i] == which)
            .collect()
    }

    /// Training inputs with their observed (possibly noisy) labels.
    pub fn train(&self) -> LabeledSet {
        let idx = self.indices(Split::Train);
        LabeledSet {
            inputs: self.inputs.select_rows(&idx),
            labels: idx.iter().map(|&i| self.observed_labels[i]).collect(),
        }
    }

    /// Clean labels of the training part, aligned with [`Dataset::train`].
    pub fn train_clean_labels(&self) -> Vec<usize> {
        self.indices(Split::Train)
            .into_iter()
            .map(|i| self.clean_labels[i])
            .collect()
    }

    pub fn validation(&self) -> LabeledSet {
        let idx = self.indices(Split::Validation);
        LabeledSet {
            inputs: self.inputs.select_rows(&idx),
            labels: idx.iter().map(|&i| self.clean_labels[i]).collect(),
        }
    }

    /// Positions within the training part whose observed label was flipped.
    pub fn flipped_train_positions(&self) -> Vec<usize> {
        self.indices(Split::Train)
            .into_iter()
            .enumerate()
            .filter(|&(_, i)| self.clean_labels[i] != self.observed_labels[i])
            .map(|(pos, _)| pos)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_reproducible() {
        let d = generate_dataset(DatasetKind::TwoMoons, 100, 0.1, 4).unwrap();
        assert_eq!(d.clean_labels.iter().filter(|&&l| l == 0).count(), 50);
        assert_eq!(
            d,
            generate_dataset(DatasetKind::TwoMoons, 100, 0.1, 4).unwrap()
        );
        assert_ne!(
            d,
            generate_dataset(DatasetKind::TwoMoons, 100, 0.1, 5).unwrap()
        );
        assert!(generate_dataset(DatasetKind::Blobs, 7, 0.1, 4).is_err());
    }

    #[test]
    fn noiseless_blobs_are_two_points() {
        let d = generate_dataset(DatasetKind::Blobs, 20, 0.0, 1).unwrap();
        for (x, &y) in d.inputs.iter_rows().zip(&d.clean_labels) {
            let expected = if y == 0 { [-1.0, -1.0] } else { [1.0, 1.0] };
            assert_eq!(x, expected);
            // the line x0 + x1 = 0 separates them
            assert_eq!((x[0] + x[1] > 0.0) as usize, y);
        }
    }

    #[test]
    fn noise_injection_counts() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let (same, none) = inject_label_noise(&labels, 0.0, 3).unwrap();
        assert_eq!(same, labels);
        assert!(none.is_empty());
        let (all, idx) = inject_label_noise(&labels, 1.0, 3).unwrap();
        assert_eq!(idx.len(), 1000);
        assert!(all.iter().zip(&labels).all(|(a, b)| a != b));
        let (noisy, idx) = inject_label_noise(&labels, 0.2, 3).unwrap();
        assert_eq!(idx.len(), 200);
        let diff: Vec<usize> = (0..1000).filter(|&i| noisy[i] != labels[i]).collect();
        assert_eq!(diff, idx);
        assert!(inject_label_noise(&labels, 1.5, 3).is_err());
    }

    #[test]
    fn validation_labels_stay_clean() {
        let spec = DatasetSpec {
            n_train: 200,
            n_val: 50,
            ..DatasetSpec::default()
        };
        let d = Dataset::build(&spec, 0.2, 8).unwrap();
        assert_eq!(d.validation().labels.len(), 50);
        for i in d.indices(Split::Validation) {
            assert_eq!(d.clean_labels[i], d.observed_labels[i]);
        }
        assert_eq!(d.flipped_train_positions().len(), 40);
    }
}
