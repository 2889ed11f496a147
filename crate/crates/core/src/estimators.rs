//! Predictors that turn trained models into probabilities plus an entropy
//! uncertainty: single pass, deep ensemble, MC dropout and test-time
//! perturbation.

use serde::{Deserialize, Serialize};

use crate::augment::{perturb, PerturbationPolicy};
use crate::error::{invalid, Result};
use crate::losses::softmax;
use crate::matrix::Matrix;
use crate::metrics::entropy_unchecked;
use crate::model::MlpModel;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    pub mean_probs: Matrix,
    /// Entropy (nats) of each row of `mean_probs`.
    pub uncertainty: Vec<f64>,
    /// Per-class predictive variance, MC dropout only.
    pub variance: Option<Matrix>,
}

impl EstimatorOutput {
    fn from_mean(mean_probs: Matrix, variance: Option<Matrix>) -> Self {
        let uncertainty = mean_probs.iter_rows().map(entropy_unchecked).collect();
        Self {
            mean_probs,
            uncertainty,
            variance,
        }
    }
}

fn probs_with(model: &MlpModel, inputs: &Matrix, mut dropout: Option<&mut Rng>) -> Result<Matrix> {
    let mut out = Matrix::zeros(inputs.rows(), model.shape().output);
    for (i, x) in inputs.iter_rows().enumerate() {
        let pass = model.forward(x, dropout.as_deref_mut())?;
        out.row_mut(i).copy_from_slice(&softmax(&pass.logits));
    }
    Ok(out)
}

/// Elementwise mean of equally shaped probability tables, summed in order.
pub fn average(tables: &[Matrix]) -> Result<Matrix> {
    let first = tables
        .first()
        .ok_or_else(|| invalid("nothing to average"))?;
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for t in tables {
        if (t.rows(), t.cols()) != (first.rows(), first.cols()) {
            return Err(invalid(format!(
                "shape {}x{} differs from {}x{}",
                t.rows(),
                t.cols(),
                first.rows(),
                first.cols()
            )));
        }
        for i in 0..t.rows() {
            for (a, b) in acc.row_mut(i).iter_mut().zip(t.row(i)) {
                *a += b;
            }
        }
    }
    let m = tables.len() as f64;
    for i in 0..acc.rows() {
        for a in acc.row_mut(i) {
            *a /= m;
        }
    }
    Ok(acc)
}

pub fn single_forward(model: &MlpModel, inputs: &Matrix) -> Result<EstimatorOutput> {
    Ok(EstimatorOutput::from_mean(
        probs_with(model, inputs, None)?,
        None,
    ))
}

/// Entropy of the mean of member softmax outputs.
pub fn ensemble_predict(models: &[MlpModel], inputs: &Matrix) -> Result<EstimatorOutput> {
    let first = models
        .first()
        .ok_or_else(|| invalid("ensemble needs at least one model"))?;
    if let Some(m) = models.iter().find(|m| m.shape() != first.shape()) {
        return Err(invalid(format!(
            "ensemble member shape {:?} differs from {:?}",
            m.shape(),
            first.shape()
        )));
    }
    let tables = models
        .iter()
        .map(|m| probs_with(m, inputs, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimatorOutput::from_mean(average(&tables)?, None))
}

/// Mean and diagonal variance `tau_inv + E[y^2] - E[y]^2` over stochastic
/// passes.
pub fn mc_moments(passes: &[Matrix], tau_inv: f64) -> Result<(Matrix, Matrix)> {
    let mean = average(passes)?;
    let squares: Vec<Matrix> = passes
        .iter()
        .map(|p| {
            let mut sq = p.clone();
            for i in 0..sq.rows() {
                for v in sq.row_mut(i) {
                    *v *= *v;
                }
            }
            sq
        })
        .collect();
    let mut var = average(&squares)?;
    for i in 0..var.rows() {
        for (v, m) in var.row_mut(i).iter_mut().zip(mean.row(i)) {
            *v = tau_inv + (*v - m * m);
        }
    }
    Ok((mean, var))
}

/// `passes` stochastic forward passes with dropout active.
pub fn mc_dropout_predict(
    model: &MlpModel,
    inputs: &Matrix,
    passes: usize,
    tau_inv: f64,
    rng: &mut Rng,
) -> Result<EstimatorOutput> {
    if passes < 1 {
        return Err(invalid("MC dropout needs at least one pass"));
    }
    if !(tau_inv >= 0.0 && tau_inv.is_finite()) {
        return Err(invalid(format!(
            "tau_inv {tau_inv} must be finite and >= 0"
        )));
    }
    let tables = (0..passes)
        .map(|_| probs_with(model, inputs, Some(rng)))
        .collect::<Result<Vec<_>>>()?;
    let (mean, var) = mc_moments(&tables, tau_inv)?;
    Ok(EstimatorOutput::from_mean(mean, Some(var)))
}

/// Averages predictions over `repeats` perturbed copies of every input. Zero
/// repeats means the unperturbed input only.
pub fn tta_predict(
    model: &MlpModel,
    inputs: &Matrix,
    policy: &PerturbationPolicy,
    repeats: usize,
    rng: &mut Rng,
) -> Result<EstimatorOutput> {
    policy.validate()?;
    if repeats == 0 {
        return single_forward(model, inputs);
    }
    let mut tables = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let rows: Vec<Vec<f64>> = inputs
            .iter_rows()
            .map(|x| perturb(x, policy, rng))
            .collect();
        let perturbed = Matrix::from_vec(inputs.rows(), inputs.cols(), rows.concat())?;
        tables.push(probs_with(model, &perturbed, None)?);
    }
    Ok(EstimatorOutput::from_mean(average(&tables)?, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{kaiming_init, ModelShape};
    use crate::rng::seeded;

    fn model(seed: u64) -> MlpModel {
        kaiming_init(&ModelShape::new(2, vec![8, 8], 2).unwrap(), 0.2, seed).unwrap()
    }

    fn inputs() -> Matrix {
        Matrix::from_rows(&[[0.1, 0.2], [-1.0, 0.5], [2.0, -0.3]]).unwrap()
    }

    #[test]
    fn zero_logit_model_has_max_entropy() {
        let mut m = model(1);
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let out = single_forward(&m, &inputs()).unwrap();
        for u in out.uncertainty {
            assert!((u - std::f64::consts::LN_2).abs() < 1e-15);
        }
        assert!(out.variance.is_none());
    }

    #[test]
    fn maximal_disagreement_averages_to_uniform() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let out = EstimatorOutput::from_mean(average(&[a, b]).unwrap(), None);
        assert_eq!(out.mean_probs.row(0), &[0.5, 0.5]);
        assert!((out.uncertainty[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ensemble_rejects_mismatched_members() {
        let other = kaiming_init(&ModelShape::new(2, vec![4], 2).unwrap(), 0.2, 3).unwrap();
        assert!(ensemble_predict(&[model(1), other], &inputs()).is_err());
        assert!(ensemble_predict(&[], &inputs()).is_err());
    }

    #[test]
    fn identical_members_equal_one_member() {
        let one = single_forward(&model(4), &inputs()).unwrap();
        let three = ensemble_predict(&[model(4), model(4), model(4)], &inputs()).unwrap();
        for i in 0..3 {
            for (a, b) in one.mean_probs.row(i).iter().zip(three.mean_probs.row(i)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn alternating_passes_give_quarter_variance() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let passes = vec![a.clone(), b.clone(), a, b];
        let (mean, var) = mc_moments(&passes, 0.0).unwrap();
        assert_eq!(mean.row(0), &[0.5, 0.5]);
        assert_eq!(var.row(0), &[0.25, 0.25]);
    }

    #[test]
    fn mc_dropout_argument_checks() {
        assert!(mc_dropout_predict(&model(1), &inputs(), 0, 0.0, &mut seeded(0)).is_err());
        assert!(mc_dropout_predict(&model(1), &inputs(), 2, -1.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn tta_is_reproducible_under_seed() {
        let p = PerturbationPolicy::new(0.2, 0.1).unwrap();
        let a = tta_predict(&model(2), &inputs(), &p, 8, &mut seeded(7)).unwrap();
        let b = tta_predict(&model(2), &inputs(), &p, 8, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
    }
}
