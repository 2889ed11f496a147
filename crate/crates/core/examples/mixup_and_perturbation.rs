//! Draws Mixup coefficients for a few alphas, mixes a small batch and
//! perturbs one input under the default policy.

use bsm::augment::{mixup_batch, perturb, sample_gamma, PerturbationPolicy};
use bsm::rng::{stream, Stream};
use bsm::Matrix;

fn main() -> bsm::Result<()> {
    let mut rng = stream(0, Stream::Mixup);
    for alpha in [0.3, 1.0, 32.0] {
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sample_gamma(alpha, &mut rng))
            .collect::<bsm::Result<_>>()?;
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let near_edge = draws.iter().filter(|g| **g < 0.1 || **g > 0.9).count();
        println!("alpha {alpha:>4}: mean {mean:.3}, {near_edge} of 10000 outside [0.1, 0.9]");
    }

    let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])?;
    for p in mixup_batch(&x, &[0, 1, 1, 0], 0.3, &mut rng)? {
        println!(
            "{:?} gamma {:.3} -> {:.3?} labels ({}, {})",
            p.source_indices, p.gamma, p.mixed_input, p.label_i, p.label_j
        );
    }

    let policy = PerturbationPolicy::default();
    let mut rng = stream(0, Stream::Augment);
    for _ in 0..3 {
        println!(
            "perturb [1, -2] -> {:.3?}",
            perturb(&[1.0, -2.0], &policy, &mut rng)
        );
    }
    Ok(())
}
