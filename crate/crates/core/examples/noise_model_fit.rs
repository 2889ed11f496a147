//! Fits the two-component Beta mixture to synthetic per-sample losses and
//! shows the noisy posterior across the loss range.

use bsm::noise_model::{fit_bmm_traced, noisy_posterior};
use bsm::rng::seeded;
use rand_distr::{Beta, Distribution};

fn main() -> bsm::Result<()> {
    let mut rng = seeded(1);
    let clean = Beta::new(2.0, 8.0).unwrap();
    let noisy = Beta::new(8.0, 2.0).unwrap();
    // 80% clean, 20% mislabeled
    let xs: Vec<f64> = (0..5000)
        .map(|i| {
            if i % 5 == 0 {
                noisy.sample(&mut rng)
            } else {
                clean.sample(&mut rng)
            }
        })
        .collect();

    // the trainer refits every epoch with few iterations; a one-off fit
    // from scratch on imbalanced data needs more
    let fit = fit_bmm_traced(&xs, 60)?;
    let m = &fit.model;
    println!(
        "clean Beta({:.2}, {:.2}) mean {:.3}",
        m.clean.alpha,
        m.clean.beta,
        m.clean.mean()
    );
    println!(
        "noisy Beta({:.2}, {:.2}) mean {:.3}",
        m.noisy.alpha,
        m.noisy.beta,
        m.noisy.mean()
    );
    println!("clean weight {:.3} (true 0.8)", m.pi);
    println!("log-likelihood per iteration:");
    for (i, ll) in fit.log_likelihoods.iter().enumerate().step_by(6) {
        println!("  {i:2} {ll:.2}");
    }
    println!("posterior P(noisy | loss):");
    for loss in [0.05, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95] {
        println!("  {loss:.2} -> {:.4}", noisy_posterior(m, loss)?);
    }
    Ok(())
}
