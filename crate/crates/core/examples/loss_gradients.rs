//! Evaluates each loss on one logit vector and checks its analytic gradient
//! against central differences.

use bsm::losses::{bs_loss, bsm_loss, ce_loss, mixup_ce_loss, LossOutput};

fn finite_difference(f: &dyn Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|k| {
            let mut up = at.to_vec();
            let mut down = at.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

type Loss = Box<dyn Fn(&[f64]) -> LossOutput>;

fn main() {
    let logits = [0.4, -1.1, 1.7];
    // bootstrap targets are held fixed, so differentiate with the target
    // frozen at the evaluation point
    let cases: Vec<(&str, Loss)> = vec![
        ("ce", Box::new(|l| ce_loss(l, 0))),
        ("bs w=0.6", Box::new(|l| bs_loss(l, 0, 0.6))),
        ("mixup g=0.3", Box::new(|l| mixup_ce_loss(l, 0, 1, 0.3))),
        ("bsm", Box::new(|l| bsm_loss(l, 0, 1, 0.3, 0.6, 0.1))),
    ];
    for (name, f) in &cases {
        let out = f(&logits);
        let numeric = finite_difference(&|l| f(l).value, &logits, 1e-5);
        let worst = out
            .grad_logits
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
            .fold(0.0, f64::max);
        println!(
            "{name:12} loss {:.6} grad {:?} max rel err {worst:.2e}",
            out.value,
            out.grad_logits
                .iter()
                .map(|g| format!("{g:.4}"))
                .collect::<Vec<_>>()
        );
    }
}
