//! Scores a handful of binary predictions and prints the reliability table.

use bsm::metrics::{
    accuracy, batch_roc_auc, brier_score, expected_calibration_error,
    negative_log_likelihood_binary, predictive_entropy,
};
use bsm::PredictionBatch;

fn main() -> bsm::Result<()> {
    let rows = [
        [0.95, 0.05],
        [0.80, 0.20],
        [0.65, 0.35],
        [0.55, 0.45],
        [0.30, 0.70],
        [0.10, 0.90],
        [0.45, 0.55],
        [0.85, 0.15],
    ];
    let labels = vec![0, 0, 1, 0, 1, 1, 0, 0];
    let batch = PredictionBatch::from_rows(&rows, labels)?;

    let (ece, bins) = expected_calibration_error(&batch, 0.1)?;
    println!("accuracy {:.3}", accuracy(&batch)?);
    println!("roc_auc  {:.4}", batch_roc_auc(&batch)?);
    println!("ece      {ece:.4}");
    println!("brier    {:.4}", brier_score(&batch)?);
    println!("nll      {:.4}", negative_log_likelihood_binary(&batch)?);

    println!("\n  bin          n  conf   acc   gap");
    for b in bins.bins.iter().filter(|b| b.count > 0) {
        println!(
            "  ({:.1}, {:.1}]  {}  {:.3} {:.3} {:.3}",
            b.lo,
            b.hi,
            b.count,
            b.conf_mean,
            b.acc,
            b.gap()
        );
    }

    println!("\nentropy of each row (nats):");
    for r in &rows {
        println!("  {:?} -> {:.4}", r, predictive_entropy(r)?);
    }
    Ok(())
}
