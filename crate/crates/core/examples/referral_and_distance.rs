//! Decision referral, uncertainty thresholds and the feature-distance
//! correlation for one trained model.

use bsm::analysis::{distance_records, referral_curve, spearman, threshold_curve};
use bsm::data::Dataset;
use bsm::estimators::single_forward;
use bsm::trainer::{train, Method, TrainConfig};
use bsm::PredictionBatch;

fn main() -> bsm::Result<()> {
    let mut cfg = TrainConfig::new(Method::Bsm, 5);
    cfg.noise_rate = 0.2;
    let data = Dataset::build(&cfg.dataset, cfg.noise_rate, cfg.seed)?;
    let (model, _) = train(&cfg, &data)?;
    let val = data.validation();
    let out = single_forward(&model, &val.inputs)?;
    let batch = PredictionBatch::new(out.mean_probs.clone(), val.labels.clone())?;
    let correct = batch.correctness();
    let labels: Vec<u8> = val.labels.iter().map(|&l| l as u8).collect();

    let curve = referral_curve(
        &out.uncertainty,
        &correct,
        &batch.positive_scores()?,
        &labels,
        &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    )?;
    println!("rejected  kept  accuracy  auc");
    for p in &curve.points {
        println!(
            "{:8.2} {:5}  {:.4}    {}",
            p.rejected_fraction,
            p.n_retained,
            p.accuracy,
            p.auc.map_or("-".into(), |a| format!("{a:.4}"))
        );
    }

    let (points, _) = threshold_curve(&out.uncertainty, &correct, &[0.1, 0.2, 0.4, 0.6, 0.7])?;
    println!("\nthreshold  kept  accuracy");
    for p in &points {
        println!("{:9.2} {:5}  {:.4}", p.threshold, p.n_retained, p.accuracy);
    }

    let bank = model.features(&data.train().inputs)?;
    let query = model.features(&val.inputs)?;
    let (records, _) = distance_records(&query, &bank, &out.uncertainty, &correct)?;
    let sim: Vec<f64> = records.iter().map(|r| r.similarity()).collect();
    let unc: Vec<f64> = records.iter().map(|r| r.uncertainty).collect();
    let s = spearman(&sim, &unc)?;
    println!(
        "\nspearman(similarity, uncertainty) = {:.4} (p = {:.2e})",
        s.rho, s.p_value
    );
    Ok(())
}
