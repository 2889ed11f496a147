//! Compares single-pass, ensemble, MC-dropout and test-time perturbation
//! uncertainty on the same validation split.

use bsm::augment::PerturbationPolicy;
use bsm::data::Dataset;
use bsm::estimators::{
    ensemble_predict, mc_dropout_predict, single_forward, tta_predict, EstimatorOutput,
};
use bsm::experiment::{batch_metrics, member_seed};
use bsm::rng::{stream, Stream};
use bsm::trainer::{train, Method, TrainConfig};
use bsm::PredictionBatch;

fn main() -> bsm::Result<()> {
    let seed = 3;
    let mut cfg = TrainConfig::new(Method::Bsm, seed);
    cfg.noise_rate = 0.2;
    let data = Dataset::build(&cfg.dataset, cfg.noise_rate, seed)?;
    let val = data.validation();

    let models = (0..3)
        .map(|m| {
            let mut c = cfg.clone();
            c.seed = member_seed(seed, m);
            train(&c, &data).map(|(model, _)| model)
        })
        .collect::<bsm::Result<Vec<_>>>()?;

    let mut rng = stream(seed, Stream::Inference);
    let outputs: Vec<(&str, EstimatorOutput)> = vec![
        ("single", single_forward(&models[0], &val.inputs)?),
        ("ensemble m=3", ensemble_predict(&models, &val.inputs)?),
        (
            "mc dropout t=30",
            mc_dropout_predict(&models[0], &val.inputs, 30, 0.0, &mut rng)?,
        ),
        (
            "tta r=20",
            tta_predict(
                &models[0],
                &val.inputs,
                &PerturbationPolicy::default(),
                20,
                &mut rng,
            )?,
        ),
    ];
    for (name, out) in outputs {
        let mean_u = out.uncertainty.iter().sum::<f64>() / out.uncertainty.len() as f64;
        let m = batch_metrics(
            &PredictionBatch::new(out.mean_probs, val.labels.clone())?,
            0.1,
        )?;
        println!(
            "{name:16} auc {:.4}  ece {:.4}  brier {:.4}  mean entropy {mean_u:.4}",
            m.roc_auc, m.ece, m.brier
        );
    }
    Ok(())
}
