//! Runs a small Mixup-alpha sweep from an in-memory config and prints the
//! consolidated table.
//!
//! `cargo run --release --example experiment_sweep -- [output dir]`

use bsm::experiment::{run_sweep_in, ExperimentConfig, SweepAxis};

const CONFIG: &str = r#"
[train]
method = "bsm"
noise_rate = 0.2
seed = 11
max_epochs = 40

[estimator]
kind = "single"
"#;

fn main() -> bsm::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("bsm_alpha_sweep"), Into::into);
    let base = ExperimentConfig::from_toml(CONFIG)?;
    let values: Vec<String> = ["0.3", "0.5", "0.8", "1.0", "32"]
        .map(String::from)
        .to_vec();
    let (path, _) = run_sweep_in(&base, SweepAxis::Alphas, &values, &dir)?;
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
