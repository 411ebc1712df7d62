//! Order-3 response (20 x 30 x 40), five predictors, envelope dims (2, 3, 4):
//! mean squared coefficient error of OLS and the iterative envelope fit at
//! two sample sizes.
//!
//! Usage: `cargo run --release --example three_way_table -- [reps] [threads]`

use tenv::estimators::{Estimator, FitOptions};
use tenv::simgen::{run_replications, ScenarioConfig};

fn main() -> tenv::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let threads = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    println!("n,estimator,mean_error,std_error,failures,seconds_per_fit");
    for n in [100, 400] {
        let config = ScenarioConfig {
            dims: vec![20, 30, 40],
            p: 5,
            n,
            snr: 0.22,
            sigma0_sq: 1.0,
            u: vec![2, 3, 4],
            fit_u: None,
            reps,
            seed: 2024,
            shape: None,
        };
        let estimators = [Estimator::Ols, Estimator::EnvIterative];
        let out = run_replications(&config, &estimators, &FitOptions::default(), threads)?;
        for s in &out.summaries {
            let secs: f64 = out
                .records
                .iter()
                .filter(|r| r.estimator == s.estimator)
                .map(|r| r.seconds)
                .sum::<f64>()
                / reps as f64;
            let se = s.std_error.map_or("NA".to_string(), |v| format!("{v:.3}"));
            println!("{n},{},{:.6},{se},{},{secs:.2}", s.estimator.name(), s.mean, s.failures);
        }
    }
    Ok(())
}
