//! The one-step estimator against the iterative one on repeated draws of the
//! order-3 design: accuracy, likelihood reached and time.
//!
//! Usage: `cargo run --release --example onestep_vs_iterative -- [reps]`

use tenv::estimators::{fit_iterative, fit_onestep, FitOptions};
use tenv::simgen::{error_metric, replicate, ScenarioConfig};

fn main() -> tenv::Result<()> {
    let reps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let config = ScenarioConfig {
        dims: vec![20, 30, 40],
        p: 5,
        n: 100,
        snr: 0.22,
        sigma0_sq: 1.0,
        u: vec![2, 3, 4],
        fit_u: None,
        reps,
        seed: 77,
        shape: None,
    };
    println!("rep,onestep_error,iterative_error,onestep_objective,iterative_objective,onestep_s,iterative_s");
    for rep in 0..reps {
        let (data, truth) = replicate(&config, rep)?;
        let opts = FitOptions::default();
        let one = fit_onestep(&data, &config.u, &opts)?;
        let it = fit_iterative(&data, &config.u, &opts)?;
        println!(
            "{rep},{:.3e},{:.3e},{:.4},{:.4},{:.2},{:.2}",
            error_metric(&one.b, &truth.b)?,
            error_metric(&it.b, &truth.b)?,
            one.objective_trace.last().copied().unwrap_or(f64::NAN),
            it.objective_trace.last().copied().unwrap_or(f64::NAN),
            one.elapsed.as_secs_f64(),
            it.elapsed.as_secs_f64()
        );
    }
    Ok(())
}
