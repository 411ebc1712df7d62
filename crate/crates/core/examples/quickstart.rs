//! Smallest end-to-end run: simulate an order-3 response with a low-dimensional
//! envelope, then compare OLS against the envelope estimators.
//!
//! Usage: `cargo run --release --example quickstart`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tenv::estimators::{parameter_count, Estimator, FitOptions};
use tenv::simgen::{error_metric, gen_dataset_3way, ScenarioConfig};

fn main() -> tenv::Result<()> {
    let config = ScenarioConfig {
        dims: vec![8, 10, 6],
        p: 3,
        n: 60,
        snr: 0.5,
        sigma0_sq: 1.0,
        u: vec![2, 2, 1],
        fit_u: None,
        reps: 1,
        seed: 0,
        shape: None,
    };
    let (data, truth) = gen_dataset_3way(&config, &mut ChaCha8Rng::seed_from_u64(11))?;
    println!("response dims {:?}, n = {}, p = {}", data.response_dims(), data.n(), data.p());

    for est in [Estimator::Ols, Estimator::EnvOnestep, Estimator::EnvIterative] {
        let fit = est.fit(&data, &config.u, &FitOptions::default())?;
        println!(
            "{:<14} squared error {:>10.6}  iterations {}",
            est.name(),
            error_metric(&fit.b, &truth.b)?,
            fit.iterations
        );
    }

    let counts = parameter_count(&config.dims, &config.u, config.p)?;
    println!("free parameters: {} full, {} envelope ({} saved in the mean)", counts.full, counts.envelope, counts.saved);
    Ok(())
}
