//! Working envelope dimension versus accuracy on a disk signal whose true
//! mode rank is 8: too small a dimension biases, larger ones cost variance.
//!
//! Usage: `cargo run --release --example dimension_sweep`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tenv::estimators::{fit_onestep, parameter_count, FitOptions};
use tenv::simgen::{default_disk_radius, gen_dataset, shape_coefficients, ScenarioConfig, ShapeKind, ShapeSpec};

fn main() -> tenv::Result<()> {
    let size = 64;
    let spec = ShapeSpec::new(ShapeKind::Disk(None), size);
    let b = shape_coefficients(&spec)?;
    let config = ScenarioConfig {
        dims: vec![size, size],
        p: 1,
        n: 100,
        snr: 0.5,
        sigma0_sq: 1.0,
        u: vec![8, 8],
        fit_u: None,
        reps: 1,
        seed: 0,
        shape: Some(spec),
    };
    let (data, truth) = gen_dataset(&config, &b, &mut ChaCha8Rng::seed_from_u64(5))?;
    println!("disk radius {}", default_disk_radius(size));
    println!("u,relative_error,objective,params_envelope");
    for u in [2, 4, 6, 8, 12, 16, 32, 64] {
        let fit = fit_onestep(&data, &[u, u], &FitOptions::default())?;
        let rel = fit.b.sub(&truth.b)?.norm() / truth.b.norm();
        let params = parameter_count(&[size, size], &[u, u], 1)?;
        println!("{u},{rel:.4},{:.4},{}", fit.objective_trace[0], params.envelope);
    }
    Ok(())
}
