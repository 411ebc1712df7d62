//! Entrywise inference on a two-group image study: fit, z-scores, raw and
//! BH-corrected masks, written as PGM images.
//!
//! Usage: `cargo run --release --example pvalue_maps -- [out_dir]`

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tenv::estimators::{Estimator, FitOptions};
use tenv::inference::{pvalue_map, u_ols};
use tenv::io::{write_pgm, GrayImage};
use tenv::simgen::{gen_dataset, shape_coefficients, ScenarioConfig, ShapeKind, ShapeSpec};

fn main() -> tenv::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pvalue_maps_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| tenv::Error::Io { path: out.clone(), source: e })?;

    let spec = ShapeSpec::new(ShapeKind::Cross, 32);
    let b = shape_coefficients(&spec)?;
    let config = ScenarioConfig {
        dims: vec![32, 32],
        p: 1,
        n: 40,
        snr: 0.5,
        sigma0_sq: 1.0,
        u: vec![2, 2],
        fit_u: None,
        reps: 1,
        seed: 0,
        shape: Some(spec),
    };
    let (data, truth) = gen_dataset(&config, &b, &mut ChaCha8Rng::seed_from_u64(21))?;
    let signal = truth.b.last_mode_slice(0).to_matrix()?;
    write_pgm(out.join("truth.pgm"), &GrayImage::from_matrix(&signal))?;

    for est in [Estimator::Ols, Estimator::EnvIterative] {
        let fit = est.fit(&data, &config.u, &FitOptions::default())?;
        let cov = u_ols(&data.predictor_covariance()?, &fit.cov)?;
        let map = pvalue_map(&fit.b, &cov, data.n())?;
        let raw = map.threshold(0.05)?;
        let bh = map.bh(0.05)?;
        let count = |t: &tenv::Tensor| t.data().iter().filter(|&&v| v != 0.0).count();
        println!("{:<14} raw {:>4}  BH {:>4}  of {}", est.name(), count(&raw), count(&bh), raw.len());
        write_pgm(out.join(format!("{}_raw.pgm", est.name())), &GrayImage::from_mask(&raw.last_mode_slice(0).to_matrix()?))?;
        write_pgm(out.join(format!("{}_bh.pgm", est.name())), &GrayImage::from_mask(&bh.last_mode_slice(0).to_matrix()?))?;
        write_pgm(out.join(format!("{}_b.pgm", est.name())), &GrayImage::from_matrix(&fit.b.last_mode_slice(0).to_matrix()?))?;
    }
    println!("images in {}", out.display());
    Ok(())
}
