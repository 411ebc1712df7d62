//! The on-disk formats: tensors, predictor CSV plus dataset manifest, and
//! 8-bit PGM renders, each written and read back.
//!
//! Usage: `cargo run --example file_formats -- [dir]`

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tenv::io::{read_pgm, read_tensor, write_pgm, write_tensor, DatasetManifest, GrayImage};
use tenv::simgen::{gen_dataset, make_shape, shape_coefficients, ScenarioConfig, ShapeKind, ShapeSpec};
use tenv::Tensor;

fn main() -> tenv::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "file_formats_out".into()));

    let spec = ShapeSpec::new(ShapeKind::Square, 16);
    let config = ScenarioConfig {
        dims: vec![16, 16],
        p: 1,
        n: 10,
        snr: 1.0,
        sigma0_sq: 1.0,
        u: vec![1, 1],
        fit_u: None,
        reps: 1,
        seed: 0,
        shape: Some(spec.clone()),
    };
    let (data, _) = gen_dataset(&config, &shape_coefficients(&spec)?, &mut ChaCha8Rng::seed_from_u64(1))?;
    let manifest = DatasetManifest::save_dataset(&data, &dir)?;
    println!("{}", std::fs::read_to_string(dir.join("manifest.txt")).unwrap_or_default());
    let loaded = manifest.load()?;
    assert_eq!(loaded.y().data(), data.y().data());

    let t = Tensor::new(vec![2, 2], vec![1.5, -0.0, f64::EPSILON, 1e300])?;
    write_tensor(dir.join("small.tenv"), &t)?;
    let back = read_tensor(dir.join("small.tenv"))?;
    let same_bits = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("tensor round trip bitwise: {same_bits}");

    let img = GrayImage::from_matrix(&make_shape(&ShapeSpec::new(ShapeKind::Cross, 16))?);
    write_pgm(dir.join("cross.pgm"), &img)?;
    println!("pgm round trip: {}", read_pgm(dir.join("cross.pgm"))? == img);
    Ok(())
}
