//! Unfoldings, mode products and Tucker products on a small tensor.
//!
//! Usage: `cargo run --example tensor_algebra`

use tenv::tensor::tucker;
use tenv::{Matrix, Tensor};

fn main() -> tenv::Result<()> {
    // entries 0..24 in storage order, first index fastest
    let t = Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect())?;
    println!("t[1,2,3] = {}", t.get(&[1, 2, 3]));

    for k in 0..3 {
        let m = t.matricize(k)?;
        println!("mode-{k} unfolding is {}x{}; first row {:?}", m.nrows(), m.ncols(), m.row(0).iter().take(6).collect::<Vec<_>>());
        assert_eq!(Tensor::fold(&m, k, t.dims())?, t);
    }

    let c = Matrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.5, 0.5, 0.5]);
    let prod = t.mode_product(&c, 1)?;
    println!("t x_1 C has dims {:?}", prod.dims());

    let summed = t.mode_vec_product(&[1.0; 4], 2)?;
    println!("summing over the last mode: {:?}", summed.data());

    let core = Tensor::new(vec![1, 1, 1], vec![2.0])?;
    let factors = [
        Matrix::from_column_slice(2, 1, &[1.0, -1.0]),
        Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
        Matrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 1.0]),
    ];
    let rank_one = tucker(&core, &factors)?;
    println!("rank-one Tucker product, mode ranks of unfoldings:");
    for k in 0..3 {
        let s = rank_one.matricize(k)?.singular_values();
        println!("  mode {k}: {}", s.iter().filter(|&&v| v > 1e-10).count());
    }
    Ok(())
}
