//! Dense multi-way arrays and the multilinear operations used by the estimators.
//!
//! Entries are stored colexicographically: the first index varies fastest, so the
//! entry `(i_1, ..., i_m)` (zero-based here) lives at flat position
//! `i_1 + r_1 * (i_2 + r_2 * (i_3 + ...))`. An order-2 tensor therefore shares its
//! layout with a column-major [`Matrix`].
//!
//! Mode indices in this API are zero-based: mode `0` is the first mode.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Column-major dense matrix.
pub type Matrix = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from dimensions and flat colexicographic data.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!("zero-length mode in dims {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::dim(format!(
                "dims {dims:?} need {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "zero-length mode in {dims:?}");
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    /// Order-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    /// Fills a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Tensor::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for (i, &d) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < d {
                    break;
                }
                *i = 0;
            }
        }
        t
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    /// Interprets an order-2 tensor (or an order-1 tensor as a column) as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        match self.dims.as_slice() {
            [r] => Ok(Matrix::from_column_slice(*r, 1, &self.data)),
            [r, c] => Ok(Matrix::from_column_slice(*r, *c, &self.data)),
            _ => Err(Error::dim(format!(
                "expected an order-2 tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of an order-0 tensor (or the first entry of any tensor).
    pub fn scalar_value(&self) -> f64 {
        self.data[0]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut pos = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            pos += i * stride;
            stride *= d;
        }
        pos
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let pos = self.flat_index(idx);
        self.data[pos] = value;
    }

    /// `vec(t)`: the entries in storage order.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Inverse of [`Tensor::vec`].
    pub fn fold_vec(values: &[f64], dims: &[usize]) -> Result<Self> {
        Tensor::new(dims.to_vec(), values.to_vec())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Tensor {
        let mut t = self.clone();
        t.scale(alpha);
        t
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    fn check_same_dims(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dim(format!(
                "dims {:?} and {:?} differ",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.dims.len() {
            return Err(Error::ModeOutOfRange {
                mode: k,
                order: self.dims.len(),
            });
        }
        Ok(())
    }

    /// Sizes of the blocks before, at, and after mode `k`.
    fn split(&self, k: usize) -> (usize, usize, usize) {
        let left = self.dims[..k].iter().product();
        let right = self.dims[k + 1..].iter().product();
        (left, self.dims[k], right)
    }

    /// Mode-`k` unfolding: an `r_k x prod_{j != k} r_j` matrix whose columns are
    /// the mode-`k` fibers, ordered with the remaining indices colexicographically.
    pub fn matricize(&self, k: usize) -> Result<Matrix> {
        self.check_mode(k)?;
        let (left, rk, right) = self.split(k);
        let cols = left * right;
        let mut out = vec![0.0; rk * cols];
        for b in 0..right {
            for i in 0..rk {
                let src = &self.data[left * (i + rk * b)..left * (i + rk * b) + left];
                for (a, &v) in src.iter().enumerate() {
                    out[i + rk * (a + left * b)] = v;
                }
            }
        }
        Ok(Matrix::from_vec(rk, cols, out))
    }

    /// Inverse of [`Tensor::matricize`].
    pub fn fold(mat: &Matrix, k: usize, dims: &[usize]) -> Result<Tensor> {
        if k >= dims.len() {
            return Err(Error::ModeOutOfRange {
                mode: k,
                order: dims.len(),
            });
        }
        let mut t = Tensor::new(dims.to_vec(), vec![0.0; dims.iter().product()])?;
        let (left, rk, right) = t.split(k);
        if mat.nrows() != rk || mat.ncols() != left * right {
            return Err(Error::dim(format!(
                "cannot fold a {}x{} matrix along mode {k} into dims {dims:?}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let src = mat.as_slice();
        for b in 0..right {
            for i in 0..rk {
                let dst = &mut t.data[left * (i + rk * b)..left * (i + rk * b) + left];
                for (a, slot) in dst.iter_mut().enumerate() {
                    *slot = src[i + rk * (a + left * b)];
                }
            }
        }
        Ok(t)
    }

    /// `t x_k C`: multiplies every mode-`k` fiber by `c` (an `s x r_k` matrix).
    pub fn mode_product(&self, c: &Matrix, k: usize) -> Result<Tensor> {
        self.check_mode(k)?;
        let (left, rk, right) = self.split(k);
        if c.ncols() != rk {
            return Err(Error::dim(format!(
                "mode-{k} product needs {rk} columns, matrix is {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        let s = c.nrows();
        let mut dims = self.dims.clone();
        dims[k] = s;
        if s == 0 {
            return Err(Error::dim(format!("mode-{k} product with an empty matrix")));
        }
        let mut out = vec![0.0; left * s * right];
        let cs = c.as_slice();
        if left == 1 {
            // out (s x right) = C (s x rk) * T (rk x right)
            gemm(
                s, rk, right,
                cs, (1, s as isize),
                &self.data, (1, rk as isize),
                0.0,
                &mut out, (1, s as isize),
            );
        } else {
            // Per trailing slab: out (left x s) = T (left x rk) * C^T (rk x s).
            for b in 0..right {
                gemm(
                    left, rk, s,
                    &self.data[b * left * rk..(b + 1) * left * rk], (1, left as isize),
                    cs, (s as isize, 1),
                    0.0,
                    &mut out[b * left * s..(b + 1) * left * s], (1, left as isize),
                );
            }
        }
        Ok(Tensor { dims, data: out })
    }

    /// `t x̄_k v`: inner product of every mode-`k` fiber with `v`; drops mode `k`.
    pub fn mode_vec_product(&self, v: &[f64], k: usize) -> Result<Tensor> {
        self.check_mode(k)?;
        let (left, rk, right) = self.split(k);
        if v.len() != rk {
            return Err(Error::dim(format!(
                "mode-{k} vector product needs length {rk}, got {}",
                v.len()
            )));
        }
        let mut out = vec![0.0; left * right];
        for b in 0..right {
            let dst = &mut out[left * b..left * (b + 1)];
            for (i, &vi) in v.iter().enumerate() {
                let src = &self.data[left * (i + rk * b)..left * (i + rk * b) + left];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d += vi * x;
                }
            }
        }
        let mut dims = self.dims.clone();
        dims.remove(k);
        Ok(Tensor { dims, data: out })
    }

    /// `T_(k) T_(k)^T`, accumulated without forming the unfolding.
    pub fn mode_gram(&self, k: usize) -> Result<Matrix> {
        self.check_mode(k)?;
        let (left, rk, right) = self.split(k);
        let mut g = vec![0.0; rk * rk];
        if left == 1 {
            gemm(
                rk, right, rk,
                &self.data, (1, rk as isize),
                &self.data, (rk as isize, 1),
                0.0,
                &mut g, (1, rk as isize),
            );
        } else {
            for b in 0..right {
                let slab = &self.data[b * left * rk..(b + 1) * left * rk];
                gemm(
                    rk, left, rk,
                    slab, (left as isize, 1),
                    slab, (1, left as isize),
                    1.0,
                    &mut g, (1, rk as isize),
                );
            }
        }
        let g = Matrix::from_vec(rk, rk, g);
        Ok((&g + g.transpose()) * 0.5)
    }

    /// Applies a matrix along each listed mode; `None` leaves the mode untouched.
    pub fn multi_mode_product(&self, mats: &[Option<&Matrix>]) -> Result<Tensor> {
        if mats.len() > self.order() {
            return Err(Error::dim(format!(
                "{} factors for an order-{} tensor",
                mats.len(),
                self.order()
            )));
        }
        let mut out: Option<Tensor> = None;
        for (k, m) in mats.iter().enumerate() {
            if let Some(m) = m {
                let src = out.as_ref().unwrap_or(self);
                out = Some(src.mode_product(m, k)?);
            }
        }
        Ok(out.unwrap_or_else(|| self.clone()))
    }

    /// Slice `i` along the last mode, e.g. observation `i` of a stacked array.
    pub fn last_mode_slice(&self, i: usize) -> Tensor {
        let n = *self.dims.last().expect("order-0 tensor has no last mode");
        assert!(i < n, "slice {i} out of range {n}");
        let chunk = self.data.len() / n;
        Tensor {
            dims: self.dims[..self.dims.len() - 1].to_vec(),
            data: self.data[i * chunk..(i + 1) * chunk].to_vec(),
        }
    }

    /// Stacks equally-shaped tensors along a new trailing mode.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.dims != first.dims {
                return Err(Error::dim(format!(
                    "cannot stack dims {:?} with {:?}",
                    t.dims, first.dims
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut dims = first.dims.clone();
        dims.push(items.len());
        Tensor::new(dims, data)
    }
}

/// Tucker product `[[core; F_1, ..., F_m]] = core x_1 F_1 x_2 ... x_m F_m`.
pub fn tucker(core: &Tensor, factors: &[Matrix]) -> Result<Tensor> {
    if factors.len() != core.order() {
        return Err(Error::dim(format!(
            "{} factors for a core of order {}",
            factors.len(),
            core.order()
        )));
    }
    let mats: Vec<Option<&Matrix>> = factors.iter().map(Some).collect();
    core.multi_mode_product(&mats)
}

/// Kronecker product `A_1 ⊗ A_2 ⊗ ... ⊗ A_n` in the order given.
/// An empty list yields the 1x1 identity.
pub fn kron(mats: &[Matrix]) -> Matrix {
    mats.iter()
        .fold(Matrix::identity(1, 1), |acc, m| acc.kronecker(m))
}

/// Strided `C = A B + beta C` with `A: m x k`, `B: k x n`, `C: m x n`.
/// Strides are `(row_stride, col_stride)` in elements.
#[allow(clippy::too_many_arguments)]
#[rustfmt::skip]
pub(crate) fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], (rsa, csa): (isize, isize),
    b: &[f64], (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64], (rsc, csc): (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
        }
    };
    assert!(span(m, k, rsa, csa) as usize <= a.len());
    assert!(span(k, n, rsb, csb) as usize <= b.len());
    assert!(span(m, n, rsc, csc) as usize <= c.len());
    // SAFETY: the asserts above bound every strided access inside the slices,
    // all strides are non-negative, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n,
            1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta,
            c.as_mut_ptr(), rsc, csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(dims: &[usize]) -> Tensor {
        let n: usize = dims.iter().product();
        Tensor::new(dims.to_vec(), (0..n).map(|v| v as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn vec_is_column_major_for_matrices() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(Tensor::from_matrix(&m).vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn vec_position_follows_first_index_fastest() {
        let t = Tensor::from_fn(&[3, 4, 5], |i| (i[0] + 10 * i[1] + 100 * i[2]) as f64);
        // entry (2,1,1) in one-based indexing is at one-based position 2
        assert_eq!(t.vec()[1], 1.0);
        assert_eq!(t.flat_index(&[1, 0, 0]), 1);
        assert_eq!(t.flat_index(&[0, 1, 0]), 3);
        assert_eq!(t.flat_index(&[0, 0, 1]), 12);
    }

    #[test]
    fn matricize_order2_cases() {
        let t = seq(&[2, 3]);
        let m = t.to_matrix().unwrap();
        assert_eq!(t.matricize(0).unwrap(), m);
        assert_eq!(t.matricize(1).unwrap(), m.transpose());
    }

    #[test]
    fn matricize_index_formula() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64);
        let m = t.matricize(1).unwrap();
        assert_eq!(m.shape(), (3, 8));
        // one-based (2,3,4) -> row 3, column 1 + 1 + 3*2 = 8
        assert_eq!(m[(2, 7)], t.get(&[1, 2, 3]));
    }

    #[test]
    fn fold_rejects_bad_shape() {
        let m = Matrix::zeros(3, 7);
        assert!(Tensor::fold(&m, 0, &[3, 2, 4]).is_err());
        assert!(matches!(
            seq(&[2, 2]).matricize(2),
            Err(Error::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn fold_row_matrix() {
        let m = Matrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let t = Tensor::fold(&m, 0, &[1, 4]).unwrap();
        assert_eq!(t.dims(), &[1, 4]);
        assert_eq!(t.vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn mode_vec_product_picks_slices() {
        let t = seq(&[2, 3, 4]);
        let e = [0.0, 1.0, 0.0];
        let s = t.mode_vec_product(&e, 1).unwrap();
        assert_eq!(s.dims(), &[2, 4]);
        for a in 0..2 {
            for b in 0..4 {
                assert_eq!(s.get(&[a, b]), t.get(&[a, 1, b]));
            }
        }
        let v = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let sc = v.mode_vec_product(&[1.0, 1.0, 1.0], 0).unwrap();
        assert_eq!(sc.order(), 0);
        assert_eq!(sc.scalar_value(), 6.0);
    }

    #[test]
    fn kron_basics() {
        assert_eq!(kron(&[Matrix::identity(2, 2), Matrix::identity(3, 3)]), Matrix::identity(6, 6));
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kron(std::slice::from_ref(&a)), a);
    }

    #[test]
    fn mode_gram_matches_unfolding() {
        let t = seq(&[3, 4, 2, 5]);
        for k in 0..4 {
            let u = t.matricize(k).unwrap();
            let g = t.mode_gram(k).unwrap();
            assert!((g - &u * u.transpose()).norm() < 1e-9);
        }
    }
}
