//! Small dense linear algebra on top of nalgebra, plus allocation-free
//! kernels for the inner loops of the covering checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold under which a singular value counts as zero.
const SINGULAR_RTOL: f64 = 1e-13;

/// Smallest and largest singular values.
pub fn singular_range(m: &Mat) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    (lo, hi)
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_range(m).1
}

pub fn sigma_min(m: &Mat) -> f64 {
    singular_range(m).0
}

pub fn invert(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::Input(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let (lo, hi) = singular_range(m);
    if !(lo > SINGULAR_RTOL * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::Input(format!("matrix is singular (sigma_min = {lo:e}, sigma_max = {hi:e})")));
    }
    m.clone().try_inverse().ok_or_else(|| Error::Input("matrix is singular".into()))
}

/// Orthonormal basis of the column span, QR with non-negative diagonal of R.
pub fn orthonormal_columns(m: &Mat) -> Result<Mat> {
    let (lo, hi) = singular_range(m);
    if !(lo > SINGULAR_RTOL * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::Input("frame columns are linearly dependent".into()));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn diag(entries: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_row_slice(entries))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Row-major copy of a matrix for the allocation-free kernels.
pub fn row_major(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Input("empty matrix".into()));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Input("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// `out = a * x` for a row-major `n x n` matrix.
#[inline]
pub fn matvec_into(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * n..(i + 1) * n];
        let mut s = 0.0;
        for k in 0..n {
            s += row[k] * x[k];
        }
        *o = s;
    }
}

/// Cayley transform `(I - K)^{-1}(I + K)` of a skew-symmetric matrix.
pub fn cayley(k: &Mat) -> Result<Mat> {
    let n = k.nrows();
    let inv = invert(&(identity(n) - k))?;
    Ok(inv * (identity(n) + k))
}

/// `exp` of the least-squares slope of `ln y` against `x`.
pub fn log_linear_rate(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0 && y.is_finite())
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}
