//! Tangent directions `‖Dφⁿ_ξ(x)v‖ ≤ Cλ^{|n|}` and tangency codimension.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::{self, Mat, Vector};
use crate::shift_space::TruncatedSequence;
use crate::skewproduct::SkewSystem;

/// Smallest `|n|` entering the rate fits.
pub const FIT_START: usize = 5;
/// Relative singular-value cutoff of the rank test.
const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorTrace {
    pub v: Vec<f64>,
    /// `‖Dφⁿv‖` for `n = −N..=N`.
    pub norms: Vec<f64>,
    /// `max_n ‖Dφⁿv‖/λ^{|n|}`.
    pub max_ratio: f64,
    pub passes: bool,
    pub forward_rate: Option<f64>,
    pub backward_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentDirectionReport {
    pub point: TruncatedSequence,
    pub x: Vec<f64>,
    pub horizon: usize,
    pub lambda: f64,
    pub c_bound: f64,
    pub vectors: Vec<VectorTrace>,
    pub d_t: usize,
    /// Pooled over passing vectors.
    pub forward_rate: Option<f64>,
    pub backward_rate: Option<f64>,
    /// `N < FIT_START`: the rates cannot be fitted.
    pub horizon_too_small: bool,
}

impl TangentDirectionReport {
    pub fn passing(&self) -> Vec<&VectorTrace> {
        self.vectors.iter().filter(|v| v.passes).collect()
    }

    /// Norm at time `n` for vector `k`.
    pub fn norm_at(&self, k: usize, n: i64) -> f64 {
        self.vectors[k].norms[(n + self.horizon as i64) as usize]
    }
}

/// Numerical rank of the columns.
pub fn rank(vectors: &[Vec<f64>]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let c = vectors[0].len();
    let m = Mat::from_fn(c, vectors.len(), |i, j| vectors[j][i]);
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

pub fn detect_tangent_directions(
    sys: &SkewSystem,
    point: (&TruncatedSequence, &[f64]),
    candidates: &[Vec<f64>],
    horizon: usize,
    lambda: f64,
    c_bound: f64,
) -> Result<TangentDirectionReport> {
    let (xi, x) = point;
    if !(lambda > 0.0 && lambda.is_finite() && c_bound > 0.0) {
        return input("lambda and C must be positive");
    }
    if candidates.iter().any(|v| v.len() != sys.dim() || linalg::norm(v) == 0.0) {
        return input("candidates must be nonzero vectors of the fiber dimension");
    }
    let n = horizon as i64;
    // cocycles for every n in −N..=N, built incrementally
    let mut mats: Vec<Mat> = vec![linalg::identity(sys.dim()); 2 * horizon + 1];
    for k in 1..=n {
        let f = sys.fiber_at(xi, k - 1)?;
        mats[(n + k) as usize] = &f.a * &mats[(n + k - 1) as usize];
        let b = sys.fiber_at(xi, -k)?;
        mats[(n - k) as usize] = linalg::invert(&b.a)? * &mats[(n - k + 1) as usize];
    }
    let mut vectors = Vec::with_capacity(candidates.len());
    let mut fwd_pool = Vec::new();
    let mut bwd_pool = Vec::new();
    for v in candidates {
        let vv = Vector::from_row_slice(v);
        let norms: Vec<f64> = mats.iter().map(|m| (m * &vv).norm()).collect();
        let max_ratio = (-n..=n)
            .map(|k| norms[(k + n) as usize] / lambda.powi(k.unsigned_abs() as i32))
            .fold(0.0, f64::max);
        let fwd: Vec<(f64, f64)> = (FIT_START as i64..=n).map(|k| (k as f64, norms[(n + k) as usize])).collect();
        let bwd: Vec<(f64, f64)> = (FIT_START as i64..=n).map(|k| (k as f64, norms[(n - k) as usize])).collect();
        let passes = max_ratio <= c_bound;
        if passes {
            fwd_pool.extend(fwd.iter().map(|&(k, y)| (k, y / linalg::norm(v))));
            bwd_pool.extend(bwd.iter().map(|&(k, y)| (k, y / linalg::norm(v))));
        }
        vectors.push(VectorTrace {
            v: v.clone(),
            norms,
            max_ratio,
            passes,
            forward_rate: linalg::log_linear_rate(&fwd),
            backward_rate: linalg::log_linear_rate(&bwd),
        });
    }
    let passing: Vec<Vec<f64>> = vectors.iter().filter(|t| t.passes).map(|t| t.v.clone()).collect();
    Ok(TangentDirectionReport {
        point: xi.clone(),
        x: x.to_vec(),
        horizon,
        lambda,
        c_bound,
        d_t: rank(&passing),
        forward_rate: linalg::log_linear_rate(&fwd_pool),
        backward_rate: linalg::log_linear_rate(&bwd_pool),
        horizon_too_small: horizon < FIT_START + 1,
        vectors,
    })
}

/// `(ℓ, c_T)` with `c_T = c − [(c − i₁) + i₂ − ℓ] = ℓ − (i₂ − i₁)`.
pub fn tangency_codimension(c: usize, i1: usize, i2: usize, ell: usize) -> Result<(usize, usize)> {
    for (name, i) in [("i1", i1), ("i2", i2)] {
        if i == 0 || i >= c {
            return input(format!("{name} = {i} must lie in 1..{c}"));
        }
    }
    let lower = i2.saturating_sub(i1);
    if ell <= lower {
        return input(format!("ell = {ell} violates the lower bound ell > max(0, i2 - i1) = {lower}"));
    }
    let upper = (c - i1).min(i2);
    if ell > upper {
        return input(format!("ell = {ell} violates the upper bound ell <= min(c - i1, i2) = {upper}"));
    }
    let c_t = c - ((c - i1) + i2 - ell);
    Ok((ell, c_t))
}
