//! ℓ-cones `basis·{(v,w) : ‖w‖ ≤ ρ‖v‖}`, unstable/stable cone certificates
//! from block norms, backward contraction and the induced open set of planes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::grassmann::Plane;
use crate::linalg::{self, Mat, Vector};
use crate::regions::Region;
use crate::shift_space::{Symbol, TruncatedSequence};
use crate::skewproduct::{Inequality, SkewSystem};

/// Extreme rays per 2-plane section; scaled by `c` when sampling.
pub const RAYS_PER_SECTION: usize = 64;

/// Margin reported for planes that meet the cone's complement axis.
const DEGENERATE_MARGIN: f64 = -1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ConeSpec", try_from = "ConeSpec")]
pub struct Cone {
    ell: usize,
    aperture: f64,
    basis: Mat,
    basis_inv: Mat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ConeSpec {
    rank: usize,
    aperture: f64,
    basis: Vec<Vec<f64>>,
}

impl From<Cone> for ConeSpec {
    fn from(c: Cone) -> Self {
        ConeSpec {
            rank: c.ell,
            aperture: c.aperture,
            basis: linalg::to_rows(&c.basis),
        }
    }
}

impl TryFrom<ConeSpec> for Cone {
    type Error = Error;
    fn try_from(s: ConeSpec) -> Result<Self> {
        Cone::new(s.rank, s.aperture, linalg::from_rows(&s.basis)?)
    }
}

impl Cone {
    pub fn new(ell: usize, aperture: f64, basis: Mat) -> Result<Self> {
        let c = basis.nrows();
        if ell == 0 || ell >= c {
            return input(format!("cone rank {ell} must lie in 1..{c}"));
        }
        if !(aperture > 0.0 && aperture.is_finite()) {
            return input(format!("aperture {aperture} must be positive"));
        }
        let basis_inv = linalg::invert(&basis)?;
        Ok(Cone {
            ell,
            aperture,
            basis,
            basis_inv,
        })
    }

    pub fn standard(c: usize, ell: usize, aperture: f64) -> Result<Self> {
        Self::new(ell, aperture, linalg::identity(c))
    }

    pub fn ell(&self) -> usize {
        self.ell
    }
    pub fn aperture(&self) -> f64 {
        self.aperture
    }
    pub fn basis(&self) -> &Mat {
        &self.basis
    }
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    fn split(&self, x: &[f64]) -> (f64, f64) {
        let z = &self.basis_inv * Vector::from_row_slice(x);
        let v = z.rows(0, self.ell).norm();
        let w = z.rows(self.ell, self.dim() - self.ell).norm();
        (v, w)
    }

    /// Axis plane `basis·(ℝ^ℓ ⊕ 0)`.
    pub fn axis_plane(&self) -> Result<Plane> {
        Plane::new(&self.basis.columns(0, self.ell).into_owned())
    }

    /// Unit-norm extreme ray `basis·(a, ρb)` for unit `a`, `b`.
    fn ray(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut z = Vector::zeros(self.dim());
        for (i, v) in a.iter().enumerate() {
            z[i] = *v;
        }
        for (i, v) in b.iter().enumerate() {
            z[self.ell + i] = self.aperture * v;
        }
        let x = &self.basis * z;
        let n = x.norm();
        (x / n).iter().cloned().collect()
    }
}

/// `margin = ρ‖v‖ − ‖w‖` in basis coordinates.
pub fn cone_contains(cone: &Cone, x: &[f64], strict: bool) -> (bool, f64) {
    let (v, w) = cone.split(x);
    let margin = cone.aperture * v - w;
    let inside = if strict { margin > 0.0 && v > 0.0 } else { margin >= 0.0 };
    (inside, margin)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeWitness {
    pub symbol: Symbol,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub margin: f64,
    pub expansion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub cone: Cone,
    pub lambda: f64,
    /// Lower bound, over symbols and unit vectors of the cone, of the image
    /// margin per unit norm.
    pub min_margin: f64,
    /// Lower bound of `‖Dφ v‖/‖v‖` on the cone.
    pub min_expansion: f64,
    /// Upper bound of the image aperture `‖w'‖/‖v'‖`.
    pub image_aperture: f64,
    pub sampled_min_margin: f64,
    pub sampled_min_expansion: f64,
    pub rays_sampled: usize,
    pub inequalities: Vec<Inequality>,
    pub valid: bool,
    #[serde(default)]
    pub witness: Option<ConeWitness>,
}

impl ConeCertificate {
    pub fn slack(&self) -> f64 {
        self.inequalities.iter().map(|i| i.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Block bounds for `M' = basis⁻¹·M·basis = [[A, B], [C, D]]`.
struct BlockBounds {
    margin: f64,
    expansion: f64,
    aperture: f64,
}

fn block_bounds(cone: &Cone, m: &Mat) -> BlockBounds {
    let l = cone.ell;
    let c = cone.dim();
    let mp = &cone.basis_inv * m * &cone.basis;
    let a = mp.view((0, 0), (l, l)).into_owned();
    let b = mp.view((0, l), (l, c - l)).into_owned();
    let cc = mp.view((l, 0), (c - l, l)).into_owned();
    let d = mp.view((l, l), (c - l, c - l)).into_owned();
    let rho = cone.aperture;
    let sa = linalg::sigma_min(&a);
    let nb = linalg::spectral_norm(&b);
    let nc = linalg::spectral_norm(&cc);
    let nd = linalg::spectral_norm(&d);
    let norm = (1.0 + rho * rho).sqrt();
    let (blo, bhi) = linalg::singular_range(&cone.basis);
    let v_lo = sa - rho * nb;
    BlockBounds {
        // per unit basis-coordinate norm, converted to ambient units
        margin: (rho * sa - rho * rho * nb - nc - rho * nd) / norm,
        expansion: (v_lo / norm) * blo / bhi,
        aperture: if v_lo > 0.0 { (nc + rho * nd) / v_lo } else { f64::INFINITY },
    }
}

fn sample_rays<R: Rng + ?Sized>(cone: &Cone, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let l = cone.ell;
    let k = cone.dim() - l;
    let unit = |n: usize, rng: &mut R| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = linalg::norm(&v).max(1e-300);
        v.into_iter().map(|x| x / s).collect()
    };
    let mut rays = Vec::with_capacity(count + 2 * l * k);
    for i in 0..l {
        for j in 0..k {
            for sgn in [1.0, -1.0] {
                let mut a = vec![0.0; l];
                a[i] = 1.0;
                let mut b = vec![0.0; k];
                b[j] = sgn;
                rays.push(cone.ray(&a, &b));
            }
        }
    }
    for _ in 0..count {
        let a = unit(l, rng);
        let b = unit(k, rng);
        rays.push(cone.ray(&a, &b));
    }
    rays
}

/// Strict invariance and expansion `‖Dφ v‖ ≥ λ⁻¹‖v‖` for every symbol.
/// The verdict rests on block-norm bounds; sampled extreme rays are a
/// cross-check and supply the witness on failure.
pub fn verify_unstable_cone(
    sys: &SkewSystem,
    cone: &Cone,
    region: &Region,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<ConeCertificate> {
    if cone.dim() != sys.dim() || region.dim() != sys.dim() {
        return input("cone, region and system dimensions differ");
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return input(format!("lambda = {lambda} outside (0,1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = samples.max(RAYS_PER_SECTION * sys.dim());
    let rays = sample_rays(cone, count, &mut rng);
    let mut min_margin = f64::INFINITY;
    let mut min_exp = f64::INFINITY;
    let mut aperture: f64 = 0.0;
    let mut s_margin = f64::INFINITY;
    let mut s_exp = f64::INFINITY;
    let mut worst: Option<ConeWitness> = None;
    for i in 1..=sys.alphabet() {
        let sym = Symbol(i as u16);
        let m = sys.map(sym)?.jacobian();
        let bb = block_bounds(cone, m);
        min_margin = min_margin.min(bb.margin);
        min_exp = min_exp.min(bb.expansion);
        aperture = aperture.max(bb.aperture);
        let x = region.sample(&mut rng);
        for r in &rays {
            let y: Vec<f64> = (m * Vector::from_row_slice(r)).iter().cloned().collect();
            let (_, mg) = cone_contains(cone, &y, true);
            let ex = linalg::norm(&y);
            s_margin = s_margin.min(mg);
            s_exp = s_exp.min(ex);
            let score = mg.min(ex - 1.0 / lambda);
            if worst.as_ref().is_none_or(|w| score < w.margin.min(w.expansion - 1.0 / lambda)) {
                worst = Some(ConeWitness {
                    symbol: sym,
                    x: x.clone(),
                    v: r.clone(),
                    margin: mg,
                    expansion: ex,
                });
            }
        }
    }
    let inequalities = vec![
        Inequality::new("cone image margin", 0.0, min_margin),
        Inequality::new("expansion >= lambda^-1", 1.0 / lambda, min_exp),
    ];
    let valid = inequalities.iter().all(|i| i.holds());
    Ok(ConeCertificate {
        cone: cone.clone(),
        lambda,
        min_margin,
        min_expansion: min_exp,
        image_aperture: aperture,
        sampled_min_margin: s_margin,
        sampled_min_expansion: s_exp,
        rays_sampled: rays.len(),
        inequalities,
        valid,
        witness: if valid { None } else { worst },
    })
}

/// Unstable cone of the inverse system.
pub fn verify_stable_cone(
    sys: &SkewSystem,
    cone: &Cone,
    region: &Region,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<ConeCertificate> {
    verify_unstable_cone(&sys.inverse_system()?, cone, region, lambda, samples, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardReport {
    pub ok: bool,
    /// Per vector, `‖Dφ^{−k}v‖/‖v‖` for `k = 1..n`.
    pub norms: Vec<Vec<f64>>,
    pub fitted_rate: Option<f64>,
    #[serde(default)]
    pub failure: Option<String>,
}

/// Checks `‖Dφ^{−k}_ξ v‖ ≤ λᵏ‖v‖` for `1 ≤ k ≤ n` along the backward orbit
/// of `x`, for vectors whose backward images stay in the cone.
pub fn backward_contraction_check(
    sys: &SkewSystem,
    cone: &Cone,
    region: &Region,
    orbit: (&TruncatedSequence, &[f64], usize),
    vectors: &[Vec<f64>],
    lambda: f64,
) -> Result<BackwardReport> {
    let (xi, x, n) = orbit;
    let mut y = x.to_vec();
    for j in 1..=n {
        y = sys.compose_backward(&xi.shifted(-(j as i64 - 1))?, 1, &y)?;
        if region.signed_distance(&y) < 0.0 {
            return Err(Error::Precondition(format!("backward orbit leaves the cone region at step {j}")));
        }
    }
    let mut ok = true;
    let mut failure = None;
    let mut norms = Vec::with_capacity(vectors.len());
    let mut fit = Vec::new();
    for (vi, v) in vectors.iter().enumerate() {
        let n0 = linalg::norm(v);
        if n0 == 0.0 {
            return input("zero vector");
        }
        let mut row = Vec::with_capacity(n);
        for k in 1..=n {
            let m = sys.derivative_cocycle(xi, -(k as i64), x)?;
            let u: Vec<f64> = (&m * Vector::from_row_slice(v)).iter().cloned().collect();
            let r = linalg::norm(&u) / n0;
            row.push(r);
            fit.push((k as f64, r));
            if ok && !cone_contains(cone, &u, false).0 {
                ok = false;
                failure = Some(format!("vector {vi} leaves the cone at backward step {k}"));
            }
            if ok && r > lambda.powi(k as i32) * (1.0 + 1e-12) {
                ok = false;
                failure = Some(format!("vector {vi}: ratio {r:e} exceeds lambda^{k} = {:e}", lambda.powi(k as i32)));
            }
        }
        norms.push(row);
    }
    Ok(BackwardReport {
        ok,
        norms,
        fitted_rate: linalg::log_linear_rate(&fit),
        failure,
    })
}

/// Every unit vector of `E` lies strictly in the cone iff `‖W V⁻¹‖ < ρ`
/// where `basis⁻¹·frame_E = [V; W]`; the margin is `ρ − ‖W V⁻¹‖`.
pub fn cone_to_grassmann(cone: &Cone, e: &Plane) -> Result<(bool, f64)> {
    if e.ell() != cone.ell || e.ambient() != cone.dim() {
        return input("plane and cone ranks differ");
    }
    let z = &cone.basis_inv * e.frame();
    let l = cone.ell;
    let v = z.rows(0, l).into_owned();
    let w = z.rows(l, cone.dim() - l).into_owned();
    let (lo, hi) = linalg::singular_range(&v);
    if !(lo > 1e-13 * hi.max(1e-300)) {
        return Ok((false, DEGENERATE_MARGIN));
    }
    let slope = linalg::spectral_norm(&(w * linalg::invert(&v)?));
    let margin = cone.aperture - slope;
    Ok((margin > 0.0, margin))
}

/// Slope `‖W V⁻¹‖` of a plane relative to the cone axes, if it is a graph.
pub fn plane_slope(cone: &Cone, e: &Plane) -> Result<Option<f64>> {
    let (_, m) = cone_to_grassmann(cone, e)?;
    Ok(if m == DEGENERATE_MARGIN { None } else { Some(cone.aperture - m) })
}
