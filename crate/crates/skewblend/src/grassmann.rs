//! ℓ-planes in ℝᶜ with the projection distance, induced linear actions and
//! the Grassmannian lift `(x, E) ↦ (φ(x), Dφ(x)E)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{self, Mat};
use crate::skewproduct::{verify_constants, Inequality, SkewSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PlaneSpec", try_from = "PlaneSpec")]
pub struct Plane {
    frame: Mat,
}

/// Column-major frame: one inner list per basis vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct PlaneSpec {
    columns: Vec<Vec<f64>>,
}

impl From<Plane> for PlaneSpec {
    fn from(p: Plane) -> Self {
        PlaneSpec {
            columns: (0..p.frame.ncols()).map(|j| p.frame.column(j).iter().cloned().collect()).collect(),
        }
    }
}

impl TryFrom<PlaneSpec> for Plane {
    type Error = Error;
    fn try_from(s: PlaneSpec) -> Result<Self> {
        Plane::from_columns(&s.columns)
    }
}

impl Plane {
    /// Span of the columns, re-orthonormalized.
    pub fn new(frame: &Mat) -> Result<Self> {
        let (c, l) = (frame.nrows(), frame.ncols());
        if l == 0 || l >= c {
            return input(format!("plane dimension {l} must lie in 1..{c}"));
        }
        Ok(Plane {
            frame: linalg::orthonormal_columns(frame)?,
        })
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let l = cols.len();
        let c = cols.first().map_or(0, |v| v.len());
        if cols.iter().any(|v| v.len() != c) {
            return input("plane columns have different lengths");
        }
        Self::new(&Mat::from_fn(c, l, |i, j| cols[j][i]))
    }

    /// Span of `e_{k}` for `k` in `coords`.
    pub fn coordinate(c: usize, coords: &[usize]) -> Result<Self> {
        let mut m = Mat::zeros(c, coords.len());
        for (j, &k) in coords.iter().enumerate() {
            if k >= c {
                return input("coordinate index out of range");
            }
            m[(k, j)] = 1.0;
        }
        Self::new(&m)
    }

    /// `span(basis · [I; X])` for an `(c−ℓ) × ℓ` block `X`.
    pub fn graph(basis: &Mat, x: &Mat) -> Result<Self> {
        let l = x.ncols();
        let c = basis.nrows();
        if x.nrows() + l != c {
            return input("graph block has the wrong shape");
        }
        let mut m = Mat::zeros(c, l);
        for j in 0..l {
            m[(j, j)] = 1.0;
        }
        m.view_mut((l, 0), (c - l, l)).copy_from(x);
        Self::new(&(basis * m))
    }

    pub fn frame(&self) -> &Mat {
        &self.frame
    }

    pub fn ell(&self) -> usize {
        self.frame.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.frame.nrows()
    }

    pub fn projector(&self) -> Mat {
        &self.frame * self.frame.transpose()
    }

    pub fn random<R: Rng + ?Sized>(c: usize, l: usize, rng: &mut R) -> Result<Self> {
        let m = Mat::from_fn(c, l, |_, _| rng.gen_range(-1.0..1.0));
        Self::new(&m)
    }
}

/// `‖P_F|_E − i_E‖ = σ_max((I − P_F)·frame_E)`.
pub fn plane_distance(e: &Plane, f: &Plane) -> Result<f64> {
    if e.ell() != f.ell() || e.ambient() != f.ambient() {
        return input(format!(
            "planes of shape ({}, {}) and ({}, {})",
            e.ell(),
            e.ambient(),
            f.ell(),
            f.ambient()
        ));
    }
    let ft = f.frame.transpose();
    let resid = &e.frame - &f.frame * (&ft * &e.frame);
    Ok(linalg::spectral_norm(&resid).min(1.0))
}

pub fn apply_linear(t: &Mat, e: &Plane) -> Result<Plane> {
    if t.nrows() != e.ambient() || !t.is_square() {
        return input("matrix and plane dimensions differ");
    }
    let (lo, hi) = linalg::singular_range(t);
    if !(lo > 1e-13 * hi) {
        return input("singular matrix has no plane action");
    }
    Plane::new(&(t * &e.frame))
}

/// Largest observed `d_G(TE,TF)/d_G(E,F)` over random plane pairs. Half the
/// pairs are close, since the ratio peaks for nearby planes.
pub fn bilipschitz_check(t: &Mat, ell: usize, samples: usize, seed: u64) -> Result<f64> {
    let c = t.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let e = Plane::random(c, ell, &mut rng)?;
        let f = if k % 2 == 0 {
            Plane::random(c, ell, &mut rng)?
        } else {
            let scale = 10f64.powf(rng.gen_range(-6.0..-1.0));
            let pert = Mat::from_fn(c, ell, |_, _| scale * rng.gen_range(-1.0..1.0));
            Plane::new(&(e.frame() + pert))?
        };
        let d0 = plane_distance(&e, &f)?;
        if d0 < 1e-9 {
            continue;
        }
        let d1 = plane_distance(&apply_linear(t, &e)?, &apply_linear(t, &f)?)?;
        best = best.max(d1 / d0);
    }
    Ok(best)
}

/// `‖T‖·‖T⁻¹‖`.
pub fn bilipschitz_bound(t: &Mat) -> f64 {
    let (lo, hi) = linalg::singular_range(t);
    hi / lo
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedSystem {
    pub base: SkewSystem,
    pub ell: usize,
    /// `max{γ̂⁻¹ + γ⁻¹L_D, (γγ̂)⁻¹}`.
    pub lifted_bound: f64,
    /// Same for the inverse maps: `max{γ⁻¹ + γ̂⁻¹L_D, (γγ̂)⁻¹}`.
    pub inverse_bound: f64,
    pub inequalities: Vec<Inequality>,
}

impl LiftedSystem {
    pub fn apply(&self, symbol: crate::shift_space::Symbol, x: &[f64], e: &Plane) -> Result<(Vec<f64>, Plane)> {
        let m = self.base.map(symbol)?;
        Ok((m.apply(x), apply_linear(m.jacobian(), e)?))
    }

    pub fn apply_inverse(&self, symbol: crate::shift_space::Symbol, x: &[f64], e: &Plane) -> Result<(Vec<f64>, Plane)> {
        let m = self.base.map(symbol)?;
        Ok((m.apply_inverse(x), apply_linear(&m.inverse_map().a, e)?))
    }

    pub fn slack(&self) -> f64 {
        self.inequalities.iter().map(|i| i.slack).fold(f64::INFINITY, f64::min)
    }
}

pub fn lift_system(sys: &SkewSystem, ell: usize) -> Result<LiftedSystem> {
    let c = sys.dim();
    if ell == 0 || ell >= c {
        return input(format!("plane dimension {ell} must lie in 1..{c}"));
    }
    let rep = verify_constants(sys)?;
    let na = sys.nu().powf(sys.alpha());
    let (g, gh, ld) = (sys.gamma(), sys.gamma_hat(), sys.l_d());
    let bunching = Inequality::new("nu^alpha < gamma*gamma_hat", na, g * gh);
    let ld_bound = Inequality::new("L_D < gamma(nu^-alpha - gamma_hat^-1)", ld, g * (1.0 / na - 1.0 / gh));
    for i in [&bunching, &ld_bound] {
        if !i.holds() {
            return Err(Error::LiftRefused(format!("{}: {} vs {}", i.name, i.lhs, i.rhs)));
        }
    }
    let lifted_bound = (1.0 / gh + ld / g).max(1.0 / (g * gh));
    let inverse_bound = (1.0 / g + ld / gh).max(1.0 / (g * gh));
    let mut inequalities = rep.inequalities[..4].to_vec();
    inequalities.push(bunching);
    inequalities.push(ld_bound);
    inequalities.push(Inequality::new("lifted bound < nu^-alpha", lifted_bound, 1.0 / na));
    Ok(LiftedSystem {
        base: sys.clone(),
        ell,
        lifted_bound,
        inverse_bound,
        inequalities,
    })
}

/// Largest observed ratio of `|x−x'| + d_G(E,E')` under the lifted maps,
/// with points drawn from `[−1,1]^c` and some nearby pairs.
pub fn lifted_lipschitz_empirical(lift: &LiftedSystem, samples: usize, seed: u64) -> Result<f64> {
    let c = lift.base.dim();
    let l = lift.ell;
    let d = lift.base.alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let s = crate::shift_space::Symbol(rng.gen_range(1..=d) as u16);
        let x: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = Plane::random(c, l, &mut rng)?;
        let (xp, ep) = if k % 2 == 0 {
            (
                (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
                Plane::random(c, l, &mut rng)?,
            )
        } else {
            let scale = 10f64.powf(rng.gen_range(-6.0..-1.0));
            let xs: Vec<f64> = x.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
            let pert = Mat::from_fn(c, l, |_, _| scale * rng.gen_range(-1.0..1.0));
            (xs, Plane::new(&(e.frame() + pert))?)
        };
        let d0 = linalg::dist(&x, &xp) + plane_distance(&e, &ep)?;
        if d0 < 1e-9 {
            continue;
        }
        let (y, f) = lift.apply(s, &x, &e)?;
        let (yp, fp) = lift.apply(s, &xp, &ep)?;
        let d1 = linalg::dist(&y, &yp) + plane_distance(&f, &fp)?;
        best = best.max(d1 / d0);
    }
    Ok(best)
}
