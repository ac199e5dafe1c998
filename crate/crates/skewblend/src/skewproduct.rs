//! Fiber maps on ℝᶜ and symbolic skew-products `Φ(ξ, x) = (τξ, φ_ξ(x))`.
//!
//! Fiber maps are compositions of invertible affine pieces, so inverses,
//! Jacobians and tight Lipschitz bounds are exact. A system is either
//! one-step (`φ_ξ = φ_{ξ_0}`) or windowed: `φ_ξ(x) = A_{ξ_0} x + b_{ξ_0} +
//! Σ_{0<|k|≤r} s_k(ξ_k)`, which exercises the `C₀ > 0` paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::regions::Region;
use crate::shift_space::{Symbol, TruncatedSequence};

/// Tolerance when comparing declared constants with tight ones.
const DECLARED_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "AffineSpec", try_from = "AffineSpec")]
pub struct AffineMap {
    pub a: Mat,
    pub b: Vector,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AffineSpec {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl From<AffineMap> for AffineSpec {
    fn from(m: AffineMap) -> Self {
        AffineSpec {
            a: linalg::to_rows(&m.a),
            b: m.b.iter().cloned().collect(),
        }
    }
}

impl TryFrom<AffineSpec> for AffineMap {
    type Error = Error;
    fn try_from(s: AffineSpec) -> Result<Self> {
        AffineMap::new(linalg::from_rows(&s.a)?, Vector::from_vec(s.b))
    }
}

impl AffineMap {
    pub fn new(a: Mat, b: Vector) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return input(format!(
                "affine map shape mismatch: A is {}x{}, b has {} entries",
                a.nrows(),
                a.ncols(),
                b.len()
            ));
        }
        Ok(AffineMap { a, b })
    }

    pub fn linear(a: Mat) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, Vector::zeros(n))
    }

    pub fn identity(c: usize) -> Self {
        AffineMap {
            a: linalg::identity(c),
            b: Vector::zeros(c),
        }
    }

    pub fn translation(v: &[f64]) -> Self {
        AffineMap {
            a: linalg::identity(v.len()),
            b: Vector::from_row_slice(v),
        }
    }

    /// `x ↦ λ(x − p) + p` for a scalar or diagonal λ.
    pub fn about_point(a: Mat, p: &[f64]) -> Result<Self> {
        let pv = Vector::from_row_slice(p);
        let b = &pv - &a * &pv;
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = &self.a * Vector::from_row_slice(x) + &self.b;
        y.iter().cloned().collect()
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &AffineMap) -> AffineMap {
        AffineMap {
            a: &self.a * &first.a,
            b: &self.a * &first.b + &self.b,
        }
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let ai = linalg::invert(&self.a)?;
        let b = -(&ai * &self.b);
        Ok(AffineMap { a: ai, b })
    }

    pub fn shifted_by(&self, v: &[f64]) -> AffineMap {
        AffineMap {
            a: self.a.clone(),
            b: &self.b + Vector::from_row_slice(v),
        }
    }
}

/// Composition of affine pieces, applied in list order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "FiberSpec", try_from = "FiberSpec")]
pub struct FiberMap {
    pieces: Vec<AffineMap>,
    l_d: f64,
    total: AffineMap,
    inv: AffineMap,
    lip_lo: f64,
    lip_hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FiberSpec {
    pieces: Vec<AffineMap>,
    #[serde(default)]
    l_d: f64,
}

impl From<FiberMap> for FiberSpec {
    fn from(f: FiberMap) -> Self {
        FiberSpec {
            pieces: f.pieces,
            l_d: f.l_d,
        }
    }
}

impl TryFrom<FiberSpec> for FiberMap {
    type Error = Error;
    fn try_from(s: FiberSpec) -> Result<Self> {
        FiberMap::composed(s.pieces)?.with_l_d(s.l_d)
    }
}

impl FiberMap {
    pub fn affine(m: AffineMap) -> Result<Self> {
        Self::composed(vec![m])
    }

    pub fn from_parts(a: Mat, b: Vector) -> Result<Self> {
        Self::affine(AffineMap::new(a, b)?)
    }

    pub fn composed(pieces: Vec<AffineMap>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::Input("fiber map needs at least one piece".into()))?;
        let c = first.dim();
        let mut total = AffineMap::identity(c);
        for p in &pieces {
            if p.dim() != c {
                return input("fiber map pieces have different dimensions");
            }
            p.inverse()?;
            total = p.after(&total);
        }
        let inv = total.inverse()?;
        let (lip_lo, lip_hi) = linalg::singular_range(&total.a);
        Ok(FiberMap {
            pieces,
            l_d: 0.0,
            total,
            inv,
            lip_lo,
            lip_hi,
        })
    }

    /// Declares a Lipschitz constant of `x ↦ Dφ(x)`; affine pieces contribute 0.
    pub fn with_l_d(mut self, l_d: f64) -> Result<Self> {
        if !(l_d >= 0.0 && l_d.is_finite()) {
            return input(format!("L_D = {l_d} must be finite and non-negative"));
        }
        self.l_d = l_d;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.total.dim()
    }

    pub fn pieces(&self) -> &[AffineMap] {
        &self.pieces
    }

    pub fn total(&self) -> &AffineMap {
        &self.total
    }

    pub fn inverse_map(&self) -> &AffineMap {
        &self.inv
    }

    pub fn lip_lower(&self) -> f64 {
        self.lip_lo
    }

    pub fn lip_upper(&self) -> f64 {
        self.lip_hi
    }

    pub fn l_d(&self) -> f64 {
        self.l_d
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.total.apply(x)
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        self.inv.apply(x)
    }

    pub fn jacobian(&self) -> &Mat {
        &self.total.a
    }

    /// Single-piece inverse; `L_D` is carried over unchanged.
    pub fn inverted(&self) -> FiberMap {
        FiberMap {
            pieces: vec![self.inv.clone()],
            l_d: self.l_d,
            total: self.inv.clone(),
            inv: self.total.clone(),
            lip_lo: 1.0 / self.lip_hi,
            lip_hi: 1.0 / self.lip_lo,
        }
    }

    /// `P ∘ self` for an extra affine piece `P`.
    pub fn then(&self, p: &AffineMap) -> Result<FiberMap> {
        let mut pieces = self.pieces.clone();
        pieces.push(p.clone());
        FiberMap::composed(pieces)?.with_l_d(self.l_d)
    }
}

/// Translation `s_k(a)` added when `ξ_k = a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowShift {
    pub offset: i64,
    pub symbol: Symbol,
    pub shift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub radius: usize,
    pub shifts: Vec<WindowShift>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SystemSpec", try_from = "SystemSpec")]
pub struct SkewSystem {
    dim: usize,
    nu: f64,
    alpha: f64,
    maps: Vec<FiberMap>,
    window: Option<Window>,
    gamma: f64,
    gamma_hat: f64,
    c0: f64,
    l_d: f64,
}

/// Plain echo of a system, as stored in config-derived certificates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSpec {
    pub alphabet: usize,
    pub dim: usize,
    pub nu: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_hat: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub l_d: f64,
    pub maps: Vec<FiberMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

impl From<SkewSystem> for SystemSpec {
    fn from(s: SkewSystem) -> Self {
        SystemSpec {
            alphabet: s.maps.len(),
            dim: s.dim,
            nu: s.nu,
            alpha: s.alpha,
            gamma: s.gamma,
            gamma_hat: s.gamma_hat,
            c0: s.c0,
            l_d: s.l_d,
            maps: s.maps,
            window: s.window,
        }
    }
}

impl TryFrom<SystemSpec> for SkewSystem {
    type Error = Error;
    fn try_from(s: SystemSpec) -> Result<Self> {
        if s.alphabet != s.maps.len() {
            return input(format!("alphabet size {} but {} fiber maps", s.alphabet, s.maps.len()));
        }
        let mut sys = SkewSystem::one_step(s.maps, s.nu, s.alpha, s.gamma, s.gamma_hat)?.with_l_d(s.l_d)?;
        if sys.dim != s.dim {
            return input(format!("declared dim {} but maps act on ℝ^{}", s.dim, sys.dim));
        }
        if let Some(w) = s.window {
            sys = sys.with_window(w)?;
        }
        sys.with_c0(s.c0)
    }
}

impl SkewSystem {
    /// Symbol `i` (1-based) uses `maps[i-1]`.
    pub fn one_step(maps: Vec<FiberMap>, nu: f64, alpha: f64, gamma: f64, gamma_hat: f64) -> Result<Self> {
        if maps.len() < 2 {
            return input(format!("alphabet size {} must be at least 2", maps.len()));
        }
        if maps.len() > u16::MAX as usize {
            return input("alphabet too large");
        }
        let dim = maps[0].dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return input("fiber maps act on different dimensions");
        }
        if !(nu > 0.0 && nu < 1.0) {
            return input(format!("nu = {nu} outside (0,1)"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return input(format!("alpha = {alpha} outside (0,1]"));
        }
        if !(gamma > 0.0 && gamma.is_finite() && gamma_hat > 0.0 && gamma_hat.is_finite()) {
            return input("declared gamma and gamma_hat must be positive");
        }
        let l_d = maps.iter().map(|m| m.l_d()).fold(0.0, f64::max);
        Ok(SkewSystem {
            dim,
            nu,
            alpha,
            maps,
            window: None,
            gamma,
            gamma_hat,
            c0: 0.0,
            l_d,
        })
    }

    pub fn with_window(mut self, w: Window) -> Result<Self> {
        if w.radius == 0 {
            return input("window radius must be at least 1");
        }
        for s in &w.shifts {
            if s.offset == 0 || s.offset.unsigned_abs() as usize > w.radius {
                return input(format!("window offset {} outside 0<|k|≤{}", s.offset, w.radius));
            }
            if s.symbol.id() == 0 || s.symbol.id() > self.alphabet() {
                return input(format!("window symbol {} outside alphabet", s.symbol));
            }
            if s.shift.len() != self.dim {
                return input("window shift has wrong dimension");
            }
        }
        self.window = Some(w);
        let tight = self.tight_c0();
        self.c0 = self.c0.max(tight);
        Ok(self)
    }

    /// Declared `C₀`; raised to the tight window bound when smaller.
    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        if !(c0 >= 0.0 && c0.is_finite()) {
            return input(format!("C0 = {c0} must be finite and non-negative"));
        }
        self.c0 = c0.max(self.tight_c0());
        Ok(self)
    }

    pub fn with_l_d(mut self, l_d: f64) -> Result<Self> {
        if !(l_d >= 0.0 && l_d.is_finite()) {
            return input(format!("L_D = {l_d} must be finite and non-negative"));
        }
        self.l_d = self.l_d.max(l_d);
        Ok(self)
    }

    pub fn with_constants(mut self, gamma: f64, gamma_hat: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma_hat > 0.0) {
            return input("declared gamma and gamma_hat must be positive");
        }
        self.gamma = gamma;
        self.gamma_hat = gamma_hat;
        Ok(self)
    }

    /// Replaces every fiber map; window and constants are kept.
    pub fn with_maps(&self, maps: Vec<FiberMap>) -> Result<Self> {
        if maps.len() != self.maps.len() || maps.iter().any(|m| m.dim() != self.dim) {
            return input("replacement maps do not match the alphabet");
        }
        let mut s = self.clone();
        s.maps = maps;
        Ok(s)
    }

    /// One-step system of inverse maps; the declared constants swap roles.
    pub fn inverse_system(&self) -> Result<Self> {
        if self.window.is_some() {
            return Err(Error::Unsupported("inverse of a windowed system is not one-step".into()));
        }
        let maps = self.maps.iter().map(|m| m.inverted()).collect();
        let mut s = SkewSystem::one_step(maps, self.nu, self.alpha, self.gamma_hat, self.gamma)?;
        s.l_d = self.l_d;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn alphabet(&self) -> usize {
        self.maps.len()
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn l_d(&self) -> f64 {
        self.l_d
    }
    pub fn window(&self) -> Option<&Window> {
        self.window.as_ref()
    }
    pub fn is_one_step(&self) -> bool {
        self.window.is_none()
    }
    pub fn maps(&self) -> &[FiberMap] {
        &self.maps
    }

    pub fn map(&self, s: Symbol) -> Result<&FiberMap> {
        self.maps
            .get(s.index())
            .ok_or_else(|| Error::Input(format!("symbol {s} outside alphabet 1..={}", self.alphabet())))
    }

    pub fn window_radius(&self) -> usize {
        self.window.as_ref().map_or(0, |w| w.radius)
    }

    /// Sum of window shifts for the coordinates `ξ_{j+k}`, `0<|k|≤r`.
    fn window_offset(&self, lookup: impl Fn(i64) -> Option<Symbol>) -> Result<Vector> {
        let mut v = Vector::zeros(self.dim);
        if let Some(w) = &self.window {
            for s in &w.shifts {
                let sym = lookup(s.offset).ok_or_else(|| Error::Depth(format!("window coordinate at offset {} not stored", s.offset)))?;
                if sym == s.symbol {
                    v += Vector::from_row_slice(&s.shift);
                }
            }
        }
        Ok(v)
    }

    /// Affine map `φ_{τʲξ}`.
    pub fn fiber_at(&self, xi: &TruncatedSequence, j: i64) -> Result<AffineMap> {
        let s0 = xi.coord(j).ok_or_else(|| Error::Depth(format!("coordinate {j} not stored")))?;
        let base = self.map(s0)?.total();
        if self.window.is_none() {
            return Ok(base.clone());
        }
        let off = self.window_offset(|k| xi.coord(j + k))?;
        Ok(AffineMap {
            a: base.a.clone(),
            b: &base.b + off,
        })
    }

    /// Fiber map for an explicit window `ξ_{-r} … ξ_r` (`centre = ξ_0` at index r).
    pub fn fiber_for_window(&self, window: &[Symbol]) -> Result<AffineMap> {
        let r = self.window_radius();
        if window.len() != 2 * r + 1 {
            return input(format!("window of length {} for radius {r}", window.len()));
        }
        let base = self.map(window[r])?.total();
        let off = self.window_offset(|k| window.get((r as i64 + k) as usize).copied())?;
        Ok(AffineMap {
            a: base.a.clone(),
            b: &base.b + off,
        })
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return input(format!("point has {} coordinates, system acts on ℝ^{}", x.len(), self.dim));
        }
        Ok(())
    }

    /// `φⁿ_ξ(x) = φ_{τ^{n-1}ξ} ∘ ⋯ ∘ φ_ξ(x)`.
    pub fn compose_forward(&self, xi: &TruncatedSequence, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        if xi.future().len() < n {
            return Err(Error::Input(format!(
                "sequence stores {} future coordinates, {n} needed",
                xi.future().len()
            )));
        }
        let mut y = x.to_vec();
        for j in 0..n {
            y = self.fiber_at(xi, j as i64)?.apply(&y);
        }
        Ok(y)
    }

    /// `φ^{-n}_ξ(x) = φ^{-1}_{τ^{-n}ξ} ∘ ⋯ ∘ φ^{-1}_{τ^{-1}ξ}(x)`.
    pub fn compose_backward(&self, xi: &TruncatedSequence, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        if xi.past().len() < n {
            return Err(Error::Input(format!(
                "sequence stores {} past coordinates, {n} needed",
                xi.past().len()
            )));
        }
        let mut y = x.to_vec();
        for j in 1..=n {
            let f = self.fiber_at(xi, -(j as i64))?;
            y = f.inverse()?.apply(&y);
        }
        Ok(y)
    }

    /// `Dφⁿ_ξ(x)`; negative `n` gives the backward cocycle.
    pub fn derivative_cocycle(&self, xi: &TruncatedSequence, n: i64, x: &[f64]) -> Result<Mat> {
        self.check_len(x)?;
        let mut m = linalg::identity(self.dim);
        if n >= 0 {
            if (xi.future().len() as i64) < n {
                return Err(Error::Depth(format!("{n} future coordinates needed")));
            }
            for j in 0..n {
                let s = xi.coord(j).unwrap();
                m = self.map(s)?.jacobian() * m;
            }
        } else {
            if (xi.past().len() as i64) < -n {
                return Err(Error::Depth(format!("{} past coordinates needed", -n)));
            }
            for j in 1..=(-n) {
                let s = xi.coord(-j).unwrap();
                m = self.map(s)?.inverse_map().a.clone() * m;
            }
        }
        Ok(m)
    }

    /// Tight Hölder constant of the window translations:
    /// `max_ℓ max(1, ‖A⁻¹‖)·Δ(ℓ)/ν^{ℓα}`, `Δ(ℓ)` the spread of shifts at `|k| ≥ ℓ`.
    pub fn tight_c0(&self) -> f64 {
        let Some(w) = &self.window else { return 0.0 };
        let inv_norm = self.maps.iter().map(|m| 1.0 / m.lip_lower()).fold(1.0, f64::max);
        let spread_at = |k: i64| -> f64 {
            let shift_of = |a: usize| -> Vector {
                let mut v = Vector::zeros(self.dim);
                for s in &w.shifts {
                    if s.offset == k && s.symbol.id() == a {
                        v += Vector::from_row_slice(&s.shift);
                    }
                }
                v
            };
            let vs: Vec<Vector> = (1..=self.alphabet()).map(shift_of).collect();
            let mut best: f64 = 0.0;
            for a in 0..vs.len() {
                for b in a + 1..vs.len() {
                    best = best.max((&vs[a] - &vs[b]).norm());
                }
            }
            best
        };
        let r = w.radius as i64;
        let mut c: f64 = 0.0;
        for l in 1..=r {
            let delta: f64 = (l..=r).map(|k| spread_at(k) + spread_at(-k)).sum();
            c = c.max(inv_norm * delta / self.nu.powf(l as f64 * self.alpha));
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs` of `lhs < rhs`.
    pub slack: f64,
}

impl Inequality {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Inequality {
            name: name.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.slack > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub gamma: f64,
    pub gamma_hat: f64,
    pub c0: f64,
    pub nu: f64,
    pub alpha: f64,
    pub l_d: f64,
    pub tight_lower: f64,
    pub tight_upper: f64,
    pub phs_ok: bool,
    pub bunched_ok: bool,
    /// `ν^α < γ`, `γ < 1`, `1 < γ̂⁻¹`, `γ̂⁻¹ < ν^{−α}`, then `ν^α < γγ̂`.
    pub inequalities: Vec<Inequality>,
}

impl ConstantsReport {
    pub fn phs_slacks(&self) -> [f64; 4] {
        [
            self.inequalities[0].slack,
            self.inequalities[1].slack,
            self.inequalities[2].slack,
            self.inequalities[3].slack,
        ]
    }

    pub fn bunching(&self) -> &Inequality {
        &self.inequalities[4]
    }

    pub fn min_slack(&self) -> f64 {
        self.inequalities[..4].iter().map(|i| i.slack).fold(f64::INFINITY, f64::min)
    }
}

pub fn verify_constants(sys: &SkewSystem) -> Result<ConstantsReport> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (i, m) in sys.maps.iter().enumerate() {
        if sys.gamma > m.lip_lower() * (1.0 + DECLARED_RTOL) {
            return Err(Error::CertificateInvalid(format!(
                "map {}: declared gamma {} exceeds its lower Lipschitz bound {}",
                i + 1,
                sys.gamma,
                m.lip_lower()
            )));
        }
        if 1.0 / sys.gamma_hat < m.lip_upper() * (1.0 - DECLARED_RTOL) {
            return Err(Error::CertificateInvalid(format!(
                "map {}: declared gamma_hat^-1 {} is below its upper Lipschitz bound {}",
                i + 1,
                1.0 / sys.gamma_hat,
                m.lip_upper()
            )));
        }
        if m.l_d() > sys.l_d {
            return Err(Error::CertificateInvalid(format!(
                "map {}: L_D {} exceeds declared {}",
                i + 1,
                m.l_d(),
                sys.l_d
            )));
        }
        lo = lo.min(m.lip_lower());
        hi = hi.max(m.lip_upper());
    }
    let tight = sys.tight_c0();
    if sys.c0 < tight * (1.0 - DECLARED_RTOL) {
        return Err(Error::CertificateInvalid(format!(
            "declared C0 {} below the window bound {}",
            sys.c0, tight
        )));
    }
    let na = sys.nu.powf(sys.alpha);
    let ghi = 1.0 / sys.gamma_hat;
    let inequalities = vec![
        Inequality::new("nu^alpha < gamma", na, sys.gamma),
        Inequality::new("gamma < 1", sys.gamma, 1.0),
        Inequality::new("1 < gamma_hat^-1", 1.0, ghi),
        Inequality::new("gamma_hat^-1 < nu^-alpha", ghi, 1.0 / na),
        Inequality::new("nu^alpha < gamma*gamma_hat", na, sys.gamma * sys.gamma_hat),
    ];
    let phs_ok = inequalities[..4].iter().all(|i| i.holds());
    let bunched_ok = inequalities[4].holds();
    Ok(ConstantsReport {
        gamma: sys.gamma,
        gamma_hat: sys.gamma_hat,
        c0: sys.c0,
        nu: sys.nu,
        alpha: sys.alpha,
        l_d: sys.l_d,
        tight_lower: lo,
        tight_upper: hi,
        phs_ok,
        bunched_ok,
        inequalities,
    })
}

/// Empirical lower bound for `C₀`: the largest observed
/// `d_{C⁰}(φ^{±1}_ξ, φ^{±1}_ζ)/d_Σ(ξ,ζ)^α` over pairs with `ξ_0 = ζ_0`.
///
/// Every single-coordinate disagreement pair is tried first, then `samples`
/// random window pairs.
pub fn holder_constant_estimate(sys: &SkewSystem, region: &Region, samples: usize, seed: u64) -> Result<f64> {
    let Some(w) = &sys.window else { return Ok(0.0) };
    if samples == 0 {
        return input("samples must be at least 1");
    }
    if region.dim() != sys.dim {
        return input("region dimension does not match the system");
    }
    let r = w.radius;
    let d = sys.alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let score = |a: &[Symbol], b: &[Symbol], x: &[f64]| -> Result<f64> {
        let l = (1..=r).find(|&l| a[r + l] != b[r + l] || a[r - l] != b[r - l]).unwrap_or(r + 1);
        let fa = sys.fiber_for_window(a)?;
        let fb = sys.fiber_for_window(b)?;
        let fwd = linalg::dist(&fa.apply(x), &fb.apply(x));
        let bwd = linalg::dist(&fa.inverse()?.apply(x), &fb.inverse()?.apply(x));
        Ok(fwd.max(bwd) / sys.nu.powf(l as f64 * sys.alpha))
    };
    let x0 = region.sample(&mut rng);
    for s0 in 1..=d {
        for k in (1..=r).flat_map(|k| [r + k, r - k]) {
            for a in 1..=d {
                for b in a + 1..=d {
                    let mut wa = vec![Symbol(1); 2 * r + 1];
                    wa[r] = Symbol(s0 as u16);
                    let mut wb = wa.clone();
                    wa[k] = Symbol(a as u16);
                    wb[k] = Symbol(b as u16);
                    best = best.max(score(&wa, &wb, &x0)?);
                }
            }
        }
    }
    for _ in 0..samples {
        let mut wa: Vec<Symbol> = (0..2 * r + 1).map(|_| Symbol(rng.gen_range(1..=d) as u16)).collect();
        let mut wb: Vec<Symbol> = (0..2 * r + 1).map(|_| Symbol(rng.gen_range(1..=d) as u16)).collect();
        let l = rng.gen_range(1..=r);
        for k in 0..l {
            wb[r + k] = wa[r + k];
            wb[r - k] = wa[r - k];
        }
        if rng.gen_bool(0.5) {
            wa[r + l] = wb[r + l];
        }
        let x = region.sample(&mut rng);
        best = best.max(score(&wa, &wb, &x)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> FiberMap {
        FiberMap::from_parts(linalg::diag(&[a]), Vector::from_vec(vec![b])).unwrap()
    }

    fn half_and_shift() -> SkewSystem {
        SkewSystem::one_step(vec![scalar(0.5, 0.0), scalar(1.0, 1.0)], 0.5, 1.0, 0.5, 0.5).unwrap()
    }

    #[test]
    fn forward_composition() {
        let s = half_and_shift();
        let xi = TruncatedSequence::from_ids(&[], &[1, 1, 1]).unwrap();
        assert_eq!(s.compose_forward(&xi, 3, &[1.0]).unwrap(), vec![0.125]);
        assert_eq!(s.compose_forward(&xi, 0, &[7.0]).unwrap(), vec![7.0]);
        let xi = TruncatedSequence::from_ids(&[], &[1, 2]).unwrap();
        assert_eq!(s.compose_forward(&xi, 2, &[2.0]).unwrap(), vec![2.0]);
        assert!(s.compose_forward(&xi, 3, &[2.0]).is_err());
    }

    #[test]
    fn backward_composition() {
        let s = half_and_shift();
        let xi = TruncatedSequence::from_ids(&[1], &[]).unwrap();
        assert_eq!(s.compose_backward(&xi, 1, &[0.25]).unwrap(), vec![0.5]);
        assert_eq!(s.compose_backward(&xi, 0, &[0.25]).unwrap(), vec![0.25]);
    }

    #[test]
    fn cocycle_power() {
        let m = FiberMap::from_parts(linalg::diag(&[0.5, 2.0]), Vector::zeros(2)).unwrap();
        let s = SkewSystem::one_step(vec![m.clone(), m], 0.2, 1.0, 0.5, 0.5).unwrap();
        let xi = TruncatedSequence::from_ids(&[1, 1], &[1, 1, 1]).unwrap();
        let d = s.derivative_cocycle(&xi, 3, &[0.0, 0.0]).unwrap();
        assert!((d - linalg::diag(&[0.125, 8.0])).norm() < 1e-15);
        let d0 = s.derivative_cocycle(&xi, 0, &[0.0, 0.0]).unwrap();
        assert_eq!(d0, linalg::identity(2));
        let db = s.derivative_cocycle(&xi, -2, &[0.0, 0.0]).unwrap();
        assert!((db - linalg::diag(&[4.0, 0.25])).norm() < 1e-15);
    }

    #[test]
    fn phs_slacks_match_arithmetic() {
        let s = SkewSystem::one_step(vec![scalar(0.7, 0.0), scalar(0.8, 1.0)], 0.5, 1.0, 0.6, 1.0 / 1.1).unwrap();
        let r = verify_constants(&s).unwrap();
        assert!(r.phs_ok);
        let want = [0.1, 0.4, 0.1, 0.9];
        for (got, w) in r.phs_slacks().iter().zip(want) {
            assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        }
    }

    #[test]
    fn identity_maps_fail_phs() {
        let s = SkewSystem::one_step(vec![scalar(1.0, 0.0), scalar(1.0, 0.0)], 0.5, 1.0, 1.0, 1.0).unwrap();
        let r = verify_constants(&s).unwrap();
        assert!(!r.phs_ok);
        assert_eq!(r.inequalities[1].slack, 0.0);
    }

    #[test]
    fn bunching_product() {
        let s = SkewSystem::one_step(vec![scalar(1.0, 0.0), scalar(1.0, 0.5)], 0.5, 1.0, 0.9, 0.9).unwrap();
        let r = verify_constants(&s).unwrap();
        assert!(r.bunched_ok);
        assert!((r.bunching().slack - 0.31).abs() < 1e-12);
    }

    #[test]
    fn declared_gamma_too_large_names_map() {
        let s = SkewSystem::one_step(vec![scalar(0.9, 0.0), scalar(0.5, 0.0)], 0.3, 1.0, 0.6, 0.5).unwrap();
        match verify_constants(&s) {
            Err(Error::CertificateInvalid(m)) => assert!(m.contains("map 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_step_holder_is_zero() {
        let s = half_and_shift();
        let b = Region::ball(vec![0.0], 1.0).unwrap();
        assert_eq!(holder_constant_estimate(&s, &b, 10, 0).unwrap(), 0.0);
    }

    #[test]
    fn windowed_holder_sees_depth_one_witness() {
        let eta = 0.03;
        let w = Window {
            radius: 2,
            shifts: vec![WindowShift {
                offset: -1,
                symbol: Symbol(2),
                shift: vec![eta],
            }],
        };
        let s = SkewSystem::one_step(vec![scalar(0.7, -0.3), scalar(0.7, 0.3)], 0.5, 1.0, 0.6, 1.0 / 1.1)
            .unwrap()
            .with_window(w)
            .unwrap();
        let b = Region::ball(vec![0.0], 1.0).unwrap();
        let est = holder_constant_estimate(&s, &b, 200, 3).unwrap();
        assert!(est >= eta / 0.5 - 1e-12);
        assert!(est <= s.c0() + 1e-12);
    }

    #[test]
    fn windowed_fiber_reads_neighbours() {
        let w = Window {
            radius: 1,
            shifts: vec![WindowShift {
                offset: 1,
                symbol: Symbol(2),
                shift: vec![0.1],
            }],
        };
        let s = SkewSystem::one_step(vec![scalar(0.5, 0.0), scalar(0.5, 0.0)], 0.5, 1.0, 0.5, 0.5)
            .unwrap()
            .with_window(w)
            .unwrap();
        let xi = TruncatedSequence::from_ids(&[1], &[1, 2, 1]).unwrap();
        let y = s.compose_forward(&xi, 1, &[0.0]).unwrap();
        assert!((y[0] - 0.1).abs() < 1e-15);
        let short = TruncatedSequence::from_ids(&[], &[1]).unwrap();
        assert!(matches!(s.compose_forward(&short, 1, &[0.0]), Err(Error::Depth(_))));
    }

    #[test]
    fn system_json_round_trip() {
        let s = half_and_shift();
        let j = serde_json::to_string(&s).unwrap();
        let t: SkewSystem = serde_json::from_str(&j).unwrap();
        assert_eq!(s, t);
    }
}
