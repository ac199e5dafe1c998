//! Lifted covering on `B̂ = B × G` with `G` a region of ℓ-planes in graph
//! coordinates, and greedy lifted orbits.
//!
//! Planes transverse to the `others` coordinates are written
//! `E = {x : x_O = X x_L}` with `X ∈ ℝ^{(c−ℓ)×ℓ}` stored row-major. A linear
//! map with blocks `A_OO, A_OL, A_LO, A_LL` acts by
//! `X ↦ (A_OO X + A_OL)(A_LO X + A_LL)⁻¹`; its affine part (`A_LO = 0`) is
//! `F₀(X) = (A_OO X + A_OL) A_LL⁻¹`.

use serde::{Deserialize, Serialize};

use crate::blending::{cover_by_images, Mode};
use crate::cones::Cone;
use crate::error::{input, Error, Result};
use crate::grassmann::{bilipschitz_bound, Plane};
use crate::linalg::{self, Mat, Vector};
use crate::par::Exec;
use crate::regions::{Part, Region, DEFAULT_GRID_CAP};
use crate::shift_space::Symbol;
use crate::skewproduct::{AffineMap, Inequality, SkewSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneChart {
    pub c: usize,
    /// Coordinates the planes are graphs over.
    pub graph_over: Vec<usize>,
    pub others: Vec<usize>,
}

/// Affine part of a plane action plus the block norms bounding the rest.
#[derive(Clone, Debug)]
pub struct PlaneAction {
    pub affine: AffineMap,
    oo: f64,
    ol: f64,
    lo: f64,
    ll_inv: f64,
    frob: f64,
}

impl PlaneAction {
    /// Bound on `‖F(X) − F₀(X)‖_F` over `‖X‖₂ ≤ r`.
    pub fn nonlinearity(&self, r: f64) -> f64 {
        if self.lo == 0.0 {
            return 0.0;
        }
        let q = self.ll_inv * self.lo * r;
        if q >= 1.0 {
            return f64::INFINITY;
        }
        let n = self.oo * r + self.ol;
        self.frob * n * (self.ll_inv / (1.0 - q)) * self.lo * r * self.ll_inv
    }
}

impl PlaneChart {
    pub fn new(c: usize, graph_over: Vec<usize>) -> Result<Self> {
        let l = graph_over.len();
        if l == 0 || l >= c || graph_over.iter().any(|&k| k >= c) {
            return input("chart coordinates out of range");
        }
        let mut sorted = graph_over.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != l {
            return input("repeated chart coordinate");
        }
        let others = (0..c).filter(|k| !graph_over.contains(k)).collect();
        Ok(PlaneChart { c, graph_over, others })
    }

    pub fn ell(&self) -> usize {
        self.graph_over.len()
    }

    /// Dimension of the coordinate space `ℝ^{(c−ℓ)ℓ}`.
    pub fn dim(&self) -> usize {
        self.others.len() * self.ell()
    }

    fn frob_factor(&self) -> f64 {
        (self.ell().min(self.others.len()) as f64).sqrt()
    }

    fn unvec(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.others.len(), self.ell(), |i, j| x[i * self.ell() + j])
    }

    fn vec(&self, m: &Mat) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                v.push(m[(i, j)]);
            }
        }
        v
    }

    fn blocks(&self, a: &Mat) -> (Mat, Mat, Mat, Mat) {
        let (o, l) = (&self.others, &self.graph_over);
        let pick = |r: &[usize], c: &[usize]| Mat::from_fn(r.len(), c.len(), |i, j| a[(r[i], c[j])]);
        (pick(o, o), pick(o, l), pick(l, o), pick(l, l))
    }

    pub fn plane(&self, x: &[f64]) -> Result<Plane> {
        let xm = self.unvec(x);
        let mut f = Mat::zeros(self.c, self.ell());
        for (j, &lj) in self.graph_over.iter().enumerate() {
            f[(lj, j)] = 1.0;
            for (i, &oi) in self.others.iter().enumerate() {
                f[(oi, j)] = xm[(i, j)];
            }
        }
        Plane::new(&f)
    }

    /// Graph coordinates of `E`, if it is transverse to the `others` axes.
    pub fn coords(&self, e: &Plane) -> Result<Vec<f64>> {
        let f = e.frame();
        let fl = Mat::from_fn(self.ell(), self.ell(), |i, j| f[(self.graph_over[i], j)]);
        let fo = Mat::from_fn(self.others.len(), self.ell(), |i, j| f[(self.others[i], j)]);
        Ok(self.vec(&(fo * linalg::invert(&fl)?)))
    }

    /// Exact action of `a` on graph coordinates.
    pub fn apply(&self, a: &Mat, x: &[f64]) -> Result<Vec<f64>> {
        let (oo, ol, lo, ll) = self.blocks(a);
        let xm = self.unvec(x);
        let num = &oo * &xm + ol;
        let den = lo * &xm + ll;
        Ok(self.vec(&(num * linalg::invert(&den)?)))
    }

    pub fn action(&self, a: &Mat) -> Result<PlaneAction> {
        let (oo, ol, lo, ll) = self.blocks(a);
        let ll_inv = linalg::invert(&ll)?;
        let (no, l) = (self.others.len(), self.ell());
        // vec(A_OO X A_LL⁻¹)[(i,j)] = Σ A_OO[i,p] X[p,q] A_LL⁻¹[q,j]
        let m = Mat::from_fn(no * l, no * l, |r, s| oo[(r / l, s / l)] * ll_inv[(s % l, r % l)]);
        let b = Vector::from_vec(self.vec(&(&ol * &ll_inv)));
        Ok(PlaneAction {
            affine: AffineMap::new(m, b)?,
            oo: linalg::spectral_norm(&oo),
            ol: linalg::spectral_norm(&ol),
            lo: linalg::spectral_norm(&lo),
            ll_inv: linalg::spectral_norm(&ll_inv),
            frob: self.frob_factor(),
        })
    }

    /// Cone `{‖x_O‖ ≤ ρ‖x_L‖}`; a graph plane lies strictly inside iff `‖X‖₂ < ρ`.
    pub fn cone(&self, aperture: f64) -> Result<Cone> {
        let mut basis = Mat::zeros(self.c, self.c);
        for (j, &k) in self.graph_over.iter().chain(&self.others).enumerate() {
            basis[(k, j)] = 1.0;
        }
        Cone::new(self.ell(), aperture, basis)
    }

    /// `sup ‖X‖_F` over a region of graph coordinates.
    pub fn radius(&self, g: &Region) -> f64 {
        g.parts()
            .iter()
            .map(|p| match p {
                Part::Ball { center, radius } => linalg::norm(center) + radius,
                Part::Box { lo, hi } => {
                    let far: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs())).collect();
                    linalg::norm(&far)
                }
            })
            .fold(0.0, f64::max)
    }

    /// `‖X − Y‖_F ≤ κ·d_G(E_X, E_Y)` for `‖X‖₂, ‖Y‖₂ ≤ r`.
    pub fn distortion(&self, r: f64) -> f64 {
        self.frob_factor() * (1.0 + r * r)
    }
}

/// Lifted point `(x, X)` as one vector.
pub fn lifted_point(x: &[f64], plane: &[f64]) -> Vec<f64> {
    x.iter().chain(plane).cloned().collect()
}

/// Depth of `(x, X)` in `B × G`.
pub fn lifted_depth(b: &Region, g: &Region, z: &[f64]) -> f64 {
    let c = b.dim();
    b.signed_distance(&z[..c]).min(g.signed_distance(&z[c..]))
}

/// `(f(x), Df·E)` in chart coordinates.
pub fn lifted_apply(chart: &PlaneChart, f: &AffineMap, z: &[f64]) -> Result<Vec<f64>> {
    let c = chart.c;
    Ok(lifted_point(&f.apply(&z[..c]), &chart.apply(&f.a, &z[c..])?))
}

/// Product region `B × G`; both factors must be single boxes.
pub fn product_box(b: &Region, g: &Region) -> Result<Region> {
    match (b.parts(), g.parts()) {
        ([Part::Box { lo: l1, hi: h1 }], [Part::Box { lo: l2, hi: h2 }]) => {
            Region::boxed(l1.iter().chain(l2).cloned().collect(), h1.iter().chain(h2).cloned().collect())
        }
        _ => Err(Error::Unsupported("product regions need single boxes".into())),
    }
}

#[derive(Clone, Debug)]
pub struct LiftedCoverOptions {
    pub h_x: f64,
    pub h_g: f64,
    /// Maps whose plane actions differ by at most this much on `G` share a group.
    pub group_tol: f64,
    pub cell_cap: usize,
    pub exec: Exec,
}

impl LiftedCoverOptions {
    pub fn for_regions(b: &Region, g: &Region) -> Self {
        LiftedCoverOptions {
            h_x: b.min_inradius() / 32.0,
            h_g: g.min_inradius() / 32.0,
            group_tol: g.min_inradius() / 20.0,
            cell_cap: DEFAULT_GRID_CAP,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedCoverReport {
    pub mode: Mode,
    pub groups: Vec<Vec<Symbol>>,
    /// Covering depth of `B` by each group's images.
    pub x_margins: Vec<f64>,
    /// Covering depth of `G` by the group representatives' affine actions.
    pub g_margin: f64,
    /// Max distance on `G` between a member's true action and its representative.
    pub group_spread: f64,
    pub product_margin: f64,
    pub x_image_margin: f64,
    pub g_image_margin: f64,
    pub g_radius: f64,
    /// In the metric `|x − x'| + d_G`.
    pub lebesgue: f64,
    pub gamma: f64,
    pub delta_max: f64,
    pub cells: usize,
    pub inequalities: Vec<Inequality>,
    pub valid: bool,
    #[serde(default)]
    pub failure: Option<String>,
}

impl LiftedCoverReport {
    pub fn slack(&self) -> f64 {
        self.inequalities.iter().map(|i| i.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Covering `B̂ ⊂ ⋃ f̂_k(B̂)` (cs) or by inverse maps (cu) for `B̂ = B × G`.
///
/// Maps are grouped by plane action. For a point `(x, X)` a representative
/// covers `X` with depth `m_G`, so every member covers it with depth at
/// least `m_G − spread`, and some member of that group covers `x` with the
/// group's x-margin. The product margin is the minimum of the two.
#[allow(clippy::too_many_arguments)]
pub fn verify_lifted_covering(
    sys: &SkewSystem,
    chart: &PlaneChart,
    mode: Mode,
    symbols: &[Symbol],
    b: &Region,
    d: &Region,
    g: &Region,
    g_d: &Region,
    opts: &LiftedCoverOptions,
) -> Result<LiftedCoverReport> {
    if !sys.is_one_step() {
        return Err(Error::Unsupported("lifted covering needs a one-step system".into()));
    }
    if g.dim() != chart.dim() || g_d.dim() != chart.dim() || chart.c != sys.dim() {
        return input("plane regions do not match the chart");
    }
    if symbols.is_empty() {
        return input("symbol set is empty");
    }
    let maps: Vec<AffineMap> = symbols
        .iter()
        .map(|s| {
            let m = sys.map(*s)?;
            Ok(match mode {
                Mode::Cs => m.total().clone(),
                Mode::Cu => m.inverse_map().clone(),
            })
        })
        .collect::<Result<_>>()?;
    let r_g = chart.radius(g);
    let actions: Vec<PlaneAction> = maps.iter().map(|f| chart.action(&f.a)).collect::<Result<_>>()?;
    let nonlin: Vec<f64> = actions.iter().map(|a| a.nonlinearity(r_g)).collect();

    // greedy grouping against the first member of each group
    let gc = g.center();
    let circ = g
        .parts()
        .iter()
        .map(|p| match p {
            Part::Ball { center, radius } => linalg::dist(center, &gc) + radius,
            Part::Box { lo, hi } => {
                let far: Vec<f64> = lo
                    .iter()
                    .zip(hi)
                    .zip(&gc)
                    .map(|((a, b), c)| (a - c).abs().max((b - c).abs()))
                    .collect();
                linalg::norm(&far)
            }
        })
        .fold(0.0, f64::max);
    let mut reps: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut spread: f64 = 0.0;
    for (k, a) in actions.iter().enumerate() {
        let yk = a.affine.apply(&gc);
        let mut placed = false;
        for (gi, &r) in reps.iter().enumerate() {
            let ar = &actions[r].affine;
            let dist = linalg::dist(&yk, &ar.apply(&gc)) + linalg::spectral_norm(&(&a.affine.a - &ar.a)) * circ;
            if dist <= opts.group_tol {
                members[gi].push(k);
                spread = spread.max(dist + nonlin[k]);
                placed = true;
                break;
            }
        }
        if !placed {
            reps.push(k);
            members.push(vec![k]);
            spread = spread.max(nonlin[k]);
        }
    }

    let g_elems: Vec<Vec<AffineMap>> = reps.iter().map(|&r| vec![actions[r].affine.clone()]).collect();
    let g_check = cover_by_images(g, &g_elems, opts.h_g, opts.cell_cap, opts.exec)?;
    let mut cells = g_check.cells;
    let g_margin = if g_check.witness.is_none() {
        g_check.margin
    } else {
        f64::NEG_INFINITY
    };
    let mut x_margins = Vec::with_capacity(members.len());
    let mut failure = g_check
        .witness
        .as_ref()
        .map(|(p, best)| format!("plane coordinates {p:?} not covered (best depth {best:e})"));
    for (gi, mem) in members.iter().enumerate() {
        let elems: Vec<Vec<AffineMap>> = mem.iter().map(|&k| vec![maps[k].clone()]).collect();
        let chk = cover_by_images(b, &elems, opts.h_x, opts.cell_cap, opts.exec)?;
        cells += chk.cells;
        if let Some((p, best)) = &chk.witness {
            failure.get_or_insert_with(|| format!("group {gi}: point {p:?} not covered (best depth {best:e})"));
            x_margins.push(f64::NEG_INFINITY);
        } else {
            x_margins.push(chk.margin);
        }
    }
    let x_min = x_margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_eff = g_margin - spread;
    let product_margin = x_min.min(g_eff);
    let x_image_margin = maps.iter().map(|f| b.image_margin(f, d)).fold(f64::INFINITY, f64::min);
    let g_image_margin = actions
        .iter()
        .zip(&nonlin)
        .map(|(a, e)| g.image_margin(&a.affine, g_d) - e)
        .fold(f64::INFINITY, f64::min);
    let kappa = chart.distortion(r_g);
    let lebesgue = x_min.min(g_eff / kappa).max(0.0);
    let base_gamma = match mode {
        Mode::Cs => sys.gamma(),
        Mode::Cu => sys.gamma_hat(),
    };
    let plane_gamma = maps.iter().map(|f| 1.0 / bilipschitz_bound(&f.a)).fold(f64::INFINITY, f64::min);
    let gamma = base_gamma.min(plane_gamma);
    let inequalities = vec![
        Inequality::new("lifted covering depth", 0.0, product_margin),
        Inequality::new("plane group spread below plane depth", spread, g_margin),
        Inequality::new("lifted images of B in D", 0.0, x_image_margin),
        Inequality::new("lifted images of G in G_D", 0.0, g_image_margin),
    ];
    if failure.is_none() {
        failure = inequalities
            .iter()
            .find(|i| !i.holds())
            .map(|i| format!("{} fails: {} vs {}", i.name, i.lhs, i.rhs));
    }
    Ok(LiftedCoverReport {
        mode,
        groups: members.iter().map(|m| m.iter().map(|&k| symbols[k]).collect()).collect(),
        x_margins,
        g_margin,
        group_spread: spread,
        product_margin,
        x_image_margin,
        g_image_margin,
        g_radius: r_g,
        lebesgue,
        gamma,
        delta_max: gamma * lebesgue / 2.0,
        cells,
        valid: failure.is_none(),
        failure,
        inequalities,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedOrbit {
    pub symbols: Vec<Symbol>,
    /// Lifted points, starting point first.
    pub points: Vec<Vec<f64>>,
    pub min_depth: f64,
}

/// At each step the least candidate symbol keeping the lifted point inside
/// `B × G`. `backward` pulls back by inverse maps (cs side); otherwise maps
/// forward (cu side).
#[allow(clippy::too_many_arguments)]
pub fn greedy_orbit(
    sys: &SkewSystem,
    chart: &PlaneChart,
    candidates: &[Symbol],
    backward: bool,
    start: &[f64],
    b: &Region,
    g: &Region,
    steps: usize,
) -> Result<LiftedOrbit> {
    let mut z = start.to_vec();
    let mut symbols = Vec::with_capacity(steps);
    let mut points = vec![z.clone()];
    let mut min_depth = f64::INFINITY;
    for n in 1..=steps {
        let mut next = None;
        for &s in candidates {
            let m = sys.map(s)?;
            let f = if backward { m.inverse_map() } else { m.total() };
            let w = match lifted_apply(chart, f, &z) {
                Ok(w) => w,
                Err(_) => continue,
            };
            let dep = lifted_depth(b, g, &w);
            if dep > 0.0 {
                next = Some((s, w, dep));
                break;
            }
        }
        let Some((s, w, dep)) = next else {
            return Err(Error::Construction(format!(
                "lifted orbit step {n}: no symbol keeps {z:?} inside B x G"
            )));
        };
        min_depth = min_depth.min(dep);
        symbols.push(s);
        points.push(w.clone());
        z = w;
    }
    Ok(LiftedOrbit {
        symbols,
        points,
        min_depth,
    })
}
