//! Covering-property verification, translation families and the
//! Conley–Moser block check.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::par::Exec;
use crate::regions::{cover_grid_capped, AffineImage, Region, DEFAULT_GRID_CAP};
use crate::shift_space::Symbol;
use crate::skewproduct::{verify_constants, AffineMap, FiberMap, Inequality, SkewSystem};
use crate::subdivide::{self, CellOracle, Lattice};

/// Flat grids above this size skip the pairwise Lebesgue bound.
const PAIR_GRID_LIMIT: usize = 200_000;
const PAIR_MAX_ELEMENTS: usize = 8;
const PAIR_BUDGET: usize = 40_000_000;
const DEFAULT_FAMILY_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Cs,
    Cu,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cs" => Ok(Mode::Cs),
            "cu" => Ok(Mode::Cu),
            _ => input(format!("mode `{s}` is neither cs nor cu")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoveringOptions {
    /// Branch words; defaults to the single symbols.
    pub branches: Option<Vec<Vec<Symbol>>>,
    /// Finest spacing; defaults to `min inradius(B)/200`.
    pub h: Option<f64>,
    pub cell_cap: usize,
    pub exec: Exec,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        CoveringOptions {
            branches: None,
            h: None,
            cell_cap: DEFAULT_GRID_CAP,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringFailure {
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_depth: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringCertificate {
    pub mode: Mode,
    pub symbols: Vec<Symbol>,
    pub branches: Vec<Vec<Symbol>>,
    pub b: Region,
    pub d: Region,
    pub system: SkewSystem,
    pub h: f64,
    pub cell_radius: f64,
    /// Lower bound of `min_{x∈B̄} max_i depth_i(x)`.
    pub covering_margin: f64,
    pub lebesgue_depth: f64,
    #[serde(default)]
    pub lebesgue_pair: Option<f64>,
    pub lebesgue_lower: f64,
    /// Lower Lipschitz constant of the covering maps (γ for cs, γ̂ for cu).
    pub gamma: f64,
    pub holder_bound: f64,
    pub delta_max: f64,
    pub closure_margin: f64,
    pub image_margins: Vec<f64>,
    pub intermediate_margin: Option<f64>,
    pub cells_checked: usize,
    pub inequalities: Vec<Inequality>,
    pub valid: bool,
    #[serde(default)]
    pub failure: Option<CoveringFailure>,
}

impl CoveringCertificate {
    /// Smallest slack among the strict inequalities carried.
    pub fn slack(&self) -> f64 {
        self.inequalities.iter().map(|i| i.slack).fold(f64::INFINITY, f64::min)
    }

    /// Affine covering maps per branch (all window variants for windowed systems).
    pub fn branch_maps(&self) -> Result<Vec<Vec<AffineMap>>> {
        branch_maps(&self.system, self.mode, &self.branches)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    pub cs: Vec<usize>,
    pub cu: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlenderSpec {
    pub certificate: CoveringCertificate,
    pub cs_index: usize,
    #[serde(default)]
    pub splitting: Option<Splitting>,
    #[serde(default)]
    pub structural: Option<ConleyMoserCertificate>,
}

impl BlenderSpec {
    pub fn new(
        certificate: CoveringCertificate,
        cs_index: usize,
        splitting: Option<Splitting>,
        structural: Option<ConleyMoserCertificate>,
    ) -> Result<Self> {
        let c = certificate.system.dim();
        if cs_index == 0 || cs_index > c {
            return input(format!("cs-index {cs_index} outside 1..={c}"));
        }
        if let Some(s) = &splitting {
            if s.cs.len() + s.cu.len() != c {
                return input("splitting does not partition the coordinates");
            }
        }
        if let Some(cm) = &structural {
            if cm.cs_index != cs_index {
                return input(format!(
                    "cs-index {cs_index} disagrees with the structural certificate ({})",
                    cm.cs_index
                ));
            }
        }
        Ok(BlenderSpec {
            certificate,
            cs_index,
            splitting,
            structural,
        })
    }

    pub fn valid(&self) -> bool {
        self.certificate.valid && self.structural.as_ref().is_none_or(|s| s.valid)
    }
}

/// Every window variant of symbol `s`, as affine maps.
pub(crate) fn symbol_variants(sys: &SkewSystem, s: Symbol) -> Result<Vec<AffineMap>> {
    let r = sys.window_radius();
    if r == 0 {
        return Ok(vec![sys.map(s)?.total().clone()]);
    }
    let d = sys.alphabet();
    let n = 2 * r;
    let total = d
        .checked_pow(n as u32)
        .filter(|&t| t <= 1 << 16)
        .ok_or_else(|| Error::Resource(format!("{d}^{n} window variants are too many")))?;
    let mut out = Vec::with_capacity(total);
    let mut w = vec![Symbol(1); n + 1];
    w[r] = s;
    for code in 0..total {
        let mut rem = code;
        for k in (0..=n).filter(|&k| k != r) {
            w[k] = Symbol((rem % d + 1) as u16);
            rem /= d;
        }
        out.push(sys.fiber_for_window(&w)?);
    }
    Ok(out)
}

pub(crate) fn branch_maps(sys: &SkewSystem, mode: Mode, branches: &[Vec<Symbol>]) -> Result<Vec<Vec<AffineMap>>> {
    branches
        .iter()
        .map(|w| {
            if w.is_empty() {
                return input("empty branch word");
            }
            if w.len() > 1 && !sys.is_one_step() {
                return Err(Error::Unsupported("multi-block branches need a one-step system".into()));
            }
            let mut variants = symbol_variants(sys, w[0])?;
            if w.len() > 1 {
                let mut f = variants.pop().unwrap();
                for s in &w[1..] {
                    f = sys.map(*s)?.total().after(&f);
                }
                variants = vec![f];
            }
            match mode {
                Mode::Cs => Ok(variants),
                Mode::Cu => variants.iter().map(|f| f.inverse()).collect(),
            }
        })
        .collect()
}

struct CoverOracle<'a> {
    b: &'a Region,
    elems: Vec<Vec<AffineImage>>,
    dim: usize,
}

impl CellOracle for CoverOracle<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn elements(&self) -> usize {
        self.elems.len()
    }
    fn domain_distance(&self, x: &[f64]) -> f64 {
        self.b.signed_distance(x)
    }
    fn depth(&self, e: usize, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.elems[e]
            .iter()
            .map(|img| img.depth_with(x, scratch))
            .fold(f64::INFINITY, f64::min)
    }
    fn scratch_len(&self) -> usize {
        2 * self.dim
    }
}

/// Result of covering `B̄` by depth elements, without the constants layer.
#[derive(Clone, Debug)]
pub struct CoverCheck {
    pub h: f64,
    pub cell_radius: f64,
    pub margin: f64,
    pub cells: usize,
    pub witness: Option<(Vec<f64>, f64)>,
}

/// Checks `B̄ ⊂ ⋃_e ⋂_{f ∈ elems[e]} f(B)` on the `h`-lattice.
pub fn cover_by_images(b: &Region, elems: &[Vec<AffineMap>], h: f64, cap: usize, exec: Exec) -> Result<CoverCheck> {
    if !(h > 0.0 && h.is_finite()) {
        return input(format!("grid spacing {h} must be positive"));
    }
    let images = elems
        .iter()
        .map(|v| v.iter().map(|f| b.affine_image(f)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let oracle = CoverOracle {
        b,
        elems: images,
        dim: b.dim(),
    };
    let (lo, hi) = b.bbox();
    let lat = Lattice {
        counts: crate::regions::lattice_counts(&lo, &hi, h),
        origin: lo,
        h,
    };
    let out = subdivide::cover(&oracle, &lat, cap, exec)?;
    Ok(CoverCheck {
        h,
        cell_radius: 0.5 * h * (b.dim() as f64).sqrt(),
        margin: out.margin,
        cells: out.cells,
        witness: out.failure.map(|u| (u.point, u.best_depth)),
    })
}

/// Best pairwise bound over the dyadic spacings `diam·2^{-k} ≥ h/4`. The set
/// of spacings only grows as `h` shrinks, so the bound is monotone in `h`.
fn dyadic_lebesgue(b: &Region, elems: &[Vec<AffineMap>], h: f64) -> Result<Option<f64>> {
    let (lo, hi) = b.bbox();
    let top = lo.iter().zip(&hi).map(|(a, c)| c - a).fold(0.0, f64::max);
    if !(top > 0.0) {
        return pairwise_lebesgue(b, elems, h);
    }
    let mut best: Option<f64> = None;
    let mut step = top;
    while step >= 0.25 * h * (1.0 - 1e-12) {
        if let Some(v) = pairwise_lebesgue(b, elems, step)? {
            best = Some(best.map_or(v, |w: f64| w.max(v)));
        }
        step *= 0.5;
    }
    Ok(best)
}

/// `max_{i,j} dist(K̃_i, K̃_j) − 2g`, with `K̃_i` the grid nodes of depth ≤ g
/// in element `i`. Any subset of `B̄` that avoids no `K_i` has at least this
/// diameter, so it is a Lebesgue number of the cover.
fn pairwise_lebesgue(b: &Region, elems: &[Vec<AffineMap>], h: f64) -> Result<Option<f64>> {
    if elems.len() > PAIR_MAX_ELEMENTS || elems.len() < 2 {
        return Ok(None);
    }
    let grid = match cover_grid_capped(b, h, PAIR_GRID_LIMIT) {
        Ok(g) => g,
        Err(Error::Resource(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let g = grid.cell_radius();
    let images = elems
        .iter()
        .map(|v| v.iter().map(|f| b.affine_image(f)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut scratch = vec![0.0; 2 * b.dim()];
    let mut ks: Vec<Vec<&[f64]>> = vec![Vec::new(); elems.len()];
    for p in grid.points() {
        for (i, imgs) in images.iter().enumerate() {
            let d = imgs.iter().map(|m| m.depth_with(p, &mut scratch)).fold(f64::INFINITY, f64::min);
            if d <= g {
                ks[i].push(p);
            }
        }
    }
    let diag = b.diameter_bound();
    if ks.iter().any(|k| k.is_empty()) {
        return Ok(Some(diag));
    }
    let mut best: Option<f64> = None;
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            if ks[i].len().saturating_mul(ks[j].len()) > PAIR_BUDGET {
                continue;
            }
            let mut m = f64::INFINITY;
            for p in &ks[i] {
                for q in &ks[j] {
                    m = m.min(linalg::dist(p, q));
                }
            }
            let v = (m - 2.0 * g).min(diag);
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    Ok(best)
}

pub fn verify_covering(sys: &SkewSystem, mode: Mode, symbols: &[Symbol], b: &Region, d: &Region, h: f64) -> Result<CoveringCertificate> {
    let opts = CoveringOptions {
        branches: Some(symbols.iter().map(|s| vec![*s]).collect()),
        h: Some(h),
        ..CoveringOptions::default()
    };
    verify_covering_with(sys, mode, b, d, &opts)
}

pub fn verify_covering_with(sys: &SkewSystem, mode: Mode, b: &Region, d: &Region, opts: &CoveringOptions) -> Result<CoveringCertificate> {
    let c = sys.dim();
    if b.dim() != c || d.dim() != c {
        return input(format!("regions must live in ℝ^{c}"));
    }
    let branches: Vec<Vec<Symbol>> = match &opts.branches {
        Some(b) => b.clone(),
        None => (1..=sys.alphabet()).map(|i| vec![Symbol(i as u16)]).collect(),
    };
    if branches.is_empty() {
        return input("symbol set is empty");
    }
    for w in &branches {
        for s in w {
            sys.map(*s)?;
        }
    }
    let mut symbols: Vec<Symbol> = branches.iter().map(|w| w[0]).collect();
    symbols.sort();
    symbols.dedup();
    let h = opts.h.unwrap_or(b.min_inradius() / 200.0);
    if !(h > 0.0 && h.is_finite()) {
        return input(format!("grid spacing {h} must be positive"));
    }
    let constants = verify_constants(sys)?;
    let closure_margin = b.inclusion_margin(d);
    if closure_margin <= 0.0 {
        return Err(Error::Precondition(format!(
            "closure of B is not inside D (margin {closure_margin:e})"
        )));
    }
    let maps = branch_maps(sys, mode, &branches)?;

    let check = cover_by_images(b, &maps, h, opts.cell_cap, opts.exec)?;
    let pair = if check.witness.is_none() {
        dyadic_lebesgue(b, &maps, h)?
    } else {
        None
    };

    let image_margins: Vec<f64> = maps
        .iter()
        .map(|v| v.iter().map(|f| b.image_margin(f, d)).fold(f64::INFINITY, f64::min))
        .collect();
    let intermediate_margin = intermediate_margin(sys, mode, &branches, b, d)?;

    let gamma = match mode {
        Mode::Cs => sys.gamma(),
        Mode::Cu => sys.gamma_hat(),
    };
    let na = sys.nu().powf(sys.alpha());
    let ratio = na / gamma;
    let holder_bound = if sys.c0() == 0.0 {
        0.0
    } else if ratio < 1.0 {
        sys.c0() / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    let lebesgue_depth = if check.witness.is_none() { check.margin } else { 0.0 };
    let lebesgue_lower = lebesgue_depth.max(pair.unwrap_or(f64::NEG_INFINITY));
    let delta_max = gamma * lebesgue_lower / 2.0;

    let mut inequalities = vec![
        Inequality::new("closure(B) in D", 0.0, closure_margin),
        Inequality::new("covering depth", 0.0, lebesgue_depth),
        Inequality::new("C < L", holder_bound, lebesgue_lower),
        Inequality::new("gamma^-1 nu^alpha < 1", ratio, 1.0),
    ];
    for (w, m) in branches.iter().zip(&image_margins) {
        inequalities.push(Inequality::new(format!("image of B under {} in D", word_label(w)), 0.0, *m));
    }
    if let Some(m) = intermediate_margin {
        inequalities.push(Inequality::new("intermediate images in D", 0.0, m));
    }

    let failure = if let Some((p, best)) = &check.witness {
        Some(CoveringFailure {
            reason: format!(
                "point not covered: best depth {best:.6e} does not exceed the cell radius {:.6e}",
                check.cell_radius
            ),
            witness: Some(p.clone()),
            best_depth: Some(*best),
        })
    } else if !constants.phs_ok {
        Some(CoveringFailure {
            reason: "partial hyperbolicity inequalities fail".into(),
            witness: None,
            best_depth: None,
        })
    } else {
        inequalities.iter().find(|i| !i.holds()).map(|i| CoveringFailure {
            reason: format!("{} fails: {} vs {}", i.name, i.lhs, i.rhs),
            witness: None,
            best_depth: None,
        })
    };

    Ok(CoveringCertificate {
        mode,
        symbols,
        branches,
        b: b.clone(),
        d: d.clone(),
        system: sys.clone(),
        h,
        cell_radius: check.cell_radius,
        covering_margin: check.margin,
        lebesgue_depth,
        lebesgue_pair: pair,
        lebesgue_lower,
        gamma,
        holder_bound,
        delta_max,
        closure_margin,
        image_margins,
        intermediate_margin,
        cells_checked: check.cells,
        valid: failure.is_none(),
        failure,
        inequalities,
    })
}

fn word_label(w: &[Symbol]) -> String {
    w.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Margin of `φ^j(B) ⊂ D` for the proper prefixes of multi-block branches.
fn intermediate_margin(sys: &SkewSystem, mode: Mode, branches: &[Vec<Symbol>], b: &Region, d: &Region) -> Result<Option<f64>> {
    let mut worst: Option<f64> = None;
    for w in branches.iter().filter(|w| w.len() > 1) {
        let seq: Vec<AffineMap> = match mode {
            Mode::Cs => w.iter().map(|s| Ok(sys.map(*s)?.total().clone())).collect::<Result<_>>()?,
            Mode::Cu => w
                .iter()
                .rev()
                .map(|s| Ok(sys.map(*s)?.inverse_map().clone()))
                .collect::<Result<_>>()?,
        };
        let mut f = AffineMap::identity(sys.dim());
        for g in &seq[..seq.len() - 1] {
            f = g.after(&f);
            let m = b.image_margin(&f, d);
            worst = Some(worst.map_or(m, |x: f64| x.min(m)));
        }
    }
    Ok(worst)
}

/// Translation family `φ_i = T_i ∘ φ` around a fixed point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranslationFamily {
    pub maps: Vec<FiberMap>,
    pub offsets: Vec<Vec<f64>>,
    pub b: Region,
    pub d: Region,
    pub k: usize,
    pub delta: f64,
    pub cs: Vec<usize>,
}

/// Builds `T_i ∘ φ` with translations `δ u_i` in the `cs` coordinates (all
/// coordinates by default) so that the images of `B = x* + [−δ,δ]^c` cover
/// `B̄`. `φ` must be block-diagonal for the split, contracting on `cs` and
/// expanding on the rest.
pub fn build_translation_family(phi: &FiberMap, x_star: &[f64], eps: f64, cs: Option<&[usize]>) -> Result<TranslationFamily> {
    build_translation_family_capped(phi, x_star, eps, cs, DEFAULT_FAMILY_CAP)
}

pub fn build_translation_family_capped(
    phi: &FiberMap,
    x_star: &[f64],
    eps: f64,
    cs: Option<&[usize]>,
    cap: usize,
) -> Result<TranslationFamily> {
    let c = phi.dim();
    if x_star.len() != c {
        return input("fixed point has the wrong dimension");
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return input(format!("eps = {eps} must be positive"));
    }
    let fx = phi.apply(x_star);
    let tol = 1e-9 * (1.0 + linalg::norm(x_star));
    if linalg::dist(&fx, x_star) > tol {
        return input("x* is not a fixed point of phi");
    }
    let cs: Vec<usize> = cs.map_or_else(|| (0..c).collect(), |s| s.to_vec());
    if cs.is_empty() || cs.iter().any(|&k| k >= c) {
        return input("cs coordinates out of range");
    }
    let cu: Vec<usize> = (0..c).filter(|k| !cs.contains(k)).collect();
    let a = phi.jacobian();
    let block = |rows: &[usize], cols: &[usize]| Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])]);
    let off = block(&cs, &cu)
        .abs()
        .max()
        .max(if cu.is_empty() { 0.0 } else { block(&cu, &cs).abs().max() });
    if !cu.is_empty() && off > 1e-12 {
        return Err(Error::Construction("phi is not block-diagonal for the cs split".into()));
    }
    let a_cs = block(&cs, &cs);
    let rho = linalg::spectral_norm(&a_cs);
    if rho >= 1.0 {
        return Err(Error::Construction(format!("phi does not contract the cs block (norm {rho})")));
    }
    if !cu.is_empty() && linalg::sigma_min(&block(&cu, &cu)) <= 1.0 {
        return Err(Error::Construction("phi does not expand the cu block".into()));
    }
    // inscribed half-widths of the image of the unit cs cube
    let is_diag = (0..cs.len()).all(|i| (0..cs.len()).all(|j| i == j || a_cs[(i, j)] == 0.0));
    let w: Vec<f64> = if is_diag {
        (0..cs.len()).map(|i| a_cs[(i, i)].abs()).collect()
    } else {
        vec![linalg::sigma_min(&a_cs) / (cs.len() as f64).sqrt(); cs.len()]
    };
    // offsets j·s_k, |j| ≤ m_k, reaching 1.1 with overlap at least 0.4·w_k
    let extent = 1.1;
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for &wk in &w {
        if wk <= 0.0 {
            return Err(Error::Construction("degenerate cs block".into()));
        }
        let mut m = 0usize;
        let steps = loop {
            if wk >= extent {
                break vec![0.0];
            }
            m += 1;
            let s = (extent - wk) / m as f64;
            if s <= 1.6 * wk {
                let mut v = vec![0.0];
                for j in 1..=m {
                    v.push(-(j as f64) * s);
                    v.push(j as f64 * s);
                }
                break v;
            }
        };
        axes.push(steps);
    }
    let k: usize = axes.iter().map(|v| v.len()).product();
    if k > cap {
        return Err(Error::Resource(format!("translation family needs {k} maps, cap is {cap}")));
    }
    // half-widths of D: image extent plus 0.1 in every coordinate
    let abs_row = |i: usize| -> f64 { (0..c).map(|j| a[(i, j)].abs()).sum() };
    let mut half_d = vec![0.0; c];
    for (ci, &kc) in cs.iter().enumerate() {
        let reach = axes[ci].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        half_d[kc] = reach + abs_row(kc) + 0.1;
    }
    for &ku in &cu {
        half_d[ku] = abs_row(ku) + 0.1;
    }
    let delta = eps / linalg::norm(&half_d);
    let b = Region::cube(x_star, delta)?;
    let d = Region::boxed(
        x_star.iter().zip(&half_d).map(|(x, h)| x - delta * h).collect(),
        x_star.iter().zip(&half_d).map(|(x, h)| x + delta * h).collect(),
    )?;
    let mut maps = Vec::with_capacity(k);
    let mut offsets = Vec::with_capacity(k);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..k {
        let mut v = vec![0.0; c];
        for (ci, &kc) in cs.iter().enumerate() {
            v[kc] = delta * axes[ci][idx[ci]];
        }
        maps.push(phi.then(&AffineMap::translation(&v))?);
        offsets.push(v);
        for ci in 0..idx.len() {
            idx[ci] += 1;
            if idx[ci] < axes[ci].len() {
                break;
            }
            idx[ci] = 0;
        }
    }
    let fam = TranslationFamily {
        maps,
        offsets,
        b,
        d,
        k,
        delta,
        cs,
    };
    fam.self_check()?;
    Ok(fam)
}

impl TranslationFamily {
    /// One-step system with tight constants around the family.
    pub fn system(&self, nu: f64, alpha: f64) -> Result<SkewSystem> {
        let lo = self.maps.iter().map(|m| m.lip_lower()).fold(f64::INFINITY, f64::min);
        let hi = self.maps.iter().map(|m| m.lip_upper()).fold(0.0, f64::max);
        SkewSystem::one_step(self.maps.clone(), nu, alpha, lo, 1.0 / hi)
    }

    fn self_check(&self) -> Result<()> {
        let elems: Vec<Vec<AffineMap>> = self.maps.iter().map(|m| vec![m.total().clone()]).collect();
        let h = self.delta / 100.0;
        let check = cover_by_images(&self.b, &elems, h, DEFAULT_GRID_CAP, Exec::default())?;
        if let Some((p, best)) = check.witness {
            return Err(Error::Construction(format!(
                "translation family leaves {p:?} uncovered (depth {best:e})"
            )));
        }
        for m in &self.maps {
            if self.b.image_margin(m.total(), &self.d) <= 0.0 {
                return Err(Error::Construction("image of B leaves D".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub symbol: Symbol,
    pub cs_norm: f64,
    pub cs_margin: f64,
    pub cu_norm: f64,
    pub cu_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConleyMoserCertificate {
    pub symbols: Vec<Symbol>,
    pub cs_index: usize,
    pub cu_dim: usize,
    pub d_cs: Region,
    pub d_cu: Region,
    pub blocks: Vec<BlockCheck>,
    pub inequalities: Vec<Inequality>,
    pub valid: bool,
    #[serde(default)]
    pub failure: Option<String>,
}

impl ConleyMoserCertificate {
    pub fn slack(&self) -> f64 {
        self.inequalities.iter().map(|i| i.slack).fold(f64::INFINITY, f64::min)
    }
}

/// Margin of `{P x + Q y + t : x ∈ X̄, y ∈ Ȳ} ⊂ T`.
fn sum_image_margin(p: &Mat, x: &Region, q: &Mat, y: &Region, t: &Vector, target: &Region) -> f64 {
    let ext_of = |m: &Mat, r: &Region, row: usize| -> f64 {
        r.parts()
            .iter()
            .map(|part| match part {
                crate::regions::Part::Ball { radius, .. } => radius * m.row(row).norm(),
                crate::regions::Part::Box { lo, hi } => (0..lo.len()).map(|j| m[(row, j)].abs() * 0.5 * (hi[j] - lo[j])).sum(),
            })
            .fold(0.0, f64::max)
    };
    let circum = |r: &Region| -> f64 {
        r.parts()
            .iter()
            .map(|part| match part {
                crate::regions::Part::Ball { radius, .. } => *radius,
                crate::regions::Part::Box { lo, hi } => 0.5 * linalg::dist(lo, hi),
            })
            .fold(0.0, f64::max)
    };
    // a union source is handled through the centre of each part
    let mut worst = f64::INFINITY;
    for xp in x.parts() {
        for yp in y.parts() {
            let xc = Vector::from_vec(xp.center());
            let yc = Vector::from_vec(yp.center());
            let c = p * &xc + q * &yc + t;
            let xr = Region::new(vec![xp.clone()]).unwrap();
            let yr = Region::new(vec![yp.clone()]).unwrap();
            let m = target
                .parts()
                .iter()
                .map(|tp| match tp {
                    crate::regions::Part::Box { lo, hi } => (0..c.len())
                        .map(|k| {
                            let e = ext_of(p, &xr, k) + ext_of(q, &yr, k);
                            (c[k] - e - lo[k]).min(hi[k] - c[k] - e)
                        })
                        .fold(f64::INFINITY, f64::min),
                    crate::regions::Part::Ball { center, radius } => {
                        let cv: Vec<f64> = c.iter().cloned().collect();
                        radius - linalg::dist(&cv, center) - linalg::spectral_norm(p) * circum(&xr) - linalg::spectral_norm(q) * circum(&yr)
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.min(m);
        }
    }
    worst
}

/// Structural hyperbolicity on `D_cs × D_cu`: the first `dim D_cs`
/// coordinates form the cs block. For every symbol the cs block of `φ_i`
/// must map `D̄_cs` (for each `x_cu ∈ D̄_cu`) into `D_cs` with norm < 1, and
/// the cu block of `φ_i⁻¹` likewise on `D_cu`.
pub fn verify_conley_moser(sys: &SkewSystem, symbols: &[Symbol], d_cs: &Region, d_cu: &Region) -> Result<ConleyMoserCertificate> {
    let c = sys.dim();
    let s = d_cs.dim();
    if s + d_cu.dim() != c {
        return Err(Error::Unsupported(format!(
            "block dimensions {}+{} do not split ℝ^{c}",
            s,
            d_cu.dim()
        )));
    }
    if symbols.is_empty() {
        return input("symbol set is empty");
    }
    let u = c - s;
    let mut blocks = Vec::new();
    let mut inequalities = Vec::new();
    let mut failure = None;
    for &sym in symbols {
        let variants = symbol_variants(sys, sym)?;
        let mut bc = BlockCheck {
            symbol: sym,
            cs_norm: 0.0,
            cs_margin: f64::INFINITY,
            cu_norm: 0.0,
            cu_margin: f64::INFINITY,
        };
        for f in &variants {
            let g = f.inverse()?;
            let m = &f.a;
            let n = &g.a;
            let m11 = m.view((0, 0), (s, s)).into_owned();
            let m12 = m.view((0, s), (s, u)).into_owned();
            let n22 = n.view((s, s), (u, u)).into_owned();
            let n21 = n.view((s, 0), (u, s)).into_owned();
            let b_cs = f.b.rows(0, s).into_owned();
            let c_cu = g.b.rows(s, u).into_owned();
            bc.cs_norm = bc.cs_norm.max(linalg::spectral_norm(&m11));
            bc.cu_norm = bc.cu_norm.max(linalg::spectral_norm(&n22));
            bc.cs_margin = bc.cs_margin.min(sum_image_margin(&m11, d_cs, &m12, d_cu, &b_cs, d_cs));
            bc.cu_margin = bc.cu_margin.min(sum_image_margin(&n22, d_cu, &n21, d_cs, &c_cu, d_cu));
        }
        let items = [
            Inequality::new(format!("symbol {sym}: cs contraction"), bc.cs_norm, 1.0),
            Inequality::new(format!("symbol {sym}: cs containment"), 0.0, bc.cs_margin),
            Inequality::new(format!("symbol {sym}: inverse cu contraction"), bc.cu_norm, 1.0),
            Inequality::new(format!("symbol {sym}: inverse cu containment"), 0.0, bc.cu_margin),
        ];
        if failure.is_none() {
            if let Some(bad) = items.iter().find(|i| !i.holds()) {
                failure = Some(format!("{} fails: {} vs {}", bad.name, bad.lhs, bad.rhs));
            }
        }
        inequalities.extend(items);
        blocks.push(bc);
    }
    Ok(ConleyMoserCertificate {
        symbols: symbols.to_vec(),
        cs_index: s,
        cu_dim: u,
        d_cs: d_cs.clone(),
        d_cu: d_cu.clone(),
        blocks,
        inequalities,
        valid: failure.is_none(),
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> FiberMap {
        FiberMap::from_parts(linalg::diag(&[a]), Vector::from_vec(vec![b])).unwrap()
    }

    pub(crate) fn reference() -> SkewSystem {
        SkewSystem::one_step(
            vec![scalar(2.0 / 3.0, -1.0 / 3.0), scalar(2.0 / 3.0, 1.0 / 3.0)],
            0.5,
            1.0,
            0.6,
            0.9,
        )
        .unwrap()
    }

    fn syms(ids: &[u16]) -> Vec<Symbol> {
        ids.iter().map(|&i| Symbol(i)).collect()
    }

    #[test]
    fn reference_cover_certifies() {
        let b = Region::interval(-0.9, 0.9).unwrap();
        let d = Region::interval(-1.0, 1.0).unwrap();
        let cert = verify_covering(&reference(), Mode::Cs, &syms(&[1, 2]), &b, &d, 0.001).unwrap();
        assert!(cert.valid, "{:?}", cert.failure);
        assert!(cert.lebesgue_lower >= 0.52 && cert.lebesgue_lower <= 0.534);
        assert!(cert.delta_max >= 0.156);
        assert!(cert.covering_margin > 0.02 && cert.covering_margin < 0.1 / 3.0);
    }

    #[test]
    fn full_interval_is_uncovered() {
        let b = Region::interval(-1.0, 1.0).unwrap();
        let d = Region::interval(-1.2, 1.2).unwrap();
        let cert = verify_covering(&reference(), Mode::Cs, &syms(&[1, 2]), &b, &d, 0.001).unwrap();
        assert!(!cert.valid);
        let w = cert.failure.unwrap().witness.unwrap();
        assert!(w[0].abs() > 0.99);
    }

    #[test]
    fn identity_maps_never_cover() {
        let sys = SkewSystem::one_step(vec![scalar(1.0, 0.0), scalar(1.0, 0.0)], 0.5, 1.0, 1.0, 1.0).unwrap();
        let b = Region::interval(-0.5, 0.5).unwrap();
        let d = Region::interval(-1.0, 1.0).unwrap();
        let cert = verify_covering(&sys, Mode::Cs, &syms(&[1, 2]), &b, &d, 0.01).unwrap();
        assert!(!cert.valid);
        assert!(cert.failure.unwrap().witness.is_some());
    }

    #[test]
    fn sequential_and_default_exec_agree() {
        let b = Region::interval(-0.9, 0.9).unwrap();
        let d = Region::interval(-1.0, 1.0).unwrap();
        let mut o = CoveringOptions {
            h: Some(0.001),
            exec: Exec::Sequential,
            ..Default::default()
        };
        let a = verify_covering_with(&reference(), Mode::Cs, &b, &d, &o).unwrap();
        o.exec = Exec::default();
        let c = verify_covering_with(&reference(), Mode::Cs, &b, &d, &o).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn cu_mode_uses_inverses() {
        let sys = SkewSystem::one_step(vec![scalar(1.5, -0.3), scalar(1.5, 0.3)], 0.5, 1.0, 1.0 / 1.6, 1.0 / 1.5).unwrap();
        let b = Region::interval(-0.5, 0.5).unwrap();
        let d = Region::interval(-1.0, 1.0).unwrap();
        let cert = verify_covering(&sys, Mode::Cu, &syms(&[1, 2]), &b, &d, 0.001).unwrap();
        assert!(cert.valid, "{:?}", cert.failure);
    }

    #[test]
    fn multi_block_branches() {
        let b = Region::interval(-0.9, 0.9).unwrap();
        let d = Region::interval(-1.0, 1.0).unwrap();
        let o = CoveringOptions {
            branches: Some(vec![syms(&[1, 1]), syms(&[2, 1]), syms(&[1, 2]), syms(&[2, 2])]),
            h: Some(0.001),
            ..Default::default()
        };
        let cert = verify_covering_with(&reference(), Mode::Cs, &b, &d, &o).unwrap();
        assert!(cert.valid, "{:?}", cert.failure);
        assert!(cert.intermediate_margin.unwrap() > 0.0);
    }

    #[test]
    fn half_map_family() {
        let phi = scalar(0.5, 0.0);
        let fam = build_translation_family(&phi, &[0.0], 0.3, None).unwrap();
        assert_eq!(fam.k, 3);
        let d = fam.delta;
        let offs: Vec<f64> = fam.offsets.iter().map(|v| v[0] / d).collect();
        assert_eq!(offs.len(), 3);
        assert!(offs.iter().any(|o| (o + 0.6).abs() < 1e-12));
        assert!(offs.iter().any(|o| (o - 0.6).abs() < 1e-12));
        assert_eq!(offs[0], 0.0);
        let (lo, hi) = fam.d.bbox();
        assert!((hi[0] / d - 1.2).abs() < 1e-12 && (lo[0] / d + 1.2).abs() < 1e-12);
    }

    #[test]
    fn planar_family_size() {
        let phi = FiberMap::from_parts(linalg::diag(&[0.5, 0.5]), Vector::zeros(2)).unwrap();
        let fam = build_translation_family(&phi, &[0.0, 0.0], 0.3, None).unwrap();
        assert!(fam.k <= 9);
    }

    #[test]
    fn family_requires_contraction() {
        let phi = scalar(1.5, 0.0);
        assert!(matches!(
            build_translation_family(&phi, &[0.0], 0.3, None),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn conley_moser_diag_block() {
        let m = FiberMap::from_parts(linalg::diag(&[0.5, 3.0]), Vector::zeros(2)).unwrap();
        let sys = SkewSystem::one_step(vec![m.clone(), m], 0.1, 1.0, 0.5, 1.0 / 3.0).unwrap();
        let i = Region::interval(-1.0, 1.0).unwrap();
        let cert = verify_conley_moser(&sys, &syms(&[1]), &i, &i).unwrap();
        assert!(cert.valid);
        assert_eq!(cert.cs_index, 1);
        assert!((cert.blocks[0].cs_margin - 0.5).abs() < 1e-12);
        assert!((cert.blocks[0].cu_margin - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn conley_moser_rejects_escape_and_identity() {
        let m = FiberMap::from_parts(linalg::diag(&[0.5, 3.0]), Vector::from_vec(vec![0.8, 0.0])).unwrap();
        let sys = SkewSystem::one_step(vec![m.clone(), m], 0.1, 1.0, 0.5, 1.0 / 3.0).unwrap();
        let i = Region::interval(-1.0, 1.0).unwrap();
        let cert = verify_conley_moser(&sys, &syms(&[1]), &i, &i).unwrap();
        assert!(!cert.valid);
        let id = FiberMap::from_parts(linalg::identity(2), Vector::zeros(2)).unwrap();
        let sys = SkewSystem::one_step(vec![id.clone(), id], 0.1, 1.0, 1.0, 1.0).unwrap();
        let cert = verify_conley_moser(&sys, &syms(&[1]), &i, &i).unwrap();
        assert!(!cert.valid);
        assert!(cert.failure.unwrap().contains("contraction"));
    }

    #[test]
    fn mismatched_blocks_unsupported() {
        let i = Region::interval(-1.0, 1.0).unwrap();
        assert!(matches!(
            verify_conley_moser(&reference(), &syms(&[1]), &i, &i),
            Err(Error::Unsupported(_))
        ));
    }
}
