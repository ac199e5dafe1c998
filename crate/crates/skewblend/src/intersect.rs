//! δ-horizontal discs, nested refinement towards a point of the unstable
//! set inside a disc, transverse Hölder bounds and unstable-set membership.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blending::{CoveringCertificate, Mode};
use crate::error::{input, Error, Result};
use crate::linalg;
use crate::regions::Region;
use crate::shift_space::{Symbol, TruncatedSequence, Word};
use crate::skewproduct::SkewSystem;

/// Enumeration cap for free coordinates of a cylinder.
const MAX_COMPLETIONS: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiscGraph {
    Constant {
        value: Vec<f64>,
    },
    /// `h(ξ)` read from `ξ_{-k} … ξ_{-1}` (natural order keys).
    Table {
        depth: usize,
        values: BTreeMap<String, Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalDisc {
    pub base: TruncatedSequence,
    pub graph: DiscGraph,
    pub center: Vec<f64>,
    pub holder_c: f64,
    pub alpha: f64,
    pub nu: f64,
    pub delta: f64,
}

fn key(w: &[Symbol]) -> String {
    w.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

impl HorizontalDisc {
    pub fn constant(base: TruncatedSequence, value: Vec<f64>, delta: f64, nu: f64, alpha: f64) -> Result<Self> {
        let d = HorizontalDisc {
            base,
            center: value.clone(),
            graph: DiscGraph::Constant { value },
            holder_c: 0.0,
            alpha,
            nu,
            delta,
        };
        d.validate()?;
        Ok(d)
    }

    /// Table disc over all words of length `depth` on `alphabet` symbols.
    /// The Hölder constant is the exact maximum over table pairs, raised to
    /// `declared_c` when that is larger.
    pub fn table(
        base: TruncatedSequence,
        depth: usize,
        values: BTreeMap<Vec<Symbol>, Vec<f64>>,
        declared_c: f64,
        delta: f64,
        nu: f64,
        alpha: f64,
    ) -> Result<Self> {
        if depth == 0 {
            return input("table disc depth must be at least 1");
        }
        if base.past().len() < depth {
            return input(format!(
                "base point stores {} past coordinates, the table needs {depth}",
                base.past().len()
            ));
        }
        if values.keys().any(|k| k.len() != depth) {
            return input("table keys must all have the table depth");
        }
        let mut c: f64 = declared_c.max(0.0);
        let entries: Vec<(&Vec<Symbol>, &Vec<f64>)> = values.iter().collect();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let (a, va) = entries[i];
                let (b, vb) = entries[j];
                // first disagreement counted from ξ_{-1}
                let l = (1..=depth).find(|&l| a[depth - l] != b[depth - l]).unwrap();
                c = c.max(linalg::dist(va, vb) / nu.powf(l as f64 * alpha));
            }
        }
        let tail = &base.past()[base.past().len() - depth..];
        let center = values
            .get(tail)
            .cloned()
            .ok_or_else(|| Error::Input(format!("table has no entry for the base word {}", key(tail))))?;
        let d = HorizontalDisc {
            base,
            center,
            graph: DiscGraph::Table {
                depth,
                values: values.into_iter().map(|(k, v)| (key(&k), v)).collect(),
            },
            holder_c: c,
            alpha,
            nu,
            delta,
        };
        d.validate()?;
        Ok(d)
    }

    /// `h(ξ) = x₀ + Σ_{j=1}^{depth} w_j(ξ_{-j})` over an alphabet of size `d`.
    pub fn series(base: TruncatedSequence, x0: &[f64], terms: &[Vec<Vec<f64>>], delta: f64, nu: f64, alpha: f64) -> Result<Self> {
        let depth = terms.len();
        let d = terms.first().map_or(0, |t| t.len());
        if d < 2 || terms.iter().any(|t| t.len() != d) {
            return input("series disc needs one vector per symbol at every depth");
        }
        let total = d
            .checked_pow(depth as u32)
            .filter(|&t| t <= MAX_COMPLETIONS)
            .ok_or_else(|| Error::Resource(format!("{d}^{depth} table entries")))?;
        let mut values = BTreeMap::new();
        for code in 0..total {
            let mut rem = code;
            let mut w = vec![Symbol(1); depth];
            for slot in w.iter_mut() {
                *slot = Symbol((rem % d + 1) as u16);
                rem /= d;
            }
            let mut v = x0.to_vec();
            for j in 1..=depth {
                let s = w[depth - j].index();
                for (vi, ti) in v.iter_mut().zip(&terms[j - 1][s]) {
                    *vi += ti;
                }
            }
            values.insert(w, v);
        }
        Self::table(base, depth, values, 0.0, delta, nu, alpha)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return input(format!("disc radius {} must be positive", self.delta));
        }
        if !(self.nu > 0.0 && self.nu < 1.0 && self.alpha > 0.0 && self.alpha <= 1.0) {
            return input("disc metric parameters out of range");
        }
        let disc = self.holder_c * self.nu.powf(self.alpha);
        if disc >= self.delta {
            return input(format!("disc condition C·nu^alpha < delta fails: {disc} ≥ {}", self.delta));
        }
        if let DiscGraph::Table { values, .. } = &self.graph {
            for v in values.values() {
                if v.len() != self.center.len() {
                    return input("table values have different dimensions");
                }
                if linalg::dist(v, &self.center) >= self.delta {
                    return input("table value lies outside the disc radius");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Past coordinates the graph reads.
    pub fn depth(&self) -> usize {
        match &self.graph {
            DiscGraph::Constant { .. } => 0,
            DiscGraph::Table { depth, .. } => *depth,
        }
    }

    /// `h(ξ)` for a past block (natural order) of length ≥ depth.
    pub fn eval(&self, past: &[Symbol]) -> Result<Vec<f64>> {
        match &self.graph {
            DiscGraph::Constant { value } => Ok(value.clone()),
            DiscGraph::Table { depth, values } => {
                if past.len() < *depth {
                    return Err(Error::Depth(format!("disc needs {depth} past coordinates")));
                }
                let k = key(&past[past.len() - depth..]);
                values
                    .get(&k)
                    .cloned()
                    .ok_or_else(|| Error::Input(format!("table has no entry for {k}")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub n: usize,
    pub block: Vec<Symbol>,
    pub m: usize,
    pub v_center: Vec<f64>,
    pub v_diam: f64,
    /// `C ν^{m α}`.
    pub v_bound: f64,
    pub a_diam: f64,
    /// Disc spread pulled back plus the transverse Hölder spread.
    pub a_bound: f64,
    /// `L̂ − diam(A_{n−1})`, which must be positive for the choice to exist.
    pub lebesgue_slack: f64,
    /// Min over `A_n` of the signed distance to `B`.
    pub backward_margin: f64,
    #[serde(default)]
    pub intermediate_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub word: Word,
    pub blocks: Vec<Vec<Symbol>>,
    pub steps: Vec<RefinementStep>,
    pub point: TruncatedSequence,
    pub x: Vec<f64>,
    pub error_radius: f64,
    pub min_margin: f64,
}

impl RefinementTrace {
    pub fn block_lengths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn cumulative(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.m).collect()
    }
}

/// Shared context of one refinement run.
struct Refiner<'a> {
    sys: &'a SkewSystem,
    cert: &'a CoveringCertificate,
    disc: &'a HorizontalDisc,
    /// Backward maps come from the cs system; cu certificates refine forward
    /// through the inverse system.
    back: SkewSystem,
}

struct CylinderImage {
    values: Vec<Vec<f64>>,
    pulled: Vec<Vec<f64>>,
    /// Min over points and proper block prefixes of the margin in D.
    intermediate: Option<f64>,
}

impl Refiner<'_> {
    fn free_len(&self, m: usize) -> usize {
        let r = self.back.window_radius();
        let need = (m + r).max(self.disc.depth());
        need - m
    }

    /// All completions of the past block `p`, with the disc values and the
    /// backward images after `|p|` steps.
    fn image(&self, p: &[Symbol], boundaries: &[usize]) -> Result<CylinderImage> {
        let m = p.len();
        let f = self.free_len(m);
        let d = self.back.alphabet();
        let total = d
            .checked_pow(f as u32)
            .filter(|&t| t <= MAX_COMPLETIONS)
            .ok_or_else(|| Error::Resource(format!("{d}^{f} completions")))?;
        let mut values = Vec::with_capacity(total);
        let mut pulled = Vec::with_capacity(total);
        let mut intermediate: Option<f64> = None;
        let mut past = vec![Symbol(1); f + m];
        past[f..].copy_from_slice(p);
        for code in 0..total {
            let mut rem = code;
            for slot in past[..f].iter_mut() {
                *slot = Symbol((rem % d + 1) as u16);
                rem /= d;
            }
            let xi = TruncatedSequence::new(past.clone(), self.disc.base.future().to_vec());
            let v = self.disc.eval(&past)?;
            let mut y = v.clone();
            for j in 1..=m {
                y = self.back.fiber_at(&xi, -(j as i64))?.inverse()?.apply(&y);
                if j < m && !boundaries.contains(&j) {
                    let mg = self.cert.d.signed_distance(&y);
                    intermediate = Some(intermediate.map_or(mg, |x: f64| x.min(mg)));
                }
            }
            values.push(v);
            pulled.push(y);
        }
        Ok(CylinderImage {
            values,
            pulled,
            intermediate,
        })
    }

    fn a_bound(&self, m: usize) -> f64 {
        let g = self.cert.gamma;
        let na = self.sys.nu().powf(self.sys.alpha());
        let ratio = na / g;
        let disc = self.disc.holder_c * ratio.powi(m as i32);
        let spread = if self.back.c0() > 0.0 {
            holder_transverse_formula(self.back.c0(), g, self.sys.nu(), self.sys.alpha(), m, m + 1)
        } else {
            0.0
        };
        disc + spread
    }
}

fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max(linalg::dist(&points[i], &points[j]));
        }
    }
    d
}

/// Nested refinement: at each step the least branch (in certificate order)
/// whose block pulls the whole current set back into `B` is prepended.
///
/// For cu certificates the disc lives over the future instead and the
/// refinement runs on the inverse system; the returned word is then the
/// forward word read backwards.
pub fn refine_intersection(cert: &CoveringCertificate, disc: &HorizontalDisc, n_steps: usize) -> Result<RefinementTrace> {
    if n_steps == 0 {
        return input("refinement depth must be at least 1");
    }
    if !cert.valid {
        return Err(Error::Precondition("covering certificate is not valid".into()));
    }
    let sys = &cert.system;
    if disc.dim() != sys.dim() {
        return input("disc and system dimensions differ");
    }
    if disc.delta >= cert.delta_max {
        return input(format!("disc radius {} is not below delta_max {}", disc.delta, cert.delta_max));
    }
    let depth_b = cert.b.signed_distance(&disc.center);
    if depth_b <= disc.delta {
        return input(format!("disc centre is only {depth_b} inside B, radius is {}", disc.delta));
    }
    let back = match cert.mode {
        Mode::Cs => sys.clone(),
        Mode::Cu => sys.inverse_system()?,
    };
    let refiner = Refiner { sys, cert, disc, back };
    let lebesgue = cert.lebesgue_lower;
    let mut past: Vec<Symbol> = Vec::new();
    let mut bounds: Vec<usize> = Vec::new();
    let mut current = refiner.image(&past, &bounds)?;
    let mut steps = Vec::with_capacity(n_steps);
    let mut blocks = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let a_diam_prev = diameter(&current.pulled);
        let mut chosen = None;
        let mut best_miss: Option<(Vec<Symbol>, f64)> = None;
        for block in &cert.branches {
            let mut cand = block.clone();
            cand.extend_from_slice(&past);
            let mut cb: Vec<usize> = bounds.iter().map(|b| b + block.len()).collect();
            cb.push(block.len());
            let img = refiner.image(&cand, &cb)?;
            let margin = img.pulled.iter().map(|y| cert.b.signed_distance(y)).fold(f64::INFINITY, f64::min);
            let inter_ok = img.intermediate.is_none_or(|m| m > 0.0);
            if margin > 0.0 && inter_ok {
                chosen = Some((block.clone(), cand, cb, img, margin));
                break;
            }
            if best_miss.as_ref().is_none_or(|(_, m)| margin > *m) {
                best_miss = Some((block.clone(), margin));
            }
        }
        let Some((block, cand, cb, img, margin)) = chosen else {
            let (blk, m) = best_miss.unwrap_or_default();
            return Err(Error::Construction(format!(
                "refinement step {n}: no branch pulls the set back into B \
                 (diam {a_diam_prev:.3e}, best branch {} with margin {m:.3e}, set centre {:?})",
                key(&blk),
                current.pulled.first()
            )));
        };
        past = cand;
        bounds = cb;
        let m = past.len();
        let step = RefinementStep {
            n,
            block: block.clone(),
            m,
            v_center: img.values[0].clone(),
            v_diam: diameter(&img.values),
            v_bound: disc.holder_c * disc.nu.powf(m as f64 * disc.alpha),
            a_diam: diameter(&img.pulled),
            a_bound: refiner.a_bound(m),
            lebesgue_slack: lebesgue - a_diam_prev,
            backward_margin: margin,
            intermediate_margin: img.intermediate,
        };
        blocks.push(block);
        steps.push(step);
        current = img;
    }
    let last = steps.last().unwrap();
    let x = last.v_center.clone();
    let error_radius = last.v_bound;
    let min_margin = steps.iter().map(|s| s.backward_margin).fold(f64::INFINITY, f64::min);
    let point = TruncatedSequence::new(past.clone(), disc.base.future().to_vec());
    Ok(RefinementTrace {
        word: Word::past(past),
        blocks,
        steps,
        point,
        x,
        error_radius,
        min_margin,
    })
}

/// `C₀ ν^{−αi} Σ_{j<i} (γ⁻¹ν^α)^j ν^{α·agreement}`.
pub fn holder_transverse_formula(c0: f64, gamma: f64, nu: f64, alpha: f64, i: usize, agreement: usize) -> f64 {
    let na = nu.powf(alpha);
    let r = na / gamma;
    let sum: f64 = (0..i).map(|j| r.powi(j as i32)).sum();
    c0 * na.powi(-(i as i32)) * sum * na.powi(agreement as i32)
}

/// First index at which two members of the cylinder of `xi` may differ.
fn agreement_depth(xi: &TruncatedSequence) -> usize {
    (xi.past().len() + 1).min(xi.future().len())
}

/// Bound on `|ψ^{-n}_ξ(x) − ψ^{-n}_ζ(x)|` for `ξ, ζ` in the cylinder of
/// `cylinder`. Random completions check that backward images of `x` stay in
/// `D̄` for `1 ≤ j ≤ n`.
pub fn holder_transverse_bound(sys: &SkewSystem, cylinder: &TruncatedSequence, x: &[f64], n: usize, d: &Region, seed: u64) -> Result<f64> {
    if n > cylinder.past().len() {
        return Err(Error::Depth(format!("{n} backward steps need {n} stored past coordinates")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let zeta = random_completion(sys, cylinder, &mut rng);
        let mut y = x.to_vec();
        for j in 1..=n {
            y = sys.fiber_at(&zeta, -(j as i64))?.inverse()?.apply(&y);
            if d.signed_distance(&y) < 0.0 {
                return Err(Error::Precondition(format!("backward orbit leaves D at step {j}")));
            }
        }
    }
    Ok(holder_transverse_formula(
        sys.c0(),
        sys.gamma(),
        sys.nu(),
        sys.alpha(),
        n,
        agreement_depth(cylinder),
    ))
}

/// Member of the cylinder with `window radius` random extra coordinates on
/// both sides.
pub fn random_completion<R: Rng + ?Sized>(sys: &SkewSystem, cylinder: &TruncatedSequence, rng: &mut R) -> TruncatedSequence {
    let r = sys.window_radius();
    let d = sys.alphabet();
    let mut past: Vec<Symbol> = (0..r).map(|_| Symbol(rng.gen_range(1..=d) as u16)).collect();
    past.extend_from_slice(cylinder.past());
    let mut future = cylinder.future().to_vec();
    future.extend((0..r).map(|_| Symbol(rng.gen_range(1..=d) as u16)));
    TruncatedSequence::new(past, future)
}

/// Max over `samples` random pairs in the cylinder of `|ψ^{-n}_ξ(x) − ψ^{-n}_ζ(x)|`.
pub fn transverse_spread_empirical(
    sys: &SkewSystem,
    cylinder: &TruncatedSequence,
    x: &[f64],
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let a = random_completion(sys, cylinder, &mut rng);
        let b = random_completion(sys, cylinder, &mut rng);
        let ya = sys.compose_backward(&a, n, x)?;
        let yb = sys.compose_backward(&b, n, x)?;
        best = best.max(linalg::dist(&ya, &yb));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaUReport {
    pub member: bool,
    pub boundaries: Vec<usize>,
    pub margin: f64,
    #[serde(default)]
    pub witness: Option<(usize, Vec<f64>)>,
}

/// Checks `Φ^{−m}(P) ∈ V × B` along block boundaries `m₁ < m₂ < … ≤ depth`
/// whose gaps lie in `blocks`, choosing the chain with the best margin.
pub fn verify_lambda_u(
    sys: &SkewSystem,
    point: (&TruncatedSequence, &[f64]),
    b: &Region,
    depth: usize,
    blocks: &[usize],
) -> Result<LambdaUReport> {
    let (xi, x) = point;
    if depth > xi.past().len() {
        return Err(Error::Depth(format!(
            "depth {depth} exceeds the {} stored past coordinates",
            xi.past().len()
        )));
    }
    if blocks.is_empty() || blocks.contains(&0) {
        return input("block lengths must be positive");
    }
    let mut margins = Vec::with_capacity(depth + 1);
    let mut pts = Vec::with_capacity(depth + 1);
    let mut y = x.to_vec();
    margins.push(f64::INFINITY);
    pts.push(y.clone());
    for j in 1..=depth {
        y = sys.fiber_at(xi, -(j as i64))?.inverse()?.apply(&y);
        margins.push(b.signed_distance(&y));
        pts.push(y.clone());
    }
    // best[m] = best min-margin over chains ending at m
    let mut best = vec![f64::NEG_INFINITY; depth + 1];
    let mut prev = vec![usize::MAX; depth + 1];
    best[0] = f64::INFINITY;
    for m in 1..=depth {
        for &k in blocks {
            if k <= m && best[m - k] > f64::NEG_INFINITY {
                let v = best[m - k].min(margins[m]);
                if v > best[m] {
                    best[m] = v;
                    prev[m] = m - k;
                }
            }
        }
    }
    let maxb = *blocks.iter().max().unwrap();
    let end = (depth.saturating_sub(maxb - 1)..=depth)
        .filter(|&m| m > 0 || depth == 0)
        .max_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    let mut chain = Vec::new();
    let mut m = end;
    while m != 0 && m != usize::MAX {
        chain.push(m);
        m = prev[m];
    }
    chain.reverse();
    let margin = if depth == 0 { f64::INFINITY } else { best[end] };
    let member = depth == 0 || margin > 0.0;
    let witness = if member {
        None
    } else {
        let j = (1..=depth).min_by(|&a, &b| margins[a].total_cmp(&margins[b])).unwrap();
        Some((j, pts[j].clone()))
    };
    Ok(LambdaUReport {
        member,
        boundaries: chain,
        margin,
        witness,
    })
}
