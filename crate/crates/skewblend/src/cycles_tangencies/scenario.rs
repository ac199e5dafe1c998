//! One-step scenarios on ℝᶜ: a cs-blender family near `p₁`, a cu-blender
//! family near `p₂` and a translation carrying `p₁` to `p₂`, with twisted
//! linear parts so that the Grassmannian lift is itself a pair of blenders.
//!
//! Coordinates: the last ℓ coordinates `L` carry the tangent planes; the
//! first `i₁` are contracted by the cs family, the first `c − i₂` by the
//! inverses of the cu family. A covering-type map is
//! `x ↦ A_j(x − p) + p + t_i` with `A_j = diag + K_j`, where `K_j` only
//! couples `L` into the other coordinates, so its plane action on graph
//! coordinates is affine: `X ↦ (A_OO X + K_j)/u`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lifted::{
    greedy_orbit, lifted_apply, lifted_point, product_box, verify_lifted_covering, LiftedCoverOptions, LiftedCoverReport, PlaneChart,
};
use super::tangent::{detect_tangent_directions, tangency_codimension, TangentDirectionReport};
use super::transition::{compose_word, search_words, SearchHit, TransitionWitness};
use crate::blending::{verify_conley_moser, verify_covering_with, ConleyMoserCertificate, CoveringCertificate, CoveringOptions, Mode};
use crate::cones::{verify_stable_cone, verify_unstable_cone, ConeCertificate};
use crate::error::{input, Error, Result};
use crate::grassmann::{lift_system, LiftedSystem, Plane};
use crate::intersect::{refine_intersection, verify_lambda_u, HorizontalDisc, RefinementTrace};
use crate::linalg::{self, Mat, Vector};
use crate::par::Exec;
use crate::regions::Region;
use crate::shift_space::{Symbol, TruncatedSequence};
use crate::skewproduct::{verify_constants, AffineMap, ConstantsReport, FiberMap, SkewSystem};

/// Offset of the translations in units of the half-width of `B`.
const TRANSLATION_OFFSET: f64 = 0.5;
/// Half-widths of `D` in units of the half-width of `B`.
const D_CONTRACTING: f64 = 5.0;
const D_OTHER: f64 = 2.0;
/// `G_D` half-width relative to `G`.
const G_OUTER: f64 = 1.3;
const MAX_TWISTS: usize = 1 << 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Contraction of the covering maps on their contracting coordinates.
    pub s: f64,
    /// Expansion on the plane coordinates `L`.
    pub u: f64,
    /// Expansion on the remaining coordinates.
    pub u_c: f64,
    pub nu: f64,
    pub alpha: f64,
    pub aperture: f64,
    pub cone_lambda: f64,
    pub horizon: usize,
    pub refine_steps: usize,
    pub cone_samples: usize,
    pub seed: u64,
    /// Adds the return translation `p₂ → p₁` (tangency on a cycle).
    pub cycle: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            s: 0.8,
            u: 1.3,
            u_c: 1.15,
            nu: 0.25,
            alpha: 1.0,
            aperture: 0.45,
            cone_lambda: 0.9,
            horizon: 20,
            refine_steps: 12,
            cone_samples: 256,
            seed: 0,
            cycle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyLayout {
    pub mode: Mode,
    pub symbols: Vec<Symbol>,
    pub p: Vec<f64>,
    pub b: Region,
    pub d: Region,
    /// Coordinates contracted by the covering maps (forward for cs, inverse for cu).
    pub contracting: Vec<usize>,
    /// Forward stable coordinates; the cs-index is their number.
    pub stable: Vec<usize>,
    pub g: Region,
    pub g_d: Region,
}

impl FamilyLayout {
    pub fn cs_index(&self) -> usize {
        self.stable.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLayout {
    pub c: usize,
    pub i1: usize,
    pub i2: usize,
    pub ell: usize,
    pub eps: f64,
    pub params: ScenarioParams,
    pub chart: PlaneChart,
    pub cs: FamilyLayout,
    pub cu: FamilyLayout,
    pub transition: Symbol,
    #[serde(default)]
    pub ret: Option<Symbol>,
    /// Contraction of tangent vectors per step, `1/u`.
    pub design_rate: f64,
    pub tangent_c: f64,
    pub h_x: f64,
    pub h_g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub name: String,
    pub valid: bool,
    #[serde(default)]
    pub slack: Option<f64>,
    #[serde(default)]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyPoint {
    pub xi: TruncatedSequence,
    pub x: Vec<f64>,
    pub plane: Plane,
    pub plane_coords: Vec<f64>,
    pub past_margin: f64,
    pub future_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyCertificate {
    pub layout: ScenarioLayout,
    pub system: SkewSystem,
    pub alphabet: usize,
    pub d_t_required: usize,
    pub c_t: usize,
    pub stages: Vec<StageResult>,
    pub constants: Option<ConstantsReport>,
    pub cover_cs: Option<CoveringCertificate>,
    pub cover_cu: Option<CoveringCertificate>,
    pub conley_moser_cs: Option<ConleyMoserCertificate>,
    pub conley_moser_cu: Option<ConleyMoserCertificate>,
    pub cone_unstable: Option<ConeCertificate>,
    pub cone_stable: Option<ConeCertificate>,
    pub lift: Option<LiftedSystem>,
    pub lifted_cs: Option<LiftedCoverReport>,
    pub lifted_cu: Option<LiftedCoverReport>,
    pub containment: Option<(f64, f64)>,
    pub transition: Option<TransitionWitness>,
    pub refine_cs: Option<RefinementTrace>,
    pub refine_cu: Option<RefinementTrace>,
    pub point: Option<TangencyPoint>,
    pub tangent: Option<TangentDirectionReport>,
    pub d_t: Option<usize>,
    pub forward_rate: Option<f64>,
    pub backward_rate: Option<f64>,
    /// Min over the perturbation-sensitive stage slacks.
    pub slack: f64,
    pub valid: bool,
    #[serde(default)]
    pub failed_stage: Option<String>,
}

impl TangencyCertificate {
    pub fn stage(&self, name: &str) -> Option<&StageResult> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// One-step system with tight `γ = min Lip⁻¹`, `γ̂⁻¹ = max Lip`.
pub fn tight_system(maps: Vec<FiberMap>, nu: f64, alpha: f64) -> Result<SkewSystem> {
    let lo = maps.iter().map(|m| m.lip_lower()).fold(f64::INFINITY, f64::min);
    let hi = maps.iter().map(|m| m.lip_upper()).fold(0.0, f64::max);
    SkewSystem::one_step(maps, nu, alpha, lo, 1.0 / hi)
}

/// The system restricted to `symbols`, renumbered from 1.
pub fn subsystem(sys: &SkewSystem, symbols: &[Symbol]) -> Result<SkewSystem> {
    let maps = symbols.iter().map(|s| Ok(sys.map(*s)?.clone())).collect::<Result<Vec<_>>>()?;
    tight_system(maps, sys.nu(), sys.alpha())
}

fn symbols_range(start: usize, n: usize) -> Vec<Symbol> {
    (start..start + n).map(|i| Symbol(i as u16)).collect()
}

/// Covering-type maps `A_j(x − p) + p + t_i`, twist-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn covering_family(
    chart: &PlaneChart,
    contracting: &[usize],
    p: &[f64],
    delta: f64,
    g: f64,
    params: &ScenarioParams,
    twisted: bool,
) -> Result<Vec<AffineMap>> {
    let c = chart.c;
    let l = chart.ell();
    let mut diag = vec![params.u_c; c];
    for &k in contracting {
        diag[k] = params.s;
    }
    for &k in &chart.graph_over {
        diag[k] = params.u;
    }
    let entries = chart.others.len() * l;
    let twists = if twisted {
        if entries >= 12 {
            return Err(Error::Resource(format!("2^{entries} twists exceed {MAX_TWISTS}")));
        }
        1usize << entries
    } else {
        1
    };
    let kick = params.u * g / 2.0;
    let n_t = 1usize << contracting.len();
    let pv = Vector::from_row_slice(p);
    let mut out = Vec::with_capacity(twists * n_t);
    for j in 0..twists {
        let mut a = linalg::diag(&diag);
        if twisted {
            for (i, &oi) in chart.others.iter().enumerate() {
                for (q, &lq) in chart.graph_over.iter().enumerate() {
                    let bit = (j >> (i * l + q)) & 1;
                    a[(oi, lq)] = if bit == 1 { kick } else { -kick };
                }
            }
        }
        for t in 0..n_t {
            let mut off = Vector::zeros(c);
            for (k, &ck) in contracting.iter().enumerate() {
                off[ck] = if (t >> k) & 1 == 1 { 1.0 } else { -1.0 } * TRANSLATION_OFFSET * delta;
            }
            let b = &pv - &a * &pv + off;
            out.push(AffineMap::new(a.clone(), b)?);
        }
    }
    Ok(out)
}

pub(crate) fn family_regions(c: usize, contracting: &[usize], p: &[f64], delta: f64) -> Result<(Region, Region)> {
    let b = Region::cube(p, delta)?;
    let half: Vec<f64> = (0..c)
        .map(|k| if contracting.contains(&k) { D_CONTRACTING } else { D_OTHER } * delta)
        .collect();
    let d = Region::boxed(
        p.iter().zip(&half).map(|(x, h)| x - h).collect(),
        p.iter().zip(&half).map(|(x, h)| x + h).collect(),
    )?;
    Ok((b, d))
}

fn plane_box(dim: usize, g: f64) -> Result<Region> {
    Region::boxed(vec![-g; dim], vec![g; dim])
}

/// Largest admissible plane half-width `g` for the chosen constants.
fn plane_width(chart: &PlaneChart, params: &ScenarioParams, eps: f64, has_center: bool) -> f64 {
    let n = chart.dim() as f64;
    let a_max = if has_center { params.s.max(params.u_c) } else { params.s };
    let rho = params.aperture;
    let cone = 0.6 * 2.0 * rho * (params.u - a_max) / (params.u * n.sqrt());
    let contain = 0.7 * rho / (G_OUTER * n.sqrt());
    let cover = 0.3 / (chart.ell() as f64 * params.u);
    (eps / 2.0).min(cone).min(contain).min(cover)
}

/// Builds the scenario system and layout without verifying anything.
pub fn scenario_layout(
    c: usize,
    i1: usize,
    i2: usize,
    ell: usize,
    eps: f64,
    params: &ScenarioParams,
) -> Result<(SkewSystem, ScenarioLayout)> {
    tangency_codimension(c, i1, i2, ell)?;
    if !(eps.is_finite() && eps >= 0.0) {
        return input(format!("eps = {eps} must be non-negative"));
    }
    if eps == 0.0 {
        return Err(Error::Construction(
            "eps = 0 collapses every family to a single map; partial hyperbolicity cannot be certified".into(),
        ));
    }
    if !(params.s > 0.5 && params.s < 1.0 && params.u > 1.0 && params.u_c > 1.0 && params.u_c < params.u) {
        return input("need 1/2 < s < 1 < u_c < u");
    }
    if params.s / params.u <= 0.5 || params.u_c / params.u <= 0.5 {
        return input("plane contraction s/u and u_c/u must exceed 1/2");
    }
    let chart = PlaneChart::new(c, (c - ell..c).collect())?;
    let delta = eps / 4.0;
    let mut p1 = vec![0.0; c];
    let mut p2 = vec![0.0; c];
    p1[0] = -0.5;
    p2[0] = 0.5;
    let cs_contracting: Vec<usize> = (0..i1).collect();
    let cu_contracting: Vec<usize> = (0..c - i2).collect();
    let has_center = i1 + ell < c || ell < i2;
    let g = plane_width(&chart, params, eps, has_center);

    let fam1 = covering_family(&chart, &cs_contracting, &p1, delta, g, params, true)?;
    let fam2 = covering_family(&chart, &cu_contracting, &p2, delta, g, params, true)?;
    let mut maps: Vec<FiberMap> = fam1.into_iter().map(FiberMap::affine).collect::<Result<_>>()?;
    let n1 = maps.len();
    for f in fam2 {
        maps.push(FiberMap::affine(f)?.inverted());
    }
    let n2 = maps.len() - n1;
    let shift: Vec<f64> = p2.iter().zip(&p1).map(|(a, b)| a - b).collect();
    maps.push(FiberMap::affine(AffineMap::translation(&shift))?);
    let transition = Symbol(maps.len() as u16);
    let ret = if params.cycle {
        let back: Vec<f64> = shift.iter().map(|v| -v).collect();
        maps.push(FiberMap::affine(AffineMap::translation(&back))?);
        Some(Symbol(maps.len() as u16))
    } else {
        None
    };
    let sys = tight_system(maps, params.nu, params.alpha)?;

    let gd = chart.dim();
    let (b1, d1) = family_regions(c, &cs_contracting, &p1, delta)?;
    let (b2, d2) = family_regions(c, &cu_contracting, &p2, delta)?;
    let cs = FamilyLayout {
        mode: Mode::Cs,
        symbols: symbols_range(1, n1),
        p: p1,
        b: b1,
        d: d1,
        contracting: cs_contracting.clone(),
        stable: cs_contracting,
        g: plane_box(gd, g)?,
        g_d: plane_box(gd, G_OUTER * g)?,
    };
    let cu = FamilyLayout {
        mode: Mode::Cu,
        symbols: symbols_range(n1 + 1, n2),
        p: p2,
        b: b2,
        d: d2,
        stable: (c - i2..c).collect(),
        contracting: cu_contracting,
        g: plane_box(gd, g)?,
        g_d: plane_box(gd, G_OUTER * g)?,
    };
    let layout = ScenarioLayout {
        c,
        i1,
        i2,
        ell,
        eps,
        params: params.clone(),
        chart,
        cs,
        cu,
        transition,
        ret,
        design_rate: 1.0 / params.u,
        tangent_c: 2.0,
        h_x: delta / 32.0,
        h_g: g / 32.0,
    };
    Ok((sys, layout))
}

/// Conjugates the family by the permutation putting `stable` first and runs
/// the structural block check on `D`'s projections.
pub(crate) fn structural_check(sys: &SkewSystem, symbols: &[Symbol], d: &Region, stable: &[usize]) -> Result<ConleyMoserCertificate> {
    let c = sys.dim();
    let order: Vec<usize> = stable.iter().cloned().chain((0..c).filter(|k| !stable.contains(k))).collect();
    let perm = Mat::from_fn(c, c, |i, j| if order[i] == j { 1.0 } else { 0.0 });
    let maps = symbols
        .iter()
        .map(|s| {
            let f = sys.map(*s)?.total();
            FiberMap::affine(AffineMap::new(&perm * &f.a * perm.transpose(), &perm * &f.b)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let sub = tight_system(maps, sys.nu(), sys.alpha())?;
    let (lo, hi) = d.bbox();
    let k = stable.len();
    let proj = |idx: &[usize]| Region::boxed(idx.iter().map(|&i| lo[i]).collect(), idx.iter().map(|&i| hi[i]).collect());
    let syms: Vec<Symbol> = (1..=symbols.len()).map(|i| Symbol(i as u16)).collect();
    verify_conley_moser(&sub, &syms, &proj(&order[..k])?, &proj(&order[k..])?)
}

fn conley_moser_family(sys: &SkewSystem, fam: &FamilyLayout) -> Result<ConleyMoserCertificate> {
    structural_check(sys, &fam.symbols, &fam.d, &fam.stable)
}

fn cover_options(fam: &FamilyLayout, h: f64) -> CoveringOptions {
    CoveringOptions {
        branches: Some(fam.symbols.iter().map(|s| vec![*s]).collect()),
        h: Some(h),
        ..CoveringOptions::default()
    }
}

/// Runs every stage on `sys` for the given layout. Stops at the first
/// failing stage and records it.
pub fn verify_tangency_scenario(sys: &SkewSystem, layout: &ScenarioLayout) -> Result<TangencyCertificate> {
    verify_stages(sys, layout, true)
}

/// Only the robust hypotheses: constants, coverings, structural checks,
/// cones, the lift, lifted coverings, cone containment and the lifted
/// transition. The tangency point itself is not searched for.
pub fn verify_tangency_hypotheses(sys: &SkewSystem, layout: &ScenarioLayout) -> Result<TangencyCertificate> {
    verify_stages(sys, layout, false)
}

fn verify_stages(sys: &SkewSystem, layout: &ScenarioLayout, full: bool) -> Result<TangencyCertificate> {
    let (d_t_required, c_t) = tangency_codimension(layout.c, layout.i1, layout.i2, layout.ell)?;
    let mut cert = TangencyCertificate {
        layout: layout.clone(),
        system: sys.clone(),
        alphabet: sys.alphabet(),
        d_t_required,
        c_t,
        stages: Vec::new(),
        constants: None,
        cover_cs: None,
        cover_cu: None,
        conley_moser_cs: None,
        conley_moser_cu: None,
        cone_unstable: None,
        cone_stable: None,
        lift: None,
        lifted_cs: None,
        lifted_cu: None,
        containment: None,
        transition: None,
        refine_cs: None,
        refine_cu: None,
        point: None,
        tangent: None,
        d_t: None,
        forward_rate: None,
        backward_rate: None,
        slack: f64::INFINITY,
        valid: false,
        failed_stage: None,
    };
    match run_stages(sys, layout, &mut cert, full) {
        Ok(()) => {}
        Err(e) => {
            let name = format!("stage after {}", cert.stages.last().map_or("start", |s| s.name.as_str()));
            cert.stages.push(StageResult {
                name: name.clone(),
                valid: false,
                slack: None,
                detail: Some(e.to_string()),
            });
        }
    }
    cert.failed_stage = cert.stages.iter().find(|s| !s.valid).map(|s| s.name.clone());
    cert.valid = cert.failed_stage.is_none();
    cert.slack = cert.stages.iter().filter_map(|s| s.slack).fold(f64::INFINITY, f64::min);
    Ok(cert)
}

/// Records a stage; returns false when it failed.
fn push(cert: &mut TangencyCertificate, name: &str, valid: bool, slack: Option<f64>, detail: Option<String>) -> bool {
    cert.stages.push(StageResult {
        name: name.into(),
        valid,
        slack,
        detail,
    });
    valid
}

/// Runs `f`; an error becomes a failed stage named `name`.
fn attempt<T>(cert: &mut TangencyCertificate, name: &str, f: impl FnOnce() -> Result<T>) -> Option<T> {
    match f() {
        Ok(v) => Some(v),
        Err(e) => {
            push(cert, name, false, None, Some(e.to_string()));
            None
        }
    }
}

fn run_stages(sys: &SkewSystem, layout: &ScenarioLayout, cert: &mut TangencyCertificate, full: bool) -> Result<()> {
    let p = &layout.params;
    let chart = &layout.chart;
    let (cs, cu) = (&layout.cs, &layout.cu);

    let Some(rep) = attempt(cert, "constants", || verify_constants(sys)) else {
        return Ok(());
    };
    let ok = rep.phs_ok && rep.bunching().holds();
    let slack = rep.min_slack();
    cert.constants = Some(rep);
    if !push(cert, "constants", ok, Some(slack), None) {
        return Ok(());
    }

    for (name, fam) in [("cover_cs", cs), ("cover_cu", cu)] {
        let Some(cv) = attempt(cert, name, || {
            verify_covering_with(sys, fam.mode, &fam.b, &fam.d, &cover_options(fam, layout.h_x))
        }) else {
            return Ok(());
        };
        let (ok, slack, detail) = (cv.valid, cv.slack(), cv.failure.as_ref().map(|f| f.reason.clone()));
        if fam.mode == Mode::Cs {
            cert.cover_cs = Some(cv);
        } else {
            cert.cover_cu = Some(cv);
        }
        if !push(cert, name, ok, Some(slack), detail) {
            return Ok(());
        }
    }

    for (name, fam) in [("conley_moser_cs", cs), ("conley_moser_cu", cu)] {
        let Some(cm) = attempt(cert, name, || conley_moser_family(sys, fam)) else {
            return Ok(());
        };
        let (ok, slack, detail) = (cm.valid, cm.slack(), cm.failure.clone());
        if fam.mode == Mode::Cs {
            cert.conley_moser_cs = Some(cm);
        } else {
            cert.conley_moser_cu = Some(cm);
        }
        if !push(cert, name, ok, Some(slack), detail) {
            return Ok(());
        }
    }

    let cone = chart.cone(p.aperture)?;
    for (name, fam) in [("cone_unstable", cs), ("cone_stable", cu)] {
        let Some(cc) = attempt(cert, name, || {
            let sub = subsystem(sys, &fam.symbols)?;
            if fam.mode == Mode::Cs {
                verify_unstable_cone(&sub, &cone, &fam.b, p.cone_lambda, p.cone_samples, p.seed)
            } else {
                verify_stable_cone(&sub, &cone, &fam.b, p.cone_lambda, p.cone_samples, p.seed)
            }
        }) else {
            return Ok(());
        };
        let (ok, slack) = (cc.valid, cc.slack());
        let detail = cc.witness.as_ref().map(|w| format!("symbol {} vector {:?}", w.symbol, w.v));
        if fam.mode == Mode::Cs {
            cert.cone_unstable = Some(cc);
        } else {
            cert.cone_stable = Some(cc);
        }
        if !push(cert, name, ok, Some(slack), detail) {
            return Ok(());
        }
    }

    let Some(lift) = attempt(cert, "lift", || lift_system(sys, layout.ell)) else {
        return Ok(());
    };
    let slack = lift.slack();
    cert.lift = Some(lift);
    push(cert, "lift", true, Some(slack), None);

    for (name, fam) in [("lifted_cover_cs", cs), ("lifted_cover_cu", cu)] {
        let Some(rep) = attempt(cert, name, || {
            let mut opts = LiftedCoverOptions::for_regions(&fam.b, &fam.g);
            opts.h_x = layout.h_x;
            opts.h_g = layout.h_g;
            verify_lifted_covering(sys, chart, fam.mode, &fam.symbols, &fam.b, &fam.d, &fam.g, &fam.g_d, &opts)
        }) else {
            return Ok(());
        };
        let (ok, slack, detail) = (rep.valid, rep.slack(), rep.failure.clone());
        if fam.mode == Mode::Cs {
            cert.lifted_cs = Some(rep);
        } else {
            cert.lifted_cu = Some(rep);
        }
        if !push(cert, name, ok, Some(slack), detail) {
            return Ok(());
        }
    }

    // planes of G_D are graphs with ‖X‖₂ ≤ ‖X‖_F < ρ
    let m1 = p.aperture - chart.radius(&cs.g_d);
    let m2 = p.aperture - chart.radius(&cu.g_d);
    cert.containment = Some((m1, m2));
    if !push(cert, "cone_containment", m1 > 0.0 && m2 > 0.0, Some(m1.min(m2)), None) {
        return Ok(());
    }

    let z0 = lifted_point(&cs.p, &vec![0.0; chart.dim()]);
    let target = product_box(&cu.b, &cu.g)?;
    let Some(hit) = attempt(cert, "transition", || {
        search_words(
            sys.alphabet(),
            |s, z| lifted_apply(chart, sys.map(s)?.total(), z),
            std::slice::from_ref(&z0),
            &target,
            2,
            Exec::default(),
        )
    }) else {
        return Ok(());
    };
    let witness = match hit {
        SearchHit::Found { word, margin, .. } => {
            let map = compose_word(sys, &word)?;
            let mut z = z0.clone();
            for s in &word {
                z = lifted_apply(chart, sys.map(*s)?.total(), &z)?;
            }
            TransitionWitness {
                word,
                map,
                source: z0.clone(),
                image: z,
                margin,
            }
        }
        SearchHit::Exhausted { near_miss, .. } => {
            push(
                cert,
                "transition",
                false,
                None,
                Some(format!("no lifted transition, near miss {near_miss:e}")),
            );
            return Ok(());
        }
    };
    let t_margin = witness.margin;
    let source_margin = super::lifted::lifted_depth(&cs.b, &cs.g, &z0);
    cert.transition = Some(witness.clone());
    if !push(
        cert,
        "transition",
        t_margin > 0.0 && source_margin > 0.0,
        Some(t_margin.min(source_margin)),
        None,
    ) || !full
    {
        return Ok(());
    }

    for (name, fam, value) in [
        ("refine_cs", cs, cs.p.clone()),
        ("refine_cu", cu, witness.image[..layout.c].to_vec()),
    ] {
        let cov = if fam.mode == Mode::Cs {
            cert.cover_cs.clone()
        } else {
            cert.cover_cu.clone()
        };
        let cov = cov.expect("covering stage ran");
        let Some(trace) = attempt(cert, name, || {
            let r = 0.25 * cov.delta_max.min(cov.b.signed_distance(&value));
            let base = TruncatedSequence::new(Vec::new(), witness.word.clone());
            let disc = HorizontalDisc::constant(base, value.clone(), r, sys.nu(), sys.alpha())?;
            refine_intersection(&cov, &disc, p.refine_steps)
        }) else {
            return Ok(());
        };
        let ok = trace.min_margin > 0.0;
        if fam.mode == Mode::Cs {
            cert.refine_cs = Some(trace);
        } else {
            cert.refine_cu = Some(trace);
        }
        if !push(cert, name, ok, None, None) {
            return Ok(());
        }
    }

    // exact tangency point: the plane X = 0 at z₀ has bounded lifted orbits
    // both ways, so it is the unstable plane of the past and, after the
    // transition, the stable plane of the future
    let depth = p.horizon + 4;
    let Some((past, future)) = attempt(cert, "tangency_point", || {
        let past = greedy_orbit(sys, chart, &cs.symbols, true, &z0, &cs.b, &cs.g, depth)?;
        let future = greedy_orbit(sys, chart, &cu.symbols, false, &witness.image, &cu.b, &cu.g, depth)?;
        Ok((past, future))
    }) else {
        return Ok(());
    };
    let mut past_syms = past.symbols.clone();
    past_syms.reverse();
    let mut fut_syms = witness.word.clone();
    fut_syms.extend_from_slice(&future.symbols);
    let xi = TruncatedSequence::new(past_syms, fut_syms);
    let point = TangencyPoint {
        xi: xi.clone(),
        x: cs.p.clone(),
        plane: chart.plane(&z0[layout.c..])?,
        plane_coords: z0[layout.c..].to_vec(),
        past_margin: past.min_depth,
        future_margin: future.min_depth,
    };
    cert.point = Some(point.clone());
    push(cert, "tangency_point", true, None, None);

    let Some(lu) = attempt(cert, "projection", || verify_lambda_u(sys, (&xi, &cs.p), &cs.b, depth, &[1])) else {
        return Ok(());
    };
    if !push(
        cert,
        "projection",
        lu.member,
        None,
        lu.witness.as_ref().map(|w| format!("leaves B at step {}", w.0)),
    ) {
        return Ok(());
    }

    let mut candidates: Vec<Vec<f64>> = (0..layout.ell)
        .map(|j| point.plane.frame().column(j).iter().cloned().collect())
        .collect();
    for &k in &chart.others {
        let mut e = vec![0.0; layout.c];
        e[k] = 1.0;
        candidates.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    candidates.push(Plane::random(layout.c, 1, &mut rng)?.frame().column(0).iter().cloned().collect());
    let Some(rep) = attempt(cert, "tangent_directions", || {
        detect_tangent_directions(sys, (&xi, &cs.p), &candidates, p.horizon, layout.design_rate, layout.tangent_c)
    }) else {
        return Ok(());
    };
    let within = |r: Option<f64>| r.is_some_and(|r| (r - layout.design_rate).abs() <= 0.1 * layout.design_rate);
    let ok = rep.d_t == layout.ell && within(rep.forward_rate) && within(rep.backward_rate);
    let detail = format!(
        "d_T = {}, rates {:?}/{:?} against {}",
        rep.d_t, rep.forward_rate, rep.backward_rate, layout.design_rate
    );
    cert.d_t = Some(rep.d_t);
    cert.forward_rate = rep.forward_rate;
    cert.backward_rate = rep.backward_rate;
    cert.tangent = Some(rep);
    push(cert, "tangent_directions", ok, None, Some(detail));
    Ok(())
}

/// Builds and verifies the scenario with default constants.
pub fn build_tangency_scenario(c: usize, i1: usize, i2: usize, ell: usize, eps: f64) -> Result<(SkewSystem, TangencyCertificate)> {
    build_tangency_scenario_with(c, i1, i2, ell, eps, &ScenarioParams::default())
}

pub fn build_tangency_scenario_with(
    c: usize,
    i1: usize,
    i2: usize,
    ell: usize,
    eps: f64,
    params: &ScenarioParams,
) -> Result<(SkewSystem, TangencyCertificate)> {
    let (sys, layout) = scenario_layout(c, i1, i2, ell, eps, params)?;
    let cert = verify_tangency_scenario(&sys, &layout)?;
    Ok((sys, cert))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(cert: &TangencyCertificate) {
        for s in &cert.stages {
            eprintln!("{:<20} {} {:?} {:?}", s.name, s.valid, s.slack, s.detail);
        }
    }

    #[test]
    fn codimension_two_scenario() {
        let (_, cert) = build_tangency_scenario(4, 2, 2, 2, 0.2).unwrap();
        report(&cert);
        assert!(cert.valid, "{:?}", cert.failed_stage);
        assert_eq!((cert.d_t, cert.c_t), (Some(2), 2));
    }

    #[test]
    fn homoclinic_scenario() {
        let (_, cert) = build_tangency_scenario(2, 1, 1, 1, 0.2).unwrap();
        report(&cert);
        assert!(cert.valid, "{:?}", cert.failed_stage);
        assert_eq!(cert.c_t, 1);
    }

    #[test]
    fn probe_thresholds() {
        use crate::cycles_tangencies::probe::{robustness_probe, ProbeTarget};
        let (sys, cert) = build_tangency_scenario(4, 2, 2, 2, 0.2).unwrap();
        let zero = robustness_probe(ProbeTarget::Tangency(&cert), 0.0, 2, 0).unwrap();
        assert!(zero.all_passed());
        assert!((zero.min_slack - cert.slack).abs() < 1e-12);
        let eta = cert.slack * sys.gamma() / 4.0;
        let small = robustness_probe(ProbeTarget::Tangency(&cert), eta, 10, 0).unwrap();
        assert!(small.all_passed(), "{:?}", small.failures.first());
        let large = robustness_probe(ProbeTarget::Tangency(&cert), 10.0 * cert.slack, 3, 0).unwrap();
        assert!(!large.failures.is_empty());
        assert!(!large.failures[0].stage.is_empty());
    }

    #[test]
    fn zero_eps_refused() {
        assert!(matches!(build_tangency_scenario(2, 1, 1, 1, 0.0), Err(Error::Construction(_))));
        assert!(matches!(build_tangency_scenario(2, 1, 1, 1, -1.0), Err(Error::Input(_))));
    }
}
