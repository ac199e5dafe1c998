//! Robust cycles: a cs-blender, a cu-blender with disjoint superposition
//! domains and transitions both ways between their `B` regions.

use serde::{Deserialize, Serialize};

use super::lifted::PlaneChart;
use super::scenario::{covering_family, family_regions, structural_check, tight_system, ScenarioParams};
use super::transition::{find_transition, region_separation, replay_witness, TransitionSearch, TransitionSource, TransitionWitness};
use crate::blending::{verify_covering_with, BlenderSpec, CoveringCertificate, CoveringOptions, Mode, Splitting};
use crate::error::{input, Error, Result};
use crate::regions::Region;
use crate::shift_space::Symbol;
use crate::skewproduct::{AffineMap, FiberMap, Inequality, SkewSystem};

/// Tolerance for replayed covering slacks.
const REPLAY_TOL: f64 = 1e-12;
const TRANSITION_DEPTH: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleCertificate {
    pub cs: BlenderSpec,
    pub cu: BlenderSpec,
    /// From the cs-blender's `B` into the cu-blender's `B`.
    pub t12: TransitionWitness,
    /// From the cu-blender's `B` back into the cs-blender's `B`.
    pub t21: TransitionWitness,
    pub co_index: usize,
    pub separation: f64,
    pub inequalities: Vec<Inequality>,
    pub slack: f64,
    pub valid: bool,
}

impl CycleCertificate {
    pub fn system(&self) -> &SkewSystem {
        &self.cs.certificate.system
    }
}

pub(crate) fn replay_covering(sys: &SkewSystem, cert: &CoveringCertificate) -> Result<CoveringCertificate> {
    let opts = CoveringOptions {
        branches: Some(cert.branches.clone()),
        h: Some(cert.h),
        ..CoveringOptions::default()
    };
    verify_covering_with(sys, cert.mode, &cert.b, &cert.d, &opts)
}

/// Structural check of a blender spec against `sys`, when it carries a splitting.
pub(crate) fn replay_structural(sys: &SkewSystem, spec: &BlenderSpec) -> Result<Option<f64>> {
    match (&spec.splitting, &spec.structural) {
        (Some(split), Some(_)) => {
            let cert = &spec.certificate;
            let cm = structural_check(sys, &cert.symbols, &cert.d, &split.cs)?;
            Ok(Some(if cm.valid { cm.slack() } else { -1.0 }))
        }
        (None, Some(cm)) => Ok(Some(if cm.valid { cm.slack() } else { -1.0 })),
        _ => Ok(None),
    }
}

fn check_spec(spec: &BlenderSpec, mode: Mode, name: &str) -> Result<()> {
    let cert = &spec.certificate;
    if cert.mode != mode {
        return input(format!("{name} blender certificate has mode {:?}", cert.mode));
    }
    if !spec.valid() {
        return Err(Error::CertificateInvalid(format!("{name} blender certificate is not valid")));
    }
    let fresh = replay_covering(&cert.system, cert)?;
    let stale = fresh.valid != cert.valid
        || (fresh.slack() - cert.slack()).abs() > REPLAY_TOL
        || (fresh.covering_margin - cert.covering_margin).abs() > REPLAY_TOL;
    if stale {
        return Err(Error::CertificateInvalid(format!(
            "stale {name} certificate: replayed slack {} against recorded {}",
            fresh.slack(),
            cert.slack()
        )));
    }
    Ok(())
}

/// Replays both blender certificates and both transitions. A missing
/// transition is refused.
pub fn verify_cycle(
    cs: &BlenderSpec,
    cu: &BlenderSpec,
    t12: Option<&TransitionWitness>,
    t21: Option<&TransitionWitness>,
) -> Result<CycleCertificate> {
    let (Some(t12), Some(t21)) = (t12, t21) else {
        return Err(Error::Precondition("a cycle needs transitions in both directions".into()));
    };
    if cs.certificate.system != cu.certificate.system {
        return input("the two blender certificates describe different systems");
    }
    let sys = &cs.certificate.system;
    let separation = region_separation(&cs.certificate.d, &cu.certificate.d);
    if separation <= 0.0 {
        return input(format!("superposition domains overlap (separation {separation:e})"));
    }
    check_spec(cs, Mode::Cs, "cs")?;
    check_spec(cu, Mode::Cu, "cu")?;
    let (b1, b2) = (&cs.certificate.b, &cu.certificate.b);
    let (m12, s12) = replay_witness(sys, t12, Some(b1), b2)?;
    let (m21, s21) = replay_witness(sys, t21, Some(b2), b1)?;

    let mut ineq = vec![
        Inequality::new("D regions separated", 0.0, separation),
        Inequality::new("cs covering slack", 0.0, cs.certificate.slack()),
        Inequality::new("cu covering slack", 0.0, cu.certificate.slack()),
        Inequality::new("transition 1->2 target margin", 0.0, m12),
        Inequality::new("transition 1->2 source depth", 0.0, s12.unwrap_or(f64::NEG_INFINITY)),
        Inequality::new("transition 2->1 target margin", 0.0, m21),
        Inequality::new("transition 2->1 source depth", 0.0, s21.unwrap_or(f64::NEG_INFINITY)),
    ];
    for (name, spec) in [("cs structural slack", cs), ("cu structural slack", cu)] {
        if let Some(cm) = &spec.structural {
            ineq.push(Inequality::new(name, 0.0, cm.slack()));
        }
    }
    let slack = ineq.iter().map(|i| i.slack).fold(f64::INFINITY, f64::min);
    Ok(CycleCertificate {
        cs: cs.clone(),
        cu: cu.clone(),
        t12: t12.clone(),
        t21: t21.clone(),
        co_index: cs.cs_index.abs_diff(cu.cs_index),
        separation,
        valid: ineq.iter().all(|i| i.holds()),
        inequalities: ineq,
        slack,
    })
}

fn found(search: TransitionSearch, what: &str) -> Result<TransitionWitness> {
    match search {
        TransitionSearch::Found(w) => Ok(w),
        TransitionSearch::NotFound { near_miss, .. } => Err(Error::Construction(format!("no {what} transition (near miss {near_miss:e})"))),
    }
}

/// A cs-blender of index `i₁` near `p₁ = −e₀/2`, a cu-blender of index `i₂`
/// near `p₂ = e₀/2` and the translations between them, verified as a cycle.
pub fn build_cycle_scenario(c: usize, i1: usize, i2: usize, eps: f64) -> Result<(SkewSystem, CycleCertificate)> {
    build_cycle_scenario_with(c, i1, i2, eps, &ScenarioParams::default())
}

pub fn build_cycle_scenario_with(
    c: usize,
    i1: usize,
    i2: usize,
    eps: f64,
    params: &ScenarioParams,
) -> Result<(SkewSystem, CycleCertificate)> {
    if c < 2 || i1 == 0 || i1 >= c || i2 == 0 || i2 >= c {
        return input(format!("indices need 0 < i < c, got c = {c}, i1 = {i1}, i2 = {i2}"));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return input(format!("eps = {eps} must be positive"));
    }
    let chart = PlaneChart::new(c, vec![c - 1])?;
    let delta = eps / 4.0;
    let mut p1 = vec![0.0; c];
    let mut p2 = vec![0.0; c];
    p1[0] = -0.5;
    p2[0] = 0.5;
    let cs_contracting: Vec<usize> = (0..i1).collect();
    let cu_contracting: Vec<usize> = (0..c - i2).collect();
    let fam1 = covering_family(&chart, &cs_contracting, &p1, delta, 0.0, params, false)?;
    let fam2 = covering_family(&chart, &cu_contracting, &p2, delta, 0.0, params, false)?;
    let (n1, n2) = (fam1.len(), fam2.len());
    let mut maps: Vec<FiberMap> = fam1.into_iter().map(FiberMap::affine).collect::<Result<_>>()?;
    for f in fam2 {
        maps.push(FiberMap::affine(f)?.inverted());
    }
    let shift: Vec<f64> = p2.iter().zip(&p1).map(|(a, b)| a - b).collect();
    let back: Vec<f64> = shift.iter().map(|v| -v).collect();
    maps.push(FiberMap::affine(AffineMap::translation(&shift))?);
    maps.push(FiberMap::affine(AffineMap::translation(&back))?);
    let sys = tight_system(maps, params.nu, params.alpha)?;

    let (b1, d1) = family_regions(c, &cs_contracting, &p1, delta)?;
    let (b2, d2) = family_regions(c, &cu_contracting, &p2, delta)?;
    let syms1: Vec<Symbol> = (1..=n1).map(|i| Symbol(i as u16)).collect();
    let syms2: Vec<Symbol> = (n1 + 1..=n1 + n2).map(|i| Symbol(i as u16)).collect();
    let stable2: Vec<usize> = (c - i2..c).collect();
    let h = delta / 32.0;
    let spec = |mode, syms: &[Symbol], b: &Region, d: &Region, stable: Vec<usize>| -> Result<BlenderSpec> {
        let opts = CoveringOptions {
            branches: Some(syms.iter().map(|s| vec![*s]).collect()),
            h: Some(h),
            ..CoveringOptions::default()
        };
        let cert = verify_covering_with(&sys, mode, b, d, &opts)?;
        if !cert.valid {
            return Err(Error::Construction(format!("{mode:?} covering failed: {:?}", cert.failure)));
        }
        let cm = structural_check(&sys, syms, d, &stable)?;
        let cu = (0..c).filter(|k| !stable.contains(k)).collect();
        BlenderSpec::new(cert, stable.len(), Some(Splitting { cs: stable, cu }), Some(cm))
    };
    let cs = spec(Mode::Cs, &syms1, &b1, &d1, cs_contracting.clone())?;
    let cu = spec(Mode::Cu, &syms2, &b2, &d2, stable2)?;
    let t12 = found(
        find_transition(&sys, &TransitionSource::Region(b1.clone()), &b2, TRANSITION_DEPTH)?,
        "forward",
    )?;
    let t21 = found(
        find_transition(&sys, &TransitionSource::Region(b2), &b1, TRANSITION_DEPTH)?,
        "return",
    )?;
    let cert = verify_cycle(&cs, &cu, Some(&t12), Some(&t21))?;
    Ok((sys, cert))
}
