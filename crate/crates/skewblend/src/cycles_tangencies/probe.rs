//! Empirical robustness: random affine perturbations of every fiber map,
//! followed by a replay of the whole certificate stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cycle::{replay_covering, replay_structural, CycleCertificate};
use super::scenario::{tight_system, verify_tangency_hypotheses, TangencyCertificate};
use super::transition::compose_word;
use crate::error::{input, Result};
use crate::linalg::{self, Mat, Vector};
use crate::par::Exec;
use crate::skewproduct::{AffineMap, FiberMap, SkewSystem};

#[derive(Clone, Copy, Debug)]
pub enum ProbeTarget<'a> {
    Cycle(&'a CycleCertificate),
    Tangency(&'a TangencyCertificate),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub trial: usize,
    pub stage: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
    pub passed: usize,
    /// Min slack over passing and failing trials alike.
    pub min_slack: f64,
    pub base_slack: f64,
    pub failures: Vec<ProbeFailure>,
}

impl ProbeReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

/// `A + E`, `b + t` with `‖E‖₂ = η` and `‖t‖ = η`, directions uniform.
pub fn perturb_map(f: &AffineMap, eta: f64, rng: &mut impl Rng) -> Result<AffineMap> {
    let c = f.dim();
    let mut e = Mat::from_fn(c, c, |_, _| rng.gen_range(-1.0..1.0));
    let n = linalg::spectral_norm(&e);
    if n > 0.0 {
        e *= eta / n;
    }
    let mut t = Vector::from_fn(c, |_, _| rng.gen_range(-1.0..1.0));
    let n = t.norm();
    if n > 0.0 {
        t *= eta / n;
    }
    AffineMap::new(&f.a + e, &f.b + t)
}

/// Every fiber map perturbed independently; constants re-tightened.
pub fn perturb_system(sys: &SkewSystem, eta: f64, rng: &mut impl Rng) -> Result<SkewSystem> {
    if !sys.is_one_step() {
        return Err(crate::Error::Unsupported("perturbation probes need one-step systems".into()));
    }
    let maps = sys
        .maps()
        .iter()
        .map(|m| FiberMap::affine(perturb_map(m.total(), eta, rng)?))
        .collect::<Result<Vec<_>>>()?;
    tight_system(maps, sys.nu(), sys.alpha())
}

/// Outcome of one replay: min slack, or the first failing stage.
type Replay = std::result::Result<f64, (String, String, f64)>;

fn replay_cycle(cert: &CycleCertificate, sys: &SkewSystem) -> Result<Replay> {
    // the regions are not perturbed, so their separation carries over
    let mut slack = cert.separation;
    for (name, spec) in [("cs", &cert.cs), ("cu", &cert.cu)] {
        let cv = replay_covering(sys, &spec.certificate)?;
        slack = slack.min(cv.slack());
        if !cv.valid {
            let why = cv.failure.map(|f| f.reason).unwrap_or_default();
            return Ok(Err((format!("cover_{name}"), why, slack)));
        }
        if let Some(s) = replay_structural(sys, spec)? {
            slack = slack.min(s);
            if s <= 0.0 {
                return Ok(Err((format!("structural_{name}"), "block conditions fail".into(), slack)));
            }
        }
    }
    let (b1, b2) = (&cert.cs.certificate.b, &cert.cu.certificate.b);
    for (name, w, src, dst) in [("transition_12", &cert.t12, b1, b2), ("transition_21", &cert.t21, b2, b1)] {
        let image = compose_word(sys, &w.word)?.apply(&w.source);
        let m = dst.signed_distance(&image).min(src.signed_distance(&w.source));
        slack = slack.min(m);
        if m <= 0.0 {
            return Ok(Err((name.into(), format!("margin {m:e}"), slack)));
        }
    }
    Ok(Ok(slack))
}

fn replay_tangency(cert: &TangencyCertificate, sys: &SkewSystem) -> Result<Replay> {
    let rep = verify_tangency_hypotheses(sys, &cert.layout)?;
    Ok(match rep.failed_stage.clone() {
        None => Ok(rep.slack),
        Some(stage) => {
            let detail = rep.stage(&stage).and_then(|s| s.detail.clone()).unwrap_or_default();
            Err((stage, detail, rep.slack))
        }
    })
}

pub fn robustness_probe(target: ProbeTarget<'_>, eta: f64, trials: usize, seed: u64) -> Result<ProbeReport> {
    robustness_probe_with(target, eta, trials, seed, Exec::default())
}

/// Trial `k` draws from the ChaCha stream `k` of `seed`, so results do not
/// depend on the execution strategy.
pub fn robustness_probe_with(target: ProbeTarget<'_>, eta: f64, trials: usize, seed: u64, exec: Exec) -> Result<ProbeReport> {
    if !(eta.is_finite() && eta >= 0.0) {
        return input(format!("eta = {eta} must be non-negative"));
    }
    let (base, base_slack) = match target {
        ProbeTarget::Cycle(c) => (c.system(), c.slack),
        ProbeTarget::Tangency(t) => (&t.system, t.slack),
    };
    let outcomes = exec.map_range(trials, |k| -> Result<Replay> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let sys = match perturb_system(base, eta, &mut rng) {
            Ok(s) => s,
            Err(e) => return Ok(Err(("perturbation".into(), e.to_string(), f64::NEG_INFINITY))),
        };
        let r = match target {
            ProbeTarget::Cycle(c) => replay_cycle(c, &sys),
            ProbeTarget::Tangency(t) => replay_tangency(t, &sys),
        };
        Ok(r.unwrap_or_else(|e| Err(("replay".into(), e.to_string(), f64::NEG_INFINITY))))
    });
    let mut report = ProbeReport {
        eta,
        trials,
        seed,
        passed: 0,
        min_slack: f64::INFINITY,
        base_slack,
        failures: Vec::new(),
    };
    for (trial, o) in outcomes.into_iter().enumerate() {
        match o? {
            Ok(s) => {
                report.passed += 1;
                report.min_slack = report.min_slack.min(s);
            }
            Err((stage, detail, s)) => {
                report.min_slack = report.min_slack.min(s);
                report.failures.push(ProbeFailure { trial, stage, detail });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles_tangencies::cycle::build_cycle_scenario;

    #[test]
    fn perturbation_has_requested_size() {
        let f = AffineMap::new(Mat::identity(3, 3), Vector::zeros(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = perturb_map(&f, 0.01, &mut rng).unwrap();
        assert!((linalg::spectral_norm(&(&g.a - &f.a)) - 0.01).abs() < 1e-12);
        assert!((g.b.norm() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_eta_reproduces_cycle() {
        let (_, cert) = build_cycle_scenario(2, 1, 1, 0.2).unwrap();
        let rep = robustness_probe(ProbeTarget::Cycle(&cert), 0.0, 3, 1).unwrap();
        assert!(rep.all_passed());
        assert!((rep.min_slack - cert.slack).abs() < 1e-12, "{} {}", rep.min_slack, cert.slack);
    }

    #[test]
    fn cycle_probe_thresholds() {
        let (sys, cert) = build_cycle_scenario(2, 1, 1, 0.2).unwrap();
        let gamma = sys.gamma();
        let small = robustness_probe(ProbeTarget::Cycle(&cert), cert.slack * gamma / 4.0, 20, 7).unwrap();
        assert!(small.all_passed(), "{:?}", small.failures);
        let large = robustness_probe(ProbeTarget::Cycle(&cert), 10.0 * cert.slack, 20, 7).unwrap();
        assert!(!large.failures.is_empty());
    }
}
