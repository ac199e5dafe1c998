//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero when any
//! criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewblend::blending::{verify_conley_moser, verify_covering, CoveringCertificate, Mode};
use skewblend::cones::{backward_contraction_check, verify_unstable_cone, Cone};
use skewblend::cycles_tangencies::probe::{robustness_probe, ProbeTarget};
use skewblend::cycles_tangencies::transition::TransitionSource;
use skewblend::cycles_tangencies::{build_tangency_scenario, find_transition, TangencyCertificate, TransitionSearch};
use skewblend::grassmann::{bilipschitz_bound, bilipschitz_check, lift_system, lifted_lipschitz_empirical, plane_distance, Plane};
use skewblend::intersect::{holder_transverse_bound, refine_intersection, transverse_spread_empirical, verify_lambda_u, HorizontalDisc};
use skewblend::linalg::{self, Mat, Vector};
use skewblend::regions::Region;
use skewblend::shift_space::{Symbol, TruncatedSequence};
use skewblend::skewproduct::{FiberMap, SkewSystem, Window, WindowShift};
use skewblend::Error;

type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Debug>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| format!("{e:?}"))
}

fn scalar(a: f64, b: f64) -> FiberMap {
    FiberMap::from_parts(linalg::diag(&[a]), Vector::from_vec(vec![b])).unwrap()
}

fn reference_system() -> SkewSystem {
    SkewSystem::one_step(
        vec![scalar(2.0 / 3.0, -1.0 / 3.0), scalar(2.0 / 3.0, 1.0 / 3.0)],
        0.5,
        1.0,
        0.6,
        0.9,
    )
    .unwrap()
}

fn reference_certificate() -> CoveringCertificate {
    let b = Region::interval(-0.9, 0.9).unwrap();
    let d = Region::interval(-1.0, 1.0).unwrap();
    verify_covering(&reference_system(), Mode::Cs, &[Symbol(1), Symbol(2)], &b, &d, 0.001).unwrap()
}

fn random_orthogonal(n: usize, r: &mut ChaCha8Rng) -> Mat {
    linalg::orthonormal_columns(&Mat::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0))).unwrap()
}

/// Lexicographically least word of length `n` whose backward orbit of `v`
/// stays strictly inside `B`.
fn least_admissible_word(cert: &CoveringCertificate, v: f64, n: usize) -> Option<Vec<usize>> {
    let d = cert.system.alphabet();
    'words: for code in 0..d.pow(n as u32) {
        let mut w = vec![0usize; n];
        let mut rem = code;
        for k in (0..n).rev() {
            w[k] = rem % d + 1;
            rem /= d;
        }
        let mut y = vec![v];
        for &s in &w {
            y = cert.system.map(Symbol(s as u16)).unwrap().apply_inverse(&y);
            if cert.b.signed_distance(&y) <= 0.0 {
                continue 'words;
            }
        }
        return Some(w);
    }
    None
}

fn covering_criterion() -> Outcome {
    let sys = reference_system();
    let b = Region::interval(-0.9, 0.9).unwrap();
    let d = Region::interval(-1.0, 1.0).unwrap();
    let t = Instant::now();
    let cert = ok(verify_covering(&sys, Mode::Cs, &[Symbol(1), Symbol(2)], &b, &d, 0.001))?;
    let elapsed = t.elapsed();
    ensure!(cert.valid, "certificate invalid: {:?}", cert.failure);
    ensure!((0.52..=0.534).contains(&cert.lebesgue_lower), "L̂ = {}", cert.lebesgue_lower);
    ensure!(cert.delta_max >= 0.156, "delta_max = {}", cert.delta_max);
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "L̂ = {:.6}, delta_max = {:.6}, {elapsed:.2?}",
        cert.lebesgue_lower, cert.delta_max
    ))
}

fn refinement_criterion() -> Outcome {
    let cert = reference_certificate();
    let l = cert.lebesgue_lower;
    let discs = vec![
        ok(HorizontalDisc::constant(
            ok(TruncatedSequence::from_ids(&[], &[1, 1]))?,
            vec![0.0],
            0.1,
            0.5,
            1.0,
        ))?,
        ok(HorizontalDisc::series(
            ok(TruncatedSequence::from_ids(&[1, 1], &[1]))?,
            &[0.1],
            &[vec![vec![-0.008], vec![0.008]], vec![vec![-0.004], vec![0.004]]],
            0.1,
            0.5,
            1.0,
        ))?,
    ];
    for disc in &discs {
        let trace = ok(refine_intersection(&cert, disc, 12))?;
        let mut prev_a = 0.0;
        for s in &trace.steps {
            ensure!(s.v_diam <= s.v_bound + 1e-15, "step {}: diam V = {} > {}", s.n, s.v_diam, s.v_bound);
            ensure!(prev_a < l, "step {}: diam A = {prev_a} not below L̂ = {l}", s.n);
            ensure!(s.a_diam < l, "step {}: diam A = {} not below L̂", s.n, s.a_diam);
            prev_a = s.a_diam;
        }
        let lu = ok(verify_lambda_u(
            &cert.system,
            (&trace.point, &trace.x),
            &cert.b,
            trace.cumulative()[11],
            &[1],
        ))?;
        ensure!(lu.member && lu.margin > 0.0, "Λᵘ replay fails: {:?}", lu.witness);
    }
    let mut checked = 0;
    for k in 0..=160 {
        let v = -0.8 + 0.01 * k as f64;
        let disc = ok(HorizontalDisc::constant(
            ok(TruncatedSequence::from_ids(&[], &[1]))?,
            vec![v],
            0.05,
            0.5,
            1.0,
        ))?;
        let trace = ok(refine_intersection(&cert, &disc, 8))?;
        let got: Vec<usize> = trace.blocks.iter().map(|b| b[0].id()).collect();
        let want = least_admissible_word(&cert, v, 8);
        ensure!(
            Some(&got) == want.as_ref(),
            "v = {v}: refinement {got:?} against enumeration {want:?}"
        );
        checked += 1;
    }
    Ok(format!(
        "bounds hold to N = 12; {checked} constant discs match enumeration to length 8"
    ))
}

fn windowed_system(c0: f64, r: &mut ChaCha8Rng) -> SkewSystem {
    let base = SkewSystem::one_step(vec![scalar(0.7, -0.3), scalar(0.7, 0.3)], 0.5, 1.0, 0.6, 1.0 / 1.1).unwrap();
    let shifts: Vec<WindowShift> = [-2i64, -1, 1, 2]
        .iter()
        .map(|&offset| WindowShift {
            offset,
            symbol: Symbol(r.gen_range(1..=2)),
            shift: vec![r.gen_range(-1.0..1.0)],
        })
        .collect();
    let unit = base
        .clone()
        .with_window(Window {
            radius: 2,
            shifts: shifts.clone(),
        })
        .unwrap()
        .tight_c0();
    let scaled = shifts
        .into_iter()
        .map(|s| WindowShift {
            shift: vec![s.shift[0] * c0 / unit],
            ..s
        })
        .collect();
    base.with_window(Window { radius: 2, shifts: scaled }).unwrap().with_c0(c0).unwrap()
}

fn holder_criterion() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let d = Region::ball(vec![0.0], 100.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for c0 in [0.01, 0.02, 0.05] {
        for trial in 0..10 {
            let sys = windowed_system(c0, &mut r);
            ensure!((sys.c0() - c0).abs() < 1e-12, "declared C₀ {} for {c0}", sys.c0());
            let past: Vec<usize> = (0..r.gen_range(2..6)).map(|_| r.gen_range(1..=2)).collect();
            let future: Vec<usize> = (0..r.gen_range(2..6)).map(|_| r.gen_range(1..=2)).collect();
            let cyl = ok(TruncatedSequence::from_ids(&past, &future))?;
            let n = r.gen_range(1..=past.len());
            let x = vec![r.gen_range(-0.5..0.5)];
            let bound = ok(holder_transverse_bound(&sys, &cyl, &x, n, &d, trial))?;
            let spread = ok(transverse_spread_empirical(&sys, &cyl, &x, n, 1000, trial))?;
            pairs += 1000;
            ensure!(spread <= bound + 1e-15, "C₀ = {c0}: spread {spread} exceeds bound {bound}");
            if bound > 0.0 {
                worst = worst.max(spread / bound);
            }
        }
    }
    Ok(format!("{pairs} pairs, zero violations, worst spread/bound {worst:.3}"))
}

fn metric_criterion() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let (c, l) = if k % 2 == 0 {
            (r.gen_range(2..=6), 1)
        } else {
            (r.gen_range(3..=6), 2)
        };
        let e = ok(Plane::random(c, l, &mut r))?;
        let f = ok(Plane::random(c, l, &mut r))?;
        // inf over F of |f − e| for unit e: distance to F through F's own Gram–Schmidt basis
        let fq = ok(linalg::orthonormal_columns(f.frame()))?;
        let dist2 = |v: &Vector| (v.norm_squared() - (fq.transpose() * v).norm_squared()).max(0.0);
        let oracle = if l == 1 {
            let u = e.frame().column(0).into_owned();
            dist2(&u).sqrt()
        } else {
            // sup over the unit circle of E of a sinusoid a + b cos 2θ + c sin 2θ
            let eq = ok(linalg::orthonormal_columns(e.frame()))?;
            let (u, v) = (eq.column(0).into_owned(), eq.column(1).into_owned());
            let f0 = dist2(&u);
            let f90 = dist2(&v);
            let f45 = dist2(&((&u + &v) / 2f64.sqrt()));
            let a = 0.5 * (f0 + f90);
            let (b, cc) = (0.5 * (f0 - f90), f45 - a);
            (a + b.hypot(cc)).max(0.0).sqrt()
        };
        worst = worst.max((ok(plane_distance(&e, &f))? - oracle).abs());
    }
    ensure!(worst < 1e-9, "largest deviation from the sup-inf oracle {worst:e}");
    let e = ok(Plane::from_columns(&[vec![1.0, 0.0]]))?;
    let mut worst_sin: f64 = 0.0;
    for k in 0..100 {
        let theta = -3.0 + 6.0 * k as f64 / 99.0;
        let f = ok(Plane::from_columns(&[vec![theta.cos(), theta.sin()]]))?;
        worst_sin = worst_sin.max((ok(plane_distance(&e, &f))? - theta.sin().abs()).abs());
    }
    ensure!(worst_sin < 1e-9, "rotation case deviates by {worst_sin:e}");
    Ok(format!("10000 pairs within {worst:.1e}; rotations within {worst_sin:.1e}"))
}

fn bilipschitz_criterion() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut triples = 0;
    let mut tightest = f64::INFINITY;
    for k in 0..100 {
        let c = r.gen_range(2..=5);
        let l = r.gen_range(1..c);
        let kappa = 10f64.powf(r.gen_range(0.0..3.0));
        let sv: Vec<f64> = (0..c).map(|i| kappa.powf(i as f64 / (c - 1) as f64)).collect();
        let t = random_orthogonal(c, &mut r) * linalg::diag(&sv) * random_orthogonal(c, &mut r);
        let bound = bilipschitz_bound(&t);
        let seen = ok(bilipschitz_check(&t, l, 100, k))?;
        triples += 100;
        ensure!(seen <= bound + 1e-9, "observed {seen} above ‖T‖‖T⁻¹‖ = {bound}");
        tightest = tightest.min(bound - seen);
    }
    Ok(format!(
        "{triples} triples, condition numbers up to 1e3, smallest gap {tightest:.3e}"
    ))
}

fn lift_criterion(scenarios: &[&TangencyCertificate]) -> Outcome {
    for cert in scenarios {
        let lift = cert.lift.as_ref().ok_or("scenario carries no lift")?;
        let seen = ok(lifted_lipschitz_empirical(lift, 10_000, 6))?;
        ensure!(
            seen <= lift.lifted_bound + 1e-6,
            "c = {}: empirical {seen} above {}",
            cert.layout.c,
            lift.lifted_bound
        );
    }
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut refused = 0;
    for k in 0..100 {
        let nu: f64 = r.gen_range(0.3..0.8);
        let alpha = r.gen_range(0.5..=1.0);
        let na: f64 = nu.powf(alpha);
        let gamma = r.gen_range(na.max(0.35)..0.99);
        let gamma_hat = if k % 2 == 0 {
            na / gamma * (1.0 + r.gen_range(-1e-6..1e-6))
        } else {
            r.gen_range(0.3..0.99)
        };
        let room = gamma * (1.0 / na - 1.0 / gamma_hat);
        let l_d = if k % 4 == 1 {
            (room * (1.0 + r.gen_range(-1e-6..1e-6))).max(0.0)
        } else {
            r.gen_range(0.0..0.5)
        };
        let m = FiberMap::from_parts(linalg::diag(&[gamma, 1.0 / gamma_hat]), Vector::zeros(2)).unwrap();
        let sys = SkewSystem::one_step(vec![m.clone(), m], nu, alpha, gamma, gamma_hat)
            .unwrap()
            .with_l_d(l_d)
            .unwrap();
        let expected = !(na < gamma * gamma_hat) || !(l_d < room);
        let got = match lift_system(&sys, 1) {
            Err(Error::LiftRefused(_)) => true,
            Ok(_) => false,
            Err(e) => return Err(format!("draw {k}: unexpected error {e}")),
        };
        ensure!(got == expected, "draw {k}: refused = {got}, conditions say {expected}");
        refused += got as usize;
    }
    Ok(format!(
        "{} scenarios within the lifted bound; {refused}/100 draws refused as predicted",
        scenarios.len()
    ))
}

fn cone_criterion() -> Outcome {
    let diag = |a: f64, b: f64| FiberMap::from_parts(linalg::diag(&[a, b]), Vector::zeros(2)).unwrap();
    let sys = ok(SkewSystem::one_step(
        vec![diag(3.0, 1.0 / 3.0), diag(3.0, 1.0 / 3.0)],
        0.05,
        1.0,
        1.0 / 3.0,
        1.0 / 3.0,
    ))?;
    let cone = ok(Cone::standard(2, 1, 0.5))?;
    let region = ok(Region::cube(&[0.0, 0.0], 1.0))?;
    let cert = ok(verify_unstable_cone(&sys, &cone, &region, 0.4, 256, 0))?;
    ensure!(cert.valid, "diag(3, 1/3) cone not certified");
    ensure!(cert.min_expansion >= 2.68, "min expansion {}", cert.min_expansion);
    ensure!(cert.min_margin > 0.0, "margin {}", cert.min_margin);

    let xi = ok(TruncatedSequence::from_ids(&[1; 10], &[1]))?;
    let back = ok(backward_contraction_check(
        &sys,
        &cone,
        &region,
        (&xi, &[0.0, 0.0], 10),
        &[vec![1.0, 0.0]],
        0.4,
    ))?;
    ensure!(back.ok, "backward check: {:?}", back.failure);
    for (k, v) in back.norms[0].iter().enumerate() {
        let want = 3f64.powi(-(k as i32 + 1));
        ensure!((v - want).abs() <= 1e-15 * want.max(1.0), "step {}: {v} vs {want}", k + 1);
    }
    let rate = back.fitted_rate.ok_or("no fitted rate")?;
    ensure!((rate - 1.0 / 3.0).abs() < 1e-12, "fitted rate {rate}");

    let sigma = sys
        .maps()
        .iter()
        .map(|m| linalg::sigma_min(m.jacobian()))
        .fold(f64::INFINITY, f64::min);
    let eta = cert.min_margin * sigma / 4.0;
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut passed = 0;
    for _ in 0..100 {
        let maps = sys
            .maps()
            .iter()
            .map(|m| {
                let e = Mat::from_fn(2, 2, |_, _| r.gen_range(-1.0..1.0));
                let e = &e * (eta / linalg::spectral_norm(&e));
                FiberMap::from_parts(m.jacobian() + e, m.total().b.clone()).unwrap()
            })
            .collect();
        let moved = ok(sys.with_maps(maps))?;
        passed += ok(verify_unstable_cone(&moved, &cone, &region, 0.4, 256, 0))?.valid as usize;
    }
    ensure!(passed == 100, "{passed}/100 perturbed cones certified");
    Ok(format!(
        "min expansion {:.4}, margin {:.4}, rate {rate:.6}, 100/100 perturbations",
        cert.min_expansion, cert.min_margin
    ))
}

fn tangency_criterion(cert: &TangencyCertificate, elapsed: Duration) -> Outcome {
    ensure!(cert.valid, "failed stage {:?}", cert.failed_stage);
    ensure!(cert.c_t == 2, "c_T = {}", cert.c_t);
    ensure!(cert.d_t == Some(2), "d_T = {:?}", cert.d_t);
    let rep = cert.tangent.as_ref().ok_or("no tangent report")?;
    ensure!(rep.horizon == 20, "horizon {}", rep.horizon);
    let design = cert.layout.design_rate;
    for (name, rate) in [("forward", cert.forward_rate), ("backward", cert.backward_rate)] {
        let rate = rate.ok_or(format!("no {name} rate"))?;
        ensure!((rate - design).abs() <= 0.1 * design, "{name} rate {rate} against design {design}");
    }
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "valid, c_T = 2, d_T = 2, rates {:.5}/{:.5} against {design:.5}, {elapsed:.1?}",
        cert.forward_rate.unwrap(),
        cert.backward_rate.unwrap()
    ))
}

fn probe_criterion(cert: &TangencyCertificate) -> Outcome {
    let eta = cert.slack * cert.system.gamma() / 4.0;
    let small = ok(robustness_probe(ProbeTarget::Tangency(cert), eta, 100, 0))?;
    ensure!(
        small.passed == 100,
        "{}/100 trials passed at η = {eta:e}: {:?}",
        small.passed,
        small.failures.first()
    );
    let large = ok(robustness_probe(ProbeTarget::Tangency(cert), 10.0 * cert.slack, 5, 0))?;
    let first = large.failures.first().ok_or("no failure at η = 10·slack")?;
    ensure!(!first.stage.is_empty(), "failure without a stage name");
    Ok(format!(
        "100/100 at η = {eta:.3e} (min slack {:.3e}); η = 10·slack fails at stage {}",
        small.min_slack, first.stage
    ))
}

fn enumerate(sys: &SkewSystem, sources: &[Vec<f64>], target: &Region, depth: usize) -> Option<(Vec<usize>, usize)> {
    let d = sys.alphabet();
    for len in 1..=depth {
        for code in 0..d.pow(len as u32) {
            let mut word = vec![0usize; len];
            let mut rem = code;
            for k in (0..len).rev() {
                word[k] = rem % d + 1;
                rem /= d;
            }
            for (si, x) in sources.iter().enumerate() {
                let mut y = x.clone();
                for &s in &word {
                    y = sys.map(Symbol(s as u16)).unwrap().apply(&y);
                }
                if target.signed_distance(&y) > 0.0 {
                    return Some((word, si));
                }
            }
        }
    }
    None
}

fn transition_criterion() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let mut found = 0;
    for k in 0..50 {
        let c = r.gen_range(1..=2);
        let d = r.gen_range(2..=3);
        let maps: Vec<FiberMap> = (0..d)
            .map(|_| {
                let a = Mat::from_fn(c, c, |i, j| if i == j { r.gen_range(0.4..1.6) } else { r.gen_range(-0.2..0.2) });
                FiberMap::from_parts(a, Vector::from_fn(c, |_, _| r.gen_range(-1.0..1.0))).unwrap()
            })
            .collect();
        let lo = maps.iter().map(|m| m.lip_lower()).fold(f64::INFINITY, f64::min);
        let hi = maps.iter().map(|m| m.lip_upper()).fold(0.0, f64::max);
        let sys = ok(SkewSystem::one_step(maps, 0.1, 1.0, lo, 1.0 / hi))?;
        let sources: Vec<Vec<f64>> = (0..r.gen_range(1..=3))
            .map(|_| (0..c).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let target = ok(Region::ball(
            (0..c).map(|_| r.gen_range(-2.0..2.0)).collect(),
            r.gen_range(0.05..0.5),
        ))?;
        let depth = r.gen_range(1..=6);
        let got = ok(find_transition(&sys, &TransitionSource::Points(sources.clone()), &target, depth))?;
        let want = enumerate(&sys, &sources, &target, depth);
        let same = match (&got, &want) {
            (TransitionSearch::Found(w), Some((word, si))) => {
                w.word.iter().map(|s| s.id()).collect::<Vec<_>>() == *word && w.source == sources[*si]
            }
            (TransitionSearch::NotFound { .. }, None) => true,
            _ => false,
        };
        ensure!(same, "config {k}: search {got:?} against enumeration {want:?}");
        found += want.is_some() as usize;
    }
    Ok(format!("50 configs agree ({found} with a transition)"))
}

fn conley_moser_criterion() -> Outcome {
    let i = ok(Region::interval(-1.0, 1.0))?;
    let m = FiberMap::from_parts(linalg::diag(&[0.5, 3.0]), Vector::zeros(2)).unwrap();
    let sys = ok(SkewSystem::one_step(vec![m.clone(), m], 0.1, 1.0, 0.5, 1.0 / 3.0))?;
    let cert = ok(verify_conley_moser(&sys, &[Symbol(1)], &i, &i))?;
    ensure!(cert.valid, "diag(1/2, 3) rejected: {:?}", cert.failure);
    let (cs, cu) = (cert.blocks[0].cs_margin, cert.blocks[0].cu_margin);
    ensure!((cs - 0.5).abs() < 1e-12 && (cu - 2.0 / 3.0).abs() < 1e-12, "margins {cs}, {cu}");
    let id = FiberMap::from_parts(linalg::identity(2), Vector::zeros(2)).unwrap();
    let sys = ok(SkewSystem::one_step(vec![id.clone(), id], 0.1, 1.0, 1.0, 1.0))?;
    ensure!(
        !ok(verify_conley_moser(&sys, &[Symbol(1)], &i, &i))?.valid,
        "identity blocks certified"
    );
    Ok(format!("diag blocks certified with margins {cs:.3}/{cu:.3}; identity rejected"))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(msg) => println!("PASS {name}: {msg}"),
        Err(msg) => {
            failed += 1;
            println!("FAIL {name}: {msg}");
        }
    };
    report("1 covering criterion", covering_criterion());
    report("2 nested refinement", refinement_criterion());
    report("3 Hölder transverse bound", holder_criterion());
    report("4 Grassmannian metric", metric_criterion());
    report("5 bi-Lipschitz bound", bilipschitz_criterion());

    let t = Instant::now();
    let c4 = build_tangency_scenario(4, 2, 2, 2, 0.2);
    let elapsed = t.elapsed();
    let c2 = build_tangency_scenario(2, 1, 1, 1, 0.2);
    match (&c4, &c2) {
        (Ok((_, c4)), Ok((_, c2))) => report("6 lift constants", lift_criterion(&[c2, c4])),
        _ => report(
            "6 lift constants",
            Err(format!(
                "scenario construction failed: {:?} {:?}",
                c4.as_ref().err(),
                c2.as_ref().err()
            )),
        ),
    }
    report("7 cones", cone_criterion());
    match &c4 {
        Ok((_, cert)) => {
            report("8 end-to-end tangency", tangency_criterion(cert, elapsed));
            report("9 robustness probe", probe_criterion(cert));
        }
        Err(e) => {
            report("8 end-to-end tangency", Err(format!("{e}")));
            report("9 robustness probe", Err("no scenario".into()));
        }
    }
    report("10 transition search", transition_criterion());
    report("structural Conley-Moser check", conley_moser_criterion());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
