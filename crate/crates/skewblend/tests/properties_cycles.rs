//! Property tests for transitions, cycles and tangencies.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewblend::cycles_tangencies::transition::TransitionSource;
use skewblend::cycles_tangencies::{
    build_cycle_scenario, build_tangency_scenario, detect_tangent_directions, find_transition, tangency_codimension, TransitionSearch,
};
use skewblend::linalg::{Mat, Vector};
use skewblend::regions::Region;
use skewblend::shift_space::Symbol;
use skewblend::skewproduct::{FiberMap, SkewSystem};

/// First (word, source) in (length, lex) order with the endpoint strictly
/// inside `target`, by exhaustive enumeration.
fn brute_force(sys: &SkewSystem, sources: &[Vec<f64>], target: &Region, max_depth: usize) -> Option<(Vec<usize>, usize)> {
    let d = sys.alphabet();
    for len in 1..=max_depth {
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

fn random_system(c: usize, d: usize, r: &mut ChaCha8Rng) -> SkewSystem {
    let maps: Vec<FiberMap> = (0..d)
        .map(|_| {
            let a = Mat::from_fn(c, c, |i, j| if i == j { r.gen_range(0.4..1.6) } else { r.gen_range(-0.2..0.2) });
            FiberMap::from_parts(a, Vector::from_fn(c, |_, _| r.gen_range(-1.0..1.0))).unwrap()
        })
        .collect();
    let lo = maps.iter().map(|m| m.lip_lower()).fold(f64::INFINITY, f64::min);
    let hi = maps.iter().map(|m| m.lip_upper()).fold(0.0, f64::max);
    SkewSystem::one_step(maps, 0.1, 1.0, lo, 1.0 / hi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transition_search_is_optimal(seed in any::<u64>(), c in 1usize..=2, d in 2usize..=3, depth in 1usize..=6, n_src in 1usize..=3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(c, d, &mut r);
        let sources: Vec<Vec<f64>> = (0..n_src).map(|_| (0..c).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let centre: Vec<f64> = (0..c).map(|_| r.gen_range(-2.0..2.0)).collect();
        let target = Region::ball(centre, r.gen_range(0.05..0.5)).unwrap();
        let got = find_transition(&sys, &TransitionSource::Points(sources.clone()), &target, depth).unwrap();
        let want = brute_force(&sys, &sources, &target, depth);
        match (got, want) {
            (TransitionSearch::Found(w), Some((word, si))) => {
                let ids: Vec<usize> = w.word.iter().map(|s| s.id()).collect();
                prop_assert_eq!(ids, word);
                prop_assert_eq!(&w.source, &sources[si]);
                prop_assert!(w.margin > 0.0);
            }
            (TransitionSearch::NotFound { near_miss, .. }, None) => prop_assert!(near_miss <= 0.0),
            (g, w) => prop_assert!(false, "search {:?} against enumeration {:?}", g, w),
        }
    }

    #[test]
    fn codimension_formula(c in 2usize..10, i1 in 1usize..10, i2 in 1usize..10, ell in 1usize..10) {
        let valid = i1 < c && i2 < c && ell > i2.saturating_sub(i1) && ell <= (c - i1.min(c)).min(i2);
        match tangency_codimension(c, i1, i2, ell) {
            Ok((d_t, c_t)) => {
                prop_assert!(valid);
                prop_assert_eq!(d_t, ell);
                prop_assert_eq!(c_t as i64, ell as i64 - (i2 as i64 - i1 as i64));
            }
            Err(_) => prop_assert!(!valid),
        }
    }
}

#[test]
fn cycle_slack_is_recomputable_from_its_parts() {
    let (sys, cert) = build_cycle_scenario(2, 1, 1, 0.2).unwrap();
    assert!(cert.valid);
    let (b1, b2) = (&cert.cs.certificate.b, &cert.cu.certificate.b);
    let replay = |w: &skewblend::cycles_tangencies::TransitionWitness| {
        let mut y = w.source.clone();
        for s in &w.word {
            y = sys.map(*s).unwrap().apply(&y);
        }
        y
    };
    let mut parts = vec![
        cert.separation,
        cert.cs.certificate.slack(),
        cert.cu.certificate.slack(),
        b2.signed_distance(&replay(&cert.t12)),
        b1.signed_distance(&cert.t12.source),
        b1.signed_distance(&replay(&cert.t21)),
        b2.signed_distance(&cert.t21.source),
    ];
    for spec in [&cert.cs, &cert.cu] {
        if let Some(cm) = &spec.structural {
            parts.push(cm.slack());
        }
    }
    let min = parts.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((min - cert.slack).abs() <= 1e-12, "{min} vs {}", cert.slack);
}

#[test]
fn scenario_tangent_directions_are_the_carried_plane() {
    let (sys, cert) = build_tangency_scenario(2, 1, 1, 1, 0.2).unwrap();
    assert!(cert.valid, "{:?}", cert.failed_stage);
    assert!(cert.stage("projection").is_some_and(|s| s.valid));
    let rep = cert.tangent.as_ref().unwrap();
    let ell = cert.layout.ell;
    assert_eq!(rep.d_t, ell);
    assert!(rep.vectors[..ell].iter().all(|v| v.passes));
    assert!(rep.vectors[ell..].iter().all(|v| !v.passes));

    let point = cert.point.as_ref().unwrap();
    let frame = point.plane.frame();
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let c = sys.dim();
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for _ in 0..20 {
        let w: Vec<f64> = (0..ell).map(|_| r.gen_range(-1.0..1.0)).collect();
        inside.push((frame * Vector::from_vec(w)).iter().cloned().collect::<Vec<f64>>());
        outside.push((0..c).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
    }
    let (lambda, cb) = (rep.lambda, rep.c_bound);
    let a = detect_tangent_directions(&sys, (&point.xi, &point.x), &inside, rep.horizon, lambda, cb).unwrap();
    assert!(a.vectors.iter().all(|v| v.passes));
    assert_eq!(a.d_t, ell);
    let b = detect_tangent_directions(&sys, (&point.xi, &point.x), &outside, rep.horizon, lambda, cb).unwrap();
    assert!(b.vectors.iter().all(|v| !v.passes));
}
