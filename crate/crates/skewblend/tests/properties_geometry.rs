//! Property tests for the Grassmannian metric, the lifted dynamics and cones.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewblend::cones::{cone_to_grassmann, verify_stable_cone, verify_unstable_cone, Cone};
use skewblend::grassmann::{apply_linear, lift_system, plane_distance, Plane};
use skewblend::linalg::{self, Mat, Vector};
use skewblend::regions::Region;
use skewblend::shift_space::Symbol;
use skewblend::skewproduct::{AffineMap, FiberMap, SkewSystem};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_orthogonal(n: usize, r: &mut ChaCha8Rng) -> Mat {
    let m = Mat::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    linalg::orthonormal_columns(&m).unwrap()
}

fn rotation(t: f64) -> Mat {
    linalg::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap()
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=5).prop_flat_map(|c| (Just(c), 1..c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_ignores_the_choice_of_frame((c, l) in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let e = Plane::random(c, l, &mut r).unwrap();
        let f = Plane::random(c, l, &mut r).unwrap();
        let d = plane_distance(&e, &f).unwrap();
        let e2 = Plane::new(&(e.frame() * random_orthogonal(l, &mut r))).unwrap();
        let f2 = Plane::new(&(f.frame() * random_orthogonal(l, &mut r))).unwrap();
        prop_assert!((plane_distance(&e2, &f2).unwrap() - d).abs() < 1e-10);
    }

    #[test]
    fn distance_lies_in_unit_interval((c, l) in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let e = Plane::random(c, l, &mut r).unwrap();
        let f = Plane::random(c, l, &mut r).unwrap();
        let d = plane_distance(&e, &f).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(plane_distance(&e, &e).unwrap() < 1e-12);
    }

    #[test]
    fn distance_matches_sup_inf_for_planes_in_space(seed in any::<u64>()) {
        // E, F are 2-planes in ℝ³; inf over F of |f − e| is |⟨e, n_F⟩|
        let mut r = rng(seed);
        let e = Plane::random(3, 2, &mut r).unwrap();
        let f = Plane::random(3, 2, &mut r).unwrap();
        let (u, v) = (e.frame().column(0).into_owned(), e.frame().column(1).into_owned());
        let n = f.frame().column(0).cross(&f.frame().column(1));
        let n = n.normalize();
        let k = 20_000;
        let oracle = (0..k)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / k as f64;
                (&u * t.cos() + &v * t.sin()).dot(&n).abs()
            })
            .fold(0.0, f64::max);
        let d = plane_distance(&e, &f).unwrap();
        prop_assert!(d >= oracle - 1e-12 && d - oracle < 1e-7, "{d} vs {oracle}");
    }

    #[test]
    fn distance_between_lines_is_sine(theta in -3.2f64..3.2) {
        let e = Plane::from_columns(&[vec![1.0, 0.0]]).unwrap();
        let f = Plane::from_columns(&[vec![theta.cos(), theta.sin()]]).unwrap();
        prop_assert!((plane_distance(&e, &f).unwrap() - theta.sin().abs()).abs() < 1e-9);
    }

    #[test]
    fn lifted_orbits_project_to_base_orbits(seed in any::<u64>(), word in prop::collection::vec(1u16..=3, 1..12)) {
        let mut r = rng(seed);
        let maps: Vec<FiberMap> = (0..3)
            .map(|_| {
                let a = rotation(r.gen_range(-0.2..0.2)) * linalg::diag(&[r.gen_range(0.85..0.95), r.gen_range(1.1..1.2)]);
                FiberMap::from_parts(a, Vector::from_fn(2, |_, _| r.gen_range(-1.0..1.0))).unwrap()
            })
            .collect();
        let sys = SkewSystem::one_step(maps, 0.5, 1.0, 0.8, 0.8).unwrap();
        let lift = lift_system(&sys, 1).unwrap();
        let mut x: Vec<f64> = vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let mut e = Plane::random(2, 1, &mut r).unwrap();
        let mut y = x.clone();
        for s in word {
            let (x2, e2) = lift.apply(Symbol(s), &x, &e).unwrap();
            y = sys.map(Symbol(s)).unwrap().apply(&y);
            prop_assert_eq!(&x2, &y);
            x = x2;
            e = e2;
        }
    }

    #[test]
    fn plane_action_obeys_the_derivative_estimate(seed in any::<u64>()) {
        // composed affine pieces: the plane action does not depend on x
        let mut r = rng(seed);
        let pieces: Vec<AffineMap> = (0..3)
            .map(|_| {
                let a = rotation(r.gen_range(-1.0..1.0)) * linalg::diag(&[r.gen_range(0.5..0.9), r.gen_range(1.1..1.6)]);
                AffineMap::new(a, Vector::from_fn(2, |_, _| r.gen_range(-1.0..1.0))).unwrap()
            })
            .collect();
        let f = FiberMap::composed(pieces).unwrap().with_l_d(0.01).unwrap();
        let e = Plane::random(2, 1, &mut r).unwrap();
        let x: Vec<f64> = vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let xp: Vec<f64> = vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let gamma = f.lip_lower();
        let d = plane_distance(&apply_linear(f.jacobian(), &e).unwrap(), &apply_linear(f.jacobian(), &e).unwrap()).unwrap();
        prop_assert!(d <= f.l_d() * linalg::dist(&x, &xp) / gamma + 1e-15);
    }
}

fn hyperbolic_system(a: f64, b: f64, twist: f64) -> SkewSystem {
    let m = |s: f64| {
        let lin = rotation(s * twist) * linalg::diag(&[a, b]) * rotation(-s * twist);
        FiberMap::from_parts(lin, Vector::zeros(2)).unwrap()
    };
    SkewSystem::one_step(vec![m(1.0), m(-1.0)], 0.05, 1.0, b, 1.0 / a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_cones_are_unstable_cones_of_the_inverse(a in 2.0f64..4.0, b in 0.2f64..0.5, twist in -0.05f64..0.05) {
        let sys = hyperbolic_system(a, b, twist);
        let cone = Cone::standard(2, 1, 0.5).unwrap();
        let stable = Cone::new(1, 0.5, linalg::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let region = Region::cube(&[0.0, 0.0], 1.0).unwrap();
        let u = verify_unstable_cone(&sys, &cone, &region, 0.8, 64, 1).unwrap();
        let s = verify_stable_cone(&sys.inverse_system().unwrap(), &cone, &region, 0.8, 64, 1).unwrap();
        prop_assert_eq!(u.valid, s.valid);
        prop_assert!((u.min_margin - s.min_margin).abs() < 1e-9);
        prop_assert!((u.min_expansion - s.min_expansion).abs() < 1e-9);
        let s2 = verify_stable_cone(&sys, &stable, &region, 0.8, 64, 1).unwrap();
        prop_assert!(s2.valid);
    }

    #[test]
    fn cone_certificates_survive_small_perturbations(a in 2.0f64..4.0, b in 0.2f64..0.5, twist in -0.05f64..0.05, seed in any::<u64>()) {
        let sys = hyperbolic_system(a, b, twist);
        let cone = Cone::standard(2, 1, 0.5).unwrap();
        let region = Region::cube(&[0.0, 0.0], 1.0).unwrap();
        let cert = verify_unstable_cone(&sys, &cone, &region, 0.9, 64, 1).unwrap();
        prop_assert!(cert.valid);
        let sigma = sys.maps().iter().map(|m| linalg::sigma_min(m.jacobian())).fold(f64::INFINITY, f64::min);
        let eta = 0.99 * cert.min_margin * sigma / 4.0;
        let mut r = rng(seed);
        let maps = sys
            .maps()
            .iter()
            .map(|m| {
                let e = Mat::from_fn(2, 2, |_, _| r.gen_range(-1.0..1.0));
                let e = &e * (eta / linalg::spectral_norm(&e));
                FiberMap::from_parts(m.jacobian() + e, m.total().b.clone()).unwrap()
            })
            .collect();
        let moved = sys.with_maps(maps).unwrap();
        prop_assert!(verify_unstable_cone(&moved, &cone, &region, 0.9, 64, 1).unwrap().valid);
    }

    #[test]
    fn invariant_cones_map_planes_into_planes(a in 2.0f64..4.0, b in 0.2f64..0.5, twist in -0.05f64..0.05, slope in -0.49f64..0.49) {
        let sys = hyperbolic_system(a, b, twist);
        let cone = Cone::standard(2, 1, 0.5).unwrap();
        let region = Region::cube(&[0.0, 0.0], 1.0).unwrap();
        prop_assume!(verify_unstable_cone(&sys, &cone, &region, 0.9, 64, 1).unwrap().valid);
        let e = Plane::from_columns(&[vec![1.0, slope]]).unwrap();
        prop_assert!(cone_to_grassmann(&cone, &e).unwrap().0);
        for m in sys.maps() {
            prop_assert!(cone_to_grassmann(&cone, &apply_linear(m.jacobian(), &e).unwrap()).unwrap().0);
        }
    }
}
