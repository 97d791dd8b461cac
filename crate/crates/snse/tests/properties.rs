//! Property tests over random fields, paths and clouds.

use proptest::prelude::*;
use snse::attractor_lab::{hausdorff_dist, hausdorff_semidist};
use snse::fluid_operators::{apply_C, trilinear_b, OperatorContext};
use snse::io::{read_snapshot, write_snapshot};
use snse::ou_process::{ou_propagate, OUState, OuSpec};
use snse::seeding::{derive_seed, positioned_rng, tag};
use snse::spherical_spectral::{analyze, synthesize, SpectralField, Spectrum, Truncation};
use snse::stable_noise::{make_two_sided_path, StableParams};

fn trunc(l_max: usize) -> Truncation {
    Truncation::new(l_max, 2, Spectrum::Stokes).unwrap()
}

fn field(l_max: usize, seed: u64, slope: f64) -> SpectralField {
    SpectralField::random(trunc(l_max), slope, &mut positioned_rng(seed, 0, 0))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transform_round_trip(seed in any::<u64>(), l_max in 2usize..12) {
        let ctx = OperatorContext::dealiased(trunc(l_max), 0.0, 1.0).unwrap();
        let u = field(l_max, seed, 1.0);
        let back = analyze(&synthesize(&u, ctx.grid()).unwrap(), ctx.grid(), trunc(l_max)).unwrap();
        prop_assert!(back.sub(&u).unwrap().h_norm() <= 1e-12 * u.h_norm());
    }

    #[test]
    fn coriolis_is_skew(seed in any::<u64>(), omega in 0.0f64..10.0) {
        let ctx = OperatorContext::dealiased(trunc(9), omega, 1.0).unwrap();
        let u = field(9, seed, 0.5);
        prop_assert!(apply_C(&u, &ctx).h_inner(&u).abs() <= 1e-12 * u.h_norm_sq());
    }

    #[test]
    fn trilinear_form_cancels(s1 in any::<u64>(), s2 in any::<u64>()) {
        let ctx = OperatorContext::dealiased(trunc(10), 2.0, 1.0).unwrap();
        let u = field(10, s1, 1.0);
        let v = field(10, s2, 1.0);
        let b = trilinear_b(&u, &v, &v, &ctx).unwrap();
        prop_assert!(b.abs() <= 1e-10 * u.v_norm() * v.v_norm_sq(), "b = {b}");
        let antisym = trilinear_b(&u, &v, &u, &ctx).unwrap() + trilinear_b(&u, &u, &v, &ctx).unwrap();
        prop_assert!(antisym.abs() <= 1e-10 * u.v_norm_sq() * v.v_norm());
    }

    #[test]
    fn poincare_inequality(seed in any::<u64>(), slope in -1.0f64..3.0) {
        let u = field(12, seed, slope);
        let t = trunc(12);
        prop_assert!(u.v_norm_sq() >= t.lambda1() * u.h_norm_sq());
        prop_assert!(u.a_norm_sq() >= t.lambda1() * u.v_norm_sq());
    }

    #[test]
    fn snapshot_round_trip(seed in any::<u64>(), t in -100.0f64..100.0) {
        let u = field(8, seed, 1.0);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &u, t, "prop").unwrap();
        let (v, tt) = read_snapshot(&buf[..]).unwrap();
        prop_assert_eq!(u, v);
        prop_assert_eq!(t, tt);
    }

    #[test]
    fn hausdorff_is_a_metric_on_clouds(sa in any::<u64>(), sb in any::<u64>(), sc in any::<u64>(),
                                       na in 1usize..6, nb in 1usize..6, nc in 1usize..6) {
        let cloud = |s: u64, n: usize| (0..n).map(|i| field(4, derive_seed(s, tag::INIT, i as u64), 1.0)).collect::<Vec<_>>();
        let (a, b, c) = (cloud(sa, na), cloud(sb, nb), cloud(sc, nc));
        let ab = hausdorff_dist(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff_dist(&b, &a).unwrap());
        prop_assert_eq!(hausdorff_dist(&a, &a).unwrap(), 0.0);
        let ac = hausdorff_dist(&a, &c).unwrap();
        let cb = hausdorff_dist(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(hausdorff_semidist(&a, &b).unwrap() <= ab);
    }

    #[test]
    fn path_shift_composes(seed in any::<u64>(), a in 0i64..50, b in 0i64..50, k in -100i64..0) {
        let h = 0.01;
        let p = make_two_sided_path(&[StableParams::symmetric(1.5, 1.0)], h, -2.0, 2.0, seed).unwrap();
        let once = p.shift((a + b) as f64 * h).unwrap();
        let twice = p.shift(a as f64 * h).unwrap().shift(b as f64 * h).unwrap();
        prop_assert_eq!(once.increment(0, k), twice.increment(0, k));
        prop_assert_eq!(once.increment(0, k), p.increment(0, k + a + b));
    }

    #[test]
    fn ou_propagation_is_linear_in_the_start(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let spec = OuSpec::new(&trunc(6), 1.0, 2.0, 1.0, &[(2, 0), (3, 1)], &[0.5, 0.5], 1.5).unwrap();
        let p = make_two_sided_path(&spec.path_params(), 0.01, 0.0, 1.0, seed).unwrap();
        let mut s = OUState::zero(2, 0, 0.01);
        let zero_start = ou_propagate(&s, &spec, &p, 1.0).unwrap();
        s.values[1] = num_complex::Complex64::new(scale, -scale);
        let moved = ou_propagate(&s, &spec, &p, 1.0).unwrap();
        let a = spec.generator()[1];
        let expect = s.values[1] * (-a).exp();
        prop_assert!(((moved.values[1] - zero_start.values[1]) - expect).norm() <= 1e-12 * scale);
        prop_assert_eq!(moved.values[0], zero_start.values[0]);
    }

    #[test]
    fn derived_seeds_do_not_collide(base in any::<u64>()) {
        let mut seen = std::collections::BTreeSet::new();
        for t in [tag::PATH, tag::INIT, tag::PROBE, tag::MOMENT, tag::CONSTANT] {
            for i in 0..16 {
                prop_assert!(seen.insert(derive_seed(base, t, i)));
            }
        }
    }
}
