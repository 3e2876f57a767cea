mod common;

use common::*;
use mintyvi::ellipsoid::*;
use mintyvi::linalg::{dot, mat_mul, sub, transpose, Matrix, Vector};
use mintyvi::scalar::{ArithMode, BigFloat, Exact};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

#[test]
fn unit_disc_first_cut() {
    let e: Ellipsoid<Exact> = Ellipsoid::ball(2, &q("1"), 200);
    let n = e.step(&qv(&["1", "0"])).unwrap();
    let a = n.center_rational();
    let s = n.shape_rational();
    let tol = Rational::from(1) >> 199u32;
    assert!(Rational::from(&a[0] + qi(1, 3)).abs() < tol);
    assert_eq!(a[1], 0);
    assert!(Rational::from(&s[0][0] - qi(11, 24)).abs() < tol);
    assert_eq!(s[1][1], qi(11, 8));
    assert_eq!(s[0][1], 0);
    assert_eq!(s[1][0], 0);
}

#[test]
fn float_backend_matches_exact_first_cut() {
    let e: Ellipsoid<BigFloat> = Ellipsoid::ball(2, &q("1"), 200);
    let n = e.step(&qv(&["1", "0"])).unwrap();
    assert!(close(n.center_rational()[0].to_f64(), -1.0 / 3.0, 1e-15));
    assert!(close(n.shape_rational()[0][0].to_f64(), 11.0 / 24.0, 1e-15));
    assert!(close(n.shape_rational()[1][1].to_f64(), 11.0 / 8.0, 1e-15));
}

#[test]
fn opposite_cuts_both_shrink() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in [1usize, 2, 4] {
        let e = AnyEllipsoid::ball(ArithMode::Rational, d, &q("3"), 256);
        let c = rand_vec(&mut rng, d, -3, 3, 5);
        if c.iter().all(|v| *v == 0) {
            continue;
        }
        let neg: Vector = c.iter().map(|v| Rational::from(-v)).collect();
        let v0 = e.log2_volume().unwrap();
        let e1 = e.step(&c).unwrap();
        let v1 = e1.log2_volume().unwrap();
        let e2 = e1.step(&neg).unwrap();
        let v2 = e2.log2_volume().unwrap();
        assert!(v1 < v0 && v2 < v1, "d = {d}: {v0} {v1} {v2}");
    }
}

/// Random `M` with `A = M Mᵀ`, so that `a + M u` lies in `E(A, a)` for `‖u‖ ≤ 1`.
fn random_factor(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let mut m = vec![vec![Rational::new(); d]; d];
    for i in 0..d {
        for j in 0..=i {
            m[i][j] = if i == j { rand_q(rng, 1, 3, 4) } else { rand_q(rng, -1, 1, 4) };
        }
    }
    m
}

fn unit_ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    loop {
        let u = rand_vec(rng, d, -1, 1, 1024);
        if mintyvi::scalar::norm2(&u) <= 1 {
            return u;
        }
    }
}

#[test]
fn half_ellipsoid_samples_lie_in_the_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for d in [2usize, 3] {
        for _ in 0..5 {
            let m = random_factor(&mut rng, d);
            let a = mat_mul(&m, &transpose(&m));
            let center = rand_vec(&mut rng, d, -1, 1, 8);
            let e = AnyEllipsoid::Exact(Ellipsoid::from_rational(&a, &center, 128));
            let c = rand_vec(&mut rng, d, -2, 2, 3);
            if c.iter().all(|v| *v == 0) {
                continue;
            }
            let next = e.step(&c).unwrap();
            let mut k = 0;
            while k < 1000 {
                let u = unit_ball_point(&mut rng, d);
                let x: Vector = mintyvi::linalg::add(&center, &mintyvi::linalg::mat_vec(&m, &u));
                if dot(&c, &sub(&x, &center)) > 0 {
                    continue;
                }
                assert!(e.contains(&x));
                assert!(next.contains(&x), "sample escaped the updated ellipsoid");
                k += 1;
                checked += 1;
            }
        }
    }
    assert!(checked >= 10_000);
}

#[test]
fn always_cut_volume_follows_the_bound() {
    let d = 2;
    let r2 = q("2");
    let cfg = EngineConfig::new(d, r2.clone(), q("1/1000000"), ArithMode::Float).with_iters(120);
    let run = run_engine::<()>(&cfg, |_, t| {
        let s = if t % 2 == 0 { "1" } else { "-1" };
        Ok(Query::Cut { normal: qv(&[s, "0"]), kind: CutKind::External })
    })
    .unwrap();
    let ln2r = (2.0f64 * 2f64.sqrt()).ln();
    for (k, s) in run.trace.steps.iter().enumerate() {
        let bound = d as f64 * ln2r - (k + 1) as f64 / (5.0 * d as f64);
        assert!(s.volume_log2_upper * std::f64::consts::LN_2 <= bound + 1e-9, "step {k}");
    }
}

#[test]
fn iteration_count_formula() {
    let t = default_iters(2, &q("2"), &q("1/1000000"));
    let expect = (10.0 * 1e6f64.ln() + 20.0 * (2.0 * 2f64.sqrt()).ln()).ceil() as usize;
    assert_eq!(t, expect);
    assert_eq!(default_bits(t), 8 * t as u32);
    let cfg = EngineConfig::new(2, q("2"), q("1/1000000"), ArithMode::Float);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let run = run_engine::<()>(&cfg, |_, _| {
        let c = vec![Rational::from(rng.gen_range(-4i32..=4)), Rational::from(rng.gen_range(1i32..=4))];
        Ok(Query::Cut { normal: c, kind: CutKind::External })
    })
    .unwrap();
    assert!(matches!(run.end, EngineEnd::SmallVolume(_)));
    assert!(run.trace.steps.len() <= t);
}

#[test]
fn immediate_acceptance_returns_origin() {
    let cfg = EngineConfig::new(3, q("4"), q("1/1000"), ArithMode::Rational);
    let run = run_engine(&cfg, |a, _| Ok(Query::Found(a.to_vec()))).unwrap();
    match run.end {
        EngineEnd::Found(x) => assert!(x.iter().all(|v| *v == 0)),
        _ => panic!("expected acceptance"),
    }
    assert!(run.trace.steps.is_empty());
}

fn random_cut_run(seed: u64, d: usize, mode: ArithMode, steps: usize) -> EngineRun<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EngineConfig { dim: d, radius_sq: q("2"), volume: None, max_iters: steps, bits: 8 * steps as u32, mode };
    run_engine::<()>(&cfg, |_, _| {
        let c = rand_vec(&mut rng, d, -5, 5, 3);
        let c = if c.iter().all(|v| *v == 0) { vec![Rational::from(1); d] } else { c };
        Ok(Query::Cut { normal: c, kind: CutKind::External })
    })
    .unwrap()
}

#[test]
fn norm_bounds_and_definiteness_hold_along_random_runs() {
    for d in [2usize, 3, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let mut e = AnyEllipsoid::ball(ArithMode::Rational, d, &q("2"), 400);
        for _ in 0..50 {
            let c = rand_vec(&mut rng, d, -5, 5, 3);
            if c.iter().all(|v| *v == 0) {
                continue;
            }
            e = e.step(&c).unwrap();
            assert!(e.check_norm_bounds(&q("2")));
            assert!(e.summary().is_some());
        }
    }
}

#[test]
fn per_step_volume_ratio_is_bounded() {
    for d in [2usize, 3, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + d as u64);
        let mut e = AnyEllipsoid::ball(ArithMode::Float, d, &q("2"), 1024);
        let bound = (-1.0 / (5.0 * d as f64)).exp() + 1e-6;
        let mut prev = e.log2_volume().unwrap();
        for _ in 0..60 {
            let c = rand_vec(&mut rng, d, -5, 5, 3);
            if c.iter().all(|v| *v == 0) {
                continue;
            }
            e = e.step(&c).unwrap();
            let v = e.log2_volume().unwrap();
            assert!((v - prev).exp2() <= bound);
            prev = v;
        }
    }
}

#[test]
fn traces_are_deterministic() {
    let strip = |mut t: IterationTrace| {
        for s in &mut t.steps {
            s.elapsed_us = 0;
        }
        t
    };
    let a = strip(random_cut_run(42, 3, ArithMode::Rational, 40).trace);
    let b = strip(random_cut_run(42, 3, ArithMode::Rational, 40).trace);
    assert_eq!(a, b);
    let csv = a.to_csv();
    assert!(csv.starts_with("step,cut_kind,volume_log2_upper,min_axis,max_axis,center_0"));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn backends_track_each_other() {
    let a = random_cut_run(7, 3, ArithMode::Rational, 30);
    let b = random_cut_run(7, 3, ArithMode::Float, 30);
    for (x, y) in a.trace.steps.iter().zip(&b.trace.steps) {
        assert!((x.volume_log2_upper - y.volume_log2_upper).abs() < 1e-9);
        assert!((x.min_axis_log2 - y.min_axis_log2).abs() < 1e-6);
    }
}

#[test]
fn one_dimensional_cut_halves_the_interval() {
    let e: Ellipsoid<Exact> = Ellipsoid::ball(1, &q("1"), 64);
    let n = e.step(&qv(&["1"])).unwrap();
    let a = n.center_rational()[0].clone();
    let s = n.shape_rational()[0][0].clone();
    assert_eq!(a, qi(-1, 2));
    // [-1, 0] must lie inside: radius √s ≥ 1/2
    assert!(s >= qi(1, 4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn cuts_keep_the_shape_positive_definite(cs in prop::collection::vec(prop::collection::vec(-9i64..9, 3), 1..25)) {
        let mut e = AnyEllipsoid::ball(ArithMode::Rational, 3, &Rational::from(2), 256);
        for c in cs {
            let c: Vector = c.into_iter().map(Rational::from).collect();
            if c.iter().all(|v| *v == 0) {
                continue;
            }
            let before = e.log2_volume().unwrap();
            e = e.step(&c).unwrap();
            prop_assert!(e.summary().is_some());
            prop_assert!(e.log2_volume().unwrap() < before);
        }
    }
}
