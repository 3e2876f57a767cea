mod common;

use common::*;
use mintyvi::error::MintyError;
use mintyvi::games::{strictest_acce, DEFAULT_PROFILE_CAP};
use mintyvi::instances::*;
use mintyvi::linalg::{dot, sub, Vector};
use mintyvi::solver::{solve, svi_gap, SolverConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

/// `φ′_ε` in expanded monomial form.
fn phi_prime_expanded(e: &Rational, x: &Rational) -> Rational {
    let p = |k: u32| -> Rational { Rational::from(rug::ops::Pow::pow(e, k)) };
    let xp = |k: u32| -> Rational { Rational::from(rug::ops::Pow::pow(x, k)) };
    p(3) * 24u32 - xp(1) * (p(6) * 144u32 + p(2) * 44u32) + xp(2) * (p(5) * 576u32 + p(1) * 24u32)
        - xp(3) * (p(4) * 668u32 + 4u32)
        + p(3) * xp(4) * 200u32
        + p(2) * xp(5) * 84u32
        - p(1) * xp(6) * 56u32
        + xp(7) * 8u32
}

fn seeded_interval(rng: &mut ChaCha8Rng) -> HiddenInterval {
    let eps = Rational::from((1, rng.gen_range(7u64..40)));
    let span = Rational::from(1) - Rational::from(&eps * 2u32);
    let alpha = Rational::from(&span * Rational::from((rng.gen_range(0u64..=1000), 1000u64))) - &eps;
    make_hidden_interval(&eps, &alpha).unwrap()
}

fn one_var(x: &Rational) -> Vector {
    vec![x.clone()]
}

#[test]
fn phi_prime_matches_expanded_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let e = Rational::from((1, rng.gen_range(7u64..200)));
        let x = rand_q(&mut rng, -1, 1, 997);
        assert_eq!(phi_prime(&e, &x), phi_prime_expanded(&e, &x));
    }
}

#[test]
fn phi_minimum_and_roots() {
    for k in [7u64, 10, 33, 1000] {
        let e = Rational::from((1, k));
        let two = Rational::from(&e * 2u32);
        let e4 = Rational::from(rug::ops::Pow::pow(&e, 4u32));
        let want = -Rational::from(&e4 * &(Rational::from(&e4 * 16u32) + 1u32));
        assert_eq!(phi(&e, &two), want);
        assert_eq!(phi(&e, &e), 0);
        assert_eq!(phi(&e, &Rational::from(&e * 3u32)), 0);
        let hi = make_hidden_interval(&e, &Rational::new()).unwrap();
        assert_eq!(hi.min_value, want);
    }
}

#[test]
fn phi_prime_sign_pattern() {
    let e = Rational::from((1, 20));
    for k in 1..100u32 {
        let t = Rational::from((k, 100u32));
        let left = Rational::from(&e + Rational::from(&e * &t));
        let right = Rational::from(&e * 2u32) + Rational::from(&e * &t);
        assert!(phi_prime(&e, &left) < 0);
        assert!(phi_prime(&e, &right) > 0);
    }
}

#[test]
fn hidden_interval_preconditions() {
    let e = Rational::from((1, 10));
    assert!(matches!(make_hidden_interval(&Rational::from((1, 6)), &Rational::new()), Err(MintyError::ParameterOutOfRange(_))));
    assert!(matches!(make_hidden_interval(&Rational::new(), &Rational::new()), Err(MintyError::ParameterOutOfRange(_))));
    assert!(matches!(make_hidden_interval(&e, &Rational::from((-11, 100))), Err(MintyError::ParameterOutOfRange(_))));
    assert!(matches!(make_hidden_interval(&e, &Rational::from((71, 100))), Err(MintyError::ParameterOutOfRange(_))));
    assert!(make_hidden_interval(&e, &Rational::from((7, 10))).is_ok());
    assert!(make_hidden_interval(&e, &Rational::from((-1, 10))).is_ok());
}

#[test]
fn hidden_interval_field_vanishes_outside_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let hi = seeded_interval(&mut rng);
        let lo = Rational::from(&hi.alpha + &hi.eps);
        let up = Rational::from(&hi.alpha + Rational::from(&hi.eps * 3u32));
        for k in 0..=200u32 {
            let x = Rational::from((k, 200u32));
            if x <= lo || x >= up {
                assert_eq!(hi.field(&x), 0);
                assert_eq!(hi.value(&x), 0);
            }
        }
        assert_eq!(hi.problem.eval(&one_var(&lo)).unwrap()[0], 0);
    }
}

#[test]
fn hidden_interval_minty_point_on_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let hi = seeded_interval(&mut rng);
        assert_eq!(hi.problem.known_mvi.as_ref().unwrap()[0], hi.mvi_point);
        for k in 0..=2000u32 {
            let x = Rational::from((k, 2000u32));
            let lhs = hi.field(&x) * Rational::from(&x - &hi.mvi_point);
            assert!(lhs >= 0, "Minty inequality fails at {x}");
        }
    }
}

#[test]
fn hidden_interval_lipschitz_and_bound_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..8 {
        let hi = seeded_interval(&mut rng);
        let lo = Rational::from(&hi.alpha + &hi.eps);
        let width = Rational::from(&hi.eps * 2u32);
        let pts: Vec<Rational> = (0..=400u32).map(|k| Rational::from(&lo + Rational::from(&width * Rational::from((k, 400u32))))).collect();
        let vals: Vec<Rational> = pts.iter().map(|x| hi.field(x)).collect();
        for v in &vals {
            assert!(Rational::from(v.abs_ref()) <= hi.problem.bound);
        }
        for w in 0..pts.len() - 1 {
            let ratio = Rational::from(&vals[w + 1] - &vals[w]).abs() / Rational::from(&pts[w + 1] - &pts[w]);
            assert!(ratio <= hi.problem.lipschitz);
        }
        let e2 = Rational::from(hi.eps.square_ref());
        assert_eq!(hi.problem.lipschitz, e2 * HIDDEN_INTERVAL_LIP_C);
    }
}

#[test]
fn solver_output_does_not_reveal_hidden_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SolverConfig::new(Rational::from((1, 1000)));
    let mut located = 0;
    for _ in 0..20 {
        let hi = seeded_interval(&mut rng);
        let run = solve(&hi.problem, &cfg).unwrap();
        let x = run.point().expect("hidden interval is solvable");
        assert!(svi_gap(&hi.problem, &x, &Rational::new()).unwrap() <= Rational::from((1, 1000)));
        let lo = Rational::from(&hi.alpha + &hi.eps);
        let up = Rational::from(&hi.alpha + Rational::from(&hi.eps * 3u32));
        if x[0] > lo && x[0] < up {
            located += 1;
        }
    }
    assert!(located < 20);
}

#[test]
fn collapse_field_values() {
    let c = make_collapse_field();
    let q = |v: &[i64]| -> Vector { v.iter().map(|&x| Rational::from(x)).collect() };
    assert_eq!(collapse_field(&q(&[0, 0])), q(&[0, 0]));
    assert_eq!(collapse_field(&q(&[0, -1])), q(&[1, 0]));
    assert_eq!(collapse_field(&q(&[0, 1])), q(&[-3, 0]));
    assert_eq!(c.minty_point, q(&[0, 0]));
    let w: Rational = c.evi.iter().map(|(w, _)| w.clone()).sum();
    assert_eq!(w, 1);
}

#[test]
fn collapse_field_is_orthogonal_to_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let x = rand_vec(&mut rng, 2, -1, 1, 1 << 12);
        assert_eq!(dot(&collapse_field(&x), &x), 0);
    }
}

#[test]
fn collapse_evi_and_mean_gap() {
    let c = make_collapse_field();
    // E_μ⟨F(x), x′ − x⟩ = ⟨E_μ F, x′⟩ since ⟨F(x), x⟩ = 0
    let mut avg = vec![Rational::new(); 2];
    let mut mean = vec![Rational::new(); 2];
    for (w, p) in &c.evi {
        let f = collapse_field(p);
        for i in 0..2 {
            avg[i] += Rational::from(w * &f[i]);
            mean[i] += Rational::from(w * &p[i]);
        }
    }
    assert_eq!(avg, vec![Rational::new(), Rational::new()]);
    assert_eq!(mean, vec![Rational::new(), Rational::from((-1, 2))]);
    assert_eq!(svi_gap(&c.problem, &mean, &Rational::new()).unwrap(), Rational::from((3, 4)));
    for (_, p) in &c.evi {
        assert!(svi_gap(&c.problem, p, &Rational::new()).unwrap() >= Rational::from((1, 5)));
    }
}

#[test]
fn orthant_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    for _ in 0..1000 {
        let d = rng.gen_range(1..5);
        let c: Vec<i8> = (0..d).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let o = make_hidden_orthant(&c).unwrap();
        let x: Vec<f64> = c.iter().map(|&s| s as f64 * rng.gen_range(0.0..1.0)).collect();
        let f = |y: &[f64]| -> f64 {
            let r2: f64 = y.iter().zip(&c).map(|(a, &s)| (a - s as f64).powi(2)).sum();
            -(1.0 - r2).max(0.0).powi(2)
        };
        let g = o.gradient(&x.iter().map(|v| Rational::from_f64(*v).unwrap()).collect::<Vec<_>>());
        for i in 0..d {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!(close(fd, g[i].to_f64(), 1e-6), "{fd} vs {}", g[i].to_f64());
        }
    }
}

#[test]
fn orthant_gradient_zero_off_orthant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let d = rng.gen_range(1..5);
        let c: Vec<i8> = (0..d).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let o = make_hidden_orthant(&c).unwrap();
        let mut x = rand_vec(&mut rng, d, -1, 1, 64);
        let flip = rng.gen_range(0..d);
        x[flip] = Rational::from(-c[flip]) * Rational::from(x[flip].abs_ref());
        assert!(o.gradient(&x).iter().all(|v| *v == 0));
        assert_eq!(o.value(&x), 0);
    }
    assert!(matches!(make_hidden_orthant(&[1, 0]), Err(MintyError::ParameterOutOfRange(_))));
}

#[test]
fn orthant_corner_is_minty() {
    let o = make_hidden_orthant(&[1, -1]).unwrap();
    let c = vec![Rational::from(1), Rational::from(-1)];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let x = rand_vec(&mut rng, 2, -1, 1, 128);
        assert!(dot(&o.problem.eval(&x).unwrap(), &sub(&x, &c)) >= 0);
    }
}

#[test]
fn copositive_examples() {
    let q = |v: i64| Rational::from(v);
    let id = make_copositive_field(vec![vec![q(1), q(0)], vec![q(0), q(1)]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let x = rand_vec(&mut rng, 2, 0, 1, 64);
        assert!(dot(&id.problem.eval(&x).unwrap(), &x) >= 0);
        assert!(!id.refutes_zero(&x));
    }
    let bad = make_copositive_field(vec![vec![q(1), q(-3)], vec![q(-3), q(1)]]).unwrap();
    let one = vec![q(1), q(1)];
    assert!(bad.refutes_zero(&one));
    assert_eq!(dot(&bad.problem.eval(&one).unwrap(), &one), -8);
    let zero = make_copositive_field(vec![vec![q(0); 3]; 3]).unwrap();
    let x = rand_vec(&mut rng, 3, 0, 1, 64);
    assert!(zero.problem.eval(&x).unwrap().iter().all(|v| *v == 0));
    assert_eq!(svi_gap(&zero.problem, &x, &Rational::new()).unwrap(), 0);
    assert!(make_copositive_field(vec![vec![q(0), q(1)], vec![q(2), q(0)]]).is_err());
}

fn single_clause() -> BilinearHardness {
    let clauses = parse_clauses(&[vec![1, 2]], 2).unwrap();
    make_bilinear_hardness(clauses, 2, Rational::new()).unwrap()
}

fn bits(mask: u64, k: usize) -> Vector {
    (0..k).map(|i| Rational::from((mask >> i & 1) as u32)).collect()
}

#[test]
fn clause_parsing_errors() {
    assert!(matches!(parse_clauses(&[vec![1, 2, 3]], 3), Err(MintyError::MalformedClause(_))));
    assert!(matches!(parse_clauses(&[vec![1]], 3), Err(MintyError::MalformedClause(_))));
    assert!(matches!(parse_clauses(&[vec![1, 0]], 3), Err(MintyError::MalformedClause(_))));
    assert!(matches!(parse_clauses(&[vec![1, 4]], 3), Err(MintyError::MalformedClause(_))));
    let c = parse_clauses(&[vec![-1, 2]], 2).unwrap();
    assert_eq!(c[0][0], Literal { var: 0, negated: true });
}

#[test]
fn single_clause_optimum_is_one() {
    let h = single_clause();
    let mut best = Rational::from(-1);
    for cm in 0..2 {
        for xm in 0..4 {
            best = best.max(h.f.value(&bits(cm, 1), &bits(xm, 2)));
        }
    }
    assert_eq!(best, 1);
    assert_eq!(h.max_fraction, Some(Rational::from(1)));
}

/// `f` at 0/1 points equals the fraction of clauses whose chosen literal holds.
#[test]
fn bilinear_map_counts_chosen_literals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(2..6);
        let m = rng.gen_range(1..6);
        let raw: Vec<Vec<i64>> = (0..m)
            .map(|_| {
                (0..2)
                    .map(|_| {
                        let v = rng.gen_range(1..=n as i64);
                        if rng.gen_bool(0.5) { v } else { -v }
                    })
                    .collect()
            })
            .collect();
        let h = make_bilinear_hardness(parse_clauses(&raw, n).unwrap(), n, Rational::new()).unwrap();
        let mut best = Rational::new();
        for xm in 0..1u64 << n {
            let x = bits(xm, n);
            let truth = |l: &Literal| (xm >> l.var & 1 == 1) != l.negated;
            for cm in 0..1u64 << m {
                let c = bits(cm, m);
                let count = h.clauses.iter().enumerate().filter(|(j, cl)| truth(&cl[(cm >> j & 1) as usize])).count();
                let v = h.f.value(&c, &x);
                assert_eq!(v, Rational::from((count as u64, m as u64)));
                best = best.max(v);
            }
        }
        assert_eq!(Some(best), h.max_fraction);
    }
}

#[test]
fn homogenized_map_agrees_at_unit_slack() {
    let h = make_bilinear_hardness(parse_clauses(&[vec![1, -2], vec![-1, 3], vec![2, 3]], 3).unwrap(), 3, Rational::new()).unwrap();
    let fh = h.homogenized();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let c = rand_vec(&mut rng, 3, 0, 1, 16);
        let x = rand_vec(&mut rng, 3, 0, 1, 16);
        let s = rand_q(&mut rng, 0, 1, 16);
        let t = rand_q(&mut rng, 0, 1, 16);
        let mut ch = c.clone();
        ch.push(Rational::from(1));
        let mut xh = x.clone();
        xh.push(Rational::from(1));
        assert_eq!(fh.value(&ch, &xh), h.f.value(&c, &x));
        // degree-one homogeneity in each block
        let cs: Vector = c.iter().map(|v| Rational::from(v * &s)).chain([s.clone()]).collect();
        let xt: Vector = x.iter().map(|v| Rational::from(v * &t)).chain([t.clone()]).collect();
        assert_eq!(fh.value(&cs, &xt), h.f.value(&c, &x) * &s * &t);
    }
}

fn cone_point(rng: &mut ChaCha8Rng, k: usize) -> Vector {
    let s = rand_q(rng, 0, 1, 32);
    let mut y: Vector = (0..k).map(|_| Rational::from(&s * rand_q(rng, 0, 1, 32))).collect();
    y.push(s);
    y
}

#[test]
fn zero_strategy_dominant_when_v_at_least_max() {
    // (x₁ ∨ x₂) ∧ (¬x₁ ∨ ¬x₂) ∧ (x₁ ∨ ¬x₂) ∧ (¬x₁ ∨ x₂): at most 3/4 satisfiable
    let raw = vec![vec![1, 2], vec![-1, -2], vec![1, -2], vec![-1, 2]];
    let h = make_bilinear_hardness(parse_clauses(&raw, 2).unwrap(), 2, Rational::from(1)).unwrap();
    assert_eq!(h.max_fraction, Some(Rational::from((3, 4))));
    let g = h.two_player_game().unwrap();
    let u1 = |a: &[Rational], b: &[Rational]| -> Rational {
        let p = g.values.as_ref().unwrap();
        (p[0])(a, b).unwrap()
    };
    let zero = vec![Rational::new(); h.m() + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let a = cone_point(&mut rng, h.m());
        let b = cone_point(&mut rng, h.vars);
        assert!(u1(&zero, &b) >= u1(&a, &b));
    }
}

#[test]
fn satisfiable_formula_has_strict_acce() {
    let h = single_clause();
    assert_eq!(h.eps_c(), Some(Rational::from(1)));
    let g = h.multiplayer_game();
    assert_eq!(g.players(), 5);
    let sol = strictest_acce(&g, DEFAULT_PROFILE_CAP).unwrap();
    assert!(sol.value < 0);
}

#[test]
fn multiplayer_and_two_player_utilities_agree() {
    let h = make_bilinear_hardness(parse_clauses(&[vec![1, -2], vec![2, 2]], 2).unwrap(), 2, Rational::from((1, 3))).unwrap();
    let g2 = h.two_player_game().unwrap();
    let gm = h.multiplayer_game();
    let (m, n) = (h.m(), h.vars);
    let u1 = g2.values.as_ref().unwrap()[0].clone();
    for k in 0..1u64 << (m + n + 2) {
        let a: Vec<usize> = (0..m + n + 2).map(|i| (k >> i & 1) as usize).collect();
        let u = gm.utilities(&a).unwrap();
        let s = a[m + n];
        let t = a[m + n + 1];
        let feasible = a[..m].iter().all(|&c| c <= s) && a[m..m + n].iter().all(|&x| x <= t);
        if !feasible {
            continue;
        }
        let mut p1: Vector = a[..m].iter().map(|&v| Rational::from(v as u32)).collect();
        p1.push(Rational::from(s as u32));
        let mut p2: Vector = a[m..m + n].iter().map(|&v| Rational::from(v as u32)).collect();
        p2.push(Rational::from(t as u32));
        assert_eq!(u[m + n], u1(&p1, &p2).unwrap());
        assert!(u.iter().enumerate().all(|(i, v)| i == m + n || *v == 0));
    }
}

#[test]
fn hardness_rejects_bad_input() {
    assert!(matches!(make_bilinear_hardness(vec![], 2, Rational::new()), Err(MintyError::MalformedClause(_))));
    let c = parse_clauses(&[vec![1, 3]], 3).unwrap();
    assert!(matches!(make_bilinear_hardness(c, 2, Rational::new()), Err(MintyError::MalformedClause(_))));
}

#[test]
fn noopt_desk_tier() {
    let r = run_noopt_experiment(384, 200).unwrap();
    assert_eq!(r.iterations, 200);
    assert!(r.precision_failure.is_none());
    assert!(!r.duplicate_queries);
    assert!(r.feasible_region_nonempty && r.center_in_region);
    assert!(r.min_svi_gap >= 0.5);
    assert!(r.max_center_norm < 0.481);
    assert!(r.max_lipschitz_ratio < 8.0);
    assert!(r.min_short_axis_log10 < -30.0);
    assert_eq!(r.max_direction_norm_error, 0.0);
    assert!(r.max_steer_error < 1e-20);
    for (t, row) in r.rows.iter().enumerate() {
        assert_eq!(row.step, t);
        assert_eq!(row.direction[1] > 0.0, t % 2 == 0);
    }
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn noopt_bit_budget_runs_out() {
    // about 1.56 bits are consumed per iteration
    let r = run_noopt_experiment(256, 200).unwrap();
    assert!(r.precision_failure.is_some());
    assert!(r.iterations > 150 && r.iterations < 200);
    assert!(!r.duplicate_queries && r.min_svi_gap >= 0.5);
    let r = run_noopt_experiment(128, 1293).unwrap();
    assert!(r.precision_failure.is_some());
    assert!(r.iterations > 0 && r.iterations < 1293);
    assert_eq!(r.rows.len(), r.iterations);
    assert!(matches!(run_noopt_experiment(64, 10), Err(MintyError::ParameterOutOfRange(_))));
}

#[test]
#[ignore = "2048-bit run of 1293 iterations"]
fn noopt_full_tier() {
    let r = run_noopt_experiment(2048, 1293).unwrap();
    assert_eq!(r.iterations, 1293);
    assert!(r.feasible_region_nonempty);
    assert!(r.min_short_axis_log10 < (1.498e-219f64).log10());
    assert!(r.max_center_norm < 0.481);
    assert!(r.min_svi_gap >= 0.519);
    assert!(r.max_lipschitz_ratio < 7.997);
    assert!(!r.duplicate_queries);
}

proptest! {
    #[test]
    fn collapse_field_bound_holds(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let c = make_collapse_field();
        let p = vec![Rational::from_f64(x).unwrap(), Rational::from_f64(y).unwrap()];
        let f = c.problem.eval(&p).unwrap();
        prop_assert!(dot(&f, &f) <= Rational::from(c.problem.bound.square_ref()));
    }

    #[test]
    fn hidden_interval_field_bounded(k in 0u32..10_000, j in 7u64..100) {
        let e = Rational::from((1, j));
        let hi = make_hidden_interval(&e, &Rational::new()).unwrap();
        let x = Rational::from((k, 10_000u32));
        prop_assert!(Rational::from(hi.field(&x).abs_ref()) <= hi.problem.bound);
    }
}
