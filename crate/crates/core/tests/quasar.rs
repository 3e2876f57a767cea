mod common;

use std::sync::Arc;

use common::*;
use mintyvi::geometry::{BoxBody, ConvexBody, SimplexBody};
use mintyvi::linalg::{dot, from_f64 as vec_from_f64, sub, to_f64 as vec_to_f64, Vector};
use mintyvi::quasar::*;
use mintyvi::scalar::{from_f64, ArithMode};
use rug::Rational;

/// `[−2/5, 2/5]^d` with the minimizer off-center.
fn shifted_box(d: usize) -> Arc<dyn ConvexBody> {
    Arc::new(BoxBody::symmetric(d, q("2/5")))
}

fn minimizer(d: usize) -> Vec<f64> {
    [0.07, -0.05, 0.03][..d].to_vec()
}

/// `(λ, d, a, k)` for ten radial oscillators; the declared `λ` sits below the measured one.
fn catalogue() -> Vec<(&'static str, usize, f64, f64)> {
    vec![
        ("1", 1, 0.5, 3.0),
        ("1", 2, 0.5, 2.0),
        ("1", 3, 0.5, 3.0),
        ("1/2", 1, 0.5, 8.0),
        ("1/2", 2, 0.5, 4.0),
        ("1/2", 3, 0.5, 5.0),
        ("1/8", 1, 1.0, 5.0),
        ("1/8", 2, 1.0, 5.0),
        ("1/8", 3, 1.0, 4.0),
        ("1/8", 3, 1.0, 3.0),
    ]
}

fn rmax(d: usize) -> f64 {
    minimizer(d).iter().map(|c| (0.4 + c.abs()).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn catalogue_instances_are_quasar_convex() {
    for (lam, d, a, k) in catalogue() {
        let osc = RadialOscillator::new(minimizer(d), a, k);
        let lam_q = q(lam);
        assert!(osc.radial_lambda(rmax(d)) >= lam_q.to_f64(), "radial λ for a = {a}, k = {k}, d = {d}");
        let spec = osc.spec(shifted_box(d), lam_q.clone()).unwrap();
        let density = [0, 201, 41, 17][d];
        let grid = GridSpec::with_density(density);
        let xs: Vector = minimizer(d).iter().map(|v| from_f64(*v)).collect();
        let measured = estimate_lambda(&spec, &grid, Some(xs.clone())).unwrap();
        assert!(measured >= lam_q.to_f64(), "grid λ {measured} below {lam}");
        let v = validate_quasar(&spec, &grid, Some(xs)).unwrap();
        assert!(v.max_violation <= 1e-12, "violation {}", v.max_violation);
    }
}

#[test]
fn smooth_solver_reaches_the_grid_optimum() {
    let eps = q("1/10000");
    for (lam, d, a, k) in catalogue() {
        let osc = RadialOscillator::new(minimizer(d), a, k);
        let spec = osc.spec(shifted_box(d), q(lam)).unwrap();
        assert!(spec.lipschitz.is_none());
        let t = std::time::Instant::now();
        let out = solve_smooth(&spec, &eps, &SmoothConfig { mode: ArithMode::Float, ..Default::default() }).unwrap();
        let (_, grid_best) = grid_optimum(&spec, &GridSpec::with_density([0, 401, 61, 21][d])).unwrap();
        assert!(spec.body.membership(&out.point, &Rational::new()));
        assert!(out.value >= Rational::from(&grid_best - &eps), "λ = {lam}, d = {d}: {} vs {}", out.value.to_f64(), grid_best.to_f64());
        // the true minimum is 0 at the shifted center
        assert!(-out.value.to_f64() <= 1e-4);
        assert!(t.elapsed().as_secs() < 120);
    }
}

#[test]
fn convex_quadratic_on_the_square() {
    let target = qv(&["3/10", "-1/5"]);
    let (t1, t2) = (target.clone(), target.clone());
    let spec = SmoothViSpec::quasar_convex(
        "quadratic",
        Arc::new(BoxBody::symmetric(2, q("1"))),
        move |x: &[Rational]| Ok(mintyvi::scalar::norm2(&sub(x, &t1))),
        move |x: &[Rational]| Ok(sub(x, &t2).into_iter().map(|v| v * 2u32).collect()),
        q("6"),
        q("1"),
    )
    .unwrap();
    let eps = q("1/1000000");
    let out = solve_smooth(&spec, &eps, &SmoothConfig::default()).unwrap();
    let f = -out.value.clone();
    assert!(f <= eps, "f = {}", f.to_f64());
}

#[test]
fn smooth_solver_handles_a_flat_body() {
    // f(x) = ‖x − (1/2, 1/3, 1/6)‖² restricted to Δ(3)
    let t = qv(&["1/2", "1/3", "1/6"]);
    let (t1, t2) = (t.clone(), t.clone());
    let spec = SmoothViSpec::quasar_convex(
        "simplex quadratic",
        Arc::new(SimplexBody::new(3).unwrap()),
        move |x: &[Rational]| Ok(mintyvi::scalar::norm2(&sub(x, &t1))),
        move |x: &[Rational]| Ok(sub(x, &t2).into_iter().map(|v| v * 2u32).collect()),
        q("4"),
        q("1"),
    )
    .unwrap();
    let eps = q("1/100000");
    let out = solve_smooth(&spec, &eps, &SmoothConfig { mode: ArithMode::Float, ..Default::default() }).unwrap();
    assert_eq!(out.point.len(), 3);
    assert!(spec.body.membership(&out.point, &q("1/1000000000000")));
    assert!(-out.value.to_f64() <= 1e-5);
}

#[test]
fn square_root_corner_needs_no_lipschitz_constant() {
    // f(x) = (x₁ − 1/5)² + (x₂ + 3/10)² + ½(1 − x₁)^{3/2}: convex, gradient not Lipschitz at x₁ = 1
    let f = |x: &[f64]| (x[0] - 0.2).powi(2) + (x[1] + 0.3).powi(2) + 0.5 * (1.0 - x[0]).max(0.0).powf(1.5);
    let g = |x: &[f64]| vec![2.0 * (x[0] - 0.2) - 0.75 * (1.0 - x[0]).max(0.0).sqrt(), 2.0 * (x[1] + 0.3)];
    let spec = SmoothViSpec::quasar_convex(
        "corner",
        Arc::new(BoxBody::symmetric(2, q("1"))),
        move |x: &[Rational]| Ok(from_f64(f(&vec_to_f64(x)))),
        move |x: &[Rational]| Ok(vec_from_f64(&g(&vec_to_f64(x)))),
        q("5"),
        q("1"),
    )
    .unwrap();
    // the local Lipschitz ratio blows up near the corner
    let near = |h: f64| {
        let a = g(&[1.0 - h, 0.0]);
        let b = g(&[1.0, 0.0]);
        (a[0] - b[0]).abs() / h
    };
    assert!(near(1e-10) > 1e4);
    let eps = q("1/10000");
    let out = solve_smooth(&spec, &eps, &SmoothConfig { mode: ArithMode::Float, ..Default::default() }).unwrap();
    let (_, best) = grid_optimum(&spec, &GridSpec::with_density(301)).unwrap();
    assert!(out.value >= Rational::from(&best - &eps));
}

#[test]
fn convex_function_has_no_violation() {
    let spec = builtin_objective("quadratic", Arc::new(BoxBody::symmetric(2, q("1"))), q("1")).unwrap();
    let v = validate_quasar(&spec, &GridSpec::with_density(21), Some(qv(&["1/4", "-1/4"]))).unwrap();
    assert!(v.max_violation <= 0.0);
    assert_eq!(v.points, 21 * 21);
}

#[test]
fn concave_function_is_caught() {
    // f(x) = −x² on [−1, 1], minimized at the endpoints
    let spec = SmoothViSpec::quasar_convex(
        "concave",
        Arc::new(BoxBody::symmetric(1, q("1"))),
        |x: &[Rational]| Ok(-Rational::from(x[0].square_ref())),
        |x: &[Rational]| Ok(vec![Rational::from(&x[0] * -2i32)]),
        q("2"),
        q("1"),
    )
    .unwrap();
    let v = validate_quasar(&spec, &GridSpec::with_density(33), None).unwrap();
    assert!(v.max_violation > 0.0);
}

#[test]
fn svi_points_are_near_optimal() {
    // every grid point with SVI gap ≤ ε has f ≤ f* + ε/λ
    let (lam, d, a, k) = ("1/2", 2, 0.5, 4.0);
    let osc = RadialOscillator::new(minimizer(d), a, k);
    let spec = osc.spec(shifted_box(d), q(lam)).unwrap();
    let eps = q("1/20");
    let pts = body_grid(&spec.body, &GridSpec::with_density(41)).unwrap();
    let mut hits = 0;
    for x in &pts {
        let fx = spec.eval_field(x).unwrap();
        let y = spec.body.linear_min(&fx, &Rational::new()).unwrap();
        let gap = dot(&fx, &sub(x, &y));
        if gap <= eps {
            hits += 1;
            let f = -spec.eval_value(x).unwrap();
            assert!(f <= Rational::from(&eps / &q(lam)));
        }
    }
    assert!(hits > 0);
}

#[test]
fn strict_margin_away_from_the_optimum() {
    // ⟨F(a), a − x*⟩ ≥ λε whenever Q(a) ≤ Q(x*) − ε
    for (lam, d, a, k) in catalogue() {
        let osc = RadialOscillator::new(minimizer(d), a, k);
        let spec = osc.spec(shifted_box(d), q(lam)).unwrap();
        let xs: Vector = minimizer(d).iter().map(|v| from_f64(*v)).collect();
        let qs = spec.eval_value(&xs).unwrap();
        let eps = q("1/1000");
        for x in body_grid(&spec.body, &GridSpec::with_density([0, 101, 21, 9][d])).unwrap() {
            if spec.eval_value(&x).unwrap() <= Rational::from(&qs - &eps) {
                let m = dot(&spec.eval_field(&x).unwrap(), &sub(&x, &xs));
                assert!(m >= Rational::from(&q(lam) * &eps));
            }
        }
    }
}

#[test]
fn separable_welfare_game_reaches_optimal_welfare() {
    // u_i(x) = −(x_i − t_i)²: F_i = −∂u_i/∂x_i, SW = Σ u_i, (1, 0)-smooth
    let t = qv(&["1/3", "-1/2"]);
    let (t1, t2) = (t.clone(), t.clone());
    let spec = SmoothViSpec::new(
        "welfare",
        Arc::new(BoxBody::symmetric(2, q("1"))),
        move |x: &[Rational]| Ok(sub(x, &t1).into_iter().map(|v| v * 2u32).collect()),
        move |x: &[Rational]| Ok(-mintyvi::scalar::norm2(&sub(x, &t2))),
        q("6"),
        q("1"),
    )
    .unwrap();
    let eps = q("1/1000");
    let out = solve_smooth(&spec, &eps, &SmoothConfig::default()).unwrap();
    assert!(out.value >= -eps);
}

#[test]
fn parameters_follow_the_smooth_recipe() {
    let spec = builtin_objective("quadratic", Arc::new(BoxBody::symmetric(2, q("1"))), q("1/2")).unwrap();
    let eps = q("1/100");
    let p = smooth_params(&spec, &eps, &SmoothConfig::default()).unwrap();
    assert_eq!(p.gamma, q("1/200"));
    let r = spec.body.outer_radius();
    assert_eq!(p.r_cut, Rational::from(&p.gamma / &r) / &spec.bound / 16u32);
    assert_eq!(p.bits, 8 * p.iters as u32);
    assert!(spec.clone().with_nu(q("-2")).is_err());
    let off = spec.with_nu(q("0")).unwrap();
    assert!(solve_smooth(&off, &eps, &SmoothConfig::default()).is_err());
}
