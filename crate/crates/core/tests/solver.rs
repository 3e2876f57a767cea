use std::sync::Arc;

use mintyvi::geometry::BoxBody;
use mintyvi::linalg::sub;
use mintyvi::problem::ViProblem;
use mintyvi::scalar::{parse_rational, ArithMode};
use mintyvi::solver::{solve, svi_gap, SolverConfig};
use rug::Rational;

fn q(s: &str) -> Rational {
    parse_rational(s).unwrap()
}

fn shifted_identity(xstar: Vec<Rational>) -> ViProblem {
    let d = xstar.len();
    let target = xstar.clone();
    ViProblem::new(
        "shifted identity",
        Arc::new(BoxBody::symmetric(d, Rational::from(1))),
        move |x: &[Rational]| Ok(sub(x, &target)),
        Rational::from(1),
        Rational::from(2 * d as u32),
    )
    .with_known_mvi(xstar)
}

#[test]
fn shifted_identity_reaches_tiny_gap() {
    let p = shifted_identity(vec![q("3/10"), q("-1/5")]);
    let eps = q("1/1000000");
    let t = std::time::Instant::now();
    let out = solve(&p, &SolverConfig::new(eps.clone())).unwrap();
    let x = out.point().expect("svi point");
    let gap = svi_gap(&p, &x, &Rational::new()).unwrap();
    eprintln!("iters {} gap {} in {:?}", out.outcome.iterations, gap.to_f64(), t.elapsed());
    assert!(gap <= eps);
}

#[test]
fn float_mode_agrees() {
    let p = shifted_identity(vec![q("3/10"), q("-1/5")]);
    let eps = q("1/1000000");
    let t = std::time::Instant::now();
    let out = solve(&p, &SolverConfig::new(eps.clone()).with_mode(ArithMode::Float)).unwrap();
    let x = out.point().expect("svi point");
    eprintln!("iters {} in {:?}", out.outcome.iterations, t.elapsed());
    assert!(svi_gap(&p, &x, &Rational::new()).unwrap() <= eps);
}


use mintyvi::certificates::{evi_gap, extract_strict_evi, verify_infeasibility_witness};
use mintyvi::error::MintyError;
use mintyvi::games::{cyclic_polymatrix, game_operator, matching_pennies};
use mintyvi::instances::random_monotone_affine;
use mintyvi::linalg::dot;
use mintyvi::solver::{max_weak_minty_rho, solve_observed, solve_weak_minty, SolveStatus, SolverParams};
use proptest::prelude::*;

#[test]
fn margin_matches_the_closed_form() {
    let p = shifted_identity(vec![q("1/2"), q("0")]);
    let mut cfg = SolverConfig::new(q("1/100"));
    cfg.proj_tol = Some(Rational::new());
    let par = SolverParams::derive(&p, &cfg).unwrap();
    // gamma = eps^2 L / (B + 4 R L)^2 with R = sqrt 2 bounded above by the body
    let r = par.radius.clone();
    let expect = q("1/10000") / (Rational::from(4) + r * 4u32).square();
    assert_eq!(par.gamma, expect);
    assert_eq!(par.gamma_eff, par.gamma);
}

#[test]
fn inexact_projection_shrinks_the_margin() {
    let p = shifted_identity(vec![q("1/2"), q("0")]);
    let par = SolverParams::derive(&p, &SolverConfig::new(q("1/100"))).unwrap();
    assert!(par.proj_tol > 0);
    assert!(par.gamma_eff < par.gamma);
    assert!(par.gamma_eff > Rational::from(&par.gamma / 2u32));
}

#[test]
fn nonpositive_epsilon_is_rejected() {
    let p = shifted_identity(vec![q("0"), q("0")]);
    for e in ["0", "-1/2"] {
        assert!(matches!(solve(&p, &SolverConfig::new(q(e))), Err(MintyError::ParameterOutOfRange(_))));
    }
}

#[test]
fn every_cut_protects_the_known_solution() {
    for seed in 0..6 {
        let inst = random_monotone_affine(2 + seed as usize % 3, seed).unwrap();
        let mut events = Vec::new();
        let out = solve_observed(&inst.problem, &SolverConfig::new(q("1/1000")), &mut |e| events.push(e.clone())).unwrap();
        assert!(out.point().is_some());
        for e in &events {
            let slack = dot(&e.f_tilde, &e.center) - dot(&e.f_tilde, &inst.x_star);
            assert!(slack >= e.gamma_eff, "seed {seed} step {}", e.step);
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let inst = random_monotone_affine(3, 11).unwrap();
    let cfg = SolverConfig::new(q("1/1000"));
    let a = solve(&inst.problem, &cfg).unwrap();
    let b = solve(&inst.problem, &cfg).unwrap();
    assert_eq!(a.outcome.trace.to_csv(), b.outcome.trace.to_csv());
    assert_eq!(a.point(), b.point());
}

#[test]
fn simplex_product_goes_through_the_chart() {
    let p = game_operator(&matching_pennies()).unwrap();
    let eps = q("1/10000");
    let out = solve(&p, &SolverConfig::new(eps.clone())).unwrap();
    assert!(out.reduced.dim() < p.dim());
    let x = out.point().unwrap();
    assert_eq!(x.len(), 4);
    assert_eq!(x[0].clone() + &x[1], 1);
    assert_eq!(x[2].clone() + &x[3], 1);
    assert!(svi_gap(&p, &x, &Rational::new()).unwrap() <= eps);
}

#[test]
fn capped_run_on_a_cyclic_game_yields_a_strict_certificate() {
    let sigma: Vec<Vec<Rational>> = [[3, 3], [1, 3], [3, 4]].iter().map(|r| r.iter().map(|&v| Rational::from(v)).collect()).collect();
    let game = cyclic_polymatrix(&sigma).unwrap();
    let p = game_operator(&game).unwrap();
    let mut cfg = SolverConfig::new(q("1/100"));
    cfg.iters_override = Some(20);
    let out = solve(&p, &cfg).unwrap();
    assert!(matches!(out.outcome.status, SolveStatus::MviInfeasibleRaw));
    let gamma = &out.outcome.params.gamma_eff;
    let cert = extract_strict_evi(out.reduced.body.as_ref(), &out.outcome.history, gamma).unwrap();
    assert!(cert.gap_bound <= -(gamma.clone() / 2u32));
    let amb = cert.to_ambient(&out.chart, &p).unwrap();
    assert!(verify_infeasibility_witness(p.body.as_ref(), &amb, &Rational::new()).unwrap());
    assert_eq!(evi_gap(p.body.as_ref(), &amb, &Rational::new()).unwrap(), amb.gap_bound);
}

#[test]
fn weak_minty_needs_rho_and_caps_it() {
    let p = shifted_identity(vec![q("1/4"), q("1/4")]);
    let cfg = SolverConfig::new(q("1/100"));
    assert!(solve_weak_minty(&p, &cfg).is_err());
    let cap = max_weak_minty_rho(&p);
    let ok = solve_weak_minty(&p, &cfg.clone().with_rho(Rational::from(&cap / 2u32))).unwrap();
    assert!(ok.point().is_some());
    let too_big = solve_weak_minty(&p, &cfg.with_rho(cap * 4u32));
    assert!(matches!(too_big, Err(MintyError::RhoTooLarge { .. })), "{too_big:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svi_gap_is_nonnegative(xs in prop::collection::vec(-8i64..=8, 2), ts in prop::collection::vec(-8i64..=8, 2)) {
        let p = shifted_identity(ts.iter().map(|&t| Rational::from((t, 8))).collect());
        let x: Vec<Rational> = xs.iter().map(|&v| Rational::from((v, 8))).collect();
        let g = svi_gap(&p, &x, &Rational::new()).unwrap();
        prop_assert!(g >= 0);
        let at_solution = p.known_mvi.clone().unwrap();
        prop_assert_eq!(svi_gap(&p, &at_solution, &Rational::new()).unwrap(), Rational::new());
    }
}
