mod common;

use std::sync::Arc;

use common::*;
use mintyvi::error::MintyError;
use mintyvi::geometry::*;
use mintyvi::linalg::{dot, sub, Vector};
use mintyvi::problem::{precondition_affine, QueryLog, ViProblem};
use mintyvi::scalar::norm2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

fn halfspace_box() -> HPolytopeBody {
    // y1 <= 0 intersected with [-1,1]^2
    let a = vec![qv(&["1", "0"]), qv(&["1", "0"]), qv(&["-1", "0"]), qv(&["0", "1"]), qv(&["0", "-1"])];
    let b = qv(&["0", "1", "1", "1", "1"]);
    HPolytopeBody::new(a, b).unwrap()
}

#[test]
fn simplex_projection_examples() {
    let s = SimplexBody::new(3).unwrap();
    assert_eq!(project_closed_form(&s, &qv(&["1/2", "1/2", "1/2"])).unwrap(), qv(&["1/3", "1/3", "1/3"]));
    assert_eq!(project_closed_form(&s, &qv(&["2", "0", "0"])).unwrap(), qv(&["1", "0", "0"]));
}

#[test]
fn box_projection_clamps() {
    let b = BoxBody::symmetric(2, q("1"));
    assert_eq!(project_closed_form(&b, &qv(&["3", "1/5"])).unwrap(), qv(&["1", "1/5"]));
}

#[test]
fn polytopes_have_no_closed_form_projection() {
    let err = project_closed_form(&halfspace_box(), &qv(&["0", "0"])).unwrap_err();
    assert!(matches!(err, MintyError::UnsupportedBody(_)));
}

#[test]
fn ball_projection_is_within_tolerance() {
    let b = BallBody::new(qv(&["0", "0"]), q("1")).unwrap();
    let tol = q("1/1000000000000");
    let p = b.project(&qv(&["3", "4"]), &tol).unwrap();
    assert!(close(p[0].to_f64(), 0.6, 1e-12) && close(p[1].to_f64(), 0.8, 1e-12));
    assert!(b.membership(&p, &Rational::new()));
}

#[test]
fn simplex_projection_matches_sorting_free_oracle() {
    // KKT check: y = max(x - τ, 0), Σ y = 1 for the threshold τ found by bisection in f64
    let s = SimplexBody::new(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let x = rand_vec(&mut rng, 4, -2, 2, 16);
        let y = s.project_exact(&x);
        let xf = f64s(&x);
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let tot: f64 = xf.iter().map(|v| (v - mid).max(0.0)).sum();
            if tot > 1.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        for (yi, xi) in y.iter().zip(&xf) {
            assert!(close(yi.to_f64(), (xi - lo).max(0.0), 1e-9));
        }
        let total: Rational = y.iter().fold(Rational::new(), |a, v| a + v);
        assert_eq!(total, 1);
    }
}

#[test]
fn halfspace_box_projection_via_ellipsoid() {
    let body = halfspace_box();
    let tol = q("1/1000000");
    let p = project_via_ellipsoid(&body, &qv(&["1/2", "0"]), &tol).unwrap();
    assert!(norm2(&p).to_f64().sqrt() <= 1e-6 * 10.0);
    assert!(body.membership(&p, &tol));
    let exact = body.project(&qv(&["1/2", "0"]), &Rational::new()).unwrap();
    assert_eq!(exact, qv(&["0", "0"]));
}

#[test]
fn projection_of_interior_point_is_fixed() {
    let body = halfspace_box();
    let x = qv(&["-1/2", "1/3"]);
    assert_eq!(project_via_ellipsoid(&body, &x, &q("1/1000")).unwrap(), x);
}

/// Grid search over the feasible region, refined around the incumbent.
fn grid_refined_distance(body: &dyn ConvexBody, x: &[f64]) -> f64 {
    let d = x.len();
    let r = body.outer_radius().to_f64();
    let mut center = vec![0.0; d];
    let mut half = r;
    let mut best = f64::INFINITY;
    for _ in 0..30 {
        let n = 12usize;
        let mut next = center.clone();
        let mut idx = vec![0usize; d];
        loop {
            let p: Vec<f64> =
                (0..d).map(|i| center[i] - half + 2.0 * half * idx[i] as f64 / n as f64).collect();
            let pq: Vector = p.iter().map(|v| mintyvi::scalar::from_f64(*v)).collect();
            if body.membership(&pq, &Rational::new()) {
                let dist = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if dist < best {
                    best = dist;
                    next = p;
                }
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] <= n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        center = next;
        half *= 0.5;
    }
    best
}

#[test]
fn random_polytope_projection_matches_grid_refinement() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in 2..=3 {
        for _ in 0..4 {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..d {
                let mut e = vec![Rational::new(); d];
                e[i] = Rational::from(1);
                a.push(e.clone());
                b.push(Rational::from(1));
                e[i] = Rational::from(-1);
                a.push(e);
                b.push(Rational::from(1));
            }
            for _ in 0..3 {
                a.push(rand_vec(&mut rng, d, -2, 2, 4));
                b.push(rand_q(&mut rng, 1, 2, 4) / 2u32);
            }
            let body = HPolytopeBody::new(a, b).unwrap();
            let x = rand_vec(&mut rng, d, -3, 3, 8);
            let tol = q("1/100000");
            let exact = body.project(&x, &Rational::new()).unwrap();
            let approx = project_via_ellipsoid(&body, &x, &tol).unwrap();
            let oracle = grid_refined_distance(&body, &f64s(&x));
            let de = norm2(&sub(&exact, &x)).to_f64().sqrt();
            assert!(de <= oracle + 1e-6, "exact {de} vs grid {oracle}");
            assert!(oracle <= de + 1e-3, "grid {oracle} vs exact {de}");
            let gap = norm2(&sub(&exact, &approx)).to_f64().sqrt();
            assert!(gap <= 10.0 * tol.to_f64().sqrt() + 1e-9, "approx off by {gap}");
        }
    }
}

fn sample_inside(body: &dyn ConvexBody, rng: &mut ChaCha8Rng) -> Option<Vector> {
    let r = body.outer_radius().to_f64();
    for _ in 0..2000 {
        let p: Vector = (0..body.dim()).map(|_| mintyvi::scalar::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * r)).collect();
        if body.membership(&p, &Rational::new()) {
            return Some(p);
        }
    }
    None
}

fn builtin_bodies() -> Vec<Arc<dyn ConvexBody>> {
    vec![
        Arc::new(BoxBody::symmetric(2, q("1"))),
        Arc::new(BoxBody::new(qv(&["-1", "0", "1/2"]), qv(&["1", "2", "1"])).unwrap()),
        Arc::new(BallBody::new(qv(&["1/2", "0"]), q("3/2")).unwrap()),
        Arc::new(halfspace_box()),
        Arc::new(ProductBody::new(vec![Arc::new(BoxBody::unit(1)), Arc::new(BallBody::new(qv(&["0", "0"]), q("1")).unwrap())]).unwrap()),
    ]
}

#[test]
fn separation_cuts_never_remove_deep_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for body in builtin_bodies() {
        let d = body.dim();
        let inside: Vec<Vector> = (0..40).filter_map(|_| sample_inside(body.as_ref(), &mut rng)).collect();
        for _ in 0..200 {
            let x = rand_vec(&mut rng, d, -3, 3, 7);
            let delta = rand_q(&mut rng, 0, 1, 20) / 10u32;
            match body.separation(&x, &delta) {
                Separation::Inside => assert!(body.membership(&x, &delta)),
                Separation::Cut(c) => {
                    assert!(!body.membership(&x, &delta));
                    assert_eq!(mintyvi::scalar::norm_inf(&c), 1);
                    let cx = dot(&c, &x);
                    for p in &inside {
                        assert!(dot(&c, p) < Rational::from(&cx + &delta), "{:?}", body.descriptor().kind());
                    }
                }
            }
        }
    }
}

#[test]
fn simplex_separation_respects_the_hull() {
    let s = SimplexBody::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let x = rand_vec(&mut rng, 3, -1, 2, 5);
        if let Separation::Cut(c) = s.separation(&x, &Rational::new()) {
            let cx = dot(&c, &x);
            for _ in 0..20 {
                let mut w = rand_vec(&mut rng, 3, 0, 1, 9);
                let t: Rational = w.iter().fold(Rational::new(), |a, v| a + v);
                if t == 0 {
                    continue;
                }
                for v in &mut w {
                    *v /= &t;
                }
                assert!(dot(&c, &w) < cx);
            }
        }
    }
}

#[test]
fn product_linear_min_concatenates_factors() {
    let factors: Vec<Arc<dyn ConvexBody>> = vec![
        Arc::new(SimplexBody::new(3).unwrap()),
        Arc::new(BoxBody::symmetric(2, q("2"))),
        Arc::new(SimplexBody::new(2).unwrap()),
    ];
    let prod = ProductBody::new(factors.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let c = rand_vec(&mut rng, prod.dim(), -3, 3, 5);
        let got = prod.linear_min(&c, &Rational::new()).unwrap();
        let mut want = Vec::new();
        for (i, f) in factors.iter().enumerate() {
            want.extend(f.linear_min(&c[prod.block(i)], &Rational::new()).unwrap());
        }
        assert_eq!(dot(&c, &got), dot(&c, &want));
    }
}

#[test]
fn lift_membership_matches_unlifted_checks() {
    let factors: Vec<Arc<dyn ConvexBody>> =
        vec![Arc::new(SimplexBody::new(2).unwrap()), Arc::new(BoxBody::symmetric(2, q("1")))];
    let alpha = q("1/10");
    let lift = LiftedSimplexBody::new(LiftMode::TwoPlayer, alpha.clone(), factors.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let zero = Rational::new();
    for _ in 0..500 {
        let l1 = rand_q(&mut rng, 0, 1, 20);
        let l2 = if rng.gen_bool(0.8) { Rational::from(1) - &l1 } else { rand_q(&mut rng, 0, 1, 20) };
        let x1 = if rng.gen_bool(0.8) {
            let t = rand_q(&mut rng, 0, 1, 10);
            vec![t.clone(), Rational::from(1) - t]
        } else {
            rand_vec(&mut rng, 2, -1, 2, 10)
        };
        let x2 = rand_vec(&mut rng, 2, -2, 2, 10);
        let z = lift.lift(&[l1.clone(), l2.clone()], &[x1.clone(), x2.clone()]);
        let expected = Rational::from(&l1 + &l2) == 1
            && l1 >= alpha
            && l2 >= alpha
            && factors[0].membership(&x1, &zero)
            && factors[1].membership(&x2, &zero);
        assert_eq!(lift.membership(&z, &zero), expected, "λ = ({l1}, {l2}) x1 = {x1:?} x2 = {x2:?}");
        if expected {
            let (w, xs) = lift.unlift(&z);
            assert_eq!(w, vec![l1, l2]);
            assert_eq!(xs, vec![x1, x2]);
        }
    }
}

#[test]
fn harmonic_lift_weight_floor() {
    let factors: Vec<Arc<dyn ConvexBody>> = (0..3).map(|_| Arc::new(SimplexBody::new(2).unwrap()) as _).collect();
    let lift = LiftedSimplexBody::new(LiftMode::Harmonic, q("1/8"), factors).unwrap();
    let ok = lift.lift(&qv(&["1/8", "1/2", "3/8"]), &[qv(&["1", "0"]), qv(&["1/2", "1/2"]), qv(&["0", "1"])]);
    assert!(lift.membership(&ok, &Rational::new()));
    let low = lift.lift(&qv(&["1/16", "9/16", "3/8"]), &[qv(&["1", "0"]), qv(&["1/2", "1/2"]), qv(&["0", "1"])]);
    match lift.separation(&low, &Rational::new()) {
        Separation::Cut(c) => assert_eq!(c[0], -1),
        Separation::Inside => panic!("weight below the floor accepted"),
    }
    assert!(LiftedSimplexBody::new(LiftMode::Harmonic, q("1/3"), vec![Arc::new(BoxBody::unit(1)); 3]).is_err());
}

#[test]
fn well_bounded_box_passes() {
    let b = BoxBody::symmetric(2, q("1"));
    let claims = WellBoundedClaims {
        inner_radius: Some(q("1")),
        outer_radius: Some(q("1428/1000")),
        center: Some(qv(&["0", "0"])),
    };
    assert_well_bounded(&b, &claims, 500, 1).unwrap();
}

#[test]
fn well_bounded_box_rejects_large_inner_radius() {
    let b = BoxBody::symmetric(2, q("1"));
    let claims = WellBoundedClaims { inner_radius: Some(q("2")), ..Default::default() };
    let err = assert_well_bounded(&b, &claims, 500, 1).unwrap_err();
    assert!(matches!(err, MintyError::WellBoundednessViolation(_)));
}

#[test]
fn well_bounded_simplex_about_centroid() {
    // distance from the centroid of Δ(3) to a facet is 1/√6 ≈ 0.408 > 0.2
    let s = SimplexBody::new(3).unwrap();
    let claims = WellBoundedClaims {
        inner_radius: Some(q("1/5")),
        outer_radius: Some(q("1")),
        center: Some(qv(&["1/3", "1/3", "1/3"])),
    };
    assert_well_bounded(&s, &claims, 500, 2).unwrap();
    let facet = 1.0 / 6f64.sqrt();
    assert!(0.2 < facet);
}

#[test]
fn builtin_bodies_are_well_bounded() {
    for body in builtin_bodies() {
        assert_well_bounded(body.as_ref(), &WellBoundedClaims::default(), 300, 4).unwrap();
    }
    assert_well_bounded(&SimplexBody::new(4).unwrap(), &WellBoundedClaims::default(), 300, 4).unwrap();
}

#[test]
fn descriptors_round_trip() {
    for body in builtin_bodies() {
        let desc = body.descriptor();
        let json = serde_json::to_string(&desc).unwrap();
        let back: BodyDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, desc);
        let rebuilt = body_from_descriptor(&back).unwrap();
        assert_eq!(rebuilt.descriptor(), desc);
    }
    let raw = r#"{"type":"box","lower":["-1","-3/7"],"upper":["1","3/7"]}"#;
    let desc: BodyDescriptor = serde_json::from_str(raw).unwrap();
    let b = body_from_descriptor(&desc).unwrap();
    assert!(b.membership(&qv(&["1", "3/7"]), &Rational::new()));
    assert!(!b.membership(&qv(&["1", "1/2"]), &Rational::new()));
}

fn affine_problem() -> ViProblem {
    let xs = qv(&["1/4", "-1/2"]);
    let t = xs.clone();
    ViProblem::new(
        "shifted identity",
        Arc::new(BoxBody::symmetric(2, q("1"))),
        move |x: &[Rational]| Ok(sub(x, &t)),
        q("1"),
        q("3"),
    )
    .with_known_mvi(xs)
}

#[test]
fn identity_preconditioning_is_a_no_op() {
    let p = affine_problem();
    let t = precondition_affine(&p, &AffineMap::identity(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let x = rand_vec(&mut rng, 2, -1, 1, 8);
        assert_eq!(t.eval(&x).unwrap(), p.eval(&x).unwrap());
    }
    assert_eq!(t.lipschitz, p.lipschitz);
    assert_eq!(t.bound, p.bound);
}

#[test]
fn scaling_preconditioning_bounds() {
    let p = affine_problem();
    let map = AffineMap::new(vec![qv(&["2", "0"]), qv(&["0", "2"])], qv(&["0", "0"])).unwrap();
    let t = precondition_affine(&p, &map).unwrap();
    let r = p.body.outer_radius();
    assert!(t.bound <= Rational::from(&r * &p.bound) * 2u32);
    let four_r2l = Rational::from(r.square_ref()) * &p.lipschitz * 4u32;
    assert!(t.lipschitz <= four_r2l);
    let mut log = QueryLog::keep_all();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..60 {
        let x = rand_vec(&mut rng, 2, -2, 2, 8);
        log.eval(&t, &x).unwrap();
    }
    let audit = log.audit(&t.lipschitz).unwrap();
    assert!(audit.max_ratio <= four_r2l.to_f64());
}

#[test]
fn random_maps_transport_minty_points() {
    let p = affine_problem();
    let xs = p.known_mvi.clone().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut tried = 0;
    while tried < 8 {
        let m = vec![rand_vec(&mut rng, 2, -2, 2, 3), rand_vec(&mut rng, 2, -2, 2, 3)];
        let Ok(map) = AffineMap::new(m, rand_vec(&mut rng, 2, -1, 1, 4)) else { continue };
        tried += 1;
        let t = precondition_affine(&p, &map).unwrap();
        let zs = map.apply(&xs);
        assert_eq!(t.known_mvi.as_ref().unwrap(), &zs);
        for i in 0..=10 {
            for j in 0..=10 {
                let x = vec![Rational::from((i as i64 - 5, 5u32)), Rational::from((j as i64 - 5, 5u32))];
                let z = map.apply(&x);
                assert!(t.body.membership(&z, &Rational::new()));
                assert!(dot(&t.eval(&z).unwrap(), &sub(&z, &zs)) >= 0);
            }
        }
    }
}

#[test]
fn preconditioning_round_trip_recovers_field() {
    let p = affine_problem();
    let map = AffineMap::new(vec![qv(&["3", "1"]), qv(&["1", "2"])], qv(&["1/2", "-1"])).unwrap();
    let there = precondition_affine(&p, &map).unwrap();
    let back = precondition_affine(&there, &map.inverted()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..30 {
        let x = rand_vec(&mut rng, 2, -1, 1, 6);
        assert_eq!(back.eval(&x).unwrap(), p.eval(&x).unwrap());
    }
}

#[test]
fn singular_maps_are_rejected() {
    let err = AffineMap::new(vec![qv(&["1", "2"]), qv(&["2", "4"])], qv(&["0", "0"])).unwrap_err();
    assert!(matches!(err, MintyError::SingularMap));
}

proptest! {
    #[test]
    fn membership_and_separation_agree(x in prop::collection::vec(-30i64..30, 2), dn in 0u32..5) {
        let x: Vector = x.into_iter().map(|v| Rational::from((v, 10u32))).collect();
        let delta = Rational::from((dn, 10u32));
        for body in builtin_bodies().into_iter().filter(|b| b.dim() == 2) {
            let inside = body.membership(&x, &delta);
            let sep = body.separation(&x, &delta);
            prop_assert_eq!(inside, matches!(sep, Separation::Inside));
        }
    }

    #[test]
    fn box_projection_is_idempotent(x in prop::collection::vec(-40i64..40, 3)) {
        let b = BoxBody::symmetric(3, Rational::from(1));
        let x: Vector = x.into_iter().map(|v| Rational::from((v, 13u32))).collect();
        let p = b.project(&x, &Rational::new()).unwrap();
        prop_assert_eq!(b.project(&p, &Rational::new()).unwrap(), p);
    }
}
