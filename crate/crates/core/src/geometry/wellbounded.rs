use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;
use serde::Serialize;

use super::{ConvexBody, Separation};
use crate::error::{MintyError, Result};
use crate::linalg::{dot, mat_vec, solve, Matrix, Vector};
use crate::scalar::{fmt_rational, from_f64, to_f64};

/// Radii to check; `None` falls back to the body's own values.
#[derive(Clone, Debug, Default)]
pub struct WellBoundedClaims {
    pub inner_radius: Option<Rational>,
    pub outer_radius: Option<Rational>,
    pub center: Option<Vector>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WellBoundedReport {
    pub inner_samples: usize,
    pub outer_samples: usize,
    pub inner_radius: String,
    pub outer_radius: String,
}

/// Samples the claimed inner ball (within the affine hull) and the exterior of the outer ball.
pub fn assert_well_bounded(
    body: &dyn ConvexBody,
    claims: &WellBoundedClaims,
    samples: usize,
    seed: u64,
) -> Result<WellBoundedReport> {
    let d = body.dim();
    let r_in = claims.inner_radius.clone().unwrap_or_else(|| body.inner_radius());
    let r_out = claims.outer_radius.clone().unwrap_or_else(|| body.outer_radius());
    let center = claims.center.clone().unwrap_or_else(|| body.interior_center());
    let eq: Matrix = body.hrep().map(|h| h.e).unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = Rational::new();
    let r_in_f = to_f64(&r_in) * (1.0 - 1e-9);
    for k in 0..samples {
        let u = hull_direction(&eq, d, &mut rng);
        // every fourth sample sits on the sphere itself
        let t: f64 = if k % 4 == 0 { 1.0 } else { rng.gen::<f64>().powf(1.0 / d as f64) };
        let x: Vector = center.iter().zip(&u).map(|(c, ui)| from_f64(ui * r_in_f * t) + c).collect();
        let x = snap_to_hull(&eq, body, x);
        if !body.membership(&x, &zero) {
            return Err(MintyError::WellBoundednessViolation(format!(
                "point {:?} at distance {} from the center is rejected",
                x.iter().map(fmt_rational).collect::<Vec<_>>(),
                r_in_f * t
            )));
        }
    }
    let r_out_f = to_f64(&r_out);
    for _ in 0..samples {
        let u = unit(d, &mut rng);
        let s = r_out_f * (1.0 + 1e-6) + rng.gen::<f64>() * r_out_f;
        let x: Vector = u.iter().map(|ui| from_f64(ui * s)).collect();
        if crate::scalar::norm2(&x) <= Rational::from(r_out.square_ref()) {
            continue;
        }
        if body.membership(&x, &zero) || matches!(body.separation(&x, &zero), Separation::Inside) {
            return Err(MintyError::WellBoundednessViolation(format!(
                "point {:?} outside the outer ball is accepted",
                x.iter().map(fmt_rational).collect::<Vec<_>>()
            )));
        }
    }
    Ok(WellBoundedReport {
        inner_samples: samples,
        outer_samples: samples,
        inner_radius: fmt_rational(&r_in),
        outer_radius: fmt_rational(&r_out),
    })
}

fn unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn hull_direction(eq: &Matrix, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v = unit(d, rng);
        for _ in 0..2 {
            for row in eq {
                let r: Vec<f64> = row.iter().map(to_f64).collect();
                let rr: f64 = r.iter().map(|x| x * x).sum();
                let rv: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ri) in v.iter_mut().zip(&r) {
                    *vi -= rv / rr * ri;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Removes the rounding residual off the affine hull exactly.
fn snap_to_hull(eq: &Matrix, body: &dyn ConvexBody, x: Vector) -> Vector {
    let Some(h) = body.hrep() else { return x };
    if eq.is_empty() {
        return x;
    }
    let resid: Vector = mat_vec(eq, &x).iter().zip(&h.f).map(|(v, f)| Rational::from(v - f)).collect();
    let gram: Matrix = eq.iter().map(|r| eq.iter().map(|s| dot(r, s)).collect()).collect();
    let Some(l) = solve(&gram, &resid) else { return x };
    let mut x = x;
    for (row, li) in eq.iter().zip(&l) {
        for (xi, ri) in x.iter_mut().zip(row) {
            *xi -= Rational::from(ri * li);
        }
    }
    x
}
