use rug::Rational;

use super::{ConvexBody, Separation};
use crate::ellipsoid::{run_engine, CutKind, EngineConfig, EngineEnd, Query};
use crate::error::{MintyError, Result};
use crate::linalg::{dot, sub, Vector};
use crate::scalar::{log2_abs, ArithMode};

/// Approximate projection by running the ellipsoid method on `½‖y − x‖²`.
///
/// Stops at an in-body center `ã` whose first-order gap
/// `max_{y∈X} ⟨ã − x, ã − y⟩` is at most `tol`, so that
/// `⟨ã − x, y − ã⟩ ≥ −tol` for every `y ∈ X`.
pub fn project_via_ellipsoid(body: &dyn ConvexBody, x: &[Rational], tol: &Rational) -> Result<Vector> {
    if *tol <= 0 {
        return Err(MintyError::ParameterOutOfRange("projection tolerance must be positive".into()));
    }
    if body.membership(x, &Rational::new()) {
        return Ok(x.to_vec());
    }
    let d = body.dim();
    let r = body.outer_radius();
    let r_in = body.inner_radius();
    let xr = crate::scalar::norm_upper(x, 32);
    let reach = Rational::from(&r + &xr);
    // strong convexity turns an objective gap of tol²/(16 reach²) into a small first-order gap
    let scale = Rational::from(tol / &reach) / 4u32;
    let volume = {
        let ratio = Rational::from(&scale * &r_in) / Rational::from(&reach * 2u32);
        let mut v = Rational::from(1);
        for _ in 0..d {
            v *= &ratio;
        }
        v
    };
    let r2 = Rational::from(r.square_ref());
    let cfg = EngineConfig::new(d, r2, volume, ArithMode::Float);
    let bits = (64.0 - 4.0 * log2_abs(&scale)).max(128.0) as u32 + 16 * d as u32;
    let cfg = EngineConfig { bits, volume: None, ..cfg };
    let zero = Rational::new();
    let mut best: Option<(Rational, Vector)> = None;
    let run = run_engine(&cfg, |a, _| {
        if let Separation::Cut(c) = body.separation(a, &zero) {
            return Ok(Query::Cut { normal: c, kind: CutKind::Body });
        }
        let g = sub(a, x);
        if g.iter().all(|v| *v.numer() == 0) {
            return Ok(Query::Found(a.to_vec()));
        }
        let y = body.linear_min(&g, &zero)?;
        let gap = dot(&g, &sub(a, &y));
        if gap <= *tol {
            return Ok(Query::Found(a.to_vec()));
        }
        let val = crate::scalar::norm2(&g);
        if best.as_ref().map_or(true, |(b, _)| val < *b) {
            best = Some((val, a.to_vec()));
        }
        Ok(Query::Cut { normal: g, kind: CutKind::Objective })
    })?;
    match run.end {
        EngineEnd::Found(y) => Ok(y),
        EngineEnd::Failed(e) => Err(e),
        EngineEnd::SmallVolume(_) => match best {
            Some((_, y)) => Err(MintyError::OracleFailure(format!(
                "ellipsoid projection did not reach tolerance; best center {:?}",
                crate::linalg::to_f64(&y)
            ))),
            None => Err(MintyError::EmptyInterior),
        },
    }
}
