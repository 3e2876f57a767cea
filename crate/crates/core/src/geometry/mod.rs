//! Convex bodies with membership, separation, linear-optimization and projection oracles.

mod affine;
mod bodies;
mod chart;
mod descriptor;
mod ellproj;
mod lift;
mod product;
mod qp;
mod wellbounded;

use std::fmt::Debug;

use rug::Rational;

pub use affine::{AffineImageBody, AffineMap};
pub use bodies::{BallBody, BoxBody, HPolytopeBody, SimplexBody};
pub use chart::{reduce_body, AffineChart, ReducedBody};
pub use descriptor::{body_from_descriptor, BodyDescriptor, LiftModeDesc};
pub use ellproj::project_via_ellipsoid;
pub use lift::{LiftMode, LiftedSimplexBody};
pub use product::ProductBody;
pub use qp::project_hrep;
pub use wellbounded::{assert_well_bounded, WellBoundedClaims, WellBoundedReport};

use crate::error::{MintyError, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::norm_inf;

/// Outcome of a separation query.
#[derive(Clone, Debug, PartialEq)]
pub enum Separation {
    /// The point lies in `X^{+δ}`.
    Inside,
    /// Normal `c` with `‖c‖_∞ = 1` and `⟨c, x′⟩ < ⟨c, x⟩ + δ` for all `x′ ∈ X^{-δ}`.
    Cut(Vector),
}

/// Inequality/equality description `{x : a x ≤ b, e x = f}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HRep {
    pub dim: usize,
    pub a: Matrix,
    pub b: Vector,
    pub e: Matrix,
    pub f: Vector,
}

impl HRep {
    pub fn inequalities(dim: usize, a: Matrix, b: Vector) -> Self {
        HRep { dim, a, b, e: Vec::new(), f: Vec::new() }
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        self.a.iter().zip(&self.b).all(|(row, bi)| crate::linalg::dot(row, x) <= *bi)
            && self.e.iter().zip(&self.f).all(|(row, fi)| crate::linalg::dot(row, x) == *fi)
    }
}

/// A well-bounded convex compact set accessed through oracles.
///
/// Flat bodies (e.g. simplices) report `affine_dim() < dim()`; their inner radius is
/// measured inside the affine hull. Solvers run on full-dimensional bodies, so flat
/// polyhedral bodies are first passed through [`reduce_body`].
pub trait ConvexBody: Send + Sync + Debug {
    fn dim(&self) -> usize;
    /// Rational `R ≥ 1` with `X ⊆ B_R(0)`.
    fn outer_radius(&self) -> Rational;
    /// Rational `r_in > 0` with `B_{r_in}(center) ∩ aff(X) ⊆ X`.
    fn inner_radius(&self) -> Rational;
    fn interior_center(&self) -> Vector;
    fn affine_dim(&self) -> usize {
        self.dim()
    }
    fn membership(&self, x: &[Rational], delta: &Rational) -> bool;
    fn separation(&self, x: &[Rational], delta: &Rational) -> Separation;
    /// Point of `X^{+δ}` whose objective is within `δ` of `min_{X^{-δ}} ⟨c, ·⟩`.
    fn linear_min(&self, c: &[Rational], delta: &Rational) -> Result<Vector>;
    /// Euclidean projection, exact when [`ConvexBody::projection_exact`] holds.
    fn project(&self, x: &[Rational], delta: &Rational) -> Result<Vector>;
    fn projection_exact(&self) -> bool {
        true
    }
    /// Polyhedral description when available.
    fn hrep(&self) -> Option<HRep> {
        None
    }
    fn descriptor(&self) -> BodyDescriptor;
}

/// Scales `c` to unit infinity norm; `None` for the zero vector.
pub fn normalize_inf(c: &[Rational]) -> Option<Vector> {
    let m = norm_inf(c);
    if *m.numer() == 0 {
        return None;
    }
    Some(c.iter().map(|x| Rational::from(x / &m)).collect())
}

/// Closed-form projection for boxes, balls and simplices.
pub fn project_closed_form(body: &dyn ConvexBody, x: &[Rational]) -> Result<Vector> {
    match body.descriptor() {
        BodyDescriptor::Box { .. } | BodyDescriptor::Ball { .. } | BodyDescriptor::Simplex { .. } => {
            body.project(x, &Rational::new())
        }
        other => Err(MintyError::UnsupportedBody(format!(
            "closed-form projection needs a box, ball or simplex, got {}",
            other.kind()
        ))),
    }
}

/// Minimum of `⟨c, ·⟩` over the body, returning `(value, argmin)`.
pub fn linear_min_value(body: &dyn ConvexBody, c: &[Rational], delta: &Rational) -> Result<(Rational, Vector)> {
    let x = body.linear_min(c, delta)?;
    Ok((crate::linalg::dot(c, &x), x))
}

