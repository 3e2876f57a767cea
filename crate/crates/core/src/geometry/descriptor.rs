//! JSON body descriptors with rational-string numerics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    AffineImageBody, AffineMap, BallBody, BoxBody, ConvexBody, HPolytopeBody, LiftMode, LiftedSimplexBody,
    ProductBody, SimplexBody,
};
use crate::error::Result;
use crate::linalg::{Matrix, Vector};
use crate::scalar::parse_rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftModeDesc {
    TwoPlayer,
    Harmonic,
}

/// Serializable description of a body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BodyDescriptor {
    Box { lower: Vec<String>, upper: Vec<String> },
    Ball { center: Vec<String>, radius: String },
    Simplex { dim: usize },
    HPolytope { a: Vec<Vec<String>>, b: Vec<String> },
    Product { factors: Vec<BodyDescriptor> },
    Lift { mode: LiftModeDesc, alpha: String, factors: Vec<BodyDescriptor> },
    Affine { matrix: Vec<Vec<String>>, shift: Vec<String>, body: Box<BodyDescriptor> },
}

impl BodyDescriptor {
    pub fn kind(&self) -> &'static str {
        match self {
            BodyDescriptor::Box { .. } => "box",
            BodyDescriptor::Ball { .. } => "ball",
            BodyDescriptor::Simplex { .. } => "simplex",
            BodyDescriptor::HPolytope { .. } => "hpolytope",
            BodyDescriptor::Product { .. } => "product",
            BodyDescriptor::Lift { .. } => "lift",
            BodyDescriptor::Affine { .. } => "affine",
        }
    }
}

fn vec_of(v: &[String]) -> Result<Vector> {
    v.iter().map(|s| parse_rational(s).map_err(Into::into)).collect()
}

fn mat_of(m: &[Vec<String>]) -> Result<Matrix> {
    m.iter().map(|r| vec_of(r)).collect()
}

/// Builds the body a descriptor names.
pub fn body_from_descriptor(d: &BodyDescriptor) -> Result<Arc<dyn ConvexBody>> {
    Ok(match d {
        BodyDescriptor::Box { lower, upper } => Arc::new(BoxBody::new(vec_of(lower)?, vec_of(upper)?)?),
        BodyDescriptor::Ball { center, radius } => {
            Arc::new(BallBody::new(vec_of(center)?, parse_rational(radius)?)?)
        }
        BodyDescriptor::Simplex { dim } => Arc::new(SimplexBody::new(*dim)?),
        BodyDescriptor::HPolytope { a, b } => Arc::new(HPolytopeBody::new(mat_of(a)?, vec_of(b)?)?),
        BodyDescriptor::Product { factors } => {
            Arc::new(ProductBody::new(factors.iter().map(body_from_descriptor).collect::<Result<_>>()?)?)
        }
        BodyDescriptor::Lift { mode, alpha, factors } => {
            let mode = match mode {
                LiftModeDesc::TwoPlayer => LiftMode::TwoPlayer,
                LiftModeDesc::Harmonic => LiftMode::Harmonic,
            };
            let factors = factors.iter().map(body_from_descriptor).collect::<Result<_>>()?;
            Arc::new(LiftedSimplexBody::new(mode, parse_rational(alpha)?, factors)?)
        }
        BodyDescriptor::Affine { matrix, shift, body } => {
            let map = AffineMap::new(mat_of(matrix)?, vec_of(shift)?)?;
            Arc::new(AffineImageBody::new(body_from_descriptor(body)?, map)?)
        }
    })
}
