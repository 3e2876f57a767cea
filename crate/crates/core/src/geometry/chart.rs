//! Coordinates on the affine hull of a flat polyhedral body.

use std::sync::Arc;

use rug::Rational;

use super::{BodyDescriptor, ConvexBody, HPolytopeBody, Separation};
use crate::error::{MintyError, Result};
use crate::linalg::{dot, frobenius2, mat_t_vec, mat_vec, rref, zeros, Matrix, Vector};
use crate::scalar::sqrt_upper;

/// Affine parametrization `y ↦ base + basis · y` of `{x : e x = f}`.
///
/// The chart uses the free columns of the reduced equality system, so `y` is a
/// sub-vector of `x` and pulling a point back is a coordinate selection.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineChart {
    pub base: Vector,
    /// `d × k` matrix, column `j` spans free coordinate `free[j]`.
    pub basis: Matrix,
    pub free: Vec<usize>,
}

impl AffineChart {
    pub fn identity(d: usize) -> Self {
        AffineChart { base: zeros(d), basis: crate::linalg::identity(d), free: (0..d).collect() }
    }

    pub fn from_equalities(d: usize, e: &Matrix, f: &[Rational]) -> Result<Self> {
        if e.is_empty() {
            return Ok(Self::identity(d));
        }
        let aug: Matrix = e
            .iter()
            .zip(f)
            .map(|(row, fi)| {
                let mut r = row.clone();
                r.push(fi.clone());
                r
            })
            .collect();
        let (r, pivots) = rref(&aug);
        if pivots.last() == Some(&d) {
            return Err(MintyError::EmptyInterior);
        }
        let free: Vec<usize> = (0..d).filter(|j| !pivots.contains(j)).collect();
        let mut base = zeros(d);
        for (row, &p) in r.iter().zip(&pivots) {
            base[p] = row[d].clone();
        }
        let mut basis = vec![zeros(free.len()); d];
        for (k, &j) in free.iter().enumerate() {
            basis[j][k] = Rational::from(1);
            for (row, &p) in r.iter().zip(&pivots) {
                basis[p][k] = Rational::from(-&row[j]);
            }
        }
        Ok(AffineChart { base, basis, free })
    }

    pub fn chart_dim(&self) -> usize {
        self.free.len()
    }

    pub fn to_ambient(&self, y: &[Rational]) -> Vector {
        let mut x = mat_vec(&self.basis, y);
        for (xi, bi) in x.iter_mut().zip(&self.base) {
            *xi += bi;
        }
        x
    }

    /// Chart coordinates of an ambient point lying on the hull.
    pub fn to_chart(&self, x: &[Rational]) -> Vector {
        self.free.iter().map(|&j| x[j].clone()).collect()
    }

    /// Pulls a covector back: `basisᵀ g`.
    pub fn pull_covector(&self, g: &[Rational]) -> Vector {
        mat_t_vec(&self.basis, g)
    }

    /// Rational upper bound on the spectral norm of `basis`.
    pub fn basis_norm_upper(&self) -> Rational {
        sqrt_upper(&frobenius2(&self.basis), 64)
    }
}

/// A polyhedral body expressed in chart coordinates, where it is full-dimensional.
#[derive(Clone, Debug)]
pub struct ReducedBody {
    pub original: Arc<dyn ConvexBody>,
    pub chart: AffineChart,
    pub inner: Arc<dyn ConvexBody>,
}

/// Rewrites a (possibly flat) body over its affine hull.
///
/// Full-dimensional bodies keep their own oracles under the identity chart.
pub fn reduce_body(body: Arc<dyn ConvexBody>) -> Result<ReducedBody> {
    let d = body.dim();
    let h = match body.hrep() {
        Some(h) if !h.e.is_empty() => h,
        _ => {
            if body.affine_dim() < d {
                return Err(MintyError::UnsupportedBody(
                    "flat body without a polyhedral description".into(),
                ));
            }
            return Ok(ReducedBody { original: body.clone(), chart: AffineChart::identity(d), inner: body });
        }
    };
    let chart = AffineChart::from_equalities(d, &h.e, &h.f)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (row, bi) in h.a.iter().zip(&h.b) {
        let ry = chart.pull_covector(row);
        let rhs = Rational::from(bi - &dot(row, &chart.base));
        if ry.iter().all(|v| *v.numer() == 0) {
            if rhs < 0 {
                return Err(MintyError::EmptyInterior);
            }
            continue;
        }
        a.push(ry);
        b.push(rhs);
    }
    let inner = HPolytopeBody::new(a, b)?;
    Ok(ReducedBody { original: body, chart, inner: Arc::new(inner) })
}

impl ReducedBody {
    pub fn is_identity(&self) -> bool {
        self.chart.chart_dim() == self.original.dim() && self.chart.base.iter().all(|v| *v.numer() == 0)
    }
}

impl ConvexBody for ReducedBody {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn outer_radius(&self) -> Rational {
        self.inner.outer_radius()
    }
    fn inner_radius(&self) -> Rational {
        self.inner.inner_radius()
    }
    fn interior_center(&self) -> Vector {
        self.inner.interior_center()
    }
    fn membership(&self, y: &[Rational], delta: &Rational) -> bool {
        self.inner.membership(y, delta)
    }
    fn separation(&self, y: &[Rational], delta: &Rational) -> Separation {
        self.inner.separation(y, delta)
    }
    fn linear_min(&self, c: &[Rational], delta: &Rational) -> Result<Vector> {
        self.inner.linear_min(c, delta)
    }
    fn project(&self, y: &[Rational], delta: &Rational) -> Result<Vector> {
        self.inner.project(y, delta)
    }
    fn projection_exact(&self) -> bool {
        self.inner.projection_exact()
    }
    fn hrep(&self) -> Option<super::HRep> {
        self.inner.hrep()
    }
    fn descriptor(&self) -> BodyDescriptor {
        self.inner.descriptor()
    }
}
