use std::sync::Arc;

use rug::Rational;

use super::{normalize_inf, BodyDescriptor, ConvexBody, HRep, Separation};
use crate::error::{MintyError, Result};
use crate::linalg::{add, frobenius2, inverse, mat_t_vec, mat_vec, mat_mul, sub, Matrix, Vector};
use crate::scalar::{fmt_rational, norm_upper, sqrt_upper};

/// Invertible affine map `ψ(x) = A x + b` with a certified inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: Matrix,
    pub shift: Vector,
    pub inverse: Matrix,
}

impl AffineMap {
    pub fn new(matrix: Matrix, shift: Vector) -> Result<Self> {
        let d = matrix.len();
        if matrix.iter().any(|r| r.len() != d) || shift.len() != d {
            return Err(MintyError::ParameterOutOfRange("affine map must be square".into()));
        }
        let inverse = inverse(&matrix).ok_or(MintyError::SingularMap)?;
        if mat_mul(&matrix, &inverse) != crate::linalg::identity(d) {
            return Err(MintyError::SingularMap);
        }
        Ok(AffineMap { matrix, shift, inverse })
    }

    pub fn identity(d: usize) -> Self {
        let i = crate::linalg::identity(d);
        AffineMap { matrix: i.clone(), shift: crate::linalg::zeros(d), inverse: i }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[Rational]) -> Vector {
        add(&mat_vec(&self.matrix, x), &self.shift)
    }

    pub fn apply_inverse(&self, y: &[Rational]) -> Vector {
        mat_vec(&self.inverse, &sub(y, &self.shift))
    }

    /// Inverse map `ψ⁻¹`.
    pub fn inverted(&self) -> Self {
        let shift = mat_vec(&self.inverse, &self.shift).into_iter().map(|v| -v).collect();
        AffineMap { matrix: self.inverse.clone(), shift, inverse: self.matrix.clone() }
    }

    /// Upper bound on `‖A‖₂` via the Frobenius norm.
    pub fn norm_upper(&self) -> Rational {
        sqrt_upper(&frobenius2(&self.matrix), 64)
    }

    /// Upper bound on `‖A⁻¹‖₂` via the Frobenius norm.
    pub fn inverse_norm_upper(&self) -> Rational {
        sqrt_upper(&frobenius2(&self.inverse), 64)
    }
}

/// Image `ψ(X)` of a body under an affine map.
#[derive(Clone, Debug)]
pub struct AffineImageBody {
    pub inner: Arc<dyn ConvexBody>,
    pub map: AffineMap,
}

impl AffineImageBody {
    pub fn new(inner: Arc<dyn ConvexBody>, map: AffineMap) -> Result<Self> {
        if inner.dim() != map.dim() {
            return Err(MintyError::ParameterOutOfRange("map and body dimensions differ".into()));
        }
        Ok(AffineImageBody { inner, map })
    }
}

impl ConvexBody for AffineImageBody {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn outer_radius(&self) -> Rational {
        let r = self.map.norm_upper() * self.inner.outer_radius() + norm_upper(&self.map.shift, 64);
        r.max(Rational::from(1))
    }

    fn inner_radius(&self) -> Rational {
        self.inner.inner_radius() / self.map.inverse_norm_upper()
    }

    fn interior_center(&self) -> Vector {
        self.map.apply(&self.inner.interior_center())
    }

    fn affine_dim(&self) -> usize {
        self.inner.affine_dim()
    }

    fn membership(&self, y: &[Rational], delta: &Rational) -> bool {
        let scaled = Rational::from(delta * &self.map.inverse_norm_upper());
        self.inner.membership(&self.map.apply_inverse(y), &scaled)
    }

    fn separation(&self, y: &[Rational], delta: &Rational) -> Separation {
        let scaled = Rational::from(delta * &self.map.inverse_norm_upper());
        match self.inner.separation(&self.map.apply_inverse(y), &scaled) {
            Separation::Inside => Separation::Inside,
            // ⟨c, A⁻¹(y − b)⟩ = ⟨A⁻ᵀc, y⟩ + const
            Separation::Cut(c) => Separation::Cut(
                normalize_inf(&mat_t_vec(&self.map.inverse, &c)).expect("invertible map keeps cuts nonzero"),
            ),
        }
    }

    fn linear_min(&self, c: &[Rational], delta: &Rational) -> Result<Vector> {
        let pulled = mat_t_vec(&self.map.matrix, c);
        Ok(self.map.apply(&self.inner.linear_min(&pulled, delta)?))
    }

    fn project(&self, y: &[Rational], delta: &Rational) -> Result<Vector> {
        match self.hrep() {
            Some(h) => super::project_hrep(&h, y, &self.interior_center()),
            None => super::project_via_ellipsoid(self, y, delta),
        }
    }

    fn projection_exact(&self) -> bool {
        self.inner.hrep().is_some()
    }

    fn hrep(&self) -> Option<HRep> {
        let h = self.inner.hrep()?;
        let pull = |rows: &Matrix, rhs: &Vector| -> (Matrix, Vector) {
            let new_rows: Matrix = rows.iter().map(|r| mat_t_vec(&self.map.inverse, r)).collect();
            let new_rhs = new_rows
                .iter()
                .zip(rhs)
                .map(|(r, bi)| Rational::from(bi + &crate::linalg::dot(r, &self.map.shift)))
                .collect();
            (new_rows, new_rhs)
        };
        let (a, b) = pull(&h.a, &h.b);
        let (e, f) = pull(&h.e, &h.f);
        Some(HRep { dim: h.dim, a, b, e, f })
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::Affine {
            matrix: self.map.matrix.iter().map(|r| r.iter().map(fmt_rational).collect()).collect(),
            shift: self.map.shift.iter().map(fmt_rational).collect(),
            body: Box::new(self.inner.descriptor()),
        }
    }
}
