use std::sync::Arc;

use rug::Rational;

use super::{BodyDescriptor, ConvexBody, HRep, Separation};
use crate::error::{MintyError, Result};
use crate::linalg::{zeros, Vector};
use crate::scalar::sqrt_upper;

/// Cartesian product of bodies; coordinates are the concatenation of the factors'.
#[derive(Clone, Debug)]
pub struct ProductBody {
    pub factors: Vec<Arc<dyn ConvexBody>>,
    offsets: Vec<usize>,
}

impl ProductBody {
    pub fn new(factors: Vec<Arc<dyn ConvexBody>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(MintyError::ParameterOutOfRange("product needs at least one factor".into()));
        }
        let mut offsets = vec![0];
        for f in &factors {
            offsets.push(offsets.last().unwrap() + f.dim());
        }
        Ok(ProductBody { factors, offsets })
    }

    /// Coordinate range of factor `i`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn split<'a>(&self, x: &'a [Rational]) -> Vec<&'a [Rational]> {
        (0..self.factors.len()).map(|i| &x[self.block(i)]).collect()
    }
}

impl ConvexBody for ProductBody {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn outer_radius(&self) -> Rational {
        let s = self.factors.iter().fold(Rational::new(), |acc, f| acc + f.outer_radius().square());
        sqrt_upper(&s, 64)
    }

    fn inner_radius(&self) -> Rational {
        self.factors.iter().map(|f| f.inner_radius()).min().unwrap()
    }

    fn interior_center(&self) -> Vector {
        self.factors.iter().flat_map(|f| f.interior_center()).collect()
    }

    fn affine_dim(&self) -> usize {
        self.factors.iter().map(|f| f.affine_dim()).sum()
    }

    fn membership(&self, x: &[Rational], delta: &Rational) -> bool {
        self.factors.iter().zip(self.split(x)).all(|(f, xi)| f.membership(xi, delta))
    }

    fn separation(&self, x: &[Rational], delta: &Rational) -> Separation {
        for (i, (f, xi)) in self.factors.iter().zip(self.split(x)).enumerate() {
            if let Separation::Cut(c) = f.separation(xi, delta) {
                let mut full = zeros(self.dim());
                full[self.block(i)].clone_from_slice(&c);
                return Separation::Cut(full);
            }
        }
        Separation::Inside
    }

    fn linear_min(&self, c: &[Rational], delta: &Rational) -> Result<Vector> {
        let mut out = Vec::with_capacity(self.dim());
        for (f, ci) in self.factors.iter().zip(self.split(c)) {
            out.extend(f.linear_min(ci, delta)?);
        }
        Ok(out)
    }

    fn project(&self, x: &[Rational], delta: &Rational) -> Result<Vector> {
        let mut out = Vec::with_capacity(self.dim());
        for (f, xi) in self.factors.iter().zip(self.split(x)) {
            out.extend(f.project(xi, delta)?);
        }
        Ok(out)
    }

    fn projection_exact(&self) -> bool {
        self.factors.iter().all(|f| f.projection_exact())
    }

    fn hrep(&self) -> Option<HRep> {
        let d = self.dim();
        let mut h = HRep { dim: d, a: Vec::new(), b: Vec::new(), e: Vec::new(), f: Vec::new() };
        for (i, f) in self.factors.iter().enumerate() {
            let fh = f.hrep()?;
            let r = self.block(i);
            let embed = |row: &Vec<Rational>| {
                let mut full = zeros(d);
                full[r.clone()].clone_from_slice(row);
                full
            };
            h.a.extend(fh.a.iter().map(embed));
            h.b.extend(fh.b);
            h.e.extend(fh.e.iter().map(embed));
            h.f.extend(fh.f);
        }
        Some(h)
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::Product { factors: self.factors.iter().map(|f| f.descriptor()).collect() }
    }
}
