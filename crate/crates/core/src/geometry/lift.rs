use std::sync::Arc;

use rug::Rational;

use super::{BodyDescriptor, ConvexBody, HRep, LiftModeDesc, Separation};
use crate::error::{MintyError, Result};
use crate::linalg::{dot, zeros, Vector};
use crate::scalar::{fmt_rational, sqrt_upper};

/// Which lifted set the body realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftMode {
    /// `P_α = {(λ₁, λ₂, λ₁x₁, λ₂x₂)}` with `λ ∈ Δ(2)`, `min λ ≥ α`.
    TwoPlayer,
    /// `P_{≥α}` with weights in `Δ(n) ∩ R^n_{≥α}`.
    Harmonic,
}

/// Conic lift of a product of strategy bodies: coordinates `(w_1..w_n, w_1 x_1, .., w_n x_n)`.
#[derive(Clone, Debug)]
pub struct LiftedSimplexBody {
    pub mode: LiftMode,
    pub alpha: Rational,
    pub factors: Vec<Arc<dyn ConvexBody>>,
    offsets: Vec<usize>,
}

impl LiftedSimplexBody {
    pub fn new(mode: LiftMode, alpha: Rational, factors: Vec<Arc<dyn ConvexBody>>) -> Result<Self> {
        let n = factors.len();
        if mode == LiftMode::TwoPlayer && n != 2 {
            return Err(MintyError::ParameterOutOfRange("two-player lift needs exactly two factors".into()));
        }
        if n == 0 || alpha <= 0 || Rational::from(&alpha * n as u32) >= 1 {
            return Err(MintyError::ParameterOutOfRange(format!(
                "weight floor {} must lie in (0, 1/{n})",
                fmt_rational(&alpha)
            )));
        }
        let mut offsets = vec![n];
        for f in &factors {
            offsets.push(offsets.last().unwrap() + f.dim());
        }
        Ok(LiftedSimplexBody { mode, alpha, factors, offsets })
    }

    pub fn players(&self) -> usize {
        self.factors.len()
    }

    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Lifts weights and strategies to `(w, w x)`.
    pub fn lift(&self, w: &[Rational], xs: &[Vector]) -> Vector {
        let mut z = w.to_vec();
        for (wi, xi) in w.iter().zip(xs) {
            z.extend(xi.iter().map(|v| Rational::from(v * wi)));
        }
        z
    }

    /// Recovers `(w, x)` from a lifted point with positive weights.
    pub fn unlift(&self, z: &[Rational]) -> (Vector, Vec<Vector>) {
        let n = self.players();
        let w = z[..n].to_vec();
        let xs = (0..n)
            .map(|i| z[self.block(i)].iter().map(|v| Rational::from(v / &w[i])).collect())
            .collect();
        (w, xs)
    }

    fn weight_cut(&self, z: &[Rational], delta: &Rational) -> Option<Vector> {
        let n = self.players();
        let d = self.dim();
        for i in 0..n {
            if Rational::from(&z[i] + delta) < self.alpha {
                let mut c = zeros(d);
                c[i] = Rational::from(-1);
                return Some(c);
            }
        }
        let s = z[..n].iter().fold(Rational::new(), |acc, v| acc + v);
        let dev = Rational::from(&s - 1u32);
        if dev.clone().abs() > *delta {
            let sign = if dev > 0 { 1 } else { -1 };
            let mut c = zeros(d);
            for ci in c.iter_mut().take(n) {
                *ci = Rational::from(sign);
            }
            return Some(c);
        }
        None
    }
}

impl ConvexBody for LiftedSimplexBody {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn outer_radius(&self) -> Rational {
        let r2 = self.factors.iter().map(|f| f.outer_radius().square()).max().unwrap();
        sqrt_upper(&(r2 + 1u32), 64)
    }

    fn inner_radius(&self) -> Rational {
        // weight slack times factor radius, halved for the coupling between w and w x
        let n = self.players() as u32;
        let slack = Rational::from((1, n)) - &self.alpha;
        let rf = self.factors.iter().map(|f| f.inner_radius()).min().unwrap();
        let r = Rational::from(&slack * &self.alpha) * rf.min(Rational::from(1)) / 4u32;
        r.min(slack / 4u32)
    }

    fn interior_center(&self) -> Vector {
        let n = self.players();
        let w = vec![Rational::from((1, n as u32)); n];
        let xs: Vec<Vector> = self.factors.iter().map(|f| f.interior_center()).collect();
        self.lift(&w, &xs)
    }

    fn affine_dim(&self) -> usize {
        self.players() - 1 + self.factors.iter().map(|f| f.affine_dim()).sum::<usize>()
    }

    fn membership(&self, z: &[Rational], delta: &Rational) -> bool {
        matches!(self.separation(z, delta), Separation::Inside)
    }

    fn separation(&self, z: &[Rational], delta: &Rational) -> Separation {
        if let Some(c) = self.weight_cut(z, delta) {
            return Separation::Cut(c);
        }
        let (w, xs) = self.unlift(z);
        for (i, (f, xi)) in self.factors.iter().zip(&xs).enumerate() {
            let scaled = Rational::from(delta / &w[i]);
            if let Separation::Cut(c) = f.separation(xi, &scaled) {
                // ⟨c, v'⟩ − w'⟨c, x_i⟩ < 0 on the lift, with equality at z
                let mut full = zeros(self.dim());
                full[i] = -dot(&c, xi);
                full[self.block(i)].clone_from_slice(&c);
                return Separation::Cut(super::normalize_inf(&full).expect("nonzero factor cut"));
            }
        }
        Separation::Inside
    }

    fn linear_min(&self, g: &[Rational], delta: &Rational) -> Result<Vector> {
        let n = self.players();
        let mut best: Vec<(Rational, Vector)> = Vec::with_capacity(n);
        for (i, f) in self.factors.iter().enumerate() {
            let gv = &g[self.block(i)];
            let x = f.linear_min(gv, delta)?;
            best.push((Rational::from(&g[i] + &dot(gv, &x)), x));
        }
        let j = (0..n).min_by(|&a, &b| best[a].0.cmp(&best[b].0).then(a.cmp(&b))).unwrap();
        let rest = Rational::from(1) - Rational::from(&self.alpha * n as u32);
        let w: Vector = (0..n)
            .map(|i| if i == j { Rational::from(&self.alpha + &rest) } else { self.alpha.clone() })
            .collect();
        let xs: Vec<Vector> = best.into_iter().map(|(_, x)| x).collect();
        Ok(self.lift(&w, &xs))
    }

    fn project(&self, z: &[Rational], delta: &Rational) -> Result<Vector> {
        match self.hrep() {
            Some(h) => super::project_hrep(&h, z, &self.interior_center()),
            None => super::project_via_ellipsoid(self, z, delta),
        }
    }

    fn projection_exact(&self) -> bool {
        self.factors.iter().all(|f| f.hrep().is_some())
    }

    fn hrep(&self) -> Option<HRep> {
        let n = self.players();
        let d = self.dim();
        let mut h = HRep { dim: d, a: Vec::new(), b: Vec::new(), e: Vec::new(), f: Vec::new() };
        for (i, f) in self.factors.iter().enumerate() {
            let fh = f.hrep()?;
            let r = self.block(i);
            let homog = |row: &Vec<Rational>, rhs: &Rational| {
                let mut full = zeros(d);
                full[i] = Rational::from(-rhs);
                full[r.clone()].clone_from_slice(row);
                full
            };
            for (row, bi) in fh.a.iter().zip(&fh.b) {
                h.a.push(homog(row, bi));
                h.b.push(Rational::new());
            }
            for (row, fi) in fh.e.iter().zip(&fh.f) {
                h.e.push(homog(row, fi));
                h.f.push(Rational::new());
            }
        }
        for i in 0..n {
            let mut row = zeros(d);
            row[i] = Rational::from(-1);
            h.a.push(row);
            h.b.push(Rational::from(-&self.alpha));
        }
        let mut row = zeros(d);
        for v in row.iter_mut().take(n) {
            *v = Rational::from(1);
        }
        h.e.push(row);
        h.f.push(Rational::from(1));
        Some(h)
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::Lift {
            mode: match self.mode {
                LiftMode::TwoPlayer => LiftModeDesc::TwoPlayer,
                LiftMode::Harmonic => LiftModeDesc::Harmonic,
            },
            alpha: fmt_rational(&self.alpha),
            factors: self.factors.iter().map(|f| f.descriptor()).collect(),
        }
    }
}
