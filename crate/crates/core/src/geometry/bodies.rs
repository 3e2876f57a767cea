use rug::Rational;

use super::{normalize_inf, BodyDescriptor, ConvexBody, HRep, Separation};
use crate::error::{MintyError, Result};
use crate::linalg::{dot, sub, zeros, Matrix, Vector};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::scalar::{fmt_rational, norm2, norm_upper, sqrt_upper};

const ORACLE_BITS: u32 = 256;

fn one() -> Rational {
    Rational::from(1)
}

/// Axis-aligned box `∏ [lower_j, upper_j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxBody {
    pub lower: Vector,
    pub upper: Vector,
}

impl BoxBody {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(MintyError::ParameterOutOfRange("box bounds length mismatch".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l >= u) {
            return Err(MintyError::EmptyInterior);
        }
        Ok(BoxBody { lower, upper })
    }

    /// `[-h, h]^d`.
    pub fn symmetric(d: usize, h: Rational) -> Self {
        BoxBody { lower: vec![Rational::from(-&h); d], upper: vec![h; d] }
    }

    /// `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        BoxBody { lower: zeros(d), upper: vec![one(); d] }
    }
}

impl ConvexBody for BoxBody {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn outer_radius(&self) -> Rational {
        let far: Vector = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let (l, u) = (Rational::from(l.abs_ref()), Rational::from(u.abs_ref()));
                if l > u {
                    l
                } else {
                    u
                }
            })
            .collect();
        let r = norm_upper(&far, 64);
        if r < 1 {
            one()
        } else {
            r
        }
    }

    fn inner_radius(&self) -> Rational {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| Rational::from(u - l) / 2)
            .min()
            .expect("nonempty box")
    }

    fn interior_center(&self) -> Vector {
        self.lower.iter().zip(&self.upper).map(|(l, u)| Rational::from(l + u) / 2).collect()
    }

    fn membership(&self, x: &[Rational], delta: &Rational) -> bool {
        matches!(self.separation(x, delta), Separation::Inside)
    }

    fn separation(&self, x: &[Rational], delta: &Rational) -> Separation {
        for (j, xj) in x.iter().enumerate() {
            let mut c = zeros(x.len());
            if Rational::from(xj - delta) > self.upper[j] {
                c[j] = one();
                return Separation::Cut(c);
            }
            if Rational::from(xj + delta) < self.lower[j] {
                c[j] = Rational::from(-1);
                return Separation::Cut(c);
            }
        }
        Separation::Inside
    }

    fn linear_min(&self, c: &[Rational], _delta: &Rational) -> Result<Vector> {
        Ok(c
            .iter()
            .enumerate()
            .map(|(j, cj)| if *cj.numer() > 0 { self.lower[j].clone() } else { self.upper[j].clone() })
            .collect())
    }

    fn project(&self, x: &[Rational], _delta: &Rational) -> Result<Vector> {
        Ok(x
            .iter()
            .enumerate()
            .map(|(j, xj)| {
                if *xj < self.lower[j] {
                    self.lower[j].clone()
                } else if *xj > self.upper[j] {
                    self.upper[j].clone()
                } else {
                    xj.clone()
                }
            })
            .collect())
    }

    fn hrep(&self) -> Option<HRep> {
        let d = self.dim();
        let mut a = Vec::with_capacity(2 * d);
        let mut b = Vec::with_capacity(2 * d);
        for j in 0..d {
            let mut row = zeros(d);
            row[j] = one();
            a.push(row);
            b.push(self.upper[j].clone());
            let mut row = zeros(d);
            row[j] = Rational::from(-1);
            a.push(row);
            b.push(Rational::from(-&self.lower[j]));
        }
        Some(HRep::inequalities(d, a, b))
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::Box {
            lower: self.lower.iter().map(fmt_rational).collect(),
            upper: self.upper.iter().map(fmt_rational).collect(),
        }
    }
}

/// Euclidean ball `B_radius(center)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallBody {
    pub center: Vector,
    pub radius: Rational,
}

impl BallBody {
    pub fn new(center: Vector, radius: Rational) -> Result<Self> {
        if radius <= 0 || center.is_empty() {
            return Err(MintyError::EmptyInterior);
        }
        Ok(BallBody { center, radius })
    }

    fn dist2(&self, x: &[Rational]) -> Rational {
        norm2(&sub(x, &self.center))
    }
}

impl ConvexBody for BallBody {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn outer_radius(&self) -> Rational {
        let r = norm_upper(&self.center, 64) + &self.radius;
        if r < 1 {
            one()
        } else {
            r
        }
    }

    fn inner_radius(&self) -> Rational {
        self.radius.clone()
    }

    fn interior_center(&self) -> Vector {
        self.center.clone()
    }

    fn membership(&self, x: &[Rational], delta: &Rational) -> bool {
        let r = Rational::from(&self.radius + delta);
        self.dist2(x) <= Rational::from(r.square_ref())
    }

    fn separation(&self, x: &[Rational], delta: &Rational) -> Separation {
        if self.membership(x, delta) {
            return Separation::Inside;
        }
        Separation::Cut(normalize_inf(&sub(x, &self.center)).expect("outside point differs from center"))
    }

    fn linear_min(&self, c: &[Rational], delta: &Rational) -> Result<Vector> {
        let n2 = norm2(c);
        if *n2.numer() == 0 {
            return Ok(self.center.clone());
        }
        // c − ρ c/‖c‖ with the norm rounded up keeps the point inside
        let bits = bits_for(delta);
        let norm = sqrt_upper(&n2, bits);
        let s = Rational::from(&self.radius / &norm);
        Ok(self.center.iter().zip(c).map(|(ci, gi)| Rational::from(ci - Rational::from(gi * &s))).collect())
    }

    fn project(&self, x: &[Rational], delta: &Rational) -> Result<Vector> {
        if self.membership(x, &Rational::new()) {
            return Ok(x.to_vec());
        }
        let diff = sub(x, &self.center);
        let norm = sqrt_upper(&norm2(&diff), bits_for(delta));
        let s = Rational::from(&self.radius / &norm);
        Ok(self.center.iter().zip(&diff).map(|(ci, di)| Rational::from(di * &s) + ci).collect())
    }

    fn projection_exact(&self) -> bool {
        false
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::Ball {
            center: self.center.iter().map(fmt_rational).collect(),
            radius: fmt_rational(&self.radius),
        }
    }
}

fn bits_for(delta: &Rational) -> u32 {
    if *delta.numer() == 0 {
        ORACLE_BITS
    } else {
        let lg = -crate::scalar::log2_abs(delta);
        (lg.max(0.0) as u32 + 32).max(64)
    }
}

/// Probability simplex `Δ(k) = {x ≥ 0, Σ x = 1} ⊂ R^k` (flat: affine dimension `k − 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexBody {
    pub k: usize,
}

impl SimplexBody {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(MintyError::ParameterOutOfRange("simplex needs at least two vertices".into()));
        }
        Ok(SimplexBody { k })
    }

    /// Sort-and-threshold projection in exact arithmetic.
    pub fn project_exact(&self, x: &[Rational]) -> Vector {
        let mut u: Vec<Rational> = x.to_vec();
        u.sort_by(|a, b| b.cmp(a));
        let mut cum = Rational::new();
        let mut theta = Rational::new();
        for (i, ui) in u.iter().enumerate() {
            cum += ui;
            let t = Rational::from(&cum - 1u32) / (i as u32 + 1);
            // ties include the coordinate
            if Rational::from(ui - &t) >= 0 {
                theta = t;
            }
        }
        x.iter()
            .map(|xi| {
                let v = Rational::from(xi - &theta);
                if v > 0 {
                    v
                } else {
                    Rational::new()
                }
            })
            .collect()
    }
}

impl ConvexBody for SimplexBody {
    fn dim(&self) -> usize {
        self.k
    }

    fn outer_radius(&self) -> Rational {
        one()
    }

    fn inner_radius(&self) -> Rational {
        // distance from the centroid to a facet inside the hull is 1/√(k(k−1))
        let k = self.k as u64;
        let s = sqrt_upper(&Rational::from(k * (k - 1)), 64);
        Rational::from(one() / s)
    }

    fn interior_center(&self) -> Vector {
        vec![Rational::from((1, self.k as u64)); self.k]
    }

    fn affine_dim(&self) -> usize {
        self.k - 1
    }

    fn membership(&self, x: &[Rational], delta: &Rational) -> bool {
        matches!(self.separation(x, delta), Separation::Inside)
    }

    fn separation(&self, x: &[Rational], delta: &Rational) -> Separation {
        let k = self.k;
        for (j, xj) in x.iter().enumerate() {
            if Rational::from(xj + delta) < 0 {
                let mut c = zeros(k);
                c[j] = Rational::from(-1);
                return Separation::Cut(c);
            }
        }
        let s: Rational = x.iter().fold(Rational::new(), |acc, v| acc + v);
        if Rational::from(&s - 1u32) > *delta {
            return Separation::Cut(vec![one(); k]);
        }
        if Rational::from(1u32 - &s) > *delta {
            return Separation::Cut(vec![Rational::from(-1); k]);
        }
        Separation::Inside
    }

    fn linear_min(&self, c: &[Rational], _delta: &Rational) -> Result<Vector> {
        let j = (0..self.k).min_by(|&a, &b| c[a].cmp(&c[b]).then(a.cmp(&b))).expect("k >= 2");
        let mut x = zeros(self.k);
        x[j] = one();
        Ok(x)
    }

    fn project(&self, x: &[Rational], _delta: &Rational) -> Result<Vector> {
        Ok(self.project_exact(x))
    }

    fn hrep(&self) -> Option<HRep> {
        let k = self.k;
        let a = (0..k)
            .map(|j| {
                let mut r = zeros(k);
                r[j] = Rational::from(-1);
                r
            })
            .collect();
        Some(HRep { dim: k, a, b: zeros(k), e: vec![vec![one(); k]], f: vec![one()] })
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::Simplex { dim: self.k }
    }
}

/// Bounded full-dimensional polytope `{x : a x ≤ b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HPolytopeBody {
    pub a: Matrix,
    pub b: Vector,
    row_norm_upper: Vec<Rational>,
    center: Vector,
    r_in: Rational,
    r_out: Rational,
}

impl HPolytopeBody {
    /// Builds the polytope, computing its bounding box and Chebyshev ball by exact LPs.
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        let d = a.first().map(|r| r.len()).ok_or(MintyError::EmptyInterior)?;
        if a.iter().any(|r| r.len() != d) || a.len() != b.len() {
            return Err(MintyError::ParameterOutOfRange("polytope rows have inconsistent length".into()));
        }
        let row_norm_upper: Vec<Rational> = a.iter().map(|r| norm_upper(r, 64)).collect();
        if row_norm_upper.iter().any(|n| *n.numer() == 0) {
            return Err(MintyError::ParameterOutOfRange("zero constraint row".into()));
        }
        // Chebyshev ball: max r s.t. a_i x + r ‖a_i‖ ≤ b_i
        let mut obj = vec![Rational::new(); d + 1];
        obj[d] = Rational::from(-1);
        let mut lp = Lp::new(obj);
        for j in 0..d {
            lp.set_free(j);
        }
        for ((row, bi), nrm) in a.iter().zip(&b).zip(&row_norm_upper) {
            let mut r = row.clone();
            r.push(nrm.clone());
            lp.push(r, Cmp::Le, bi.clone());
        }
        let (center, r_in) = match lp.solve() {
            LpOutcome::Optimal { x, .. } => {
                let r = x[d].clone();
                (x[..d].to_vec(), r)
            }
            LpOutcome::Unbounded => {
                return Err(MintyError::ParameterOutOfRange("polytope is unbounded".into()))
            }
            LpOutcome::Infeasible => return Err(MintyError::EmptyInterior),
        };
        if r_in <= 0 {
            return Err(MintyError::EmptyInterior);
        }
        let mut far = Vec::with_capacity(d);
        for j in 0..d {
            let mut hi = Rational::new();
            for sign in [1i32, -1] {
                let mut obj = zeros(d);
                obj[j] = Rational::from(-sign);
                let mut lp = Lp::new(obj);
                for k in 0..d {
                    lp.set_free(k);
                }
                for (row, bi) in a.iter().zip(&b) {
                    lp.push(row.clone(), Cmp::Le, bi.clone());
                }
                match lp.solve() {
                    LpOutcome::Optimal { value, .. } => {
                        let v = Rational::from(value.abs_ref());
                        if v > hi {
                            hi = v;
                        }
                    }
                    _ => return Err(MintyError::ParameterOutOfRange("polytope is unbounded".into())),
                }
            }
            far.push(hi);
        }
        let r_out = norm_upper(&far, 64);
        let r_out = if r_out < 1 { one() } else { r_out };
        Ok(HPolytopeBody { a, b, row_norm_upper, center, r_in, r_out })
    }

    fn violation(&self, x: &[Rational], delta: &Rational) -> Option<usize> {
        // most violated constraint, measured in units of ‖a_i‖
        let mut worst: Option<(usize, Rational)> = None;
        for (i, (row, bi)) in self.a.iter().zip(&self.b).enumerate() {
            let slack = Rational::from(&dot(row, x) - bi);
            let allowed = Rational::from(delta * &self.row_norm_upper[i]);
            if slack > allowed {
                let score = Rational::from(&slack / &self.row_norm_upper[i]);
                if worst.as_ref().map_or(true, |(_, w)| score > *w) {
                    worst = Some((i, score));
                }
            }
        }
        worst.map(|(i, _)| i)
    }
}

impl ConvexBody for HPolytopeBody {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn outer_radius(&self) -> Rational {
        self.r_out.clone()
    }

    fn inner_radius(&self) -> Rational {
        self.r_in.clone()
    }

    fn interior_center(&self) -> Vector {
        self.center.clone()
    }

    fn membership(&self, x: &[Rational], delta: &Rational) -> bool {
        self.violation(x, delta).is_none()
    }

    fn separation(&self, x: &[Rational], delta: &Rational) -> Separation {
        match self.violation(x, delta) {
            None => Separation::Inside,
            Some(i) => Separation::Cut(normalize_inf(&self.a[i]).expect("nonzero row")),
        }
    }

    fn linear_min(&self, c: &[Rational], _delta: &Rational) -> Result<Vector> {
        let d = self.dim();
        let mut lp = Lp::new(c.to_vec());
        for k in 0..d {
            lp.set_free(k);
        }
        for (row, bi) in self.a.iter().zip(&self.b) {
            lp.push(row.clone(), Cmp::Le, bi.clone());
        }
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => Ok(x),
            other => Err(MintyError::OracleFailure(format!("polytope LP returned {other:?}"))),
        }
    }

    fn project(&self, x: &[Rational], _delta: &Rational) -> Result<Vector> {
        let h = self.hrep().expect("polytope");
        super::project_hrep(&h, x, &self.center)
    }

    fn hrep(&self) -> Option<HRep> {
        Some(HRep::inequalities(self.dim(), self.a.clone(), self.b.clone()))
    }

    fn descriptor(&self) -> BodyDescriptor {
        BodyDescriptor::HPolytope {
            a: self.a.iter().map(|r| r.iter().map(fmt_rational).collect()).collect(),
            b: self.b.iter().map(fmt_rational).collect(),
        }
    }
}
