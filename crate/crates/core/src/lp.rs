//! Dense two-phase simplex with Bland's rule, generic over exact rationals and `f64`.

use std::fmt::Debug;

use rug::Rational;

/// Number type usable by the simplex tableau.
pub trait LpNum: Clone + Debug + PartialOrd {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Strictly positive beyond the type's tolerance.
    fn is_pos(&self) -> bool;
    /// Strictly negative beyond the type's tolerance.
    fn is_neg(&self) -> bool;
    fn is_zero(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

impl LpNum for Rational {
    fn zero() -> Self {
        Rational::new()
    }
    fn one() -> Self {
        Rational::from(1)
    }
    fn add(&self, o: &Self) -> Self {
        Rational::from(self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Rational::from(self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Rational::from(self * o)
    }
    fn div(&self, o: &Self) -> Self {
        Rational::from(self / o)
    }
    fn neg(&self) -> Self {
        Rational::from(-self)
    }
    fn is_pos(&self) -> bool {
        *self.numer() > 0
    }
    fn is_neg(&self) -> bool {
        *self.numer() < 0
    }
}

const F64_TOL: f64 = 1e-11;

impl LpNum for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        *self > F64_TOL
    }
    fn is_neg(&self) -> bool {
        *self < -F64_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// Linear program `min objective·x` subject to the rows, with `x[j] ≥ 0` unless `free[j]`.
#[derive(Clone, Debug)]
pub struct Lp<T> {
    pub objective: Vec<T>,
    pub rows: Vec<(Vec<T>, Cmp, T)>,
    pub free: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T: LpNum> Lp<T> {
    pub fn new(objective: Vec<T>) -> Self {
        let n = objective.len();
        Lp { objective, rows: Vec::new(), free: vec![false; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, j: usize) {
        self.free[j] = true;
    }

    pub fn push(&mut self, coeffs: Vec<T>, cmp: Cmp, rhs: T) {
        assert_eq!(coeffs.len(), self.objective.len());
        self.rows.push((coeffs, cmp, rhs));
    }

    /// Solves the program with the two-phase simplex method.
    pub fn solve(&self) -> LpOutcome<T> {
        let n = self.num_vars();
        // column layout: for each original var, one column (+ one for negative part if free)
        let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
        let mut ncols = 0;
        for j in 0..n {
            if self.free[j] {
                col_of.push((ncols, Some(ncols + 1)));
                ncols += 2;
            } else {
                col_of.push((ncols, None));
                ncols += 1;
            }
        }
        let m = self.rows.len();
        let nslack = self.rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let total = ncols + nslack + m; // structural + slack + artificial
        let art0 = ncols + nslack;
        let mut tab: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut rhs: Vec<T> = Vec::with_capacity(m);
        let mut basis: Vec<usize> = Vec::with_capacity(m);
        let mut slack = ncols;
        for (i, (coeffs, cmp, b)) in self.rows.iter().enumerate() {
            let mut row = vec![T::zero(); total];
            for j in 0..n {
                let (p, q) = col_of[j];
                row[p] = coeffs[j].clone();
                if let Some(q) = q {
                    row[q] = coeffs[j].neg();
                }
            }
            match cmp {
                Cmp::Le => {
                    row[slack] = T::one();
                    slack += 1;
                }
                Cmp::Ge => {
                    row[slack] = T::one().neg();
                    slack += 1;
                }
                Cmp::Eq => {}
            }
            let mut b = b.clone();
            if b.is_neg() {
                for x in row.iter_mut() {
                    *x = x.neg();
                }
                b = b.neg();
            }
            row[art0 + i] = T::one();
            tab.push(row);
            rhs.push(b);
            basis.push(art0 + i);
        }
        // phase 1
        let mut cost1 = vec![T::zero(); total];
        for c in cost1.iter_mut().skip(art0) {
            *c = T::one();
        }
        let mut t = Tableau { tab, rhs, basis, active: total };
        if t.optimize(&cost1).is_err() {
            return LpOutcome::Infeasible;
        }
        if t.objective(&cost1).is_pos() {
            return LpOutcome::Infeasible;
        }
        // drive artificials out of the basis
        let mut i = 0;
        while i < t.basis.len() {
            if t.basis[i] >= art0 {
                if let Some(j) = (0..art0).find(|&j| !t.tab[i][j].is_zero()) {
                    t.pivot(i, j);
                    i += 1;
                } else {
                    // redundant row
                    t.tab.remove(i);
                    t.rhs.remove(i);
                    t.basis.remove(i);
                }
            } else {
                i += 1;
            }
        }
        t.active = art0;
        let mut cost2 = vec![T::zero(); total];
        for j in 0..n {
            let (p, q) = col_of[j];
            cost2[p] = self.objective[j].clone();
            if let Some(q) = q {
                cost2[q] = self.objective[j].neg();
            }
        }
        if t.optimize(&cost2).is_err() {
            return LpOutcome::Unbounded;
        }
        let mut colval = vec![T::zero(); total];
        for (r, &b) in t.basis.iter().enumerate() {
            colval[b] = t.rhs[r].clone();
        }
        let x: Vec<T> = (0..n)
            .map(|j| {
                let (p, q) = col_of[j];
                match q {
                    Some(q) => colval[p].sub(&colval[q]),
                    None => colval[p].clone(),
                }
            })
            .collect();
        let mut value = T::zero();
        for (c, v) in self.objective.iter().zip(&x) {
            value = value.add(&c.mul(v));
        }
        LpOutcome::Optimal { x, value }
    }
}

struct Tableau<T> {
    tab: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    /// columns `>= active` may not enter the basis
    active: usize,
}

struct UnboundedRay;

impl<T: LpNum> Tableau<T> {
    fn objective(&self, cost: &[T]) -> T {
        let mut s = T::zero();
        for (r, &b) in self.basis.iter().enumerate() {
            s = s.add(&cost[b].mul(&self.rhs[r]));
        }
        s
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.tab[r][c].clone();
        for x in self.tab[r].iter_mut() {
            *x = x.div(&p);
        }
        self.rhs[r] = self.rhs[r].div(&p);
        let prow = self.tab[r].clone();
        let prhs = self.rhs[r].clone();
        for i in 0..self.tab.len() {
            if i == r {
                continue;
            }
            let f = self.tab[i][c].clone();
            if f.is_zero() {
                continue;
            }
            for (x, y) in self.tab[i].iter_mut().zip(&prow) {
                if !y.is_zero() {
                    *x = x.sub(&f.mul(y));
                }
            }
            self.rhs[i] = self.rhs[i].sub(&f.mul(&prhs));
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` from the current feasible basis (Bland's rule).
    fn optimize(&mut self, cost: &[T]) -> Result<(), UnboundedRay> {
        loop {
            // reduced costs
            let mut entering = None;
            for j in 0..self.active {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j].clone();
                for (r, &b) in self.basis.iter().enumerate() {
                    let a = &self.tab[r][j];
                    if !a.is_zero() && !cost[b].is_zero() {
                        rc = rc.sub(&cost[b].mul(a));
                    }
                }
                if rc.is_neg() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, T)> = None;
            for r in 0..self.tab.len() {
                let a = &self.tab[r][c];
                if a.is_pos() {
                    let ratio = self.rhs[r].div(a);
                    let better = match &best {
                        None => true,
                        Some((br, bv)) => {
                            ratio < *bv || (!(ratio > *bv) && self.basis[r] < self.basis[*br])
                        }
                    };
                    if better {
                        best = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = best else {
                return Err(UnboundedRay);
            };
            self.pivot(r, c);
        }
    }
}
