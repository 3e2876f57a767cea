//! Exact Euclidean projection onto an H-represented polytope by a primal active-set method.

use rug::Rational;

use super::HRep;
use crate::error::{MintyError, Result};
use crate::linalg::{dot, mat_vec, solve, sub, Matrix, Vector};

const MAX_PIVOTS: usize = 10_000;

/// Projects `x` onto `{y : a y ≤ b, e y = f}` starting from the feasible point `start`.
///
/// Every iterate is feasible; the result satisfies the KKT conditions exactly.
pub fn project_hrep(h: &HRep, x: &[Rational], start: &[Rational]) -> Result<Vector> {
    if !h.contains(start) {
        return Err(MintyError::OracleFailure("projection start point is infeasible".into()));
    }
    if h.contains(x) {
        return Ok(x.to_vec());
    }
    let mut y = start.to_vec();
    // working set: equality rows are always present and listed first
    let mut rows: Matrix = Vec::new();
    let mut ineq: Vec<Option<usize>> = Vec::new();
    for row in &h.e {
        if independent(&rows, row) {
            rows.push(row.clone());
            ineq.push(None);
        }
    }
    for (i, (row, bi)) in h.a.iter().zip(&h.b).enumerate() {
        if dot(row, &y) == *bi && independent(&rows, row) {
            rows.push(row.clone());
            ineq.push(Some(i));
        }
    }
    for _ in 0..MAX_PIVOTS {
        let g = sub(&y, x);
        let lambda = if rows.is_empty() {
            Vec::new()
        } else {
            let gram: Matrix = rows.iter().map(|r| rows.iter().map(|s| dot(r, s)).collect()).collect();
            let rhs: Vector = mat_vec(&rows, &g).into_iter().map(|v| -v).collect();
            solve(&gram, &rhs).ok_or_else(|| MintyError::OracleFailure("dependent working set".into()))?
        };
        // p = −g − Wᵀλ
        let mut p: Vector = g.iter().map(|v| Rational::from(-v)).collect();
        for (r, l) in rows.iter().zip(&lambda) {
            for (pj, rj) in p.iter_mut().zip(r) {
                *pj -= Rational::from(rj * l);
            }
        }
        if p.iter().all(|v| *v.numer() == 0) {
            let drop = ineq
                .iter()
                .zip(&lambda)
                .enumerate()
                .filter(|(_, (k, l))| k.is_some() && **l < 0)
                .min_by_key(|(_, (k, _))| k.unwrap())
                .map(|(pos, _)| pos);
            match drop {
                None => return Ok(y),
                Some(pos) => {
                    rows.remove(pos);
                    ineq.remove(pos);
                }
            }
            continue;
        }
        let mut step = Rational::from(1);
        let mut blocking = None;
        for (i, (row, bi)) in h.a.iter().zip(&h.b).enumerate() {
            if ineq.contains(&Some(i)) {
                continue;
            }
            let ap = dot(row, &p);
            if ap > 0 {
                let t = Rational::from(bi - &dot(row, &y)) / &ap;
                if t < step || (t == step && blocking.is_none() && t < 1) {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        for (yj, pj) in y.iter_mut().zip(&p) {
            *yj += Rational::from(pj * &step);
        }
        if let Some(i) = blocking {
            rows.push(h.a[i].clone());
            ineq.push(Some(i));
        }
    }
    Err(MintyError::OracleFailure("active-set projection did not converge".into()))
}

fn independent(rows: &Matrix, row: &[Rational]) -> bool {
    let mut m = rows.clone();
    m.push(row.to_vec());
    crate::linalg::rref(&m).1.len() == m.len()
}
