//! Small dense linear algebra over exact rationals.

use rug::Rational;

pub type Vector = Vec<Rational>;
/// Row-major dense matrix.
pub type Matrix = Vec<Vec<Rational>>;

pub fn zeros(n: usize) -> Vector {
    vec![Rational::new(); n]
}

pub fn from_i64(v: &[i64]) -> Vector {
    v.iter().map(|&x| Rational::from(x)).collect()
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    debug_assert_eq!(a.len(), b.len());
    let mut s = Rational::new();
    for (x, y) in a.iter().zip(b) {
        s += Rational::from(x * y);
    }
    s
}

pub fn add(a: &[Rational], b: &[Rational]) -> Vector {
    a.iter().zip(b).map(|(x, y)| Rational::from(x + y)).collect()
}

pub fn sub(a: &[Rational], b: &[Rational]) -> Vector {
    a.iter().zip(b).map(|(x, y)| Rational::from(x - y)).collect()
}

pub fn scale(a: &[Rational], s: &Rational) -> Vector {
    a.iter().map(|x| Rational::from(x * s)).collect()
}

/// a + s·b
pub fn axpy(a: &[Rational], s: &Rational, b: &[Rational]) -> Vector {
    a.iter().zip(b).map(|(x, y)| Rational::from(s * y) + x).collect()
}

pub fn neg(a: &[Rational]) -> Vector {
    a.iter().map(|x| Rational::from(-x)).collect()
}

pub fn to_f64(a: &[Rational]) -> Vec<f64> {
    a.iter().map(|x| x.to_f64()).collect()
}

pub fn from_f64(a: &[f64]) -> Vector {
    a.iter().map(|&x| Rational::from_f64(x).expect("finite")).collect()
}

pub fn mat_vec(m: &Matrix, v: &[Rational]) -> Vector {
    m.iter().map(|row| dot(row, v)).collect()
}

pub fn mat_t_vec(m: &Matrix, v: &[Rational]) -> Vector {
    let cols = m.first().map_or(0, |r| r.len());
    let mut out = zeros(cols);
    for (row, vi) in m.iter().zip(v) {
        if *vi.numer() == 0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(row) {
            *o += Rational::from(x * vi);
        }
    }
    out
}

pub fn transpose(m: &Matrix) -> Matrix {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    (0..cols).map(|j| (0..rows).map(|i| m[i][j].clone()).collect()).collect()
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let bt = transpose(b);
    a.iter().map(|row| bt.iter().map(|col| dot(row, col)).collect()).collect()
}

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| Rational::from(u8::from(i == j))).collect())
        .collect()
}

/// Solves `m x = b` by Gaussian elimination; `None` if singular.
pub fn solve(m: &Matrix, b: &[Rational]) -> Option<Vector> {
    let n = m.len();
    let mut a: Matrix = m
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| *a[r][col].numer() != 0)?;
        a.swap(col, piv);
        let p = a[col][col].clone();
        for x in a[col].iter_mut().skip(col) {
            *x /= &p;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || *row[col].numer() == 0 {
                continue;
            }
            let f = row[col].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row).skip(col) {
                *x -= Rational::from(&f * y);
            }
        }
    }
    Some(a.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

/// Inverse of a square matrix; `None` if singular.
pub fn inverse(m: &Matrix) -> Option<Matrix> {
    let n = m.len();
    let mut a: Matrix = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| Rational::from(u8::from(i == j))));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| *a[r][col].numer() != 0)?;
        a.swap(col, piv);
        let p = a[col][col].clone();
        for x in a[col].iter_mut() {
            *x /= &p;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || *row[col].numer() == 0 {
                continue;
            }
            let f = row[col].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x -= Rational::from(&f * y);
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Reduced row echelon form; returns the reduced rows and pivot columns.
pub fn rref(m: &Matrix) -> (Matrix, Vec<usize>) {
    let mut a = m.clone();
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(piv) = (r..rows).find(|&i| *a[i][c].numer() != 0) else {
            continue;
        };
        a.swap(r, piv);
        let p = a[r][c].clone();
        for x in a[r].iter_mut() {
            *x /= &p;
        }
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || *row[c].numer() == 0 {
                continue;
            }
            let f = row[c].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x -= Rational::from(&f * y);
            }
        }
        pivots.push(c);
        r += 1;
    }
    a.truncate(r);
    (a, pivots)
}

/// Frobenius norm squared.
pub fn frobenius2(m: &Matrix) -> Rational {
    let mut s = Rational::new();
    for row in m {
        for x in row {
            s += Rational::from(x.square_ref());
        }
    }
    s
}
