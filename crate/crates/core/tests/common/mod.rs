#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rug::Rational;

use mintyvi::scalar::parse_rational;

pub fn q(s: &str) -> Rational {
    parse_rational(s).unwrap()
}

pub fn qv(items: &[&str]) -> Vec<Rational> {
    items.iter().map(|s| q(s)).collect()
}

pub fn qi(n: i64, d: u64) -> Rational {
    Rational::from((n, d))
}

/// Random rational in `[lo, hi]` with denominator `den`.
pub fn rand_q(rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: u64) -> Rational {
    let span = ((hi - lo) as u64) * den;
    let k = rng.gen_range(0..=span) as i64;
    Rational::from((lo * den as i64 + k, den))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, d: usize, lo: i64, hi: i64, den: u64) -> Vec<Rational> {
    (0..d).map(|_| rand_q(rng, lo, hi, den)).collect()
}

pub fn f64s(v: &[Rational]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64()).collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
