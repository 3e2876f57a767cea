//! Arbitrary-precision scalars and the truncation policy used by the ellipsoid engine.
//!
//! Two backends share the [`Scalar`] interface:
//!
//! - [`Exact`]: exact rationals, truncated to `p` fractional bits after each update;
//! - [`BigFloat`]: MPFR floats with a `p`-bit mantissa.
//!
//! Everything outside the engine works with exact [`Rational`]s.

use std::cmp::Ordering;
use std::fmt;

use rug::float::Round;
use rug::ops::{DivRounding, Pow};
use rug::ops::AssignRound;
use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Arithmetic backend selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ArithMode {
    /// Exact rationals with post-update truncation (reference mode).
    #[default]
    Rational,
    /// MPFR floats with a `p`-bit mantissa (fast mode).
    Float,
}

impl fmt::Display for ArithMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithMode::Rational => write!(f, "rational"),
            ArithMode::Float => write!(f, "float"),
        }
    }
}

impl std::str::FromStr for ArithMode {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        match s {
            "rational" => Ok(ArithMode::Rational),
            "float" => Ok(ArithMode::Float),
            other => Err(ParseError(format!("unknown arithmetic mode `{other}`"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot parse number: {0}")]
pub struct ParseError(pub String);

/// Truncates `x` toward zero to `p` fractional bits.
///
/// The result differs from `x` by less than `2^{-p}` and is idempotent.
pub fn truncate(x: &Rational, p: u32) -> Rational {
    if x.denom().is_power_of_two() && x.denom().significant_bits() <= p + 1 {
        return x.clone();
    }
    let scaled = Integer::from(x.numer() << p);
    let q = scaled.div_trunc(x.denom());
    Rational::from((q, Integer::from(1) << p))
}

/// Number of fractional bits of a dyadic rational, `None` if the denominator is not a power of two.
pub fn fractional_bits(x: &Rational) -> Option<u32> {
    if x.denom().is_power_of_two() {
        Some(x.denom().significant_bits() - 1)
    } else {
        None
    }
}

/// Parses `"3/7"`, `"-2"`, `"0.125"` or `"1e-6"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, ParseError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(ParseError("empty string".into()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: Integer = n.trim().parse().map_err(|_| ParseError(s.into()))?;
        let d: Integer = d.trim().parse().map_err(|_| ParseError(s.into()))?;
        if d == 0 {
            return Err(ParseError(format!("{s}: zero denominator")));
        }
        return Ok(Rational::from((n, d)));
    }
    if let Ok(i) = t.parse::<Integer>() {
        return Ok(Rational::from(i));
    }
    parse_decimal(t).ok_or_else(|| ParseError(s.into()))
}

fn parse_decimal(t: &str) -> Option<Rational> {
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let n: Integer = if digits.is_empty() { Integer::new() } else { digits.parse().ok()? };
    let shift = exp - frac_part.len() as i32;
    let ten = Integer::from(10);
    let mut q = Rational::from(n);
    if shift >= 0 {
        q *= Integer::from(ten.pow(shift as u32));
    } else {
        q /= Integer::from(ten.pow((-shift) as u32));
    }
    if neg {
        q = -q;
    }
    Some(q)
}

/// Formats a rational as `"p/q"` (or `"p"` for integers).
pub fn fmt_rational(q: &Rational) -> String {
    if *q.denom() == 1 {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Decimal rendering with `sig` significant digits.
pub fn to_decimal(q: &Rational, sig: usize) -> String {
    if *q.numer() == 0 {
        return "0".into();
    }
    let bits = (sig as f64 * std::f64::consts::LOG2_10).ceil() as u32 + 16;
    let f = Float::with_val(bits, q);
    f.to_string_radix(10, Some(sig))
}

/// Nearest `f64`; saturates to ±inf or 0 outside the double range.
pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64()
}

/// Rational from an `f64` (exact binary value).
pub fn from_f64(x: f64) -> Rational {
    Rational::from_f64(x).expect("finite f64")
}

/// Rational `num/den`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::from((num, den))
}

/// Natural logarithm of a positive rational as a 128-bit float converted to f64.
pub fn ln(q: &Rational) -> f64 {
    assert!(*q > 0, "ln of non-positive rational");
    Float::with_val(128, q).ln().to_f64()
}

/// log2 |q| as f64, valid far outside the f64 exponent range.
pub fn log2_abs(q: &Rational) -> f64 {
    if *q.numer() == 0 {
        return f64::NEG_INFINITY;
    }
    let f = Float::with_val(128, q).abs();
    f.log2().to_f64()
}

/// Rational approximation of √q with at least `bits` correct significant bits, rounded down.
pub fn sqrt_lower(q: &Rational, bits: u32) -> Rational {
    assert!(*q >= 0, "sqrt of negative rational");
    if *q.numer() == 0 {
        return Rational::new();
    }
    // scale so that the integer square root carries `bits` significant bits
    let lg = log2_abs(q).floor() as i64;
    let shift = 2 * (bits as i64 + 2) - lg;
    let shift = if shift % 2 != 0 { shift + 1 } else { shift };
    let scaled: Integer = if shift >= 0 {
        Integer::from(q.numer() << shift as u32).div_floor(q.denom())
    } else {
        Integer::from(q.numer()).div_floor(Integer::from(q.denom() << (-shift) as u32))
    };
    let r = scaled.sqrt();
    if shift >= 0 {
        Rational::from((r, Integer::from(1) << (shift / 2) as u32))
    } else {
        Rational::from(r << (-shift / 2) as u32)
    }
}

/// Rational upper bound on √q with at least `bits` correct significant bits.
pub fn sqrt_upper(q: &Rational, bits: u32) -> Rational {
    let lo = sqrt_lower(q, bits);
    if Rational::from(lo.square_ref()) == *q {
        return lo;
    }
    let mut ulp = lo.clone() >> bits;
    if *ulp.numer() == 0 {
        ulp = Rational::from((1, 1)) >> bits;
    }
    let mut hi = lo + &ulp;
    while Rational::from(hi.square_ref()) < *q {
        hi += &ulp;
    }
    hi
}

/// Euclidean norm upper bound (rational, `bits` significant bits).
pub fn norm_upper(v: &[Rational], bits: u32) -> Rational {
    sqrt_upper(&norm2(v), bits)
}

/// Squared Euclidean norm.
pub fn norm2(v: &[Rational]) -> Rational {
    let mut s = Rational::new();
    for x in v {
        s += Rational::from(x.square_ref());
    }
    s
}

/// Infinity norm.
pub fn norm_inf(v: &[Rational]) -> Rational {
    let mut m = Rational::new();
    for x in v {
        let a = Rational::from(x.abs_ref());
        if a > m {
            m = a;
        }
    }
    m
}

/// Maximum of two rationals by reference.
pub fn max_ref<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a.cmp(b) == Ordering::Less {
        b
    } else {
        a
    }
}

/// Scalar interface used by the ellipsoid engine.
pub trait Scalar: Clone + fmt::Debug + Send + Sync + 'static {
    /// Converts a rational at working precision `p`.
    fn from_rational(q: &Rational, p: u32) -> Self;
    /// Exact rational value (binary floats are dyadic).
    fn to_rational(&self) -> Rational;
    fn zero(p: u32) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn mul_rational(&self, q: &Rational) -> Self;
    /// Square root at precision `p`.
    fn sqrt(&self, p: u32) -> Self;
    /// Entry truncation `≈_p` applied after each update.
    fn truncate(&self, p: u32) -> Self;
    fn to_f64(&self) -> f64;
    fn log2_abs(&self) -> f64;
    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    /// Value as an MPFR float with `prec` mantissa bits.
    fn to_float(&self, prec: u32) -> Float;
}

/// Exact-rational backend.
#[derive(Clone, Debug, PartialEq)]
pub struct Exact(pub Rational);

impl Scalar for Exact {
    fn from_rational(q: &Rational, _p: u32) -> Self {
        Exact(q.clone())
    }
    fn to_rational(&self) -> Rational {
        self.0.clone()
    }
    fn zero(_p: u32) -> Self {
        Exact(Rational::new())
    }
    fn add(&self, o: &Self) -> Self {
        Exact(Rational::from(&self.0 + &o.0))
    }
    fn sub(&self, o: &Self) -> Self {
        Exact(Rational::from(&self.0 - &o.0))
    }
    fn mul(&self, o: &Self) -> Self {
        Exact(Rational::from(&self.0 * &o.0))
    }
    fn div(&self, o: &Self) -> Self {
        Exact(Rational::from(&self.0 / &o.0))
    }
    fn mul_rational(&self, q: &Rational) -> Self {
        Exact(Rational::from(&self.0 * q))
    }
    fn sqrt(&self, p: u32) -> Self {
        Exact(sqrt_lower(&self.0, p + 64))
    }
    fn truncate(&self, p: u32) -> Self {
        Exact(truncate(&self.0, p))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
    fn log2_abs(&self) -> f64 {
        log2_abs(&self.0)
    }
    fn is_zero(&self) -> bool {
        *self.0.numer() == 0
    }
    fn is_positive(&self) -> bool {
        *self.0.numer() > 0
    }
    fn to_float(&self, prec: u32) -> Float {
        Float::with_val(prec, &self.0)
    }
}

/// MPFR float backend with a fixed mantissa length.
#[derive(Clone, Debug, PartialEq)]
pub struct BigFloat(pub Float);

impl BigFloat {
    fn prec(&self) -> u32 {
        self.0.prec()
    }
}

impl Scalar for BigFloat {
    fn from_rational(q: &Rational, p: u32) -> Self {
        BigFloat(Float::with_val(p.max(64), q))
    }
    fn to_rational(&self) -> Rational {
        self.0.to_rational().expect("finite float")
    }
    fn zero(p: u32) -> Self {
        BigFloat(Float::new(p.max(64)))
    }
    fn add(&self, o: &Self) -> Self {
        BigFloat(Float::with_val(self.prec(), &self.0 + &o.0))
    }
    fn sub(&self, o: &Self) -> Self {
        BigFloat(Float::with_val(self.prec(), &self.0 - &o.0))
    }
    fn mul(&self, o: &Self) -> Self {
        BigFloat(Float::with_val(self.prec(), &self.0 * &o.0))
    }
    fn div(&self, o: &Self) -> Self {
        BigFloat(Float::with_val(self.prec(), &self.0 / &o.0))
    }
    fn mul_rational(&self, q: &Rational) -> Self {
        BigFloat(Float::with_val(self.prec(), &self.0 * q))
    }
    fn sqrt(&self, p: u32) -> Self {
        BigFloat(Float::with_val(p.max(64), self.0.sqrt_ref()))
    }
    fn truncate(&self, p: u32) -> Self {
        if self.0.prec() <= p {
            return self.clone();
        }
        let mut f = Float::new(p.max(64));
        f.assign_round(&self.0, Round::Zero);
        BigFloat(f)
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
    fn log2_abs(&self) -> f64 {
        if self.0.is_zero() {
            return f64::NEG_INFINITY;
        }
        Float::with_val(64, self.0.abs_ref()).log2().to_f64()
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn is_positive(&self) -> bool {
        self.0.is_sign_positive() && !self.0.is_zero()
    }
    fn to_float(&self, prec: u32) -> Float {
        Float::with_val(prec, &self.0)
    }
}
