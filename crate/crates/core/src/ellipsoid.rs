//! Central-cut ellipsoid iteration with truncated updates.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{MintyError, Result};
use crate::geometry::normalize_inf;
use crate::linalg::{Matrix, Vector};
use crate::scalar::{ln, to_decimal, ArithMode, BigFloat, Exact, Scalar};

/// Tag recorded with every cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Body,
    ExtraGradient,
    Gradient,
    Objective,
    LiftBestResponse,
    LiftExtraGradient,
    Adversarial,
    External,
}

impl CutKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CutKind::Body => "body",
            CutKind::ExtraGradient => "extra_gradient",
            CutKind::Gradient => "gradient",
            CutKind::Objective => "objective",
            CutKind::LiftBestResponse => "lift_best_response",
            CutKind::LiftExtraGradient => "lift_extra_gradient",
            CutKind::Adversarial => "adversarial",
            CutKind::External => "external",
        }
    }
}

/// Engine parameters: initial ball `B_R(0)` given by `R²`, volume target `v`, `T` and `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub dim: usize,
    #[serde(with = "crate::io::rational_str")]
    pub radius_sq: Rational,
    /// Stop once the certified volume drops to `v`; `None` runs all `T` steps.
    #[serde(with = "crate::io::opt_rational_str")]
    pub volume: Option<Rational>,
    pub max_iters: usize,
    pub bits: u32,
    pub mode: ArithMode,
}

impl EngineConfig {
    /// Default `T = ⌈5d ln(1/v) + 5d² ln(2R)⌉` and `p = 8T`.
    pub fn new(dim: usize, radius_sq: Rational, volume: Rational, mode: ArithMode) -> Self {
        let t = default_iters(dim, &radius_sq, &volume);
        EngineConfig { dim, radius_sq, volume: Some(volume), max_iters: t, bits: default_bits(t), mode }
    }

    pub fn with_iters(mut self, t: usize) -> Self {
        self.max_iters = t;
        self
    }

    pub fn with_bits(mut self, p: u32) -> Self {
        self.bits = p;
        self
    }
}

pub fn default_iters(dim: usize, radius_sq: &Rational, volume: &Rational) -> usize {
    let d = dim as f64;
    let ln_inv_v = -ln(volume);
    let ln_2r = std::f64::consts::LN_2 + 0.5 * ln(radius_sq);
    (5.0 * d * ln_inv_v + 5.0 * d * d * ln_2r).ceil().max(1.0) as usize
}

pub fn default_bits(t: usize) -> u32 {
    (8 * t).clamp(64, u32::MAX as usize) as u32
}

/// `log₂` of the volume of the unit ball in `R^d`.
pub fn unit_ball_log2_volume(d: usize) -> f64 {
    let mut v = if d % 2 == 0 { 1.0f64 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v.log2()
}

/// `log₂` of the per-cut volume factor `β^{d/2} √((d−1)/(d+1))`, `β = (2d²+3)/(2d²)`.
pub fn cut_log2_ratio(d: usize) -> f64 {
    let df = d as f64;
    let blow = (2.0 * df * df + 3.0) / (2.0 * df * df);
    if d == 1 {
        0.5 * (blow / 4.0).log2()
    } else {
        0.5 * df * blow.log2() + 0.5 * ((df - 1.0) / (df + 1.0)).log2()
    }
}

fn blow_up(d: usize) -> Rational {
    let d2 = (d * d) as u64;
    Rational::from((2 * d2 + 3, 2 * d2))
}

/// `E(A, a) = {x : ⟨x − a, A⁻¹(x − a)⟩ ≤ 1}` over a scalar backend.
#[derive(Clone, Debug)]
pub struct Ellipsoid<S: Scalar> {
    pub shape: Vec<Vec<S>>,
    pub center: Vec<S>,
    pub step: usize,
    pub bits: u32,
}

/// Eigen-structure summary computed from the shape matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub log2_det: f64,
    pub min_axis_log2: f64,
    pub max_axis_log2: f64,
}

impl<S: Scalar> Ellipsoid<S> {
    /// The ball `B_R(0)` with `R² = radius_sq`.
    pub fn ball(d: usize, radius_sq: &Rational, bits: u32) -> Self {
        let shape = (0..d)
            .map(|i| (0..d).map(|j| if i == j { S::from_rational(radius_sq, bits) } else { S::zero(bits) }).collect())
            .collect();
        Ellipsoid { shape, center: vec![S::zero(bits); d], step: 0, bits }
    }

    pub fn from_rational(shape: &Matrix, center: &[Rational], bits: u32) -> Self {
        Ellipsoid {
            shape: shape.iter().map(|r| r.iter().map(|q| S::from_rational(q, bits)).collect()).collect(),
            center: center.iter().map(|q| S::from_rational(q, bits)).collect(),
            step: 0,
            bits,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center_rational(&self) -> Vector {
        self.center.iter().map(|s| s.to_rational()).collect()
    }

    pub fn shape_rational(&self) -> Matrix {
        self.shape.iter().map(|r| r.iter().map(|s| s.to_rational()).collect()).collect()
    }

    /// One central cut through the center with normal `c`.
    pub fn step(&self, c: &[Rational]) -> Result<Self> {
        self.step_scaled(c, &blow_up(self.dim()))
    }

    /// Textbook central cut with factor `d²/(d² − 1)` and no rounding safeguard.
    pub fn step_classic(&self, c: &[Rational]) -> Result<Self> {
        let d = self.dim() as u64;
        if d < 2 {
            return self.step(c);
        }
        self.step_scaled(c, &Rational::from((d * d, d * d - 1)))
    }

    fn step_scaled(&self, c: &[Rational], blow: &Rational) -> Result<Self> {
        let d = self.dim();
        let p = self.bits;
        let c = normalize_inf(c).ok_or(MintyError::DegenerateDirection)?;
        let cs: Vec<S> = c.iter().map(|q| S::from_rational(q, p)).collect();
        let ac: Vec<S> = self
            .shape
            .iter()
            .map(|row| row.iter().zip(&cs).fold(S::zero(p), |acc, (x, y)| acc.add(&x.mul(y))))
            .collect();
        let q = cs.iter().zip(&ac).fold(S::zero(p), |acc, (x, y)| acc.add(&x.mul(y)));
        if q.is_zero() {
            return Err(MintyError::DegenerateDirection);
        }
        if !q.is_positive() {
            return Err(MintyError::PrecisionExhausted { step: self.step, bits: p });
        }
        let sq = q.sqrt(p);
        let denom = sq.mul_rational(&Rational::from(d as u32 + 1));
        let center = self.center.iter().zip(&ac).map(|(a, v)| a.sub(&v.div(&denom)).truncate(p)).collect();
        let mut shape = self.shape.clone();
        if d == 1 {
            shape[0][0] = self.shape[0][0].mul_rational(&Rational::from(blow / 4u32)).truncate(p);
        } else {
            let k = S::from_rational(&Rational::from((2, d as u32 + 1)), p).div(&q);
            for i in 0..d {
                let ki = ac[i].mul(&k);
                for j in i..d {
                    let v = self.shape[i][j].sub(&ki.mul(&ac[j])).mul_rational(blow).truncate(p);
                    shape[j][i] = v.clone();
                    shape[i][j] = v;
                }
            }
        }
        Ok(Ellipsoid { shape, center, step: self.step + 1, bits: p })
    }

    /// LDLᵀ pivots in MPFR at `prec` bits; `None` unless all are positive.
    fn ldl(&self, prec: u32) -> Option<(Vec<Vec<Float>>, Vec<Float>)> {
        let d = self.dim();
        let a: Vec<Vec<Float>> = self.shape.iter().map(|r| r.iter().map(|s| s.to_float(prec)).collect()).collect();
        let mut l = vec![vec![Float::new(prec); d]; d];
        let mut diag: Vec<Float> = Vec::with_capacity(d);
        for j in 0..d {
            let mut dj = a[j][j].clone();
            for k in 0..j {
                dj -= Float::with_val(prec, l[j][k].square_ref()) * &diag[k];
            }
            if !(dj.is_sign_positive() && !dj.is_zero()) {
                return None;
            }
            l[j][j] = Float::with_val(prec, 1);
            for i in j + 1..d {
                let mut v = a[i][j].clone();
                for k in 0..j {
                    v -= Float::with_val(prec, &l[i][k] * &l[j][k]) * &diag[k];
                }
                l[i][j] = v / &dj;
            }
            diag.push(dj);
        }
        Some((l, diag))
    }

    fn work_prec(&self) -> u32 {
        self.bits.max(128) + 64
    }

    /// Positive-definiteness check (Cholesky/LDLᵀ succeeds).
    pub fn is_positive_definite(&self) -> bool {
        self.ldl(self.work_prec()).is_some()
    }

    /// `log₂ det A`, recomputed from the factorization.
    pub fn log2_det(&self) -> Option<f64> {
        let (_, diag) = self.ldl(self.work_prec())?;
        Some(diag.iter().map(|x| Float::with_val(64, x.log2_ref()).to_f64()).sum())
    }

    /// `log₂ vol(E)`.
    pub fn log2_volume(&self) -> Option<f64> {
        Some(unit_ball_log2_volume(self.dim()) + 0.5 * self.log2_det()?)
    }

    /// Factorization-based summary: log-det and extreme semi-axes via power iterations.
    pub fn summary(&self) -> Option<ShapeSummary> {
        let prec = self.work_prec();
        let (l, diag) = self.ldl(prec)?;
        let d = self.dim();
        let log2_det = diag.iter().map(|x| Float::with_val(64, x.log2_ref()).to_f64()).sum();
        // iterations only need enough bits to resolve the condition number
        let spread = diag.iter().map(|x| Float::with_val(64, x.log2_ref()).to_f64()).fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let prec = prec.min(128 + (spread.1 - spread.0).max(0.0).ceil() as u32);
        let l: Vec<Vec<Float>> = l.iter().map(|r| r.iter().map(|x| Float::with_val(prec, x)).collect()).collect();
        let diag: Vec<Float> = diag.iter().map(|x| Float::with_val(prec, x)).collect();
        let a: Vec<Vec<Float>> = self.shape.iter().map(|r| r.iter().map(|s| s.to_float(prec)).collect()).collect();
        let start = || -> Vec<Float> { (0..d).map(|i| Float::with_val(prec, 1.0 + i as f64 / 7.0)).collect() };
        let iters = 30;
        let mut v = start();
        let mut lmax = Float::with_val(prec, 0);
        for _ in 0..iters {
            let w: Vec<Float> = a
                .iter()
                .map(|row| row.iter().zip(&v).fold(Float::with_val(prec, 0), |acc, (x, y)| acc + Float::with_val(prec, x * y)))
                .collect();
            lmax = rayleigh(&v, &w, prec);
            v = normalize(w, prec);
        }
        let mut v = start();
        let mut mu = Float::with_val(prec, 0);
        for _ in 0..iters {
            let w = ldl_solve(&l, &diag, &v, prec);
            mu = rayleigh(&v, &w, prec);
            v = normalize(w, prec);
        }
        let half_log2 = |x: &Float| 0.5 * Float::with_val(64, x.log2_ref()).to_f64();
        Some(ShapeSummary { log2_det, min_axis_log2: -half_log2(&mu), max_axis_log2: half_log2(&lmax) })
    }

    /// Lower-bound checks of `‖a‖ ≤ R2^t`, `‖A‖ ≤ R²2^t`, `‖A⁻¹‖ ≤ R⁻²4^t`; never fires spuriously.
    pub fn check_norm_bounds(&self, radius_sq: &Rational) -> bool {
        let t = self.step as f64;
        let lr2 = crate::scalar::log2_abs(radius_sq);
        let slack = 1e-9;
        let max_center = self.center.iter().map(|s| s.log2_abs()).fold(f64::NEG_INFINITY, f64::max);
        let diags: Vec<f64> = (0..self.dim()).map(|i| self.shape[i][i].log2_abs()).collect();
        let max_diag = diags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_diag = diags.iter().cloned().fold(f64::INFINITY, f64::min);
        max_center <= 0.5 * lr2 + t + slack && max_diag <= lr2 + t + slack && -min_diag <= -lr2 + 2.0 * t + slack
    }
}

fn rayleigh(v: &[Float], w: &[Float], prec: u32) -> Float {
    let num = v.iter().zip(w).fold(Float::with_val(prec, 0), |acc, (x, y)| acc + Float::with_val(prec, x * y));
    let den = v.iter().fold(Float::with_val(prec, 0), |acc, x| acc + Float::with_val(prec, x.square_ref()));
    num / den
}

fn normalize(w: Vec<Float>, prec: u32) -> Vec<Float> {
    let m = w.iter().fold(Float::with_val(prec, 0), |acc, x| {
        let a = Float::with_val(prec, x.abs_ref());
        if a > acc {
            a
        } else {
            acc
        }
    });
    if m.is_zero() {
        return w;
    }
    w.into_iter().map(|x| x / &m).collect()
}

fn ldl_solve(l: &[Vec<Float>], diag: &[Float], b: &[Float], prec: u32) -> Vec<Float> {
    let d = b.len();
    let mut y: Vec<Float> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = b[i].clone();
        for k in 0..i {
            v -= Float::with_val(prec, &l[i][k] * &y[k]);
        }
        y.push(v);
    }
    for i in 0..d {
        y[i] /= &diag[i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            let t = Float::with_val(prec, &l[k][i] * &y[k]);
            y[i] -= t;
        }
    }
    y
}

/// Backend-erased ellipsoid used by the drivers.
#[derive(Clone, Debug)]
pub enum AnyEllipsoid {
    Exact(Ellipsoid<Exact>),
    Float(Ellipsoid<BigFloat>),
}

macro_rules! dispatch {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            AnyEllipsoid::Exact($e) => $body,
            AnyEllipsoid::Float($e) => $body,
        }
    };
}

impl AnyEllipsoid {
    pub fn ball(mode: ArithMode, d: usize, radius_sq: &Rational, bits: u32) -> Self {
        match mode {
            ArithMode::Rational => AnyEllipsoid::Exact(Ellipsoid::ball(d, radius_sq, bits)),
            ArithMode::Float => AnyEllipsoid::Float(Ellipsoid::ball(d, radius_sq, bits)),
        }
    }

    pub fn step(&self, c: &[Rational]) -> Result<Self> {
        Ok(match self {
            AnyEllipsoid::Exact(e) => AnyEllipsoid::Exact(e.step(c)?),
            AnyEllipsoid::Float(e) => AnyEllipsoid::Float(e.step(c)?),
        })
    }

    pub fn step_classic(&self, c: &[Rational]) -> Result<Self> {
        Ok(match self {
            AnyEllipsoid::Exact(e) => AnyEllipsoid::Exact(e.step_classic(c)?),
            AnyEllipsoid::Float(e) => AnyEllipsoid::Float(e.step_classic(c)?),
        })
    }

    pub fn center(&self) -> Vector {
        dispatch!(self, e => e.center_rational())
    }

    pub fn shape(&self) -> Matrix {
        dispatch!(self, e => e.shape_rational())
    }

    pub fn step_index(&self) -> usize {
        dispatch!(self, e => e.step)
    }

    pub fn bits(&self) -> u32 {
        dispatch!(self, e => e.bits)
    }

    pub fn summary(&self) -> Option<ShapeSummary> {
        dispatch!(self, e => e.summary())
    }

    pub fn log2_volume(&self) -> Option<f64> {
        dispatch!(self, e => e.log2_volume())
    }

    pub fn check_norm_bounds(&self, radius_sq: &Rational) -> bool {
        dispatch!(self, e => e.check_norm_bounds(radius_sq))
    }

    /// Whether `x` lies in `E`, decided exactly on the rational shape.
    pub fn contains(&self, x: &[Rational]) -> bool {
        let diff = crate::linalg::sub(x, &self.center());
        match crate::linalg::solve(&self.shape(), &diff) {
            Some(y) => crate::linalg::dot(&diff, &y) <= 1,
            None => false,
        }
    }

    pub fn snapshot(&self) -> EllipsoidSnapshot {
        let s = self.summary();
        EllipsoidSnapshot {
            center: self.center(),
            shape: self.shape(),
            step: self.step_index(),
            bits: self.bits(),
            log2_volume: s.as_ref().map(|s| s.log2_det * 0.5 + unit_ball_log2_volume(self.center().len())),
            min_axis_log2: s.as_ref().map(|s| s.min_axis_log2),
            max_axis_log2: s.as_ref().map(|s| s.max_axis_log2),
        }
    }
}

/// Final ellipsoid with exact entries.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidSnapshot {
    pub center: Vector,
    pub shape: Matrix,
    pub step: usize,
    pub bits: u32,
    pub log2_volume: Option<f64>,
    pub min_axis_log2: Option<f64>,
    pub max_axis_log2: Option<f64>,
}

/// Callback answer at a center.
#[derive(Clone, Debug)]
pub enum Query<T> {
    Found(T),
    Cut { normal: Vector, kind: CutKind },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub kind: CutKind,
    /// Center queried at this step, 40 significant digits.
    pub center: Vec<String>,
    pub center_hash: u64,
    pub normal: Vec<f64>,
    pub volume_log2_upper: f64,
    pub min_axis_log2: f64,
    pub max_axis_log2: f64,
    pub elapsed_us: u64,
}

impl TraceStep {
    pub fn min_axis(&self) -> f64 {
        self.min_axis_log2.exp2()
    }
    pub fn max_axis(&self) -> f64 {
        self.max_axis_log2.exp2()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub bits: u32,
    pub initial_volume_log2: f64,
    pub steps: Vec<TraceStep>,
}

impl IterationTrace {
    pub fn to_csv(&self) -> String {
        let d = self.steps.first().map_or(0, |s| s.center.len());
        let mut out = String::from("step,cut_kind,volume_log2_upper,min_axis,max_axis");
        for i in 0..d {
            let _ = write!(out, ",center_{i}");
        }
        out.push('\n');
        for s in &self.steps {
            let _ = write!(
                out,
                "{},{},{:.6},{:e},{:e}",
                s.step,
                s.kind.as_str(),
                s.volume_log2_upper,
                s.min_axis(),
                s.max_axis()
            );
            for c in &s.center {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Whether two steps queried the same center.
    pub fn has_duplicate_centers(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.steps.iter().any(|s| !seen.insert(s.center_hash))
    }
}

pub fn hash_point(x: &[Rational]) -> u64 {
    let mut h = DefaultHasher::new();
    x.hash(&mut h);
    h.finish()
}

/// How an engine run ended.
#[derive(Clone, Debug)]
pub enum EngineEnd<T> {
    Found(T),
    SmallVolume(Box<EllipsoidSnapshot>),
    Failed(MintyError),
}

#[derive(Clone, Debug)]
pub struct EngineRun<T> {
    pub end: EngineEnd<T>,
    pub trace: IterationTrace,
}

/// Runs at most `T` central cuts from `B_R(0)`, asking `sep` at every center.
///
/// Callback errors abort the run; precision failures end it with a partial trace.
pub fn run_engine<T>(
    cfg: &EngineConfig,
    mut sep: impl FnMut(&[Rational], usize) -> Result<Query<T>>,
) -> Result<EngineRun<T>> {
    run_engine_from(cfg, AnyEllipsoid::ball(cfg.mode, cfg.dim, &cfg.radius_sq, cfg.bits), &mut sep)
}

pub fn run_engine_from<T>(
    cfg: &EngineConfig,
    start: AnyEllipsoid,
    sep: &mut dyn FnMut(&[Rational], usize) -> Result<Query<T>>,
) -> Result<EngineRun<T>> {
    let d = cfg.dim;
    let resync = 50;
    let target = cfg.volume.as_ref().map(|v| crate::scalar::log2_abs(v));
    let mut e = start;
    let mut log2_vol = e.log2_volume().ok_or(MintyError::PrecisionExhausted { step: 0, bits: cfg.bits })?;
    let mut trace = IterationTrace { bits: cfg.bits, initial_volume_log2: log2_vol, steps: Vec::new() };
    let ratio = cut_log2_ratio(d);
    let clock = Instant::now();
    for t in 0..cfg.max_iters {
        let center = e.center();
        let (normal, kind) = match sep(&center, t)? {
            Query::Found(v) => return Ok(EngineRun { end: EngineEnd::Found(v), trace }),
            Query::Cut { normal, kind } => (normal, kind),
        };
        let next = match e.step(&normal) {
            Ok(n) => n,
            Err(err) => return Ok(EngineRun { end: EngineEnd::Failed(err), trace }),
        };
        let Some(summary) = next.summary() else {
            let err = MintyError::PrecisionExhausted { step: t + 1, bits: cfg.bits };
            return Ok(EngineRun { end: EngineEnd::Failed(err), trace });
        };
        if !next.check_norm_bounds(&cfg.radius_sq) {
            let err = MintyError::PrecisionExhausted { step: t + 1, bits: cfg.bits };
            return Ok(EngineRun { end: EngineEnd::Failed(err), trace });
        }
        log2_vol += ratio;
        if (t + 1) % resync == 0 {
            log2_vol = unit_ball_log2_volume(d) + 0.5 * summary.log2_det;
        }
        log::trace!("step {t}: {} cut, log2 vol {log2_vol:.3}", kind.as_str());
        trace.steps.push(TraceStep {
            step: t,
            kind,
            center: center.iter().map(|q| to_decimal(q, 40)).collect(),
            center_hash: hash_point(&center),
            normal: normal.iter().map(|q| q.to_f64()).collect(),
            volume_log2_upper: log2_vol,
            min_axis_log2: summary.min_axis_log2,
            max_axis_log2: summary.max_axis_log2,
            elapsed_us: clock.elapsed().as_micros() as u64,
        });
        e = next;
        if let Some(tv) = target {
            if unit_ball_log2_volume(d) + 0.5 * summary.log2_det <= tv {
                break;
            }
        }
    }
    Ok(EngineRun { end: EngineEnd::SmallVolume(Box::new(e.snapshot())), trace })
}

/// Runs `attempt` at `cfg.bits`, retrying once with doubled precision on precision failure.
pub fn with_precision_retry<T>(
    cfg: &EngineConfig,
    mut attempt: impl FnMut(&EngineConfig) -> Result<T>,
    failed: impl Fn(&T) -> bool,
) -> Result<T> {
    let first = attempt(cfg);
    let retry = match &first {
        Err(MintyError::PrecisionExhausted { .. }) => true,
        Ok(v) => failed(v),
        Err(_) => false,
    };
    if !retry {
        return first;
    }
    log::info!("precision exhausted at {} bits; retrying with {}", cfg.bits, cfg.bits * 2);
    attempt(&cfg.clone().with_bits(cfg.bits.saturating_mul(2)))
}
