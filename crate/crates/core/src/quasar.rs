//! Ellipsoid method for `(λ, λ−1)`-smooth VIs, which include quasar-convex minimization.
//!
//! No extra-gradient step is taken: at an in-body center `a` the field value `F(a)`
//! already separates strictly, so the Lipschitz constant is never used.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{
    default_bits, default_iters, run_engine, with_precision_retry, CutKind, EngineConfig, EngineEnd, IterationTrace,
    Query,
};
use crate::error::{MintyError, Result};
use crate::geometry::{reduce_body, AffineChart, ConvexBody, Separation};
use crate::linalg::{dot, sub, Vector};
use crate::problem::{FieldFn, ViProblem};
use crate::scalar::{fmt_rational, from_f64, norm2, ArithMode};

/// Objective callback `x ↦ Q(x)`.
pub type ValueFn = Arc<dyn Fn(&[Rational]) -> Result<Rational> + Send + Sync>;

/// A VI that is `(λ, ν)`-smooth with respect to the value function `Q` (to be maximized).
#[derive(Clone)]
pub struct SmoothViSpec {
    pub name: String,
    pub body: Arc<dyn ConvexBody>,
    pub field: FieldFn,
    pub value: ValueFn,
    /// Norm bound `B` on `F`.
    pub bound: Rational,
    /// Carried along for reporting only; the solver never reads it.
    pub lipschitz: Option<Rational>,
    pub lambda: Rational,
    pub nu: Rational,
}

impl std::fmt::Debug for SmoothViSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothViSpec")
            .field("name", &self.name)
            .field("dim", &self.body.dim())
            .field("lambda", &fmt_rational(&self.lambda))
            .field("nu", &fmt_rational(&self.nu))
            .finish()
    }
}

impl SmoothViSpec {
    /// `(λ, λ−1)`-smooth spec.
    pub fn new(
        name: impl Into<String>,
        body: Arc<dyn ConvexBody>,
        field: impl Fn(&[Rational]) -> Result<Vector> + Send + Sync + 'static,
        value: impl Fn(&[Rational]) -> Result<Rational> + Send + Sync + 'static,
        bound: Rational,
        lambda: Rational,
    ) -> Result<Self> {
        if lambda <= 0 || lambda > 1 {
            return Err(MintyError::ParameterOutOfRange(format!("λ = {} must lie in (0, 1]", fmt_rational(&lambda))));
        }
        if bound <= 0 {
            return Err(MintyError::ParameterOutOfRange("B must be positive".into()));
        }
        let nu = Rational::from(&lambda - 1u32);
        Ok(SmoothViSpec {
            name: name.into(),
            body,
            field: Arc::new(field),
            value: Arc::new(value),
            bound,
            lipschitz: None,
            lambda,
            nu,
        })
    }

    /// Minimization of a `λ`-quasar-convex `f` with gradient `∇f`: `Q = −f`, `F = ∇f`.
    pub fn quasar_convex(
        name: impl Into<String>,
        body: Arc<dyn ConvexBody>,
        f: impl Fn(&[Rational]) -> Result<Rational> + Send + Sync + 'static,
        grad: impl Fn(&[Rational]) -> Result<Vector> + Send + Sync + 'static,
        bound: Rational,
        lambda: Rational,
    ) -> Result<Self> {
        Self::new(name, body, grad, move |x: &[Rational]| Ok(-f(x)?), bound, lambda)
    }

    /// Reuses the body, field and `B` of a VI problem.
    pub fn from_problem(
        problem: &ViProblem,
        value: impl Fn(&[Rational]) -> Result<Rational> + Send + Sync + 'static,
        lambda: Rational,
    ) -> Result<Self> {
        let field = problem.field.clone();
        let mut s = Self::new(
            problem.name.clone(),
            problem.body.clone(),
            move |x: &[Rational]| field(x),
            value,
            problem.bound.clone(),
            lambda,
        )?;
        s.lipschitz = Some(problem.lipschitz.clone());
        Ok(s)
    }

    /// Overrides `ν`; only validation accepts `ν ≠ λ − 1`.
    pub fn with_nu(mut self, nu: Rational) -> Result<Self> {
        if nu <= -1 {
            return Err(MintyError::ParameterOutOfRange("ν must exceed −1".into()));
        }
        self.nu = nu;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn eval_field(&self, x: &[Rational]) -> Result<Vector> {
        let v = (self.field)(x)?;
        if v.len() != x.len() {
            return Err(MintyError::OracleFailure("field has the wrong length".into()));
        }
        Ok(v)
    }

    pub fn eval_value(&self, x: &[Rational]) -> Result<Rational> {
        (self.value)(x)
    }

    /// The same spec on the affine hull of a flat polyhedral body.
    fn reduced(&self) -> Result<(SmoothViSpec, AffineChart)> {
        let rb = reduce_body(self.body.clone())?;
        if rb.is_identity() {
            return Ok((self.clone(), rb.chart));
        }
        let chart = rb.chart.clone();
        let (f, q) = (self.field.clone(), self.value.clone());
        let (cf, cq) = (chart.clone(), chart.clone());
        let nb = chart.basis_norm_upper();
        let spec = SmoothViSpec {
            name: self.name.clone(),
            body: rb.inner.clone(),
            field: Arc::new(move |y: &[Rational]| Ok(cf.pull_covector(&f(&cf.to_ambient(y))?))),
            value: Arc::new(move |y: &[Rational]| q(&cq.to_ambient(y))),
            bound: Rational::from(&self.bound * &nb),
            lipschitz: None,
            lambda: self.lambda.clone(),
            nu: self.nu.clone(),
        };
        Ok((spec, chart))
    }
}

/// Overrides for [`solve_smooth`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub mode: ArithMode,
    #[serde(default)]
    pub bits_override: Option<u32>,
    #[serde(default)]
    pub iters_override: Option<usize>,
}

/// Constants of a smooth-VI run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    #[serde(with = "crate::io::rational_str")]
    pub epsilon: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub gamma: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub r_cut: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub volume: Rational,
    pub iters: usize,
    pub bits: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothOutcome {
    #[serde(with = "crate::io::vec_rational_str")]
    pub point: Vector,
    #[serde(with = "crate::io::rational_str")]
    pub value: Rational,
    pub iterations: usize,
    /// Centers that fell inside the body and were scored.
    pub in_body: usize,
    /// Whether the run stopped at a zero of `F`, which is a global maximizer of `Q`.
    pub stationary: bool,
    pub params: SmoothParams,
    pub trace: IterationTrace,
}

/// Derives `γ = λε`, `r = γ/(16RB)`, `v = r^d/d^d`, `T` and `p`.
pub fn smooth_params(spec: &SmoothViSpec, epsilon: &Rational, cfg: &SmoothConfig) -> Result<SmoothParams> {
    if *epsilon <= 0 {
        return Err(MintyError::ParameterOutOfRange("epsilon must be positive".into()));
    }
    let d = spec.body.affine_dim();
    let r = spec.body.outer_radius();
    let gamma = Rational::from(&spec.lambda * epsilon);
    let r_cut = Rational::from(&gamma / &r) / &spec.bound / 16u32;
    let ratio = Rational::from(&r_cut / d as u32);
    let mut volume = Rational::from(1);
    for _ in 0..d {
        volume *= &ratio;
    }
    let r2 = Rational::from(r.square_ref());
    let iters = cfg.iters_override.unwrap_or_else(|| default_iters(d, &r2, &volume));
    let bits = cfg.bits_override.unwrap_or_else(|| default_bits(iters));
    Ok(SmoothParams { epsilon: epsilon.clone(), gamma, r_cut, volume, iters, bits })
}

/// Returns the best in-body center by `Q`, which is `ε`-optimal when the smoothness promise holds.
pub fn solve_smooth(spec: &SmoothViSpec, epsilon: &Rational, cfg: &SmoothConfig) -> Result<SmoothOutcome> {
    if spec.nu != Rational::from(&spec.lambda - 1u32) {
        return Err(MintyError::ParameterOutOfRange("the solver needs ν = λ − 1".into()));
    }
    let (inner, chart) = spec.reduced()?;
    let params = smooth_params(&inner, epsilon, cfg)?;
    let d = inner.dim();
    let engine = EngineConfig {
        dim: d,
        radius_sq: Rational::from(inner.body.outer_radius().square_ref()),
        volume: Some(params.volume.clone()),
        max_iters: params.iters,
        bits: params.bits,
        mode: cfg.mode,
    };
    let mut out = with_precision_retry(
        &engine,
        |ecfg| {
            let mut p = params.clone();
            p.bits = ecfg.bits;
            run_smooth(&inner, p, ecfg)
        },
        |_| false,
    )?;
    out.point = chart.to_ambient(&out.point);
    Ok(out)
}

fn run_smooth(spec: &SmoothViSpec, params: SmoothParams, engine: &EngineConfig) -> Result<SmoothOutcome> {
    let body = spec.body.as_ref();
    let zero = Rational::new();
    let b2 = Rational::from(spec.bound.square_ref());
    let mut best: Option<(Rational, Vector)> = None;
    let mut in_body = 0usize;
    let run = run_engine(engine, |a, _| {
        if !body.membership(a, &zero) {
            return match body.separation(a, &zero) {
                Separation::Cut(c) => Ok(Query::Cut { normal: c, kind: CutKind::Body }),
                Separation::Inside => Err(MintyError::OracleFailure("membership and separation disagree".into())),
            };
        }
        in_body += 1;
        let fa = spec.eval_field(a)?;
        if norm2(&fa) > b2 {
            return Err(MintyError::AssumptionViolation(format!(
                "‖F(x)‖ exceeds B = {}",
                fmt_rational(&spec.bound)
            )));
        }
        let qa = spec.eval_value(a)?;
        if best.as_ref().map_or(true, |(bq, _)| qa > *bq) {
            best = Some((qa.clone(), a.to_vec()));
        }
        if fa.iter().all(|v| *v.numer() == 0) {
            return Ok(Query::Found((qa, a.to_vec())));
        }
        Ok(Query::Cut { normal: fa, kind: CutKind::Gradient })
    })?;
    let iterations = run.trace.steps.len();
    let (value, point, stationary) = match run.end {
        EngineEnd::Found((q, x)) => (q, x, true),
        EngineEnd::Failed(e @ MintyError::PrecisionExhausted { .. }) => return Err(e),
        EngineEnd::Failed(e) => return Err(e),
        EngineEnd::SmallVolume(_) => {
            let (q, x) = best.ok_or(MintyError::NoInBodyCenter)?;
            (q, x, false)
        }
    };
    Ok(SmoothOutcome { point, value, iterations, in_body, stationary, params, trace: run.trace })
}

/// Grid used by the validators: `density^k` lattice points over the body's bounding
/// box (in hull coordinates), or seeded random samples once that exceeds `cap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub density: usize,
    pub cap: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { density: 33, cap: 1_000_000, seed: 0 }
    }
}

impl GridSpec {
    pub fn with_density(density: usize) -> Self {
        GridSpec { density, ..Default::default() }
    }
}

/// Points of the body on a grid, in ambient coordinates.
pub fn body_grid(body: &Arc<dyn ConvexBody>, grid: &GridSpec) -> Result<Vec<Vector>> {
    let rb = reduce_body(body.clone())?;
    let inner = rb.inner.as_ref();
    let k = inner.dim();
    let zero = Rational::new();
    let mut lo = Vec::with_capacity(k);
    let mut hi = Vec::with_capacity(k);
    for i in 0..k {
        let mut e = vec![Rational::new(); k];
        e[i] = Rational::from(1);
        lo.push(inner.linear_min(&e, &zero)?[i].clone());
        e[i] = Rational::from(-1);
        hi.push(inner.linear_min(&e, &zero)?[i].clone());
    }
    let n = grid.density.max(2);
    let total = (n as f64).powi(k as i32);
    let mut pts = Vec::new();
    let mut keep = |y: Vector| {
        if inner.membership(&y, &zero) {
            pts.push(rb.chart.to_ambient(&y));
        }
    };
    if total <= grid.cap as f64 {
        let mut idx = vec![0usize; k];
        loop {
            let y: Vector = (0..k)
                .map(|i| {
                    let span = Rational::from(&hi[i] - &lo[i]);
                    Rational::from(&lo[i] + span * Rational::from((idx[i] as u64, (n - 1) as u64)))
                })
                .collect();
            keep(y);
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] < n {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == k {
                break;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
        for _ in 0..grid.cap {
            let y: Vector = (0..k)
                .map(|i| {
                    let t = from_f64(rng.gen::<f64>());
                    Rational::from(&lo[i] + Rational::from(&hi[i] - &lo[i]) * t)
                })
                .collect();
            keep(y);
        }
    }
    Ok(pts)
}

/// Result of checking the smoothness inequality on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasarValidation {
    /// Largest value of `λQ(x*) − (ν+1)Q(x′) − ⟨F(x′), x′ − x*⟩`; `≤ 0` means consistent.
    pub max_violation: f64,
    #[serde(with = "crate::io::vec_rational_str")]
    pub optimum: Vector,
    #[serde(with = "crate::io::rational_str")]
    pub optimum_value: Rational,
    /// Grid point attaining the largest violation.
    #[serde(with = "crate::io::vec_rational_str")]
    pub witness: Vector,
    pub points: usize,
}

/// Grid check of `⟨F(x′), x′ − x*⟩ ≥ λQ(x*) − (ν+1)Q(x′)`.
///
/// When `optimum` is `None`, `x*` is the best grid point for `Q`.
pub fn validate_quasar(spec: &SmoothViSpec, grid: &GridSpec, optimum: Option<Vector>) -> Result<QuasarValidation> {
    let pts = body_grid(&spec.body, grid)?;
    let values: Vec<Rational> = pts.iter().map(|x| spec.eval_value(x)).collect::<Result<_>>()?;
    let xs = match optimum {
        Some(x) => x,
        None => {
            let i = argmax(&values).ok_or(MintyError::NoInBodyCenter)?;
            pts[i].clone()
        }
    };
    let qs = spec.eval_value(&xs)?;
    let lead = Rational::from(&spec.lambda * &qs);
    let nu1 = Rational::from(&spec.nu + 1u32);
    let mut worst: Option<(Rational, Vector)> = None;
    for (x, q) in pts.iter().zip(&values) {
        let f = spec.eval_field(x)?;
        let v = Rational::from(&lead - Rational::from(&nu1 * q)) - dot(&f, &sub(x, &xs));
        if worst.as_ref().map_or(true, |(w, _)| v > *w) {
            worst = Some((v, x.clone()));
        }
    }
    let (w, witness) = worst.ok_or(MintyError::NoInBodyCenter)?;
    Ok(QuasarValidation { max_violation: w.to_f64(), optimum: xs, optimum_value: qs, witness, points: pts.len() })
}

/// Largest `λ` for which `⟨F(x′), x′ − x*⟩ ≥ λ(Q(x*) − Q(x′))` holds on the grid, capped at 1.
pub fn estimate_lambda(spec: &SmoothViSpec, grid: &GridSpec, optimum: Option<Vector>) -> Result<f64> {
    let pts = body_grid(&spec.body, grid)?;
    let values: Vec<Rational> = pts.iter().map(|x| spec.eval_value(x)).collect::<Result<_>>()?;
    let xs = match optimum {
        Some(x) => x,
        None => pts[argmax(&values).ok_or(MintyError::NoInBodyCenter)?].clone(),
    };
    let qs = spec.eval_value(&xs)?;
    let mut lam = 1.0f64;
    for (x, q) in pts.iter().zip(&values) {
        let drop = Rational::from(&qs - q);
        if drop <= 0 {
            continue;
        }
        let f = spec.eval_field(x)?;
        let r = Rational::from(dot(&f, &sub(x, &xs)) / &drop);
        lam = lam.min(r.to_f64());
    }
    Ok(lam)
}

/// Brute-force maximum of `Q` over the grid.
pub fn grid_optimum(spec: &SmoothViSpec, grid: &GridSpec) -> Result<(Vector, Rational)> {
    let pts = body_grid(&spec.body, grid)?;
    let values: Vec<Rational> = pts.iter().map(|x| spec.eval_value(x)).collect::<Result<_>>()?;
    let i = argmax(&values).ok_or(MintyError::NoInBodyCenter)?;
    Ok((pts[i].clone(), values[i].clone()))
}

fn argmax(v: &[Rational]) -> Option<usize> {
    (0..v.len()).max_by(|&a, &b| v[a].cmp(&v[b]).then(b.cmp(&a)))
}

/// Named objectives for the command line, all posed on boxes.
pub fn builtin_objective(name: &str, body: Arc<dyn ConvexBody>, lambda: Rational) -> Result<SmoothViSpec> {
    let d = body.dim();
    let r = body.outer_radius();
    match name {
        "quadratic" => {
            // f(x) = ‖x − x*‖² with x* = (1/4, −1/4, ...)
            let target: Vector = (0..d).map(|i| Rational::from((if i % 2 == 0 { 1 } else { -1 }, 4))).collect();
            let (t1, t2) = (target.clone(), target);
            let bound = Rational::from(&r * 4u32) + 1u32;
            SmoothViSpec::quasar_convex(
                "quadratic",
                body,
                move |x: &[Rational]| Ok(norm2(&sub(x, &t1))),
                move |x: &[Rational]| Ok(sub(x, &t2).into_iter().map(|v| v * 2u32).collect()),
                bound,
                lambda,
            )
        }
        "oscillating" => RadialOscillator::new(vec![0.0; d], 0.5, 8.0).spec(body, lambda),
        other => Err(MintyError::ParameterOutOfRange(format!("unknown builtin objective `{other}`"))),
    }
}

/// `f(x) = ρ²(1 + a sin²(kρ))` with `ρ = ‖x − c‖`, evaluated in double precision.
///
/// Quasar-convex about `c` with `λ = min_ρ ρ f′(ρ)/f(ρ)` over the radii the body reaches.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialOscillator {
    pub center: Vec<f64>,
    pub a: f64,
    pub k: f64,
}

impl RadialOscillator {
    pub fn new(center: Vec<f64>, a: f64, k: f64) -> Self {
        RadialOscillator { center, a, k }
    }

    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let diff: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r2: f64 = diff.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let (s, c) = (self.k * r).sin_cos();
        let f = r2 * (1.0 + self.a * s * s);
        // f′(ρ)/ρ, so that ∇f = (f′(ρ)/ρ)(x − c)
        let coef = 2.0 * (1.0 + self.a * s * s) + 2.0 * self.a * self.k * r * s * c;
        (f, diff.iter().map(|v| coef * v).collect())
    }

    /// `sup ‖∇f‖` over radii up to `rmax`.
    pub fn gradient_bound(&self, rmax: f64) -> f64 {
        2.0 * rmax * (1.0 + self.a) + self.a * self.k * rmax * rmax
    }

    /// `λ = min ρf′/f` on a fine radial grid up to `rmax`.
    pub fn radial_lambda(&self, rmax: f64) -> f64 {
        (1..=200_000)
            .map(|i| {
                let r = rmax * i as f64 / 200_000.0;
                let s = (self.k * r).sin();
                2.0 + self.a * self.k * r * (2.0 * self.k * r).sin() / (1.0 + self.a * s * s)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimization spec `Q = −f`, `F = ∇f`, with `B` from the farthest body point.
    pub fn spec(&self, body: Arc<dyn ConvexBody>, lambda: Rational) -> Result<SmoothViSpec> {
        let c: Vector = self.center.iter().map(|v| from_f64(*v)).collect();
        let rmax = body.outer_radius().to_f64() + crate::linalg::to_f64(&c).iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = from_f64(self.gradient_bound(rmax).ceil() + 1.0);
        let (fa, fb) = (self.clone(), self.clone());
        SmoothViSpec::quasar_convex(
            format!("radial(a={}, k={})", self.a, self.k),
            body,
            move |x: &[Rational]| Ok(from_f64(fa.eval(&crate::linalg::to_f64(x)).0)),
            move |x: &[Rational]| Ok(crate::linalg::from_f64(&fb.eval(&crate::linalg::to_f64(x)).1)),
            bound,
            lambda,
        )
    }
}
