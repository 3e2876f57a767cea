//! Extra-gradient ellipsoid method for Stampacchia VIs under the (weak) Minty condition.

use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{
    default_bits, default_iters, run_engine, with_precision_retry, CutKind, EngineConfig, EngineEnd, IterationTrace,
    Query,
};
use crate::error::{MintyError, Result};
use crate::geometry::{AffineChart, ConvexBody, Separation};
use crate::linalg::{axpy, dot, sub, Vector};
use crate::problem::{QueryLog, ViProblem};
use crate::scalar::{fmt_rational, log2_abs, truncate, ArithMode};

/// User-facing knobs; everything else is derived in [`SolverParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(with = "crate::io::rational_str")]
    pub epsilon: Rational,
    pub mode: ArithMode,
    /// Projection tolerance `ε̃`; `Some(0)` selects exact-projection mode.
    #[serde(with = "crate::io::opt_rational_str", default)]
    pub proj_tol: Option<Rational>,
    #[serde(with = "crate::io::opt_rational_str", default)]
    pub eta: Option<Rational>,
    #[serde(with = "crate::io::opt_rational_str", default)]
    pub weak_minty_rho: Option<Rational>,
    #[serde(default)]
    pub bits_override: Option<u32>,
    #[serde(default)]
    pub iters_override: Option<usize>,
}

impl SolverConfig {
    pub fn new(epsilon: Rational) -> Self {
        SolverConfig {
            epsilon,
            mode: ArithMode::Rational,
            proj_tol: None,
            eta: None,
            weak_minty_rho: None,
            bits_override: None,
            iters_override: None,
        }
    }

    pub fn with_mode(mut self, mode: ArithMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_rho(mut self, rho: Rational) -> Self {
        self.weak_minty_rho = Some(rho);
        self
    }
}

/// Derived constants of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    #[serde(with = "crate::io::rational_str")]
    pub epsilon: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub radius: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub lipschitz: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub bound: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub eta: Rational,
    /// Ideal margin `ε²L/(B + 4RL)²`.
    #[serde(with = "crate::io::rational_str")]
    pub gamma: Rational,
    /// Margin actually certified for every cut.
    #[serde(with = "crate::io::rational_str")]
    pub gamma_eff: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub proj_tol: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub r_cut: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub volume: Rational,
    pub iters: usize,
    pub bits: u32,
    pub mode: ArithMode,
}

impl SolverParams {
    pub fn derive(problem: &ViProblem, cfg: &SolverConfig) -> Result<Self> {
        let d = problem.dim();
        let eps = cfg.epsilon.clone();
        if eps <= 0 {
            return Err(MintyError::ParameterOutOfRange("epsilon must be positive".into()));
        }
        let r = problem.body.outer_radius();
        let l = problem.lipschitz.clone();
        let b = problem.bound.clone();
        if l <= 0 || b <= 0 {
            return Err(MintyError::ParameterOutOfRange("L and B must be positive".into()));
        }
        let four_rl = Rational::from(&r * &l) * 4u32;
        let denom = Rational::from(&b + &four_rl).square();
        let gamma = Rational::from(eps.square_ref()) * &l / &denom;
        let big = [&r, &l, &b].iter().fold(Rational::from(1), |m, v| if **v > m { (*v).clone() } else { m });
        let proj_tol = match &cfg.proj_tol {
            Some(t) => t.clone(),
            None => Rational::from(eps.square_ref()) / (Rational::from(big.square_ref()) * &big * 1024u32),
        };
        let mut gamma_eff = if *proj_tol.numer() == 0 {
            gamma.clone()
        } else {
            let lead = Rational::from(&eps - Rational::from(&b * &proj_tol)).square() * &l / &denom;
            let six_lr = Rational::from(&r * &l) * 6u32;
            lead - proj_tol.clone() * (Rational::from(&b * 3u32) + six_lr)
        };
        if let Some(rho) = &cfg.weak_minty_rho {
            let cap = Rational::from(&l / &denom) / 2u32;
            gamma_eff -= Rational::from(eps.square_ref()) * rho;
            if *rho > cap || gamma_eff <= 0 {
                return Err(MintyError::RhoTooLarge { margin: gamma_eff.to_f64() });
            }
        }
        if gamma_eff < Rational::from(&gamma / 4u32) {
            return Err(MintyError::ParameterOutOfRange(format!(
                "projection tolerance {} leaves too little margin",
                fmt_rational(&proj_tol)
            )));
        }
        let r_cut = Rational::from(&gamma_eff / &r) / &b / 16u32;
        let mut volume = Rational::from(1);
        let ratio = Rational::from(&r_cut / d as u32);
        for _ in 0..d {
            volume *= &ratio;
        }
        let r2 = Rational::from(r.square_ref());
        let iters = cfg.iters_override.unwrap_or_else(|| default_iters(d, &r2, &volume));
        let bits = cfg.bits_override.unwrap_or_else(|| default_bits(iters));
        let eta = cfg.eta.clone().unwrap_or_else(|| Rational::from(1) / (l.clone() * 2u32));
        Ok(SolverParams {
            epsilon: eps,
            radius: r,
            lipschitz: l,
            bound: b,
            eta,
            gamma,
            gamma_eff,
            proj_tol,
            r_cut,
            volume,
            iters,
            bits,
            mode: cfg.mode,
        })
    }

    /// Lowers the certified margin and rederives `r`, the volume target, `T` and `p`.
    pub fn with_margin(mut self, margin: Rational, dim: usize, cfg: &SolverConfig) -> Self {
        if margin >= self.gamma_eff {
            return self;
        }
        self.gamma_eff = margin;
        self.r_cut = Rational::from(&self.gamma_eff / &self.radius) / &self.bound / 16u32;
        let ratio = Rational::from(&self.r_cut / dim as u32);
        self.volume = (0..dim).fold(Rational::from(1), |v, _| v * &ratio);
        let r2 = Rational::from(self.radius.square_ref());
        self.iters = cfg.iters_override.unwrap_or_else(|| default_iters(dim, &r2, &self.volume));
        self.bits = cfg.bits_override.unwrap_or_else(|| default_bits(self.iters));
        self
    }

    pub fn engine(&self, dim: usize) -> EngineConfig {
        EngineConfig {
            dim,
            radius_sq: Rational::from(self.radius.square_ref()),
            volume: Some(self.volume.clone()),
            max_iters: self.iters,
            bits: self.bits,
            mode: self.mode,
        }
    }

    /// Fractional bits kept for extra-gradient points, well below `ε̃`.
    pub fn point_bits(&self, dim: usize) -> Option<u32> {
        if *self.proj_tol.numer() == 0 {
            return None;
        }
        let scale = Rational::from(&self.radius * &self.lipschitz) * 4u32 + &self.bound + 1u32;
        let b = -log2_abs(&self.proj_tol) + log2_abs(&scale) + (dim as f64).log2() + 16.0;
        Some(b.ceil().max(32.0) as u32)
    }

    /// Fractional bits kept when querying at an engine center; moving the center by
    /// `2^{-bits}` per coordinate changes any margin by less than `γ̃/64`.
    pub fn center_bits(&self, dim: usize) -> u32 {
        let scale = Rational::from(&self.radius * &self.lipschitz) + &self.bound + 1u32;
        let b = -log2_abs(&self.gamma_eff) + log2_abs(&scale) + 0.5 * (dim as f64).log2() + 8.0;
        b.ceil().max(64.0) as u32
    }

    /// The engine center rounded to [`SolverParams::center_bits`].
    pub fn query_point(&self, center: &[Rational]) -> Vector {
        let bits = self.center_bits(center.len());
        center.iter().map(|v| truncate(v, bits)).collect()
    }
}

/// `max_{x′∈X} ⟨F(x), x − x′⟩` through one linear-minimization call; also returns the maximizer.
pub fn svi_gap_with(body: &dyn ConvexBody, x: &[Rational], fx: &[Rational], delta: &Rational) -> Result<(Rational, Vector)> {
    let y = body.linear_min(fx, delta)?;
    Ok((dot(fx, &sub(x, &y)), y))
}

/// SVI gap of `x` for `problem`.
pub fn svi_gap(problem: &ViProblem, x: &[Rational], delta: &Rational) -> Result<Rational> {
    let fx = problem.eval(x)?;
    Ok(svi_gap_with(problem.body.as_ref(), x, &fx, delta)?.0)
}

/// Outcome of the strict semi-separation step at a center.
#[derive(Clone, Debug)]
pub enum CutDecision {
    SviAccepted { point: Vector, gap: Rational },
    StrictCut { normal: Vector, tilde: Vector, f_tilde: Vector, margin: Rational },
}

/// One extra-gradient cut, as seen by observers.
#[derive(Clone, Debug)]
pub struct CutEvent {
    pub step: usize,
    pub center: Vector,
    pub tilde: Vector,
    pub f_tilde: Vector,
    pub margin: Rational,
    pub gamma_eff: Rational,
}

/// Extra-gradient record kept for certificate extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgRecord {
    pub step: usize,
    #[serde(with = "crate::io::vec_rational_str")]
    pub tilde: Vector,
    #[serde(with = "crate::io::vec_rational_str")]
    pub f_tilde: Vector,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    SviSolution {
        #[serde(with = "crate::io::vec_rational_str")]
        x: Vector,
        #[serde(with = "crate::io::rational_str")]
        certified_gap: Rational,
    },
    MviInfeasibleRaw,
    Failure { reason: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub params: SolverParams,
    pub trace: IterationTrace,
    /// Extra-gradient points `ã` and `F(ã)` in the solver's coordinates.
    pub history: Vec<EgRecord>,
    pub queries: usize,
    pub iterations: usize,
}

impl SolveOutcome {
    pub fn point(&self) -> Option<&Vector> {
        match &self.status {
            SolveStatus::SviSolution { x, .. } => Some(x),
            _ => None,
        }
    }

    pub fn exhausted(&self) -> bool {
        matches!(self.status, SolveStatus::MviInfeasibleRaw)
    }
}

/// Strict semi-separation at a center `a ∈ X^{+ε̃}`.
///
/// Accepts `a` (or `ã`) when its gap is at most `ε`, and otherwise returns the
/// cut `F(ã)` after confirming `⟨F(ã), a − ã⟩ ≥ γ_eff`.
pub fn extra_gradient_cut(
    problem: &ViProblem,
    a: &[Rational],
    params: &SolverParams,
    log: &mut QueryLog,
) -> Result<CutDecision> {
    let body = problem.body.as_ref();
    let zero = Rational::new();
    let in_x = body.membership(a, &zero);
    let fa = log.eval(problem, a)?;
    if in_x {
        let (gap, _) = svi_gap_with(body, a, &fa, &zero)?;
        if gap <= acceptance(params, body) {
            return Ok(CutDecision::SviAccepted { point: a.to_vec(), gap });
        }
    }
    let step = axpy(a, &Rational::from(-&params.eta), &fa);
    let mut tilde = body.project(&step, &params.proj_tol)?;
    if let Some(bits) = params.point_bits(a.len()) {
        tilde = tilde.iter().map(|v| truncate(v, bits)).collect();
    }
    let f_tilde = log.eval(problem, &tilde)?;
    if body.membership(&tilde, &zero) {
        let (gap, _) = svi_gap_with(body, &tilde, &f_tilde, &zero)?;
        if gap <= acceptance(params, body) {
            return Ok(CutDecision::SviAccepted { point: tilde, gap });
        }
    }
    if f_tilde.iter().all(|v| *v.numer() == 0) {
        return Err(MintyError::AssumptionViolation("F vanishes at the extra-gradient point".into()));
    }
    let margin = dot(&f_tilde, &sub(a, &tilde));
    if margin < params.gamma_eff {
        return Err(MintyError::AssumptionViolation(format!(
            "extra-gradient margin {:.3e} below {:.3e}",
            margin.to_f64(),
            params.gamma_eff.to_f64()
        )));
    }
    Ok(CutDecision::StrictCut { normal: f_tilde.clone(), tilde, f_tilde, margin })
}

fn acceptance(params: &SolverParams, body: &dyn ConvexBody) -> Rational {
    if body.projection_exact() {
        params.epsilon.clone()
    } else {
        // inexact linear optimization loses at most B R 2^{-240}
        let slack = Rational::from(&params.bound * &params.radius) >> 240u32;
        Rational::from(&params.epsilon - &slack)
    }
}

/// Runs the extra-gradient ellipsoid method on a full-dimensional problem.
pub fn solve_full(
    problem: &ViProblem,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&CutEvent),
) -> Result<SolveOutcome> {
    let params = SolverParams::derive(problem, cfg)?;
    let d = problem.dim();
    if problem.body.affine_dim() < d {
        return Err(MintyError::UnsupportedBody("solver needs a full-dimensional body; reduce it first".into()));
    }
    let engine = params.engine(d);
    with_precision_retry(
        &engine,
        |ecfg| {
            let mut params = params.clone();
            params.bits = ecfg.bits;
            run_once(problem, &params, ecfg, observer)
        },
        |_| false,
    )
}

fn run_once(
    problem: &ViProblem,
    params: &SolverParams,
    engine: &EngineConfig,
    observer: &mut dyn FnMut(&CutEvent),
) -> Result<SolveOutcome> {
    let body = problem.body.as_ref();
    let mut log = QueryLog::default();
    let mut history = Vec::new();
    let run = run_engine(engine, |center, t| {
        let a = &params.query_point(center)[..];
        if !body.membership(a, &params.proj_tol) {
            return Ok(match body.separation(a, &params.proj_tol) {
                Separation::Cut(c) => Query::Cut { normal: c, kind: CutKind::Body },
                Separation::Inside => {
                    return Err(MintyError::OracleFailure("membership and separation disagree".into()))
                }
            });
        }
        let decision = match extra_gradient_cut(problem, a, params, &mut log) {
            Err(MintyError::AssumptionViolation(msg)) if !body.membership(a, &Rational::new()) => {
                log::debug!("falling back to a body cut outside X: {msg}");
                if let Separation::Cut(c) = body.separation(a, &Rational::new()) {
                    return Ok(Query::Cut { normal: c, kind: CutKind::Body });
                }
                return Err(MintyError::AssumptionViolation(msg));
            }
            other => other?,
        };
        match decision {
            CutDecision::SviAccepted { point, gap } => Ok(Query::Found((point, gap))),
            CutDecision::StrictCut { normal, tilde, f_tilde, margin } => {
                observer(&CutEvent {
                    step: t,
                    center: a.to_vec(),
                    tilde: tilde.clone(),
                    f_tilde: f_tilde.clone(),
                    margin: margin.clone(),
                    gamma_eff: params.gamma_eff.clone(),
                });
                history.push(EgRecord { step: t, tilde, f_tilde, margin: margin.to_f64() });
                Ok(Query::Cut { normal, kind: CutKind::ExtraGradient })
            }
        }
    })?;
    let iterations = run.trace.steps.len();
    let status = match run.end {
        EngineEnd::Found((x, gap)) => SolveStatus::SviSolution { x, certified_gap: gap },
        EngineEnd::SmallVolume(_) => SolveStatus::MviInfeasibleRaw,
        EngineEnd::Failed(e @ MintyError::PrecisionExhausted { .. }) => return Err(e),
        EngineEnd::Failed(e) => SolveStatus::Failure { reason: e.to_string() },
    };
    Ok(SolveOutcome { status, params: params.clone(), trace: run.trace, history, queries: log.len(), iterations })
}

/// A solve carried out on the affine hull of the body, with results in ambient coordinates.
#[derive(Clone, Debug)]
pub struct ChartedOutcome {
    pub outcome: SolveOutcome,
    pub chart: AffineChart,
    pub reduced: ViProblem,
}

impl ChartedOutcome {
    /// Returned SVI point in the original coordinates.
    pub fn point(&self) -> Option<Vector> {
        self.outcome.point().map(|y| self.chart.to_ambient(y))
    }
}

/// ExtraGradientEllipsoid on any polyhedral or full-dimensional body.
pub fn solve(problem: &ViProblem, cfg: &SolverConfig) -> Result<ChartedOutcome> {
    solve_observed(problem, cfg, &mut |_| {})
}

pub fn solve_observed(
    problem: &ViProblem,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&CutEvent),
) -> Result<ChartedOutcome> {
    let (reduced, chart) = problem.reduced()?;
    let outcome = solve_full(&reduced, cfg, observer)?;
    Ok(ChartedOutcome { outcome, chart, reduced })
}

/// Weak-Minty variant: margin `γ − ρε²`, with both `a` and `ã` checked before cutting.
pub fn solve_weak_minty(problem: &ViProblem, cfg: &SolverConfig) -> Result<ChartedOutcome> {
    if cfg.weak_minty_rho.is_none() {
        return Err(MintyError::ParameterOutOfRange("weak-Minty solve needs ρ".into()));
    }
    solve(problem, cfg)
}

/// `ρ ≤ C L/(B + 4RL)²` with `C = 1/2`.
pub fn max_weak_minty_rho(problem: &ViProblem) -> Rational {
    let r = problem.body.outer_radius();
    let l = &problem.lipschitz;
    let denom = (Rational::from(&r * l) * 4u32 + &problem.bound).square();
    Rational::from(l / &denom) / 2u32
}
