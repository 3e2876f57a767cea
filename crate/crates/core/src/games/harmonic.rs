use std::sync::Arc;

use rug::Rational;

use super::{index_of, profile_of, NormalFormGame, DEFAULT_PROFILE_CAP};
use crate::certificates::{extract_strict_evi, verify_infeasibility_witness};
use crate::error::{MintyError, Result};
use crate::geometry::{ConvexBody, LiftMode, LiftedSimplexBody, SimplexBody};
use crate::linalg::{dot, Vector};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::problem::ViProblem;
use crate::scalar::{sqrt_upper, ArithMode};
use crate::solver::{solve, SolveStatus, SolverConfig};

/// Positive action weights `σ` witnessing harmonicity, with the induced `(w, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicWeights {
    pub sigma: Vec<Vector>,
    /// `w_i = Σ_a σ_i[a]`, normalized to sum to one.
    pub weights: Vector,
    /// `x_i = σ_i / Σ_a σ_i[a]`, a fully mixed Nash equilibrium.
    pub strategies: Vec<Vector>,
}

/// Exact LP for `σ ≥ 1` with `Σ_i Σ_{a_i} σ_i[a_i](u_i(a′) − u_i(a_i, a′_{−i})) = 0` at every profile.
///
/// `None` when the program is infeasible, i.e. the game is not harmonic.
pub fn harmonic_weights(game: &NormalFormGame) -> Result<Option<HarmonicWeights>> {
    let total = game.num_profiles();
    if total > DEFAULT_PROFILE_CAP {
        return Err(MintyError::CapExceeded(total));
    }
    let n = game.players();
    let dim = game.strategy_dim();
    let offsets: Vec<usize> = game.actions.iter().scan(0, |s, &k| { let o = *s; *s += k; Some(o) }).collect();
    let table: Vec<Vector> = (0..total).map(|k| game.utilities(&profile_of(&game.actions, k))).collect::<Result<_>>()?;
    let mut lp = Lp::new(vec![Rational::from(1); dim]);
    for (k, u) in table.iter().enumerate() {
        let a = profile_of(&game.actions, k);
        let mut row = vec![Rational::new(); dim];
        for i in 0..n {
            let mut b = a.clone();
            for ai in 0..game.actions[i] {
                b[i] = ai;
                row[offsets[i] + ai] = Rational::from(&u[i] - &table[index_of(&game.actions, &b)][i]);
            }
        }
        if row.iter().any(|v| *v.numer() != 0) {
            lp.push(row, Cmp::Eq, Rational::new());
        }
    }
    for j in 0..dim {
        let mut row = vec![Rational::new(); dim];
        row[j] = Rational::from(1);
        lp.push(row, Cmp::Ge, Rational::from(1));
    }
    let x = match lp.solve() {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => return Ok(None),
        LpOutcome::Unbounded => return Err(MintyError::OracleFailure("harmonic program unbounded".into())),
    };
    let sigma = game.split(&x);
    let totals: Vector = sigma.iter().map(|s| s.iter().fold(Rational::new(), |a, v| a + v)).collect();
    let grand = totals.iter().fold(Rational::new(), |a, v| a + v);
    let weights = totals.iter().map(|t| Rational::from(t / &grand)).collect();
    let strategies = sigma.iter().zip(&totals).map(|(s, t)| s.iter().map(|v| Rational::from(v / t)).collect()).collect();
    Ok(Some(HarmonicWeights { sigma, weights, strategies }))
}

/// Evaluates the harmonic-game display at `σ`: one residual per joint profile.
pub fn harmonic_residuals(game: &NormalFormGame, sigma: &[Vector]) -> Result<Vector> {
    let total = game.num_profiles();
    let mut out = Vec::with_capacity(total);
    for k in 0..total {
        let a = profile_of(&game.actions, k);
        let u = game.utilities(&a)?;
        let mut s = Rational::new();
        for i in 0..game.players() {
            let mut b = a.clone();
            for (ai, w) in sigma[i].iter().enumerate() {
                b[i] = ai;
                s += Rational::from(&u[i] - &game.utilities(&b)?[i]) * w;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// `VI(P_{≥α}, G)` with `G(w, wx) = (u_1(x), …, u_n(x), −(u_i(a_i, x_{−i}))_{i, a_i})`.
#[derive(Clone, Debug)]
pub struct HarmonicLift {
    pub base: NormalFormGame,
    pub alpha: Rational,
    pub body: Arc<LiftedSimplexBody>,
    pub lifted_problem: ViProblem,
}

/// `2^{-(n + Σ|A_i| + payoff bits)}`.
pub fn default_harmonic_alpha(game: &NormalFormGame) -> Rational {
    let e = game.players() as u32 + game.strategy_dim() as u32 + game.payoff_bits();
    Rational::from(1) >> e
}

impl HarmonicLift {
    /// Builds the lift.
    ///
    /// Bounds: `B = U√(n + k)`; `L = 2√2 U √(k(n + k)) / α`, where `k = Σ|A_i|` and the
    /// factor 2 covers weights down to `α/2` just outside the body.
    pub fn new(game: &NormalFormGame, alpha: Option<Rational>) -> Result<Self> {
        let alpha = alpha.unwrap_or_else(|| default_harmonic_alpha(game));
        let factors = game
            .actions
            .iter()
            .map(|&k| -> Result<Arc<dyn ConvexBody>> { Ok(Arc::new(SimplexBody::new(k)?)) })
            .collect::<Result<Vec<_>>>()?;
        let body = Arc::new(LiftedSimplexBody::new(LiftMode::Harmonic, alpha.clone(), factors)?);
        let n = game.players() as u32;
        let k = game.strategy_dim() as u32;
        let u = game.utility_bound.clone().max(Rational::from((1, 1u32 << 20)));
        let bound = sqrt_upper(&(Rational::from(n + k) * &u * &u), 64);
        let root = sqrt_upper(&Rational::from(2 * k * (n + k)), 64);
        let lipschitz = Rational::from(&u * &root) * 2u32 / &alpha;
        let g = game.clone();
        let b = body.clone();
        let field = move |z: &[Rational]| -> Result<Vector> {
            let (w, xs) = b.unlift(z);
            if w.iter().any(|wi| *wi <= 0) {
                return Err(MintyError::OracleFailure("lifted point with non-positive weight".into()));
            }
            let dev = g.deviation_payoffs(&xs)?;
            let mut out: Vector = dev.iter().zip(&xs).map(|(d, x)| dot(d, x)).collect();
            out.extend(dev.into_iter().flatten().map(|v| -v));
            Ok(out)
        };
        let lifted_problem = ViProblem::new(format!("{} harmonic lift", game.name), body.clone(), field, lipschitz, bound);
        Ok(HarmonicLift { base: game.clone(), alpha, body, lifted_problem })
    }

    /// Lifted point `(w, w x)` for weights and strategies.
    pub fn lift(&self, w: &[Rational], xs: &[Vector]) -> Vector {
        self.body.lift(w, xs)
    }
}

/// Nash profile recovered from the lift.
#[derive(Clone, Debug)]
pub struct HarmonicSolution {
    pub profile: Vec<Vector>,
    pub weights: Vector,
    /// Best-response gap of every player, recomputed from the game.
    pub gaps: Vector,
    pub lifted_gap: Rational,
    pub alpha: Rational,
    pub iterations: usize,
}

impl HarmonicSolution {
    pub fn max_gap(&self) -> Rational {
        self.gaps.iter().max().cloned().unwrap_or_default()
    }
}

/// Runs the extra-gradient ellipsoid on the harmonic lift and unlifts the SVI point.
///
/// The lifted tolerance is `ε(1 − (n−1)α)`, so every player's gap is at most `ε`.
pub fn solve_harmonic(
    game: &NormalFormGame,
    alpha: Option<Rational>,
    epsilon: &Rational,
    mode: ArithMode,
) -> Result<HarmonicSolution> {
    let lift = HarmonicLift::new(game, alpha)?;
    let n = game.players() as u32;
    let shrink = Rational::from(1) - Rational::from(&lift.alpha * (n - 1));
    let cfg = SolverConfig::new(Rational::from(epsilon * &shrink)).with_mode(mode);
    let run = solve(&lift.lifted_problem, &cfg)?;
    match &run.outcome.status {
        SolveStatus::SviSolution { certified_gap, .. } => {
            let z = run.point().expect("SVI status carries a point");
            let (w, xs) = lift.body.unlift(&z);
            let gaps = game.nash_gaps(&xs)?;
            Ok(HarmonicSolution {
                profile: xs,
                weights: w,
                gaps,
                lifted_gap: certified_gap.clone(),
                alpha: lift.alpha.clone(),
                iterations: run.outcome.iterations,
            })
        }
        SolveStatus::MviInfeasibleRaw => {
            let params = &run.outcome.params;
            let cert = extract_strict_evi(run.reduced.body.as_ref(), &run.outcome.history, &params.gamma_eff);
            match cert {
                Ok(c) if verify_infeasibility_witness(run.reduced.body.as_ref(), &c, &Rational::new())? => {
                    Err(MintyError::NotHarmonic)
                }
                _ => Err(MintyError::AssumptionViolation("lifted run exhausted without a verified certificate".into())),
            }
        }
        SolveStatus::Failure { reason } => Err(MintyError::OracleFailure(reason.clone())),
    }
}

/// Harmonic cyclic polymatrix game on `n ≥ 3` players.
///
/// Player `i` meets `i+1` through `A = u vᵀ` with `u ⟂ σ_i`, `v ⟂ σ_{i+1}`, and the
/// neighbour receives `−(W_i/W_{i+1}) Aᵀ`, so `σ` satisfies the harmonic display and
/// `x_i = σ_i / W_i` is a fully mixed equilibrium.
pub fn cyclic_polymatrix(sigma: &[Vector]) -> Result<NormalFormGame> {
    let n = sigma.len();
    if n < 3 || sigma.iter().any(|s| s.len() < 2 || s.iter().any(|v| *v <= 0)) {
        return Err(MintyError::ParameterOutOfRange("need three players with positive weights on ≥ 2 actions".into()));
    }
    let totals: Vector = sigma.iter().map(|s| s.iter().fold(Rational::new(), |a, v| a + v)).collect();
    let perp = |s: &Vector| -> Vector {
        let mut p = vec![Rational::new(); s.len()];
        p[0] = s[1].clone();
        p[1] = Rational::from(-&s[0]);
        p
    };
    let actions: Vec<usize> = sigma.iter().map(|s| s.len()).collect();
    let edges: Vec<(Vector, Vector, Rational)> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (perp(&sigma[i]), perp(&sigma[j]), Rational::from(&totals[i] / &totals[j]))
        })
        .collect();
    NormalFormGame::tabulate("cyclic polymatrix", actions, |a| {
        let mut u = vec![Rational::new(); n];
        for (i, (ui, vj, ratio)) in edges.iter().enumerate() {
            let j = (i + 1) % n;
            let val = Rational::from(&ui[a[i]] * &vj[a[j]]);
            u[j] -= Rational::from(&val * ratio);
            u[i] += val;
        }
        u
    })
}
