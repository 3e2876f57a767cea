use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::certificates::{evi_gap, extract_strict_evi, rational_weights, EviCertificate, SupportPoint};
use crate::ellipsoid::{run_engine, with_precision_retry, CutKind, EngineEnd, Query};
use crate::error::{MintyError, Result};
use crate::geometry::{ConvexBody, LiftMode, LiftedSimplexBody, ProductBody, Separation};
use crate::linalg::{axpy, dot, mat_t_vec, mat_vec, sub, Matrix, Vector};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::problem::{spectral_norm_upper, QueryLog, ViProblem};
use crate::scalar::{norm_upper, sqrt_upper, ArithMode};
use crate::solver::{extra_gradient_cut, solve, CutDecision, EgRecord, SolveStatus, SolverConfig, SolverParams};

/// `(x₁, x₂) ↦ ∇_{x_i} u_i(x₁, x₂)`.
pub type PairGradFn = Arc<dyn Fn(&[Rational], &[Rational]) -> Result<Vector> + Send + Sync>;
/// `(x₁, x₂) ↦ u_i(x₁, x₂)`.
pub type PairValueFn = Arc<dyn Fn(&[Rational], &[Rational]) -> Result<Rational> + Send + Sync>;

/// Two-player game with concave, `L`-smooth utilities and gradients bounded by `B`.
#[derive(Clone)]
pub struct ConcaveGame2P {
    pub name: String,
    pub bodies: [Arc<dyn ConvexBody>; 2],
    pub grads: [PairGradFn; 2],
    pub values: Option<[PairValueFn; 2]>,
    pub bound: Rational,
    pub lipschitz: Rational,
}

impl fmt::Debug for ConcaveGame2P {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConcaveGame2P")
            .field("name", &self.name)
            .field("dims", &[self.bodies[0].dim(), self.bodies[1].dim()])
            .field("bound", &self.bound.to_f64())
            .field("lipschitz", &self.lipschitz.to_f64())
            .finish()
    }
}

/// `u(x₁, x₂) = x₁ᵀ A x₂ + b₁·x₁ + b₂·x₂ + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearPayoff {
    pub a: Matrix,
    pub b1: Vector,
    pub b2: Vector,
    pub k: Rational,
}

impl BilinearPayoff {
    pub fn new(a: Matrix) -> Self {
        let d1 = a.len();
        let d2 = a.first().map_or(0, |r| r.len());
        BilinearPayoff { a, b1: vec![Rational::new(); d1], b2: vec![Rational::new(); d2], k: Rational::new() }
    }

    pub fn zero(d1: usize, d2: usize) -> Self {
        Self::new(vec![vec![Rational::new(); d2]; d1])
    }

    pub fn value(&self, x1: &[Rational], x2: &[Rational]) -> Rational {
        dot(x1, &mat_vec(&self.a, x2)) + dot(&self.b1, x1) + dot(&self.b2, x2) + &self.k
    }

    pub fn grad1(&self, x2: &[Rational]) -> Vector {
        mat_vec(&self.a, x2).into_iter().zip(&self.b1).map(|(v, b)| v + b).collect()
    }

    pub fn grad2(&self, x1: &[Rational]) -> Vector {
        mat_t_vec(&self.a, x1).into_iter().zip(&self.b2).map(|(v, b)| v + b).collect()
    }

    pub fn negated(&self) -> Self {
        BilinearPayoff {
            a: self.a.iter().map(|r| r.iter().map(|v| Rational::from(-v)).collect()).collect(),
            b1: self.b1.iter().map(|v| Rational::from(-v)).collect(),
            b2: self.b2.iter().map(|v| Rational::from(-v)).collect(),
            k: Rational::from(-&self.k),
        }
    }
}

impl ConcaveGame2P {
    /// Game with bilinear utilities; `B` and `L` come from spectral-norm bounds.
    pub fn bilinear(
        name: impl Into<String>,
        x1: Arc<dyn ConvexBody>,
        x2: Arc<dyn ConvexBody>,
        p1: BilinearPayoff,
        p2: BilinearPayoff,
    ) -> Result<Self> {
        let (d1, d2) = (x1.dim(), x2.dim());
        for p in [&p1, &p2] {
            if p.a.len() != d1 || p.a.iter().any(|r| r.len() != d2) || p.b1.len() != d1 || p.b2.len() != d2 {
                return Err(MintyError::ParameterOutOfRange("payoff shapes do not match the strategy sets".into()));
            }
        }
        let n1 = spectral_norm_upper(&p1.a);
        let n2 = spectral_norm_upper(&p2.a);
        let b_1 = Rational::from(&n1 * &x2.outer_radius()) + norm_upper(&p1.b1, 64);
        let b_2 = Rational::from(&n2 * &x1.outer_radius()) + norm_upper(&p2.b2, 64);
        let floor = Rational::from((1, 1u32 << 20));
        let bound = b_1.max(b_2).max(floor.clone());
        let lipschitz = n1.max(n2).max(floor);
        let (q1, q2) = (p1.clone(), p2.clone());
        let (v1, v2) = (p1.clone(), p2.clone());
        Ok(ConcaveGame2P {
            name: name.into(),
            bodies: [x1, x2],
            grads: [
                Arc::new(move |_: &[Rational], b: &[Rational]| Ok(q1.grad1(b))),
                Arc::new(move |a: &[Rational], _: &[Rational]| Ok(q2.grad2(a))),
            ],
            values: Some([
                Arc::new(move |a: &[Rational], b: &[Rational]| Ok(v1.value(a, b))),
                Arc::new(move |a: &[Rational], b: &[Rational]| Ok(v2.value(a, b))),
            ]),
            bound,
            lipschitz,
        })
    }

    /// Zero-sum game `u₁ = x₁ᵀ M x₂ = −u₂`.
    pub fn zero_sum(name: impl Into<String>, x1: Arc<dyn ConvexBody>, x2: Arc<dyn ConvexBody>, m: Matrix) -> Result<Self> {
        let p = BilinearPayoff::new(m);
        let q = p.negated();
        Self::bilinear(name, x1, x2, p, q)
    }

    pub fn grad(&self, i: usize, x1: &[Rational], x2: &[Rational]) -> Result<Vector> {
        let g = (self.grads[i])(x1, x2)?;
        if g.len() != self.bodies[i].dim() {
            return Err(MintyError::OracleFailure(format!("gradient of player {} has the wrong length", i + 1)));
        }
        Ok(g)
    }

    pub fn product_body(&self) -> Result<ProductBody> {
        ProductBody::new(self.bodies.to_vec())
    }

    /// `VI(X₁ × X₂, (−∇₁u₁, −∇₂u₂))` with `L√2` and `B√2`.
    pub fn operator(&self) -> Result<ViProblem> {
        let body = Arc::new(self.product_body()?);
        let d1 = self.bodies[0].dim();
        let g = self.clone();
        let root2 = sqrt_upper(&Rational::from(2), 64);
        let field = move |x: &[Rational]| -> Result<Vector> {
            let (a, b) = x.split_at(d1);
            let mut out: Vector = g.grad(0, a, b)?.into_iter().map(|v| -v).collect();
            out.extend(g.grad(1, a, b)?.into_iter().map(|v| -v));
            Ok(out)
        };
        Ok(ViProblem::new(
            format!("{} operator", self.name),
            body,
            field,
            Rational::from(&self.lipschitz * &root2),
            Rational::from(&self.bound * &root2),
        ))
    }

    /// Linearized deviation gaps `max_{y ∈ X_i} ⟨∇_i u_i(x), y − x_i⟩`, upper bounds on the
    /// true best-response gaps by concavity.
    pub fn deviation_gaps(&self, x1: &[Rational], x2: &[Rational]) -> Result<[Rational; 2]> {
        let zero = Rational::new();
        let mut out = [Rational::new(), Rational::new()];
        for (i, xi) in [x1, x2].into_iter().enumerate() {
            let g = self.grad(i, x1, x2)?;
            let neg: Vector = g.iter().map(|v| Rational::from(-v)).collect();
            let y = self.bodies[i].linear_min(&neg, &zero)?;
            out[i] = dot(&g, &sub(&y, xi));
        }
        Ok(out)
    }

    /// Largest finite-difference mismatch `|⟨∇u_i, d⟩ − (u_i(x + hd) − u_i(x))/h|` over random samples.
    pub fn audit_gradients(&self, samples: usize, seed: u64) -> Result<f64> {
        let values = self
            .values
            .as_ref()
            .ok_or_else(|| MintyError::ParameterOutOfRange("gradient audit needs value callbacks".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = Rational::from((1, 1u64 << 30));
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x1 = sample_point(self.bodies[0].as_ref(), &mut rng);
            let x2 = sample_point(self.bodies[1].as_ref(), &mut rng);
            for i in 0..2 {
                let d: Vector = (0..self.bodies[i].dim())
                    .map(|_| crate::scalar::from_f64(rng.gen_range(-1.0..1.0)))
                    .collect();
                let g = self.grad(i, &x1, &x2)?;
                let (p1, p2) = if i == 0 { (axpy(&x1, &h, &d), x2.clone()) } else { (x1.clone(), axpy(&x2, &h, &d)) };
                let fd = Rational::from(values[i](&p1, &p2)? - values[i](&x1, &x2)?) / &h;
                worst = worst.max((fd - dot(&g, &d)).to_f64().abs());
            }
        }
        Ok(worst)
    }
}

/// Point of `X` between the interior center and a random direction, pulled back until inside.
fn sample_point(body: &dyn ConvexBody, rng: &mut ChaCha8Rng) -> Vector {
    let c = body.interior_center();
    let r = body.outer_radius().to_f64();
    let dir: Vec<f64> = (0..body.dim()).map(|_| rng.gen_range(-r..r)).collect();
    let mut t = 1.0;
    loop {
        let x: Vector = c.iter().zip(&dir).map(|(ci, di)| Rational::from(ci + crate::scalar::from_f64(t * di))).collect();
        if body.membership(&x, &Rational::new()) || t < 1e-9 {
            return if body.membership(&x, &Rational::new()) { x } else { c };
        }
        t /= 2.0;
    }
}

/// Best response of player `i` to `other`, as an SVI point of `VI(X_i, −∇_i u_i(·, other))`
/// with linearized gap at most `tol`.
pub fn best_response(
    game: &ConcaveGame2P,
    i: usize,
    other: &[Rational],
    tol: &Rational,
    mode: ArithMode,
) -> Result<(Vector, Rational)> {
    let g = game.clone();
    let fixed = other.to_vec();
    let field = move |y: &[Rational]| -> Result<Vector> {
        let v = if i == 0 { g.grad(0, y, &fixed)? } else { g.grad(1, &fixed, y)? };
        Ok(v.into_iter().map(|x| -x).collect())
    };
    let p = ViProblem::new(
        format!("{} best response {}", game.name, i + 1),
        game.bodies[i].clone(),
        field,
        game.lipschitz.clone(),
        game.bound.clone(),
    );
    let run = solve(&p, &SolverConfig::new(tol.clone()).with_mode(mode))?;
    match &run.outcome.status {
        SolveStatus::SviSolution { certified_gap, .. } => Ok((run.point().expect("SVI point"), certified_gap.clone())),
        SolveStatus::MviInfeasibleRaw => Err(MintyError::BestResponseFailure("best-response run exhausted".into())),
        SolveStatus::Failure { reason } => Err(MintyError::BestResponseFailure(reason.clone())),
    }
}

/// Constants of the two-player lift, recorded with every result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantChain {
    #[serde(with = "crate::io::rational_str")]
    pub epsilon: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub radius: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub bound: Rational,
    #[serde(with = "crate::io::rational_str")]
    pub lipschitz: Rational,
    /// `γ = ε²L/(B + 4RL)²`.
    #[serde(with = "crate::io::rational_str")]
    pub gamma: Rational,
    /// Case-1 threshold `min{1/2, γ/(4BR)}` on the smaller weight.
    #[serde(with = "crate::io::rational_str")]
    pub threshold: Rational,
    /// `α = γ²/(8BR)`.
    #[serde(with = "crate::io::rational_str")]
    pub alpha: Rational,
    /// `L′ = max{L₁ L₂, 4B²R/γ²}` with `L₁ = √2(LR + B + L)`, `L₂ = 2√2(1 + R)/α`.
    #[serde(with = "crate::io::rational_str")]
    pub lipschitz_lift: Rational,
    /// `B′ = B √(2(R² + 1))`.
    #[serde(with = "crate::io::rational_str")]
    pub bound_lift: Rational,
    /// Margin certified for every cut, `min{γ̃, γ/4}` with `γ̃` from `(L′, B′)`.
    #[serde(with = "crate::io::rational_str", default)]
    pub gamma_tilde: Rational,
    /// `αBR`, the CCE strictness obtained from a `3αBR`-strict EVI.
    #[serde(with = "crate::io::rational_str")]
    pub cce_target: Rational,
}

/// `VI(P_α, G)` with `G(λ, λx) = (⟨∇₁u₁, x₁⟩, ⟨∇₂u₂, x₂⟩, −∇₁u₁, −∇₂u₂)` evaluated at `x`.
#[derive(Clone, Debug)]
pub struct TwoPlayerLift {
    pub base: ConcaveGame2P,
    pub alpha: Rational,
    pub body: Arc<LiftedSimplexBody>,
    pub lifted_problem: ViProblem,
    pub chain: ConstantChain,
}

impl TwoPlayerLift {
    pub fn new(game: &ConcaveGame2P, epsilon: &Rational) -> Result<Self> {
        let r = sqrt_upper(&(game.bodies[0].outer_radius().square() + game.bodies[1].outer_radius().square()), 64);
        let (b, l) = (game.bound.clone(), game.lipschitz.clone());
        let br = Rational::from(&b * &r);
        let gamma = Rational::from(epsilon.square_ref()) * &l / (Rational::from(&r * &l) * 4u32 + &b).square();
        let threshold = (Rational::from(&gamma / &br) / 4u32).min(Rational::from((1, 2)));
        let alpha = Rational::from(gamma.square_ref()) / &br / 8u32;
        let root2 = sqrt_upper(&Rational::from(2), 64);
        let l1 = Rational::from(&l * &r) + &b + &l;
        let l1 = l1 * &root2;
        let l2 = (Rational::from(1) + &r) * &root2 * 2u32 / &alpha;
        let floor = Rational::from(&b * &b) * &r * 4u32 / gamma.clone().square();
        let lipschitz_lift = Rational::from(&l1 * &l2).max(floor);
        let bound_lift = Rational::from(&b * &sqrt_upper(&((r.clone().square() + 1u32) * 2u32), 64));
        let body = Arc::new(LiftedSimplexBody::new(LiftMode::TwoPlayer, alpha.clone(), game.bodies.to_vec())?);
        let g = game.clone();
        let lb = body.clone();
        let field = move |z: &[Rational]| -> Result<Vector> {
            let (w, xs) = lb.unlift(z);
            if w.iter().any(|wi| *wi <= 0) {
                return Err(MintyError::OracleFailure("lifted point with non-positive weight".into()));
            }
            lifted_field(&g, &xs[0], &xs[1])
        };
        let lifted_problem = ViProblem::new(
            format!("{} two-player lift", game.name),
            body.clone(),
            field,
            lipschitz_lift.clone(),
            bound_lift.clone(),
        );
        let chain = ConstantChain {
            epsilon: epsilon.clone(),
            radius: r,
            bound: b,
            lipschitz: l,
            gamma,
            threshold,
            alpha: alpha.clone(),
            lipschitz_lift,
            bound_lift,
            gamma_tilde: Rational::new(),
            cce_target: Rational::from(&alpha * &br),
        };
        Ok(TwoPlayerLift { base: game.clone(), alpha, body, lifted_problem, chain })
    }
}

fn lifted_field(game: &ConcaveGame2P, x1: &[Rational], x2: &[Rational]) -> Result<Vector> {
    let g1 = game.grad(0, x1, x2)?;
    let g2 = game.grad(1, x1, x2)?;
    let mut out = vec![dot(&g1, x1), dot(&g2, x2)];
    out.extend(g1.into_iter().map(|v| -v));
    out.extend(g2.into_iter().map(|v| -v));
    Ok(out)
}

/// Outcome of [`nash_or_strict_cce`].
#[derive(Clone, Debug)]
pub enum TwoPlayerVerdict {
    Nash { x1: Vector, x2: Vector, gaps: [Rational; 2] },
    /// Distribution over `X₁ × X₂` whose per-player deviation gaps are both negative.
    StrictCce { certificate: EviCertificate, gaps: [Rational; 2], epsilon_prime: Rational },
}

#[derive(Clone, Debug)]
pub struct TwoPlayerOutcome {
    pub verdict: TwoPlayerVerdict,
    pub chain: ConstantChain,
    pub iterations: usize,
    pub case1_cuts: usize,
    pub case2_cuts: usize,
    pub body_cuts: usize,
}

/// Extra-gradient atom in the original coordinates.
#[derive(Clone, Debug)]
pub struct CceAtom {
    pub x: [Vector; 2],
    pub g: [Vector; 2],
}

enum Found {
    Nash(Vector, Vector, [Rational; 2]),
}

/// Either an `ε`-Nash equilibrium or a strict CCE, by the lifted ellipsoid with the
/// two-case semi-separation.
///
/// Case 1 (`min λ ≤ threshold`): best-respond for the light player, take one projected
/// gradient step for the heavy player and cut with `G` there. Case 2: the extra-gradient
/// step on `G` over `P_α`. Exhaustion leads to a strict CCE assembled from the cut points.
pub fn nash_or_strict_cce(game: &ConcaveGame2P, epsilon: &Rational, mode: ArithMode) -> Result<TwoPlayerOutcome> {
    let mut lift = TwoPlayerLift::new(game, epsilon)?;
    let (rp, chart) = lift.lifted_problem.reduced()?;
    let d = rp.dim();
    let shrink = Rational::from(1) - &lift.alpha;
    let cfg = SolverConfig::new(Rational::from(epsilon * &shrink)).with_mode(mode);
    let base = SolverParams::derive(&rp, &cfg)?;
    let floor = Rational::from(&lift.chain.gamma / 4u32);
    let params = base.with_margin(floor, d, &cfg);
    lift.chain.gamma_tilde = params.gamma_eff.clone();
    log::info!(
        "two-player lift: γ = {:.3e}, α = {:.3e}, L′ = {:.3e}, margin {:.3e}, T = {}",
        lift.chain.gamma.to_f64(),
        lift.alpha.to_f64(),
        lift.chain.lipschitz_lift.to_f64(),
        params.gamma_eff.to_f64(),
        params.iters
    );
    let eta1 = Rational::from(1) / (game.lipschitz.clone() * 2u32);
    let br_tol = Rational::from(epsilon / 4u32);
    let half = Rational::from((1, 2));
    let zero = Rational::new();

    let attempt = |ecfg: &crate::ellipsoid::EngineConfig| {
        let mut params = params.clone();
        params.bits = ecfg.bits;
        let mut log = QueryLog::default();
        let mut records: Vec<EgRecord> = Vec::new();
        let mut atoms: Vec<CceAtom> = Vec::new();
        let (mut c1, mut c2, mut cb) = (0usize, 0usize, 0usize);
        let run = run_engine(ecfg, |center, t| {
            let y = &params.query_point(center)[..];
            let body = rp.body.as_ref();
            if !body.membership(y, &params.proj_tol) {
                cb += 1;
                return match body.separation(y, &params.proj_tol) {
                    Separation::Cut(c) => Ok(Query::Cut { normal: c, kind: CutKind::Body }),
                    Separation::Inside => Err(MintyError::OracleFailure("membership and separation disagree".into())),
                };
            }
            let a = chart.to_ambient(y);
            let (w, xs) = lift.body.unlift(&a);
            let (heavy, light) = if w[0] >= w[1] { (0, 1) } else { (1, 0) };
            if w[light] <= lift.chain.threshold {
                let xh = if game.bodies[heavy].membership(&xs[heavy], &zero) {
                    xs[heavy].clone()
                } else {
                    game.bodies[heavy].project(&xs[heavy], &zero)?
                };
                let (xl, _) = best_response(game, light, &xh, &br_tol, mode)?;
                let pair = |h: &Vector, l: &Vector| if heavy == 0 { (h.clone(), l.clone()) } else { (l.clone(), h.clone()) };
                let (p1, p2) = pair(&xh, &xl);
                let gaps = game.deviation_gaps(&p1, &p2)?;
                if gaps.iter().all(|g| *g <= *epsilon) {
                    return Ok(Query::Found(Found::Nash(p1, p2, gaps)));
                }
                let gh = game.grad(heavy, &p1, &p2)?;
                let xh2 = game.bodies[heavy].project(&axpy(&xh, &eta1, &gh), &zero)?;
                let (q1, q2) = pair(&xh2, &xl);
                let gaps = game.deviation_gaps(&q1, &q2)?;
                if gaps.iter().all(|g| *g <= *epsilon) {
                    return Ok(Query::Found(Found::Nash(q1, q2, gaps)));
                }
                let a2 = lift.body.lift(&[half.clone(), half.clone()], &[q1.clone(), q2.clone()]);
                let g_amb = lifted_field(game, &q1, &q2)?;
                let margin = dot(&g_amb, &sub(&a, &a2));
                if margin >= params.gamma_eff {
                    c1 += 1;
                    let normal = chart.pull_covector(&g_amb);
                    records.push(EgRecord { step: t, tilde: chart.to_chart(&a2), f_tilde: normal.clone(), margin: margin.to_f64() });
                    atoms.push(CceAtom { g: [game.grad(0, &q1, &q2)?, game.grad(1, &q1, &q2)?], x: [q1, q2] });
                    return Ok(Query::Cut { normal, kind: CutKind::ExtraGradient });
                }
                log::debug!("case 1 margin {:.3e} too small at step {t}; using the lifted step", margin.to_f64());
            }
            let decision = match extra_gradient_cut(&rp, y, &params, &mut log) {
                Err(MintyError::AssumptionViolation(msg)) if !body.membership(y, &zero) => {
                    log::debug!("body cut outside P_α: {msg}");
                    cb += 1;
                    return match body.separation(y, &zero) {
                        Separation::Cut(c) => Ok(Query::Cut { normal: c, kind: CutKind::Body }),
                        Separation::Inside => Err(MintyError::AssumptionViolation(msg)),
                    };
                }
                other => other?,
            };
            match decision {
                CutDecision::SviAccepted { point, .. } => {
                    let (_, xs) = lift.body.unlift(&chart.to_ambient(&point));
                    let gaps = game.deviation_gaps(&xs[0], &xs[1])?;
                    if gaps.iter().any(|g| g > epsilon) {
                        return Err(MintyError::OracleFailure("lifted SVI point is not an ε-Nash equilibrium".into()));
                    }
                    let [x1, x2]: [Vector; 2] = xs.try_into().expect("two players");
                    Ok(Query::Found(Found::Nash(x1, x2, gaps)))
                }
                CutDecision::StrictCut { normal, tilde, f_tilde, margin } => {
                    c2 += 1;
                    let (_, xs) = lift.body.unlift(&chart.to_ambient(&tilde));
                    atoms.push(CceAtom { g: [game.grad(0, &xs[0], &xs[1])?, game.grad(1, &xs[0], &xs[1])?], x: [xs[0].clone(), xs[1].clone()] });
                    records.push(EgRecord { step: t, tilde, f_tilde, margin: margin.to_f64() });
                    Ok(Query::Cut { normal, kind: CutKind::ExtraGradient })
                }
            }
        })?;
        Ok((run, records, atoms, c1, c2, cb))
    };
    let (run, records, atoms, c1, c2, cb) = with_precision_retry(&params.engine(d), attempt, |_| false)?;
    let iterations = run.trace.steps.len();
    let verdict = match run.end {
        EngineEnd::Found(Found::Nash(x1, x2, gaps)) => TwoPlayerVerdict::Nash { x1, x2, gaps },
        EngineEnd::SmallVolume(_) => strict_cce_from(game, rp.body.as_ref(), &records, &atoms, &params.gamma_eff)?,
        EngineEnd::Failed(e) => return Err(e),
    };
    Ok(TwoPlayerOutcome { verdict, chain: lift.chain, iterations, case1_cuts: c1, case2_cuts: c2, body_cuts: cb })
}

/// Marginalizes the lifted strict EVI onto `X₁ × X₂`; falls back to optimizing the
/// per-player program over the same atoms when the marginal is not strict for both players.
fn strict_cce_from(
    game: &ConcaveGame2P,
    lifted_body: &dyn ConvexBody,
    records: &[EgRecord],
    atoms: &[CceAtom],
    margin: &Rational,
) -> Result<TwoPlayerVerdict> {
    if atoms.is_empty() {
        return Err(MintyError::AssumptionViolation("exhausted without extra-gradient cuts".into()));
    }
    let mut weights = match extract_strict_evi(lifted_body, records, margin) {
        Ok(c) => Some(c),
        Err(MintyError::CertificateShortfall { best, .. }) => Some(*best),
        Err(e) => return Err(e),
    }
    .map(|c| marginal_weights(records, &c));
    let mut gaps = match &weights {
        Some(w) => cce_gaps(game, atoms, w)?,
        None => [Rational::from(1), Rational::from(1)],
    };
    if gaps.iter().any(|g| *g >= 0) {
        let (w, g) = best_cce(game, atoms)?;
        weights = Some(w);
        gaps = g;
    }
    let w = weights.expect("weights set above");
    if gaps.iter().any(|g| *g >= 0) {
        let cert = cce_certificate(game, atoms, &w)?;
        let worst = gaps.iter().max().unwrap().to_f64();
        return Err(MintyError::CertificateShortfall { gap: worst, required: 0.0, best: Box::new(cert) });
    }
    let certificate = cce_certificate(game, atoms, &w)?;
    let epsilon_prime = -gaps.iter().max().unwrap().clone();
    Ok(TwoPlayerVerdict::StrictCce { certificate, gaps, epsilon_prime })
}

/// Atom weights of a lifted certificate, matched back to the recorded cut points.
fn marginal_weights(records: &[EgRecord], cert: &EviCertificate) -> Vec<Rational> {
    let mut w = vec![Rational::new(); records.len()];
    for s in &cert.support {
        if let Some(k) = records.iter().position(|r| r.tilde == s.point) {
            w[k] += &s.weight;
        }
    }
    w
}

/// Per-player gaps `max_y Σ_t μ_t ⟨g_i^t, y − x_i^t⟩`.
pub fn cce_gaps(game: &ConcaveGame2P, atoms: &[CceAtom], mu: &[Rational]) -> Result<[Rational; 2]> {
    let zero = Rational::new();
    let mut out = [Rational::new(), Rational::new()];
    for (i, o) in out.iter_mut().enumerate() {
        let dim = game.bodies[i].dim();
        let mut gbar = vec![Rational::new(); dim];
        let mut base = Rational::new();
        for (a, w) in atoms.iter().zip(mu) {
            if *w.numer() == 0 {
                continue;
            }
            for (s, v) in gbar.iter_mut().zip(&a.g[i]) {
                *s += Rational::from(v * w);
            }
            base += dot(&a.g[i], &a.x[i]) * w;
        }
        let neg: Vector = gbar.iter().map(|v| Rational::from(-v)).collect();
        let y = game.bodies[i].linear_min(&neg, &zero)?;
        *o = dot(&gbar, &y) - base;
    }
    Ok(out)
}

fn cce_certificate(game: &ConcaveGame2P, atoms: &[CceAtom], mu: &[Rational]) -> Result<EviCertificate> {
    let body = game.product_body()?;
    let support = atoms
        .iter()
        .zip(mu)
        .filter(|(_, w)| *w.numer() != 0)
        .map(|(a, w)| {
            let mut point = a.x[0].clone();
            point.extend(a.x[1].iter().cloned());
            let mut f: Vector = a.g[0].iter().map(|v| Rational::from(-v)).collect();
            f.extend(a.g[1].iter().map(|v| Rational::from(-v)));
            SupportPoint { weight: w.clone(), point, f_value: f }
        })
        .collect();
    EviCertificate::new(&body, support, None)
}

const CCE_ROUNDS: usize = 300;

/// Cutting-plane solve of `max_μ min_i −gap_i(μ)` over the atoms; returns exact gaps.
pub fn best_cce(game: &ConcaveGame2P, atoms: &[CceAtom]) -> Result<(Vec<Rational>, [Rational; 2])> {
    let t = atoms.len();
    let zero = Rational::new();
    let base: [Vec<f64>; 2] = [0, 1].map(|i| atoms.iter().map(|a| dot(&a.g[i], &a.x[i]).to_f64()).collect());
    let row_for = |i: usize, y: &Vector| -> Vec<f64> {
        atoms.iter().zip(&base[i]).map(|(a, b)| dot(&a.g[i], y).to_f64() - b).collect()
    };
    let best_dev = |i: usize, mu: &[Rational]| -> Result<Vector> {
        let dim = game.bodies[i].dim();
        let mut gbar = vec![Rational::new(); dim];
        for (a, w) in atoms.iter().zip(mu) {
            if *w.numer() != 0 {
                for (s, v) in gbar.iter_mut().zip(&a.g[i]) {
                    *s += Rational::from(v * w);
                }
            }
        }
        let neg: Vector = gbar.iter().map(|v| Rational::from(-v)).collect();
        game.bodies[i].linear_min(&neg, &zero)
    };
    let uniform = vec![Rational::from((1, t as u64)); t];
    let mut best_mu = uniform.clone();
    let mut best_gaps = cce_gaps(game, atoms, &uniform)?;
    let mut cuts: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 0..2 {
        cuts.push((i, row_for(i, &best_dev(i, &uniform)?)));
        for a in atoms.iter().take(3) {
            cuts.push((i, row_for(i, &a.x[i])));
        }
    }
    for _ in 0..CCE_ROUNDS {
        let mut obj = vec![0.0; t + 1];
        obj[t] = -1.0;
        let mut lp = Lp::new(obj);
        lp.set_free(t);
        for (_, c) in &cuts {
            let mut row = c.clone();
            row.push(1.0);
            lp.push(row, Cmp::Le, 0.0);
        }
        let mut sum = vec![1.0; t];
        sum.push(0.0);
        lp.push(sum, Cmp::Eq, 1.0);
        let (mu, upper) = match lp.solve() {
            LpOutcome::Optimal { x, value } => (x, -value),
            other => return Err(MintyError::OracleFailure(format!("CCE master program: {other:?}"))),
        };
        let w = rational_weights(&mu[..t]);
        let gaps = cce_gaps(game, atoms, &w)?;
        let worst = |g: &[Rational; 2]| g.iter().max().unwrap().clone();
        if worst(&gaps) < worst(&best_gaps) {
            best_mu = w.clone();
            best_gaps = gaps.clone();
        }
        let verified = -worst(&best_gaps).to_f64();
        if upper - verified <= 1e-9 * (1.0 + upper.abs()) {
            break;
        }
        for i in 0..2 {
            cuts.push((i, row_for(i, &best_dev(i, &w)?)));
        }
    }
    Ok((best_mu, best_gaps))
}

/// `evi_gap` of a CCE certificate over `X₁ × X₂` (the summed deviation benefit).
pub fn cce_total_gap(game: &ConcaveGame2P, cert: &EviCertificate) -> Result<Rational> {
    evi_gap(&game.product_body()?, cert, &Rational::new())
}
