//! Game-to-VI adapters: normal-form operators, the explicit ACCE program, harmonic and two-player lifts.

mod concave;
mod harmonic;

pub use concave::*;
pub use harmonic::*;

use std::fmt;
use std::sync::Arc;

use rug::Rational;

use crate::certificates::{EviCertificate, MintyDecision, SupportPoint};
use crate::error::{MintyError, Result};
use crate::geometry::{ConvexBody, ProductBody, SimplexBody};
use crate::linalg::Vector;
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::problem::ViProblem;
use crate::scalar::sqrt_upper;

/// Pure-profile utility callback: profile in, one utility per player out.
pub type UtilityFn = Arc<dyn Fn(&[usize]) -> Result<Vector> + Send + Sync>;

/// Default cap on joint profiles for the explicit programs.
pub const DEFAULT_PROFILE_CAP: usize = 1 << 16;

#[derive(Clone)]
pub enum Payoffs {
    /// `tensors[i][index(a)]` with the last player's action varying fastest.
    Explicit(Vec<Vector>),
    Succinct(UtilityFn),
}

/// Finite game in normal form.
#[derive(Clone)]
pub struct NormalFormGame {
    pub name: String,
    pub actions: Vec<usize>,
    pub payoffs: Payoffs,
    /// `max |u_i(a)|`.
    pub utility_bound: Rational,
}

impl fmt::Debug for NormalFormGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalFormGame")
            .field("name", &self.name)
            .field("actions", &self.actions)
            .field("explicit", &matches!(self.payoffs, Payoffs::Explicit(_)))
            .finish()
    }
}

impl NormalFormGame {
    pub fn explicit(name: impl Into<String>, actions: Vec<usize>, tensors: Vec<Vector>) -> Result<Self> {
        if actions.is_empty() || actions.iter().any(|&k| k < 1) {
            return Err(MintyError::ParameterOutOfRange("every player needs an action".into()));
        }
        let total: usize = actions.iter().product();
        if tensors.len() != actions.len() || tensors.iter().any(|t| t.len() != total) {
            return Err(MintyError::ParameterOutOfRange(format!(
                "expected {} tensors with {total} entries",
                actions.len()
            )));
        }
        let bound = tensors.iter().flatten().map(|v| v.clone().abs()).max().unwrap_or_default();
        Ok(NormalFormGame { name: name.into(), actions, payoffs: Payoffs::Explicit(tensors), utility_bound: bound })
    }

    /// Tabulates `u` over all profiles.
    pub fn tabulate(
        name: impl Into<String>,
        actions: Vec<usize>,
        u: impl Fn(&[usize]) -> Vector,
    ) -> Result<Self> {
        let n = actions.len();
        let total: usize = actions.iter().product();
        let mut tensors = vec![Vec::with_capacity(total); n];
        for k in 0..total {
            let a = profile_of(&actions, k);
            let vals = u(&a);
            if vals.len() != n {
                return Err(MintyError::OracleFailure("utility callback returned the wrong length".into()));
            }
            for (t, v) in tensors.iter_mut().zip(vals) {
                t.push(v);
            }
        }
        Self::explicit(name, actions, tensors)
    }

    /// Two-player game from payoff matrices `A` (row player) and `B` (column player).
    pub fn bimatrix(name: impl Into<String>, a: &[Vector], b: &[Vector]) -> Result<Self> {
        let rows = a.len();
        let cols = a.first().map_or(0, |r| r.len());
        Self::tabulate(name, vec![rows, cols], |p| vec![a[p[0]][p[1]].clone(), b[p[0]][p[1]].clone()])
    }

    pub fn succinct(name: impl Into<String>, actions: Vec<usize>, utility: UtilityFn, bound: Rational) -> Self {
        NormalFormGame { name: name.into(), actions, payoffs: Payoffs::Succinct(utility), utility_bound: bound }
    }

    pub fn players(&self) -> usize {
        self.actions.len()
    }

    pub fn num_profiles(&self) -> usize {
        self.actions.iter().product()
    }

    /// `Σ |A_i|`, the dimension of the strategy space.
    pub fn strategy_dim(&self) -> usize {
        self.actions.iter().sum()
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self.payoffs, Payoffs::Explicit(_))
    }

    pub fn utilities(&self, a: &[usize]) -> Result<Vector> {
        match &self.payoffs {
            Payoffs::Explicit(t) => {
                let k = index_of(&self.actions, a);
                Ok(t.iter().map(|ti| ti[k].clone()).collect())
            }
            Payoffs::Succinct(f) => {
                let v = f(a)?;
                if v.len() != self.players() {
                    return Err(MintyError::OracleFailure("utility callback returned the wrong length".into()));
                }
                Ok(v)
            }
        }
    }

    fn utilities_at(&self, k: usize) -> Result<Vector> {
        match &self.payoffs {
            Payoffs::Explicit(t) => Ok(t.iter().map(|ti| ti[k].clone()).collect()),
            Payoffs::Succinct(_) => self.utilities(&profile_of(&self.actions, k)),
        }
    }

    /// `Δ(A_1) × … × Δ(A_n)`; single-action players get the point `{1}`.
    pub fn strategy_body(&self) -> Result<ProductBody> {
        let factors = self
            .actions
            .iter()
            .map(|&k| -> Result<Arc<dyn ConvexBody>> { Ok(Arc::new(SimplexBody::new(k)?)) })
            .collect::<Result<Vec<_>>>()?;
        ProductBody::new(factors)
    }

    /// Splits a flat strategy vector into per-player blocks.
    pub fn split(&self, x: &[Rational]) -> Vec<Vector> {
        let mut out = Vec::with_capacity(self.players());
        let mut off = 0;
        for &k in &self.actions {
            out.push(x[off..off + k].to_vec());
            off += k;
        }
        out
    }

    /// Pure profile as a strategy vector.
    pub fn pure(&self, a: &[usize]) -> Vector {
        let mut x = Vec::with_capacity(self.strategy_dim());
        for (&k, &ai) in self.actions.iter().zip(a) {
            x.extend((0..k).map(|j| Rational::from(u32::from(j == ai))));
        }
        x
    }

    /// `u_i(a_i, x_{−i})` for every player and action, by enumeration of joint profiles.
    pub fn deviation_payoffs(&self, xs: &[Vector]) -> Result<Vec<Vector>> {
        let n = self.players();
        let mut out: Vec<Vector> = self.actions.iter().map(|&k| vec![Rational::new(); k]).collect();
        for k in 0..self.num_profiles() {
            let a = profile_of(&self.actions, k);
            if (0..n).filter(|&i| *xs[i][a[i]].numer() == 0).count() > 1 {
                continue;
            }
            let u = self.utilities_at(k)?;
            for i in 0..n {
                let mut p = Rational::from(1);
                for j in (0..n).filter(|&j| j != i) {
                    p *= &xs[j][a[j]];
                    if *p.numer() == 0 {
                        break;
                    }
                }
                if *p.numer() != 0 {
                    out[i][a[i]] += p * &u[i];
                }
            }
        }
        Ok(out)
    }

    /// Expected utilities `u_i(x)`.
    pub fn expected_utilities(&self, xs: &[Vector]) -> Result<Vector> {
        let dev = self.deviation_payoffs(xs)?;
        Ok(dev.iter().zip(xs).map(|(d, x)| crate::linalg::dot(d, x)).collect())
    }

    /// Per-player best-response gaps `max_{a_i} u_i(a_i, x_{−i}) − u_i(x)`.
    pub fn nash_gaps(&self, xs: &[Vector]) -> Result<Vector> {
        let dev = self.deviation_payoffs(xs)?;
        Ok(dev
            .iter()
            .zip(xs)
            .map(|(d, x)| d.iter().max().cloned().unwrap_or_default() - crate::linalg::dot(d, x))
            .collect())
    }

    /// Largest bit length among the explicit payoffs, or of the bound for succinct games.
    pub fn payoff_bits(&self) -> u32 {
        let bits = |q: &Rational| q.numer().significant_bits().max(q.denom().significant_bits());
        match &self.payoffs {
            Payoffs::Explicit(t) => t.iter().flatten().map(bits).max().unwrap_or(1),
            Payoffs::Succinct(_) => bits(&self.utility_bound),
        }
    }
}

/// Mixed-radix decoding with the last player fastest.
pub fn profile_of(actions: &[usize], mut k: usize) -> Vec<usize> {
    let mut a = vec![0; actions.len()];
    for i in (0..actions.len()).rev() {
        a[i] = k % actions[i];
        k /= actions[i];
    }
    a
}

pub fn index_of(actions: &[usize], a: &[usize]) -> usize {
    actions.iter().zip(a).fold(0, |k, (&m, &ai)| k * m + ai)
}

/// `VI(Δ(A_1) × … × Δ(A_n), F)` with `F(x) = ((−u_i(a_i, x_{−i}))_{a_i})_i`.
///
/// With `U = max|u|` and `k = Σ|A_i|`: `B = U√k` and `L = U k`.
pub fn game_operator(game: &NormalFormGame) -> Result<ViProblem> {
    let body = Arc::new(game.strategy_body()?);
    let k = game.strategy_dim() as u32;
    let u = game.utility_bound.clone().max(Rational::from((1, 1u32 << 20)));
    let bound = sqrt_upper(&(Rational::from(k) * &u * &u), 64);
    let lipschitz = Rational::from(&u * k);
    let g = game.clone();
    let field = move |x: &[Rational]| -> Result<Vector> {
        let dev = g.deviation_payoffs(&g.split(x))?;
        Ok(dev.into_iter().flatten().map(|v| -v).collect())
    };
    Ok(ViProblem::new(format!("{} operator", game.name), body, field, lipschitz, bound))
}

/// Strictest average CCE: distribution over joint profiles and its total deviation benefit.
#[derive(Clone, Debug, PartialEq)]
pub struct AcceSolution {
    /// `min_μ Σ_i max_{a_i′} E_μ[u_i(a_i′, a_{−i}) − u_i(a)]`; never positive.
    pub value: Rational,
    /// Weights indexed like the joint profiles.
    pub mu: Vec<Rational>,
}

fn check_cap(game: &NormalFormGame, cap: usize) -> Result<usize> {
    let total = game.actions.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).unwrap_or(usize::MAX);
    if total > cap {
        return Err(MintyError::CapExceeded(total));
    }
    Ok(total)
}

/// Solves the strictest-ACCE linear program exactly.
pub fn strictest_acce(game: &NormalFormGame, cap: usize) -> Result<AcceSolution> {
    let total = check_cap(game, cap)?;
    let n = game.players();
    let table: Vec<Vector> = (0..total).map(|k| game.utilities_at(k)).collect::<Result<_>>()?;
    let nv = total + n;
    let mut obj = vec![Rational::new(); nv];
    for o in obj.iter_mut().skip(total) {
        *o = Rational::from(1);
    }
    let mut lp = Lp::new(obj);
    for j in total..nv {
        lp.set_free(j);
    }
    for i in 0..n {
        for dev in 0..game.actions[i] {
            // Σ_a μ(a)(u_i(dev, a_{−i}) − u_i(a)) − e_i ≤ 0
            let mut row = vec![Rational::new(); nv];
            for (k, u) in table.iter().enumerate() {
                let mut a = profile_of(&game.actions, k);
                if a[i] == dev {
                    continue;
                }
                a[i] = dev;
                let alt = &table[index_of(&game.actions, &a)][i];
                row[k] = Rational::from(alt - &u[i]);
            }
            row[total + i] = Rational::from(-1);
            lp.push(row, Cmp::Le, Rational::new());
        }
    }
    let mut sum = vec![Rational::from(1); total];
    sum.extend(vec![Rational::new(); n]);
    lp.push(sum, Cmp::Eq, Rational::from(1));
    match lp.solve() {
        LpOutcome::Optimal { x, value } => Ok(AcceSolution { value, mu: x[..total].to_vec() }),
        other => Err(MintyError::OracleFailure(format!("ACCE program: {other:?}"))),
    }
}

/// Decides the Minty condition of [`game_operator`] by the strictest-ACCE program.
pub fn minty_decision_explicit(game: &NormalFormGame, cap: usize) -> Result<MintyDecision> {
    let sol = strictest_acce(game, cap)?;
    if sol.value >= 0 {
        return Ok(MintyDecision::MintyHolds);
    }
    let body = game.strategy_body()?;
    let op = game_operator(game)?;
    let mut support = Vec::new();
    for (k, w) in sol.mu.iter().enumerate() {
        if *w.numer() == 0 {
            continue;
        }
        let x = game.pure(&profile_of(&game.actions, k));
        let f = op.eval(&x)?;
        support.push(SupportPoint { weight: w.clone(), point: x, f_value: f });
    }
    Ok(MintyDecision::StrictEviExists(EviCertificate::new(&body, support, None)?))
}

/// An MVI point of [`game_operator`]: `x′` with `Σ_i u_i(x′_i, a_{−i}) ≥ Σ_i u_i(a)` at every pure `a`.
///
/// Pure profiles suffice because `⟨F(x), x − x′⟩` is an expectation over `a ∼ x`.
pub fn mvi_point_explicit(game: &NormalFormGame, cap: usize) -> Result<Option<Vector>> {
    let total = check_cap(game, cap)?;
    let n = game.players();
    let dim = game.strategy_dim();
    let table: Vec<Vector> = (0..total).map(|k| game.utilities_at(k)).collect::<Result<_>>()?;
    let offsets: Vec<usize> = game.actions.iter().scan(0, |s, &k| { let o = *s; *s += k; Some(o) }).collect();
    let mut lp = Lp::new(vec![Rational::new(); dim]);
    for (k, u) in table.iter().enumerate() {
        let a = profile_of(&game.actions, k);
        let mut row = vec![Rational::new(); dim];
        for i in 0..n {
            let mut b = a.clone();
            for dev in 0..game.actions[i] {
                b[i] = dev;
                row[offsets[i] + dev] = table[index_of(&game.actions, &b)][i].clone();
            }
        }
        let rhs = u.iter().fold(Rational::new(), |s, v| s + v);
        lp.push(row, Cmp::Ge, rhs);
    }
    for i in 0..n {
        let mut row = vec![Rational::new(); dim];
        for v in row.iter_mut().skip(offsets[i]).take(game.actions[i]) {
            *v = Rational::from(1);
        }
        lp.push(row, Cmp::Eq, Rational::from(1));
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => Ok(Some(x)),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(MintyError::OracleFailure("MVI program unbounded".into())),
    }
}

/// Matching pennies with `±1` payoffs.
pub fn matching_pennies() -> NormalFormGame {
    let one = || Rational::from(1);
    let m = || Rational::from(-1);
    NormalFormGame::bimatrix(
        "matching pennies",
        &[vec![one(), m()], vec![m(), one()]],
        &[vec![m(), one()], vec![one(), m()]],
    )
    .expect("2x2 game")
}

/// Prisoner's dilemma (cooperate = 0, defect = 1).
pub fn prisoners_dilemma() -> NormalFormGame {
    let r = |v: i32| Rational::from(v);
    NormalFormGame::bimatrix(
        "prisoner's dilemma",
        &[vec![r(3), r(0)], vec![r(5), r(1)]],
        &[vec![r(3), r(5)], vec![r(0), r(1)]],
    )
    .expect("2x2 game")
}
