//! VI problems, the evaluation log with its bound audits, and the doubling driver.

use std::fmt;
use std::sync::Arc;

use rug::Rational;
use serde::Serialize;

use crate::error::{MintyError, Result};
use crate::geometry::{reduce_body, AffineChart, AffineImageBody, AffineMap, ConvexBody};
use crate::linalg::{frobenius2, mat_t_vec, sub, Matrix, Vector};
use crate::scalar::{fmt_rational, norm2, sqrt_upper};

/// Evaluation callback `x ↦ F(x)`.
pub type FieldFn = Arc<dyn Fn(&[Rational]) -> Result<Vector> + Send + Sync>;

/// `VI(X, F)` with declared Lipschitz constant `L` and norm bound `B`.
#[derive(Clone)]
pub struct ViProblem {
    pub name: String,
    pub body: Arc<dyn ConvexBody>,
    pub field: FieldFn,
    pub lipschitz: Rational,
    pub bound: Rational,
    /// Known MVI solution, when the instance has one.
    pub known_mvi: Option<Vector>,
}

impl fmt::Debug for ViProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ViProblem")
            .field("name", &self.name)
            .field("dim", &self.body.dim())
            .field("lipschitz", &fmt_rational(&self.lipschitz))
            .field("bound", &fmt_rational(&self.bound))
            .finish()
    }
}

impl ViProblem {
    pub fn new(
        name: impl Into<String>,
        body: Arc<dyn ConvexBody>,
        field: impl Fn(&[Rational]) -> Result<Vector> + Send + Sync + 'static,
        lipschitz: Rational,
        bound: Rational,
    ) -> Self {
        ViProblem { name: name.into(), body, field: Arc::new(field), lipschitz, bound, known_mvi: None }
    }

    pub fn with_known_mvi(mut self, x: Vector) -> Self {
        self.known_mvi = Some(x);
        self
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn eval(&self, x: &[Rational]) -> Result<Vector> {
        let v = (self.field)(x)?;
        if v.len() != x.len() {
            return Err(MintyError::OracleFailure(format!("field returned {} entries for a {}-vector", v.len(), x.len())));
        }
        Ok(v)
    }

    /// Same problem with `L` and `B` doubled.
    pub fn doubled(&self) -> Self {
        let mut p = self.clone();
        p.lipschitz *= 2u32;
        p.bound *= 2u32;
        p
    }

    /// Rewrites the problem on the affine hull of a flat polyhedral body.
    ///
    /// `F_y(y) = Bᵀ F(base + B y)` keeps every SVI and EVI gap unchanged.
    pub fn reduced(&self) -> Result<(ViProblem, AffineChart)> {
        let rb = reduce_body(self.body.clone())?;
        if rb.is_identity() {
            return Ok((self.clone(), rb.chart));
        }
        let chart = rb.chart.clone();
        let inner = self.field.clone();
        let ch = chart.clone();
        let nb = chart.basis_norm_upper();
        let known = self.known_mvi.as_ref().map(|x| chart.to_chart(x));
        let p = ViProblem {
            name: self.name.clone(),
            body: rb.inner.clone(),
            field: Arc::new(move |y: &[Rational]| Ok(ch.pull_covector(&inner(&ch.to_ambient(y))?))),
            lipschitz: Rational::from(&self.lipschitz * &nb) * &nb,
            bound: Rational::from(&self.bound * &nb),
            known_mvi: known,
        };
        Ok((p, chart))
    }
}

/// Upper bound on the spectral norm: `min(‖M‖_F, √(‖M‖₁‖M‖_∞))`.
pub fn spectral_norm_upper(m: &Matrix) -> Rational {
    let fro = sqrt_upper(&frobenius2(m), 64);
    let rows = m.iter().map(|r| r.iter().fold(Rational::new(), |a, x| a + x.clone().abs())).max().unwrap_or_default();
    let cols = (0..m.first().map_or(0, |r| r.len()))
        .map(|j| m.iter().fold(Rational::new(), |a, r| a + r[j].clone().abs()))
        .max()
        .unwrap_or_default();
    let mixed = sqrt_upper(&(rows * cols), 64);
    fro.min(mixed)
}

/// Transports a problem through `ψ(x) = A x + b`: `F̃(x̃) = A⁻ᵀ F(ψ⁻¹(x̃))`.
///
/// Bounds become `‖A⁻¹‖ B` and `‖A⁻¹‖² L`.
pub fn precondition_affine(problem: &ViProblem, map: &AffineMap) -> Result<ViProblem> {
    if map.dim() != problem.dim() {
        return Err(MintyError::ParameterOutOfRange("map and problem dimensions differ".into()));
    }
    let check = crate::linalg::mat_mul(&map.matrix, &map.inverse);
    if check != crate::linalg::identity(map.dim()) {
        return Err(MintyError::SingularMap);
    }
    let body = Arc::new(AffineImageBody::new(problem.body.clone(), map.clone())?);
    let inv_norm = spectral_norm_upper(&map.inverse);
    let inner = problem.field.clone();
    let m = map.clone();
    Ok(ViProblem {
        name: format!("{}∘ψ⁻¹", problem.name),
        body,
        field: Arc::new(move |xt: &[Rational]| Ok(mat_t_vec(&m.inverse, &inner(&m.apply_inverse(xt))?))),
        lipschitz: Rational::from(&problem.lipschitz * &inv_norm) * &inv_norm,
        bound: Rational::from(&problem.bound * &inv_norm),
        known_mvi: problem.known_mvi.as_ref().map(|x| map.apply(x)),
    })
}

/// One recorded evaluation.
#[derive(Clone, Debug)]
pub struct Query {
    pub point: Vector,
    pub value: Vector,
}

/// Audit outcome over the query log.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub queries: usize,
    pub pairs_checked: usize,
    pub max_ratio: f64,
    pub max_norm: f64,
}

/// Evaluations of a run, with the norm bound checked at insertion.
///
/// All queries are retained up to `retain`; beyond that the log keeps the most
/// recent ones and those at power-of-two indices.
#[derive(Clone, Debug)]
pub struct QueryLog {
    pub queries: Vec<(usize, Query)>,
    pub total: usize,
    pub retain: usize,
    pub check_lipschitz: bool,
}

impl Default for QueryLog {
    fn default() -> Self {
        QueryLog { queries: Vec::new(), total: 0, retain: 64, check_lipschitz: true }
    }
}

impl QueryLog {
    pub fn keep_all() -> Self {
        QueryLog { retain: usize::MAX, ..Default::default() }
    }

    /// Evaluates `F`, asserting `‖F(x)‖ ≤ B` and the Lipschitz bound against the retained queries.
    pub fn eval(&mut self, problem: &ViProblem, x: &[Rational]) -> Result<Vector> {
        let v = problem.eval(x)?;
        let b2 = Rational::from(problem.bound.square_ref());
        if norm2(&v) > b2 {
            return Err(MintyError::AssumptionViolation(format!(
                "‖F(x)‖ exceeds B = {} at query {}",
                fmt_rational(&problem.bound),
                self.total
            )));
        }
        if self.check_lipschitz {
            let l2 = Rational::from(problem.lipschitz.square_ref());
            for (i, q) in &self.queries {
                if let Some(false) = lipschitz_ok(&q.point, &q.value, x, &v, &l2) {
                    return Err(MintyError::AssumptionViolation(format!(
                        "Lipschitz ratio exceeds L = {} between queries {i} and {}",
                        fmt_rational(&problem.lipschitz),
                        self.total
                    )));
                }
            }
        }
        self.push(x.to_vec(), v.clone());
        Ok(v)
    }

    pub fn push(&mut self, point: Vector, value: Vector) {
        self.queries.push((self.total, Query { point, value }));
        self.total += 1;
        if self.queries.len() > self.retain {
            let last = self.total;
            self.queries.retain(|(i, _)| i.is_power_of_two() || *i == 0 || i + 8 >= last);
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Pairwise audit over the retained queries; ratios reported in floating point.
    pub fn audit(&self, lipschitz: &Rational) -> Result<AuditReport> {
        let l2 = Rational::from(lipschitz.square_ref());
        let mut max_ratio = 0.0f64;
        let mut pairs = 0;
        for (k, (i, a)) in self.queries.iter().enumerate() {
            for (j, b) in &self.queries[..k] {
                pairs += 1;
                let dx = norm2(&sub(&a.point, &b.point));
                if *dx.numer() == 0 {
                    continue;
                }
                let df = norm2(&sub(&a.value, &b.value));
                max_ratio = max_ratio.max((df.to_f64() / dx.to_f64()).sqrt());
                if df > Rational::from(&l2 * &dx) {
                    return Err(MintyError::AssumptionViolation(format!(
                        "Lipschitz ratio exceeds L between queries {j} and {i}"
                    )));
                }
            }
        }
        let max_norm = self.queries.iter().map(|(_, q)| norm2(&q.value).to_f64().sqrt()).fold(0.0, f64::max);
        Ok(AuditReport { queries: self.total, pairs_checked: pairs, max_ratio, max_norm })
    }
}

fn lipschitz_ok(x: &[Rational], fx: &[Rational], y: &[Rational], fy: &[Rational], l2: &Rational) -> Option<bool> {
    let dx = norm2(&sub(x, y));
    let df = norm2(&sub(fx, fy));
    if *dx.numer() == 0 {
        return if *df.numer() == 0 { None } else { Some(false) };
    }
    Some(df <= Rational::from(l2 * &dx))
}

/// Runs `attempt`, doubling `L` and `B` after each assumption violation.
pub fn with_doubling<T>(
    problem: &ViProblem,
    max_doublings: usize,
    mut attempt: impl FnMut(&ViProblem) -> Result<T>,
) -> Result<(T, ViProblem)> {
    let mut p = problem.clone();
    for k in 0..=max_doublings {
        match attempt(&p) {
            Err(MintyError::AssumptionViolation(msg)) if k < max_doublings => {
                log::info!("assumption violated ({msg}); doubling L and B");
                p = p.doubled();
            }
            other => return other.map(|v| (v, p)),
        }
    }
    unreachable!()
}
