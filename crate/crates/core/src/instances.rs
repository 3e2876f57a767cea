//! Instance generators: lower-bound families, counterexample fields, hardness reductions
//! and the adversarial oracle for the ellipsoid method without extra-gradient steps.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::ellipsoid::AnyEllipsoid;
use crate::error::{MintyError, Result};
use crate::games::{BilinearPayoff, ConcaveGame2P, NormalFormGame};
use crate::geometry::{BoxBody, ConvexBody, HPolytopeBody};
use crate::linalg::{dot, mat_vec, scale, sub, Matrix, Vector};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::problem::{spectral_norm_upper, ViProblem};
use crate::scalar::{norm2, sqrt_upper, truncate, ArithMode};

/// Frozen constant `C` with `Lip(F_{ε,α}) ≤ Cε²`; the grid maximum of `|φ″_ε|/ε²` over `ε < 1/6` is below 8.05.
pub const HIDDEN_INTERVAL_LIP_C: u32 = 9;

/// `φ_ε(x) = (x − ε)²(x − 3ε)²(x²(x² − 8ε²) − 1)`.
pub fn phi(eps: &Rational, x: &Rational) -> Rational {
    let a = Rational::from(x - eps);
    let b = Rational::from(x - Rational::from(eps * 3u32));
    let x2 = Rational::from(x.square_ref());
    let e2 = Rational::from(eps.square_ref());
    let q = Rational::from(&x2 * &(x2.clone() - e2 * 8u32)) - 1u32;
    a.square() * b.square() * q
}

/// `φ′_ε(x)` by the product rule.
pub fn phi_prime(eps: &Rational, x: &Rational) -> Rational {
    let a = Rational::from(x - eps);
    let b = Rational::from(x - Rational::from(eps * 3u32));
    let x2 = Rational::from(x.square_ref());
    let e2 = Rational::from(eps.square_ref());
    let p = Rational::from(&a * &b).square();
    let dp = Rational::from(&a * &b) * 2u32 * (Rational::from(x * 2u32) - Rational::from(eps * 4u32));
    let q = Rational::from(&x2 * &(x2.clone() - Rational::from(&e2 * 8u32))) - 1u32;
    let dq = Rational::from(&x2 * x) * 4u32 - e2 * x * 16u32;
    dp * q + p * dq
}

/// `F_{ε,α}` on `[0, 1]`: `φ′_ε(x − α)` on `(α + ε, α + 3ε)` and zero elsewhere.
#[derive(Clone, Debug)]
pub struct HiddenInterval {
    pub eps: Rational,
    pub alpha: Rational,
    pub problem: ViProblem,
    /// `α + 2ε`.
    pub mvi_point: Rational,
    /// `min f = φ_ε(2ε) = −ε⁴(1 + 16ε⁴)`.
    pub min_value: Rational,
    pub lip_c: u32,
}

impl HiddenInterval {
    pub fn field(&self, x: &Rational) -> Rational {
        hidden_interval_field(&self.eps, &self.alpha, x)
    }

    /// `f(x) = φ_ε(x − α)` inside the window, `0` elsewhere.
    pub fn value(&self, x: &Rational) -> Rational {
        let y = Rational::from(x - &self.alpha);
        if y > self.eps && y < Rational::from(&self.eps * 3u32) {
            phi(&self.eps, &y)
        } else {
            Rational::new()
        }
    }
}

fn hidden_interval_field(eps: &Rational, alpha: &Rational, x: &Rational) -> Rational {
    let y = Rational::from(x - alpha);
    if y > *eps && y < Rational::from(eps * 3u32) {
        phi_prime(eps, &y)
    } else {
        Rational::new()
    }
}

pub fn make_hidden_interval(eps: &Rational, alpha: &Rational) -> Result<HiddenInterval> {
    if *eps <= 0 || *eps >= Rational::from((1, 6)) {
        return Err(MintyError::ParameterOutOfRange("need 0 < ε < 1/6".into()));
    }
    let hi = Rational::from(1) - Rational::from(eps * 3u32);
    if *alpha < Rational::from(-eps) || *alpha > hi {
        return Err(MintyError::ParameterOutOfRange("need α ∈ [−ε, 1 − 3ε]".into()));
    }
    let e2 = Rational::from(eps.square_ref());
    let lipschitz = Rational::from(&e2 * HIDDEN_INTERVAL_LIP_C);
    let bound = Rational::from(&e2 * eps) * 2u32;
    let body: Arc<dyn ConvexBody> = Arc::new(BoxBody::new(vec![Rational::new()], vec![Rational::from(1)])?);
    let (e, a) = (eps.clone(), alpha.clone());
    let mvi = Rational::from(alpha + Rational::from(eps * 2u32));
    let problem = ViProblem::new(
        "hidden interval",
        body,
        move |x: &[Rational]| Ok(vec![hidden_interval_field(&e, &a, &x[0])]),
        lipschitz,
        bound,
    )
    .with_known_mvi(vec![mvi.clone()]);
    let e4 = Rational::from(e2.square_ref());
    let min_value = -Rational::from(&e4 * &(Rational::from(&e4 * 16u32) + 1u32));
    Ok(HiddenInterval { eps: eps.clone(), alpha: alpha.clone(), problem, mvi_point: mvi, min_value, lip_c: HIDDEN_INTERVAL_LIP_C })
}

/// `F(x) = Mx + q` over a body with `L = ‖M‖₂` and `B = ‖M‖₂R + ‖q‖`, both rounded up.
pub fn affine_problem(name: impl Into<String>, body: Arc<dyn ConvexBody>, m: Matrix, q: Vector) -> Result<ViProblem> {
    let d = body.dim();
    if m.len() != d || m.iter().any(|r| r.len() != d) || q.len() != d {
        return Err(MintyError::ParameterOutOfRange("affine field dimensions do not match the body".into()));
    }
    let floor = Rational::from((1, 1u32 << 20));
    let norm = spectral_norm_upper(&m).max(floor.clone());
    let bound = (Rational::from(&norm * &body.outer_radius()) + sqrt_upper(&norm2(&q), 64)).max(floor);
    Ok(ViProblem::new(name, body, move |x: &[Rational]| Ok(crate::linalg::add(&mat_vec(&m, x), &q)), norm, bound))
}

/// Monotone affine instance with a planted zero of the field.
#[derive(Clone, Debug)]
pub struct AffineInstance {
    pub m: Matrix,
    pub q: Vector,
    pub x_star: Vector,
    pub problem: ViProblem,
}

/// `M = GᵀG/k + S − Sᵀ` with small integer `G, S` on `[−1, 1]^d`, and `q = −Mx*` for a
/// random interior `x*`, which is then both an SVI and an MVI point.
pub fn random_monotone_affine(d: usize, seed: u64) -> Result<AffineInstance> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: i64, hi: i64, den: u64| Rational::from((rng.gen_range(lo..=hi), den));
    let g: Matrix = (0..d).map(|_| (0..d).map(|_| draw(-2, 2, 1)).collect()).collect();
    let s: Matrix = (0..d).map(|_| (0..d).map(|_| draw(-2, 2, 1)).collect()).collect();
    let x_star: Vector = (0..d).map(|_| draw(-7, 7, 8)).collect();
    let k = Rational::from(d as u32);
    let mut m = vec![vec![Rational::new(); d]; d];
    for i in 0..d {
        for j in 0..d {
            let gg = (0..d).fold(Rational::new(), |acc, r| acc + Rational::from(&g[r][i] * &g[r][j]));
            m[i][j] = gg / &k + &s[i][j] - &s[j][i];
        }
        m[i][i] += Rational::from((1, 4));
    }
    let q: Vector = mat_vec(&m, &x_star).into_iter().map(|v| -v).collect();
    let body: Arc<dyn ConvexBody> = Arc::new(BoxBody::symmetric(d, Rational::from(1)));
    let problem = affine_problem(format!("monotone affine d={d} seed={seed}"), body, m.clone(), q.clone())?
        .with_known_mvi(x_star.clone());
    Ok(AffineInstance { m, q, x_star, problem })
}

/// `F(x, y) = (2 + y)(−y, x)` on `[−1, 1]²`.
#[derive(Clone, Debug)]
pub struct CollapseField {
    pub problem: ViProblem,
    pub minty_point: Vector,
    /// `(weight, point)` of the exact EVI `¾δ_{(0,−1)} + ¼δ_{(0,1)}`.
    pub evi: Vec<(Rational, Vector)>,
    pub claims: Vec<String>,
}

pub fn collapse_field(x: &[Rational]) -> Vector {
    let k = Rational::from(&x[1] + 2u32);
    vec![Rational::from(-&x[1]) * &k, Rational::from(&x[0] * &k)]
}

pub fn make_collapse_field() -> CollapseField {
    let body: Arc<dyn ConvexBody> = Arc::new(BoxBody::symmetric(2, Rational::from(1)));
    // Jacobian [[0, −2 − 2y], [2 + y, x]] has spectral norm at most 5; |F| ≤ 3√2
    let bound = sqrt_upper(&Rational::from(18), 64);
    let problem = ViProblem::new("equilibrium collapse", body, |x: &[Rational]| Ok(collapse_field(x)), Rational::from(5), bound)
        .with_known_mvi(vec![Rational::new(), Rational::new()]);
    let q = |n: i64| Rational::from(n);
    CollapseField {
        problem,
        minty_point: vec![q(0), q(0)],
        evi: vec![(Rational::from((3, 4)), vec![q(0), q(-1)]), (Rational::from((1, 4)), vec![q(0), q(1)])],
        claims: vec![
            "(0, 0) is the unique Minty point".into(),
            "the mixture is an exact EVI solution".into(),
            "its mean (0, −1/2) has SVI gap 3/4".into(),
            "no support point is an SVI solution".into(),
        ],
    }
}

/// `f_c(x) = −(max{1 − ‖x − c‖², 0})²` on `[−1, 1]^d` with its gradient as the field.
#[derive(Clone, Debug)]
pub struct HiddenOrthant {
    pub c: Vec<i8>,
    pub problem: ViProblem,
}

impl HiddenOrthant {
    fn center(&self) -> Vector {
        self.c.iter().map(|&s| Rational::from(s)).collect()
    }

    pub fn value(&self, x: &[Rational]) -> Rational {
        let m = Rational::from(1) - norm2(&sub(x, &self.center()));
        if m > 0 {
            -m.square()
        } else {
            Rational::new()
        }
    }

    pub fn gradient(&self, x: &[Rational]) -> Vector {
        orthant_gradient(&self.center(), x)
    }
}

fn orthant_gradient(c: &[Rational], x: &[Rational]) -> Vector {
    let diff = sub(x, c);
    let m = Rational::from(1) - norm2(&diff);
    if m > 0 {
        scale(&diff, &(m * 4u32))
    } else {
        vec![Rational::new(); x.len()]
    }
}

pub fn make_hidden_orthant(c: &[i8]) -> Result<HiddenOrthant> {
    if c.is_empty() || c.iter().any(|s| s.abs() != 1) {
        return Err(MintyError::ParameterOutOfRange("sign vector must have ±1 entries".into()));
    }
    let center: Vector = c.iter().map(|&s| Rational::from(s)).collect();
    let body: Arc<dyn ConvexBody> = Arc::new(BoxBody::symmetric(c.len(), Rational::from(1)));
    // Hessian eigenvalues 4(1 − r²) and 4 − 12r² lie in [−8, 4]; ‖∇f‖ = 4r(1 − r²) ≤ 8/(3√3)
    let problem = ViProblem::new(
        "hidden orthant",
        body,
        move |x: &[Rational]| Ok(orthant_gradient(&center, x)),
        Rational::from(8),
        Rational::from(2),
    )
    .with_known_mvi(c.iter().map(|&s| Rational::from(s)).collect());
    Ok(HiddenOrthant { c: c.to_vec(), problem })
}

/// `F(x) = x⟨x, Ax⟩` on `[0, 1]^d`; `0` is an MVI point iff `A` is copositive.
#[derive(Clone, Debug)]
pub struct CopositiveField {
    pub a: Matrix,
    pub problem: ViProblem,
}

impl CopositiveField {
    /// `⟨x, Ax⟩ < 0` at a nonnegative `x`, refuting the Minty inequality at `0`.
    pub fn refutes_zero(&self, x: &[Rational]) -> bool {
        x.iter().all(|v| *v >= 0) && dot(x, &mat_vec(&self.a, x)) < 0
    }
}

pub fn make_copositive_field(a: Matrix) -> Result<CopositiveField> {
    let d = a.len();
    if d == 0 || a.iter().any(|r| r.len() != d) || (0..d).any(|i| (0..i).any(|j| a[i][j] != a[j][i])) {
        return Err(MintyError::ParameterOutOfRange("need a symmetric square matrix".into()));
    }
    let norm = spectral_norm_upper(&a).max(Rational::from((1, 1u32 << 20)));
    let dd = Rational::from(d as u32);
    let lipschitz = Rational::from(&norm * &dd) * 3u32;
    let bound = Rational::from(&norm * &dd) * sqrt_upper(&dd, 64);
    let body: Arc<dyn ConvexBody> = Arc::new(BoxBody::new(vec![Rational::new(); d], vec![Rational::from(1); d])?);
    let m = a.clone();
    let problem = ViProblem::new(
        "copositive",
        body,
        move |x: &[Rational]| Ok(scale(x, &dot(x, &mat_vec(&m, x)))),
        lipschitz,
        bound,
    );
    Ok(CopositiveField { a, problem })
}

/// Literal `x_i` or its negation `1 − x_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    fn holds(&self, x: &[bool]) -> bool {
        x[self.var] != self.negated
    }

    /// `(σ, τ)` with `ℓ(x) = σ + τ x_i`.
    fn affine(&self) -> (i64, i64) {
        if self.negated {
            (1, -1)
        } else {
            (0, 1)
        }
    }
}

pub type Clause = [Literal; 2];

/// Clauses as signed one-based variable indices, `[1, -2]` for `x₁ ∨ ¬x₂`.
pub fn parse_clauses(raw: &[Vec<i64>], n: usize) -> Result<Vec<Clause>> {
    raw.iter()
        .enumerate()
        .map(|(j, c)| {
            if c.len() != 2 {
                return Err(MintyError::MalformedClause(format!("clause {} has {} literals", j + 1, c.len())));
            }
            let lit = |v: i64| -> Result<Literal> {
                if v == 0 || v.unsigned_abs() as usize > n {
                    return Err(MintyError::MalformedClause(format!("clause {}: literal {v} out of range", j + 1)));
                }
                Ok(Literal { var: v.unsigned_abs() as usize - 1, negated: v < 0 })
            };
            Ok([lit(c[0])?, lit(c[1])?])
        })
        .collect()
}

/// Bilinear hardness instance from a 2-SAT formula and a target `v`.
#[derive(Clone, Debug)]
pub struct BilinearHardness {
    pub clauses: Vec<Clause>,
    pub vars: usize,
    pub v: Rational,
    /// `f(c, x) = (1/m) Σ_j ((1 − c_j)ℓ_{j1}(x) + c_j ℓ_{j2}(x))` on `[0,1]^m × [0,1]^n`.
    pub f: BilinearPayoff,
    /// Largest satisfiable fraction, by enumeration when `n ≤ 20`.
    pub max_fraction: Option<Rational>,
}

pub const BRUTE_FORCE_VARS: usize = 20;

pub fn make_bilinear_hardness(clauses: Vec<Clause>, vars: usize, v: Rational) -> Result<BilinearHardness> {
    if clauses.is_empty() {
        return Err(MintyError::MalformedClause("formula has no clauses".into()));
    }
    if let Some(bad) = clauses.iter().flatten().find(|l| l.var >= vars) {
        return Err(MintyError::MalformedClause(format!("variable {} out of range", bad.var + 1)));
    }
    let m = clauses.len();
    let inv = Rational::from((1, m as u64));
    let mut f = BilinearPayoff::zero(m, vars);
    for (j, [l1, l2]) in clauses.iter().enumerate() {
        let ((s1, t1), (s2, t2)) = (l1.affine(), l2.affine());
        // ℓ₁ + c_j(ℓ₂ − ℓ₁)
        f.k += Rational::from(&inv * s1);
        f.b2[l1.var] += Rational::from(&inv * t1);
        f.b1[j] += Rational::from(&inv * (s2 - s1));
        f.a[j][l2.var] += Rational::from(&inv * t2);
        f.a[j][l1.var] -= Rational::from(&inv * t1);
    }
    let max_fraction = (vars <= BRUTE_FORCE_VARS).then(|| {
        let best = (0u64..1 << vars)
            .map(|mask| {
                let x: Vec<bool> = (0..vars).map(|i| mask >> i & 1 == 1).collect();
                clauses.iter().filter(|[a, b]| a.holds(&x) || b.holds(&x)).count()
            })
            .max()
            .unwrap_or(0);
        Rational::from((best as u64, m as u64))
    });
    Ok(BilinearHardness { clauses, vars, v, f, max_fraction })
}

impl BilinearHardness {
    pub fn m(&self) -> usize {
        self.clauses.len()
    }

    /// `max f − v` when the maximum is known.
    pub fn eps_c(&self) -> Option<Rational> {
        self.max_fraction.as_ref().map(|mf| Rational::from(mf - &self.v))
    }

    /// `{(y, s) : 0 ≤ y ≤ s·1, s ≤ 1}`.
    pub fn cone_box(k: usize) -> Result<HPolytopeBody> {
        let d = k + 1;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..k {
            let mut lo = vec![Rational::new(); d];
            lo[i] = Rational::from(-1);
            a.push(lo);
            b.push(Rational::new());
            let mut hi = vec![Rational::new(); d];
            hi[i] = Rational::from(1);
            hi[k] = Rational::from(-1);
            a.push(hi);
            b.push(Rational::new());
        }
        let mut top = vec![Rational::new(); d];
        top[k] = Rational::from(1);
        a.push(top);
        b.push(Rational::from(1));
        let mut bottom = vec![Rational::new(); d];
        bottom[k] = Rational::from(-1);
        a.push(bottom);
        b.push(Rational::new());
        HPolytopeBody::new(a, b)
    }

    /// Homogenized map `f̂((c, s), (x, t)) = (1/m) Σ_j ((s − c_j)ℓ̂_{j1} + c_j ℓ̂_{j2})`, with `ℓ̂ = σt + τx_i`.
    pub fn homogenized(&self) -> BilinearPayoff {
        let (m, n) = (self.m(), self.vars);
        let inv = Rational::from((1, m as u64));
        let mut f = BilinearPayoff::zero(m + 1, n + 1);
        for (j, [l1, l2]) in self.clauses.iter().enumerate() {
            let ((s1, t1), (s2, t2)) = (l1.affine(), l2.affine());
            f.a[m][n] += Rational::from(&inv * s1);
            f.a[m][l1.var] += Rational::from(&inv * t1);
            f.a[j][n] += Rational::from(&inv * (s2 - s1));
            f.a[j][l2.var] += Rational::from(&inv * t2);
            f.a[j][l1.var] -= Rational::from(&inv * t1);
        }
        f
    }

    /// Two-player game: `u₁ = f̂ + (1 − s)v − 2(1 − t)s`, `u₂ = 0`.
    pub fn two_player_game(&self) -> Result<ConcaveGame2P> {
        let (m, n) = (self.m(), self.vars);
        let mut u1 = self.homogenized();
        u1.a[m][n] += Rational::from(2);
        u1.b1[m] -= Rational::from(&self.v + 2u32);
        u1.k = self.v.clone();
        let u2 = BilinearPayoff::zero(m + 1, n + 1);
        ConcaveGame2P::bilinear(
            "bilinear hardness (two-player)",
            Arc::new(Self::cone_box(m)?),
            Arc::new(Self::cone_box(n)?),
            u1,
            u2,
        )
    }

    /// `f(c, x)·st + (1 − s)v − 2(1 − t)s` at 0/1 values.
    pub fn player_s_utility(&self, c: &[Rational], x: &[Rational], s: &Rational, t: &Rational) -> Rational {
        let fv = self.f.value(c, x);
        let one_s = Rational::from(1) - s;
        let one_t = Rational::from(1) - t;
        fv * s * t + one_s * &self.v - one_t * s * 2u32
    }

    /// `(m + n + 2)`-player game with two actions each (action `k` ↔ value `k`); only player `s` has payoffs.
    pub fn multiplayer_game(&self) -> NormalFormGame {
        let (m, n) = (self.m(), self.vars);
        let inst = self.clone();
        let players = m + n + 2;
        let bound = Rational::from(self.v.clone().abs() + 2u32);
        NormalFormGame::succinct(
            "bilinear hardness (multiplayer)",
            vec![2; players],
            Arc::new(move |a: &[usize]| {
                let val = |k: usize| Rational::from(a[k] as u32);
                let c: Vector = (0..m).map(val).collect();
                let x: Vector = (m..m + n).map(val).collect();
                let mut u = vec![Rational::new(); players];
                u[m + n] = inst.player_s_utility(&c, &x, &val(m + n), &val(m + n + 1));
                Ok(u)
            }),
            bound,
        )
    }
}

/// Per-step record of the adversarial run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NooptRow {
    pub step: usize,
    pub center: [f64; 2],
    pub direction: [f64; 2],
    pub center_norm: f64,
    pub svi_gap: f64,
    pub short_axis_log10: f64,
    pub long_axis_log10: f64,
    /// `|a_x^{(t+1)} ∓ 1/8|` after the step.
    pub steer_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NooptReport {
    pub bits: u32,
    pub requested_iters: usize,
    pub iterations: usize,
    /// The cut halfspaces intersected with `X` still contain a point.
    pub feasible_region_nonempty: bool,
    /// The final center itself lies in that region.
    pub center_in_region: bool,
    pub min_svi_gap: f64,
    pub max_center_norm: f64,
    pub max_lipschitz_ratio: f64,
    pub min_short_axis_log10: f64,
    pub duplicate_queries: bool,
    pub max_steer_error: f64,
    pub max_direction_norm_error: f64,
    pub precision_failure: Option<String>,
    pub rows: Vec<NooptRow>,
}

impl NooptReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,center_x,center_y,dir_x,dir_y,center_norm,svi_gap,short_axis_log10,long_axis_log10,steer_error\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e}",
                r.step,
                r.center[0],
                r.center[1],
                r.direction[0],
                r.direction[1],
                r.center_norm,
                r.svi_gap,
                r.short_axis_log10,
                r.long_axis_log10,
                r.steer_error
            );
        }
        s
    }
}

/// Unit direction `((1 − u²)/(1 + u²), ±2u/(1 + u²))`, exactly of norm one.
fn rational_unit(u: &Rational, up: bool) -> Vector {
    let u2 = Rational::from(u.square_ref());
    let den = Rational::from(&u2 + 1u32);
    let x = (Rational::from(1) - &u2) / &den;
    let y = Rational::from(u * 2u32) / den;
    vec![x, if up { y } else { -y }]
}

/// Direction with the requested sign of the `y` component whose central cut moves the
/// center's `x` coordinate to `target`, by bisection on the half-angle tangent.
pub fn adversarial_direction(e: &AnyEllipsoid, target: &Rational, up: bool, bits: u32) -> Result<(Vector, AnyEllipsoid)> {
    // s ∈ (0, 1), u = s/(1 − s): s → 0 gives (1, 0), s → 1 gives (−1, 0)
    let next_x = |s: &Rational| -> Result<(Rational, Vector, AnyEllipsoid)> {
        let u = Rational::from(s / &(Rational::from(1) - s));
        let c = rational_unit(&u, up);
        let n = e.step_classic(&c)?;
        Ok((n.center()[0].clone(), c, n))
    };
    let mut lo = Rational::from((1, 1u64 << 40));
    let mut hi = Rational::from(1) - &lo;
    let (x_lo, _, _) = next_x(&lo)?;
    let increasing = x_lo < *target;
    let mut best = next_x(&Rational::from((1, 2)))?;
    for _ in 0..bits + 8 {
        let mid = truncate(&(Rational::from(&lo + &hi) / 2u32), bits + 48);
        let cand = next_x(&mid)?;
        let below = cand.0 < *target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if Rational::from(&cand.0 - target).abs() <= Rational::from(&best.0 - target).abs() {
            best = cand;
        }
        if Rational::from(&hi - &lo) < Rational::from(1) >> (bits + 40) {
            break;
        }
    }
    Ok((best.1, best.2))
}

/// Ellipsoid without extra-gradient on `[−1, 1]²` from `B_{√2}(0)` against the alternating ±1/8 oracle.
pub fn run_noopt_experiment(precision_bits: u32, max_iters: usize) -> Result<NooptReport> {
    if precision_bits < 128 {
        return Err(MintyError::ParameterOutOfRange("noopt experiment needs at least 128 bits".into()));
    }
    let mut e = AnyEllipsoid::ball(ArithMode::Float, 2, &Rational::from(2), precision_bits);
    let eighth = Rational::from((1, 8));
    let mut centers: Vec<Vector> = Vec::new();
    let mut dirs: Vec<Vector> = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicate = false;
    let mut failure = None;
    let mut min_short = f64::INFINITY;
    for t in 0..max_iters {
        let a = e.center();
        if !seen.insert(a.clone()) {
            duplicate = true;
        }
        let up = t % 2 == 0;
        let target = if up { eighth.clone() } else { -eighth.clone() };
        let (c, next) = match adversarial_direction(&e, &target, up, precision_bits) {
            Ok(v) => v,
            Err(err) => {
                failure = Some(err.to_string());
                break;
            }
        };
        let Some(summary) = next.summary() else {
            failure = Some(MintyError::PrecisionExhausted { step: t + 1, bits: precision_bits }.to_string());
            break;
        };
        if !next.check_norm_bounds(&Rational::from(2)) {
            failure = Some(MintyError::PrecisionExhausted { step: t + 1, bits: precision_bits }.to_string());
            break;
        }
        // gap = ⟨c, a⟩ + ‖c‖₁ over the square
        let gap = dot(&c, &a) + c[0].clone().abs() + c[1].clone().abs();
        let na = norm2(&a).to_f64().sqrt();
        let steer = Rational::from(&next.center()[0] - &target).abs().to_f64();
        let short = summary.min_axis_log2 * std::f64::consts::LOG10_2;
        min_short = min_short.min(short);
        rows.push(NooptRow {
            step: t,
            center: [a[0].to_f64(), a[1].to_f64()],
            direction: [c[0].to_f64(), c[1].to_f64()],
            center_norm: na,
            svi_gap: gap.to_f64(),
            short_axis_log10: short,
            long_axis_log10: summary.max_axis_log2 * std::f64::consts::LOG10_2,
            steer_error: steer,
        });
        centers.push(a);
        dirs.push(c);
        e = next;
    }
    let last = e.center();
    let center_in_region = last.iter().all(|v| v.clone().abs() <= 1)
        && centers.iter().zip(&dirs).all(|(a, c)| dot(c, &sub(&last, a)) <= 0);
    let feasible = center_in_region || region_nonempty(&centers, &dirs);
    let prec = precision_bits + 64;
    let mut max_ratio = 0.0f64;
    for s in 0..centers.len() {
        for t in s + 1..centers.len() {
            let dx = norm2(&sub(&centers[s], &centers[t]));
            if *dx.numer() == 0 {
                continue;
            }
            let df = norm2(&sub(&dirs[s], &dirs[t]));
            let r = Float::with_val(prec, &df) / Float::with_val(prec, &dx);
            max_ratio = max_ratio.max(r.sqrt().to_f64());
        }
    }
    let max_dir_err = dirs.iter().map(|c| (norm2(c) - 1u32).abs().to_f64()).fold(0.0, f64::max);
    Ok(NooptReport {
        bits: precision_bits,
        requested_iters: max_iters,
        iterations: rows.len(),
        feasible_region_nonempty: feasible,
        center_in_region,
        min_svi_gap: rows.iter().map(|r| r.svi_gap).fold(f64::INFINITY, f64::min),
        max_center_norm: rows.iter().map(|r| r.center_norm).fold(0.0, f64::max),
        max_lipschitz_ratio: max_ratio,
        min_short_axis_log10: min_short,
        duplicate_queries: duplicate,
        max_steer_error: rows.iter().map(|r| r.steer_error).fold(0.0, f64::max),
        max_direction_norm_error: max_dir_err,
        precision_failure: failure,
        rows,
    })
}

/// Exact feasibility of `[−1, 1]² ∩ {x : ⟨c_t, x − a_t⟩ ≤ 0}`.
fn region_nonempty(centers: &[Vector], dirs: &[Vector]) -> bool {
    // shift to y = x + 1 ≥ 0
    let mut lp = Lp::new(vec![Rational::new(), Rational::new()]);
    for i in 0..2 {
        let mut row = vec![Rational::new(); 2];
        row[i] = Rational::from(1);
        lp.push(row, Cmp::Le, Rational::from(2));
    }
    for (a, c) in centers.iter().zip(dirs) {
        let rhs = dot(c, a) + &c[0] + &c[1];
        lp.push(c.clone(), Cmp::Le, rhs);
    }
    matches!(lp.solve(), LpOutcome::Optimal { .. })
}
