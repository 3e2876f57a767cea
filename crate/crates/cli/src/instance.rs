//! Instance files and named generators.

use std::collections::BTreeMap;
use std::sync::Arc;

use mintyvi::error::{MintyError, Result};
use mintyvi::games::{
    cyclic_polymatrix, game_operator, matching_pennies, prisoners_dilemma, BilinearPayoff, ConcaveGame2P,
    NormalFormGame,
};
use mintyvi::geometry::{body_from_descriptor, BodyDescriptor, ConvexBody};
use mintyvi::instances::{
    affine_problem, make_bilinear_hardness, make_collapse_field, make_copositive_field, make_hidden_interval,
    make_hidden_orthant, parse_clauses, random_monotone_affine,
};
use mintyvi::linalg::{Matrix, Vector};
use mintyvi::problem::ViProblem;
use mintyvi::quasar::{builtin_objective, SmoothViSpec};
use mintyvi::scalar::{fmt_rational, parse_rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::external::{point_line, single, ChildOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instance {
    /// `F(x) = Mx + q`.
    Affine {
        body: BodyDescriptor,
        matrix: Vec<Vec<String>>,
        shift: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        known_mvi: Option<Vec<String>>,
    },
    Collapse,
    HiddenInterval { eps: String, alpha: String },
    HiddenOrthant { signs: Vec<i8> },
    Copositive { matrix: Vec<Vec<String>> },
    /// Field served by a child process: point in, `F(x)` out.
    External { body: BodyDescriptor, command: Vec<String>, lipschitz: String, bound: String },
    NormalForm { game: GameDesc },
    Concave { game: ConcaveDesc },
    /// Smooth VI for the quasar solver; `objective` is `builtin:<name>` or `external`.
    Quasar {
        body: BodyDescriptor,
        lambda: String,
        objective: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum GameDesc {
    /// One flattened tensor per player, last player's action varying fastest.
    Explicit { actions: Vec<usize>, tensors: Vec<Vec<String>> },
    Bimatrix { a: Vec<Vec<String>>, b: Vec<Vec<String>> },
    MatchingPennies,
    PrisonersDilemma,
    CyclicPolymatrix { sigma: Vec<Vec<String>> },
    /// Multiplayer game from a 2-SAT formula (signed one-based literals).
    Hardness { clauses: Vec<Vec<i64>>, vars: usize, v: String },
    /// Profile (action indices) in, one utility per player out.
    External { actions: Vec<usize>, command: Vec<String>, bound: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffDesc {
    pub a: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ConcaveDesc {
    Bilinear { body1: BodyDescriptor, body2: BodyDescriptor, payoff1: PayoffDesc, payoff2: PayoffDesc },
    /// `u₁ = x₁ᵀMx₂ = −u₂`.
    ZeroSum { body1: BodyDescriptor, body2: BodyDescriptor, matrix: Vec<Vec<String>> },
    Hardness { clauses: Vec<Vec<i64>>, vars: usize, v: String },
    /// `x₁ | x₂` in, `∇₁u₁ | ∇₂u₂` out.
    External { body1: BodyDescriptor, body2: BodyDescriptor, command: Vec<String>, lipschitz: String, bound: String },
}

fn q(s: &str) -> Result<Rational> {
    parse_rational(s).map_err(Into::into)
}

fn vec_of(v: &[String]) -> Result<Vector> {
    v.iter().map(|s| q(s)).collect()
}

fn mat_of(m: &[Vec<String>]) -> Result<Matrix> {
    m.iter().map(|r| vec_of(r)).collect()
}

fn strs(v: &[Rational]) -> Vec<String> {
    v.iter().map(fmt_rational).collect()
}

fn mat_strs(m: &Matrix) -> Vec<Vec<String>> {
    m.iter().map(|r| strs(r)).collect()
}

fn unit_box(d: usize, lo: i64) -> BodyDescriptor {
    BodyDescriptor::Box { lower: vec![lo.to_string(); d], upper: vec!["1".into(); d] }
}

impl PayoffDesc {
    fn build(&self, d1: usize, d2: usize) -> Result<BilinearPayoff> {
        let mut p = BilinearPayoff::new(mat_of(&self.a)?);
        if p.a.len() != d1 || p.a.iter().any(|r| r.len() != d2) {
            return Err(MintyError::Parse(format!("payoff matrix must be {d1}×{d2}")));
        }
        if let Some(b) = &self.b1 {
            p.b1 = vec_of(b)?;
        }
        if let Some(b) = &self.b2 {
            p.b2 = vec_of(b)?;
        }
        if let Some(k) = &self.k {
            p.k = q(k)?;
        }
        if p.b1.len() != d1 || p.b2.len() != d2 {
            return Err(MintyError::Parse("payoff vectors do not match the bodies".into()));
        }
        Ok(p)
    }
}

impl GameDesc {
    pub fn build(&self) -> Result<NormalFormGame> {
        match self {
            GameDesc::Explicit { actions, tensors } => {
                NormalFormGame::explicit("explicit", actions.clone(), tensors.iter().map(|t| vec_of(t)).collect::<Result<_>>()?)
            }
            GameDesc::Bimatrix { a, b } => NormalFormGame::bimatrix("bimatrix", &mat_of(a)?, &mat_of(b)?),
            GameDesc::MatchingPennies => Ok(matching_pennies()),
            GameDesc::PrisonersDilemma => Ok(prisoners_dilemma()),
            GameDesc::CyclicPolymatrix { sigma } => cyclic_polymatrix(&mat_of(sigma)?),
            GameDesc::Hardness { clauses, vars, v } => {
                Ok(make_bilinear_hardness(parse_clauses(clauses, *vars)?, *vars, q(v)?)?.multiplayer_game())
            }
            GameDesc::External { actions, command, bound } => {
                let oracle = ChildOracle::spawn(command)?;
                let n = actions.len();
                let utility = Arc::new(move |a: &[usize]| -> Result<Vector> {
                    let line = a.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
                    single(oracle.ask(&line)?, n)
                });
                Ok(NormalFormGame::succinct("external game", actions.clone(), utility, q(bound)?))
            }
        }
    }
}

impl ConcaveDesc {
    pub fn build(&self) -> Result<ConcaveGame2P> {
        match self {
            ConcaveDesc::Bilinear { body1, body2, payoff1, payoff2 } => {
                let (x1, x2) = (body_from_descriptor(body1)?, body_from_descriptor(body2)?);
                let (d1, d2) = (x1.dim(), x2.dim());
                ConcaveGame2P::bilinear("bilinear", x1, x2, payoff1.build(d1, d2)?, payoff2.build(d1, d2)?)
            }
            ConcaveDesc::ZeroSum { body1, body2, matrix } => {
                ConcaveGame2P::zero_sum("zero-sum", body_from_descriptor(body1)?, body_from_descriptor(body2)?, mat_of(matrix)?)
            }
            ConcaveDesc::Hardness { clauses, vars, v } => {
                make_bilinear_hardness(parse_clauses(clauses, *vars)?, *vars, q(v)?)?.two_player_game()
            }
            ConcaveDesc::External { body1, body2, command, lipschitz, bound } => {
                let bodies: [Arc<dyn ConvexBody>; 2] = [body_from_descriptor(body1)?, body_from_descriptor(body2)?];
                let dims = [bodies[0].dim(), bodies[1].dim()];
                let oracle = ChildOracle::spawn(command)?;
                let grad = |i: usize| {
                    let o = oracle.clone();
                    Arc::new(move |a: &[Rational], b: &[Rational]| -> Result<Vector> {
                        let mut groups = o.ask(&format!("{} | {}", point_line(a), point_line(b)))?;
                        if groups.len() != 2 || groups[0].len() != dims[0] || groups[1].len() != dims[1] {
                            return Err(MintyError::OracleFailure("gradient reply must be `g1 | g2`".into()));
                        }
                        Ok(groups.swap_remove(i))
                    }) as mintyvi::games::PairGradFn
                };
                Ok(ConcaveGame2P {
                    name: "external concave game".into(),
                    bodies,
                    grads: [grad(0), grad(1)],
                    values: None,
                    bound: q(bound)?,
                    lipschitz: q(lipschitz)?,
                })
            }
        }
    }
}

impl Instance {
    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Affine { .. } => "affine",
            Instance::Collapse => "collapse",
            Instance::HiddenInterval { .. } => "hidden_interval",
            Instance::HiddenOrthant { .. } => "hidden_orthant",
            Instance::Copositive { .. } => "copositive",
            Instance::External { .. } => "external",
            Instance::NormalForm { .. } => "normal_form",
            Instance::Concave { .. } => "concave",
            Instance::Quasar { .. } => "quasar",
        }
    }

    /// The VI an instance poses; games map to their operators.
    pub fn vi(&self) -> Result<ViProblem> {
        Ok(match self {
            Instance::Affine { body, matrix, shift, known_mvi } => {
                let p = affine_problem("affine", body_from_descriptor(body)?, mat_of(matrix)?, vec_of(shift)?)?;
                match known_mvi {
                    Some(x) => p.with_known_mvi(vec_of(x)?),
                    None => p,
                }
            }
            Instance::Collapse => make_collapse_field().problem,
            Instance::HiddenInterval { eps, alpha } => make_hidden_interval(&q(eps)?, &q(alpha)?)?.problem,
            Instance::HiddenOrthant { signs } => make_hidden_orthant(signs)?.problem,
            Instance::Copositive { matrix } => make_copositive_field(mat_of(matrix)?)?.problem,
            Instance::External { body, command, lipschitz, bound } => {
                let body = body_from_descriptor(body)?;
                let d = body.dim();
                let oracle = ChildOracle::spawn(command)?;
                ViProblem::new(
                    "external",
                    body,
                    move |x: &[Rational]| single(oracle.ask_point(x)?, d),
                    q(lipschitz)?,
                    q(bound)?,
                )
            }
            Instance::NormalForm { game } => game_operator(&game.build()?)?,
            Instance::Concave { game } => game.build()?.operator()?,
            Instance::Quasar { .. } => {
                return Err(MintyError::Parse("a quasar instance is solved with the `quasar` command".into()))
            }
        })
    }

    pub fn normal_form(&self) -> Result<NormalFormGame> {
        match self {
            Instance::NormalForm { game } => game.build(),
            other => Err(MintyError::Parse(format!("expected a normal_form instance, found {}", other.kind()))),
        }
    }

    pub fn concave(&self) -> Result<ConcaveGame2P> {
        match self {
            Instance::Concave { game } => game.build(),
            other => Err(MintyError::Parse(format!("expected a concave instance, found {}", other.kind()))),
        }
    }

    pub fn quasar(&self) -> Result<SmoothViSpec> {
        let Instance::Quasar { body, lambda, objective, command, bound } = self else {
            return Err(MintyError::Parse(format!("expected a quasar instance, found {}", self.kind())));
        };
        let body = body_from_descriptor(body)?;
        let lambda = q(lambda)?;
        if let Some(name) = objective.strip_prefix("builtin:") {
            return builtin_objective(name, body, lambda);
        }
        if objective != "external" {
            return Err(MintyError::Parse(format!("objective `{objective}` is neither builtin:<name> nor external")));
        }
        let command = command.as_ref().ok_or_else(|| MintyError::Parse("external objective needs `command`".into()))?;
        let bound = q(bound.as_ref().ok_or_else(|| MintyError::Parse("external objective needs `bound`".into()))?)?;
        let d = body.dim();
        let oracle = ChildOracle::spawn(command)?;
        let o2 = oracle.clone();
        // reply: `f | ∇f`
        let reply = move |o: &ChildOracle, x: &[Rational]| -> Result<(Rational, Vector)> {
            let g = o.ask_point(x)?;
            match <[Vec<Rational>; 2]>::try_from(g) {
                Ok([f, grad]) if f.len() == 1 && grad.len() == d => Ok((f[0].clone(), grad)),
                _ => Err(MintyError::OracleFailure("objective reply must be `f | ∇f`".into())),
            }
        };
        SmoothViSpec::quasar_convex(
            "external objective",
            body,
            move |x: &[Rational]| Ok(reply(&oracle, x)?.0),
            move |x: &[Rational]| Ok(reply(&o2, x)?.1),
            bound,
            lambda,
        )
    }
}

/// `name[:key=value,...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl GeneratorSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| MintyError::Parse(format!("generator parameter `{kv}` lacks `=`")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(GeneratorSpec { name: name.trim().to_string(), params })
    }

    fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        self.params
            .get(key)
            .map(|v| v.parse().map_err(|_| MintyError::Parse(format!("`{key}` must be a non-negative integer"))))
            .unwrap_or(Ok(default))
    }

    fn get_q(&self, key: &str, default: &str) -> Result<String> {
        let v = self.params.get(key).map(String::as_str).unwrap_or(default);
        Ok(fmt_rational(&q(v)?))
    }
}

pub const GENERATORS: &[&str] = &[
    "monotone-affine",
    "collapse",
    "hidden-interval",
    "hidden-orthant",
    "copositive",
    "matching-pennies",
    "prisoners-dilemma",
    "cyclic-polymatrix",
    "random-game",
    "zero-sum",
    "hardness",
    "hardness-game",
    "quasar-quadratic",
    "quasar-oscillating",
];

fn random_clauses(rng: &mut ChaCha8Rng, vars: usize, m: usize) -> Vec<Vec<i64>> {
    (0..m)
        .map(|_| {
            (0..2)
                .map(|_| {
                    let v = rng.gen_range(1..=vars as i64);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect()
}

fn small_int_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lim: i64) -> Vec<Vec<String>> {
    (0..r).map(|_| (0..c).map(|_| rng.gen_range(-lim..=lim).to_string()).collect()).collect()
}

/// Builds the instance a generator spec names; randomness comes only from `seed`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match spec.name.as_str() {
        "monotone-affine" => {
            let a = random_monotone_affine(spec.get_usize("d", 2)?, seed)?;
            let d = a.x_star.len();
            Instance::Affine { body: unit_box(d, -1), matrix: mat_strs(&a.m), shift: strs(&a.q), known_mvi: Some(strs(&a.x_star)) }
        }
        "collapse" => Instance::Collapse,
        "hidden-interval" => {
            let eps = q(&spec.get_q("eps", "1/20")?)?;
            let span = Rational::from(1) - Rational::from(&eps * 2u32);
            let alpha = Rational::from(&span * Rational::from((rng.gen_range(0u32..=1000), 1000u32))) - &eps;
            make_hidden_interval(&eps, &alpha)?;
            Instance::HiddenInterval { eps: fmt_rational(&eps), alpha: fmt_rational(&alpha) }
        }
        "hidden-orthant" => {
            let d = spec.get_usize("d", 2)?;
            Instance::HiddenOrthant { signs: (0..d).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect() }
        }
        "copositive" => {
            let d = spec.get_usize("d", 3)?;
            let mut m = vec![vec!["0".to_string(); d]; d];
            for i in 0..d {
                for j in i..d {
                    let v = rng.gen_range(-3i64..=3).to_string();
                    m[i][j] = v.clone();
                    m[j][i] = v;
                }
            }
            Instance::Copositive { matrix: m }
        }
        "matching-pennies" => Instance::NormalForm { game: GameDesc::MatchingPennies },
        "prisoners-dilemma" => Instance::NormalForm { game: GameDesc::PrisonersDilemma },
        "cyclic-polymatrix" => {
            let n = spec.get_usize("n", 3)?;
            let sigma = (0..n).map(|_| (0..2).map(|_| rng.gen_range(1u32..=4).to_string()).collect()).collect();
            Instance::NormalForm { game: GameDesc::CyclicPolymatrix { sigma } }
        }
        "random-game" => {
            let players = spec.get_usize("players", 2)?;
            let k = spec.get_usize("actions", 2)?;
            let total = k.checked_pow(players as u32).ok_or_else(|| MintyError::Parse("game too large".into()))?;
            let tensors = (0..players).map(|_| (0..total).map(|_| rng.gen_range(-3i64..=3).to_string()).collect()).collect();
            Instance::NormalForm { game: GameDesc::Explicit { actions: vec![k; players], tensors } }
        }
        "zero-sum" => {
            let (m, n) = (spec.get_usize("m", 2)?, spec.get_usize("n", 2)?);
            Instance::Concave {
                game: ConcaveDesc::ZeroSum {
                    body1: BodyDescriptor::Simplex { dim: m },
                    body2: BodyDescriptor::Simplex { dim: n },
                    matrix: small_int_matrix(&mut rng, m, n, 3),
                },
            }
        }
        "hardness" | "hardness-game" => {
            let vars = spec.get_usize("vars", 2)?;
            let m = spec.get_usize("clauses", 1)?;
            let v = spec.get_q("v", "0")?;
            let clauses = match spec.params.get("formula") {
                Some(f) => parse_formula(f)?,
                None => random_clauses(&mut rng, vars, m),
            };
            if spec.name == "hardness" {
                Instance::Concave { game: ConcaveDesc::Hardness { clauses, vars, v } }
            } else {
                Instance::NormalForm { game: GameDesc::Hardness { clauses, vars, v } }
            }
        }
        "quasar-quadratic" | "quasar-oscillating" => {
            let d = spec.get_usize("d", if spec.name == "quasar-quadratic" { 2 } else { 1 })?;
            let lambda = spec.get_q("lambda", if spec.name == "quasar-quadratic" { "1" } else { "1/2" })?;
            let name = spec.name.trim_start_matches("quasar-");
            Instance::Quasar { body: unit_box(d, -1), lambda, objective: format!("builtin:{name}"), command: None, bound: None }
        }
        other => {
            return Err(MintyError::Parse(format!("unknown generator `{other}`; known: {}", GENERATORS.join(", "))))
        }
    })
}

/// `1 -2;2 3` → `[[1, -2], [2, 3]]`.
fn parse_formula(s: &str) -> Result<Vec<Vec<i64>>> {
    s.split(';')
        .map(|c| {
            c.split_whitespace()
                .map(|t| t.parse::<i64>().map_err(|_| MintyError::MalformedClause(format!("bad literal `{t}`"))))
                .collect()
        })
        .collect()
}
