//! Expected-VI certificates: evaluation, extraction from exhausted runs, and verification.

use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::error::{MintyError, Result};
use crate::geometry::{AffineChart, ConvexBody};
use crate::linalg::{dot, zeros, Vector};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::problem::ViProblem;
use crate::scalar::from_f64;
use crate::solver::EgRecord;

/// One atom of a finitely supported distribution, with `F` cached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    #[serde(with = "crate::io::rational_str")]
    pub weight: Rational,
    #[serde(with = "crate::io::vec_rational_str")]
    pub point: Vector,
    #[serde(with = "crate::io::vec_rational_str")]
    pub f_value: Vector,
}

/// Distribution `μ` with its verified expected gap; strict when `gap_bound < 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct EviCertificate {
    pub support: Vec<SupportPoint>,
    pub gap_bound: Rational,
    pub gamma_eff: Option<Rational>,
}

/// On-disk certificate layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateJson {
    pub weights: Vec<String>,
    pub points: Vec<Vec<String>>,
    pub f_values: Vec<Vec<String>>,
    pub gap_bound: String,
    pub gamma_eff: Option<String>,
}

impl EviCertificate {
    /// Certificate with `gap_bound` computed by [`evi_gap`].
    pub fn new(body: &dyn ConvexBody, support: Vec<SupportPoint>, gamma_eff: Option<Rational>) -> Result<Self> {
        let mut c = EviCertificate { support, gap_bound: Rational::new(), gamma_eff };
        c.gap_bound = evi_gap(body, &c, &Rational::new())?;
        Ok(c)
    }

    pub fn point_mass(body: &dyn ConvexBody, point: Vector, f_value: Vector) -> Result<Self> {
        Self::new(body, vec![SupportPoint { weight: Rational::from(1), point, f_value }], None)
    }

    pub fn is_strict(&self) -> bool {
        self.gap_bound < 0
    }

    /// `Σ_t w_t F(x_t)`.
    pub fn averaged_field(&self) -> Vector {
        let d = self.support.first().map_or(0, |s| s.f_value.len());
        let mut g = zeros(d);
        for s in &self.support {
            for (gi, fi) in g.iter_mut().zip(&s.f_value) {
                *gi += Rational::from(fi * &s.weight);
            }
        }
        g
    }

    /// `Σ_t w_t x_t`.
    pub fn mean_point(&self) -> Vector {
        let d = self.support.first().map_or(0, |s| s.point.len());
        let mut m = zeros(d);
        for s in &self.support {
            for (mi, xi) in m.iter_mut().zip(&s.point) {
                *mi += Rational::from(xi * &s.weight);
            }
        }
        m
    }

    pub fn weights_sum(&self) -> Rational {
        self.support.iter().fold(Rational::new(), |a, s| a + &s.weight)
    }

    pub fn to_json(&self) -> CertificateJson {
        use crate::scalar::fmt_rational as f;
        CertificateJson {
            weights: self.support.iter().map(|s| f(&s.weight)).collect(),
            points: self.support.iter().map(|s| s.point.iter().map(f).collect()).collect(),
            f_values: self.support.iter().map(|s| s.f_value.iter().map(f).collect()).collect(),
            gap_bound: f(&self.gap_bound),
            gamma_eff: self.gamma_eff.as_ref().map(f),
        }
    }

    pub fn from_json(j: &CertificateJson) -> Result<Self> {
        use crate::scalar::parse_rational as p;
        let n = j.weights.len();
        if j.points.len() != n || j.f_values.len() != n {
            return Err(MintyError::Parse("certificate arrays differ in length".into()));
        }
        let vec = |v: &Vec<String>| -> Result<Vector> { v.iter().map(|s| p(s).map_err(Into::into)).collect() };
        let mut support = Vec::with_capacity(n);
        for i in 0..n {
            support.push(SupportPoint { weight: p(&j.weights[i])?, point: vec(&j.points[i])?, f_value: vec(&j.f_values[i])? });
        }
        Ok(EviCertificate {
            support,
            gap_bound: p(&j.gap_bound)?,
            gamma_eff: j.gamma_eff.as_ref().map(|s| p(s)).transpose()?,
        })
    }

    /// Moves the certificate from chart coordinates to the ambient space, re-evaluating `F` there.
    pub fn to_ambient(&self, chart: &AffineChart, original: &ViProblem) -> Result<Self> {
        let mut support = Vec::with_capacity(self.support.len());
        for s in &self.support {
            let x = chart.to_ambient(&s.point);
            let f = original.eval(&x)?;
            support.push(SupportPoint { weight: s.weight.clone(), point: x, f_value: f });
        }
        Self::new(original.body.as_ref(), support, self.gamma_eff.clone())
    }
}

/// `max_{x′∈X} E_{x∼μ} ⟨F(x), x − x′⟩`; negative means strict.
pub fn evi_gap(body: &dyn ConvexBody, cert: &EviCertificate, delta: &Rational) -> Result<Rational> {
    let sum = cert.weights_sum();
    if sum != 1 || cert.support.iter().any(|s| s.weight < 0) {
        return Err(MintyError::ParameterOutOfRange("certificate weights are not a distribution".into()));
    }
    let g = cert.averaged_field();
    let y = body.linear_min(&g, delta)?;
    let mut inner = Rational::new();
    for s in &cert.support {
        inner += dot(&s.f_value, &s.point) * &s.weight;
    }
    Ok(inner - dot(&g, &y))
}

/// True iff the certificate's recomputed gap is at most `−tol`.
pub fn verify_infeasibility_witness(body: &dyn ConvexBody, cert: &EviCertificate, tol: &Rational) -> Result<bool> {
    let gap = evi_gap(body, cert, &Rational::new())?;
    Ok(gap <= Rational::from(-tol))
}

const MAX_ROUNDS: usize = 400;

/// Solves `max_{μ∈Δ(T)} min_{x∈X} Σ_t μ_t ⟨F_t, x − x_t⟩` by cutting planes on `μ` and
/// returns the best `μ` found together with its exactly verified gap.
///
/// Atoms are `(x_t, F_t)`; `stop_gap` bounds the final master/verified duality gap.
pub fn best_mixture(
    body: &dyn ConvexBody,
    atoms: &[(Vector, Vector)],
    stop_gap: f64,
    target: Option<&Rational>,
) -> Result<EviCertificate> {
    let t = atoms.len();
    if t == 0 {
        return Err(MintyError::ParameterOutOfRange("empty history".into()));
    }
    let zero = Rational::new();
    let base: Vec<f64> = atoms.iter().map(|(x, f)| dot(f, x).to_f64()).collect();
    let cut_row = |y: &Vector| -> Vec<f64> {
        atoms.iter().zip(&base).map(|((_, f), b)| dot(f, y).to_f64() - b).collect()
    };
    let uniform = vec![Rational::from((1, t as u64)); t];
    let mut best = certificate_for(body, atoms, &uniform)?;
    let mut cuts: Vec<Vec<f64>> = vec![cut_row(&body.linear_min(&best.averaged_field(), &zero)?)];
    for (_, f) in atoms.iter().take(3) {
        cuts.push(cut_row(&body.linear_min(f, &zero)?));
    }
    for round in 0..MAX_ROUNDS {
        let mut obj = vec![0.0; t + 1];
        obj[t] = -1.0;
        let mut lp = Lp::new(obj);
        lp.set_free(t);
        for c in &cuts {
            let mut row: Vec<f64> = c.iter().map(|v| -v).collect();
            row.push(1.0);
            lp.push(row, Cmp::Le, 0.0);
        }
        let mut sum = vec![1.0; t];
        sum.push(0.0);
        lp.push(sum, Cmp::Eq, 1.0);
        let (mu, upper) = match lp.solve() {
            LpOutcome::Optimal { x, value } => (x, -value),
            other => return Err(MintyError::OracleFailure(format!("certificate master LP: {other:?}"))),
        };
        let weights = rational_weights(&mu[..t]);
        let cand = certificate_for(body, atoms, &weights)?;
        if cand.gap_bound < best.gap_bound {
            best = cand;
        }
        let lower = -best.gap_bound.to_f64();
        log::debug!("certificate round {round}: master {upper:.4e}, verified {lower:.4e}");
        if upper - lower <= stop_gap || target.is_some_and(|g| best.gap_bound <= Rational::from(-g)) {
            break;
        }
        let y = body.linear_min(&certificate_for_field(atoms, &weights), &zero)?;
        cuts.push(cut_row(&y));
    }
    Ok(best)
}

fn certificate_for_field(atoms: &[(Vector, Vector)], w: &[Rational]) -> Vector {
    let d = atoms[0].1.len();
    let mut g = zeros(d);
    for ((_, f), wi) in atoms.iter().zip(w) {
        if *wi.numer() == 0 {
            continue;
        }
        for (gi, fi) in g.iter_mut().zip(f) {
            *gi += Rational::from(fi * wi);
        }
    }
    g
}

fn certificate_for(body: &dyn ConvexBody, atoms: &[(Vector, Vector)], w: &[Rational]) -> Result<EviCertificate> {
    let support = atoms
        .iter()
        .zip(w)
        .filter(|(_, wi)| *wi.numer() != 0)
        .map(|((x, f), wi)| SupportPoint { weight: wi.clone(), point: x.clone(), f_value: f.clone() })
        .collect();
    EviCertificate::new(body, support, None)
}

/// Snaps LP weights to nonnegative rationals summing to exactly one.
pub fn rational_weights(mu: &[f64]) -> Vec<Rational> {
    let mut w: Vec<Rational> = mu
        .iter()
        .map(|&v| if v > 1e-12 { crate::scalar::truncate(&from_f64(v), 60) } else { Rational::new() })
        .collect();
    let total = w.iter().fold(Rational::new(), |a, v| a + v);
    if *total.numer() == 0 {
        let n = w.len() as u64;
        return vec![Rational::from((1, n)); w.len()];
    }
    for v in w.iter_mut() {
        *v /= &total;
    }
    w
}

/// Strict EVI over the extra-gradient history of an exhausted run.
///
/// Requires the verified gap to be at most `−γ_eff/2`.
pub fn extract_strict_evi(body: &dyn ConvexBody, history: &[EgRecord], gamma_eff: &Rational) -> Result<EviCertificate> {
    let atoms: Vec<(Vector, Vector)> = history.iter().map(|r| (r.tilde.clone(), r.f_tilde.clone())).collect();
    let required = Rational::from(gamma_eff / 2u32);
    let mut cert = best_mixture(body, &atoms, gamma_eff.to_f64() / 8.0, Some(&required))?;
    cert.gamma_eff = Some(gamma_eff.clone());
    if cert.gap_bound > Rational::from(-&required) {
        return Err(MintyError::CertificateShortfall {
            gap: cert.gap_bound.to_f64(),
            required: -required.to_f64(),
            best: Box::new(cert),
        });
    }
    Ok(cert)
}

/// Verdict on the Minty condition.
#[derive(Clone, Debug, PartialEq)]
pub enum MintyDecision {
    MintyHolds,
    StrictEviExists(EviCertificate),
    Undetermined { lower: f64, upper: f64 },
}
