//! Gaussian basis-risk model: a traded asset `dS = S(μ dt + σ dW¹)` and a
//! non-traded factor `dY = b dt + a(ρ dW¹ + √(1−ρ²) dW²)`.
//!
//! For claims `B = g(Y_T)` the unconditional writer price is
//!
//! ```text
//! ν̄_w(B; γ) = ln E^{Q⁰}[exp(γ(1−ρ²)B)] / (γ(1−ρ²)),
//! ```
//!
//! with `Y_T ~ N(y0 + bT − ρaλT, a²T)` under the minimal-entropy measure
//! `Q⁰` and `λ = μ/σ`. Conditional prices are differences of two of these.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::check_gamma;
use crate::quadrature::{GaussianLaw, Quadrature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisRiskModel {
    pub mu: f64,
    pub sigma: f64,
    pub b: f64,
    pub a: f64,
    pub rho: f64,
    pub y0: f64,
    #[serde(alias = "T")]
    pub t: f64,
}

impl BasisRiskModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu, self.sigma, self.b, self.a, self.rho, self.y0, self.t];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidModel(format!("sigma = {} must be positive", self.sigma)));
        }
        if self.a <= 0.0 {
            return Err(Error::InvalidModel(format!("a = {} must be positive", self.a)));
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::InvalidModel(format!("rho = {} must lie in (-1, 1)", self.rho)));
        }
        if self.t <= 0.0 {
            return Err(Error::InvalidModel(format!("T = {} must be positive", self.t)));
        }
        Ok(())
    }

    /// Sharpe ratio `λ = μ/σ`.
    pub fn sharpe(&self) -> f64 {
        self.mu / self.sigma
    }

    /// Unspanned variance fraction `1 − ρ²`.
    pub fn unspanned(&self) -> f64 {
        1.0 - self.rho * self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PayoffSpec {
    Table { y: Vec<f64>, v: Vec<f64> },
    Affine { intercept: f64, slope: f64 },
}

/// Payoff `g(y)`: a piecewise-linear table clamped outside its range, or an
/// affine function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PayoffSpec", into = "PayoffSpec")]
pub struct PayoffFn(PayoffSpec);

impl TryFrom<PayoffSpec> for PayoffFn {
    type Error = Error;

    fn try_from(spec: PayoffSpec) -> Result<Self> {
        match spec {
            PayoffSpec::Table { y, v } => PayoffFn::table(y, v),
            PayoffSpec::Affine { intercept, slope } => PayoffFn::affine(intercept, slope),
        }
    }
}

impl From<PayoffFn> for PayoffSpec {
    fn from(p: PayoffFn) -> Self {
        p.0
    }
}

impl PayoffFn {
    pub fn table(y: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != v.len() {
            return Err(Error::InvalidModel(format!(
                "payoff table needs matching nonempty grids, got {} and {}",
                y.len(),
                v.len()
            )));
        }
        if y.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("payoff table has non-finite entries".into()));
        }
        if y.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("payoff grid must be strictly increasing".into()));
        }
        Ok(PayoffFn(PayoffSpec::Table { y, v }))
    }

    pub fn affine(intercept: f64, slope: f64) -> Result<Self> {
        if !intercept.is_finite() || !slope.is_finite() {
            return Err(Error::InvalidModel("affine payoff has non-finite coefficients".into()));
        }
        Ok(PayoffFn(PayoffSpec::Affine { intercept, slope }))
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::affine(c, 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.0 {
            PayoffSpec::Affine { intercept, slope } => intercept + slope * x,
            PayoffSpec::Table { y, v } => {
                let last = y.len() - 1;
                if x <= y[0] {
                    return v[0];
                }
                if x >= y[last] {
                    return v[last];
                }
                let i = y.partition_point(|&k| k <= x) - 1;
                let w = (x - y[i]) / (y[i + 1] - y[i]);
                v[i] + w * (v[i + 1] - v[i])
            }
        }
    }

    fn knots(&self) -> &[f64] {
        match &self.0 {
            PayoffSpec::Table { y, .. } => y,
            PayoffSpec::Affine { .. } => &[],
        }
    }

    fn slope_at_infinity(&self) -> f64 {
        match &self.0 {
            PayoffSpec::Table { .. } => 0.0,
            PayoffSpec::Affine { slope, .. } => *slope,
        }
    }

    /// `sup g`, infinite for a non-constant affine payoff.
    pub fn sup(&self) -> f64 {
        match &self.0 {
            PayoffSpec::Table { v, .. } => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PayoffSpec::Affine { intercept, slope } => {
                if *slope == 0.0 {
                    *intercept
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn inf(&self) -> f64 {
        match &self.0 {
            PayoffSpec::Table { v, .. } => v.iter().copied().fold(f64::INFINITY, f64::min),
            PayoffSpec::Affine { intercept, slope } => {
                if *slope == 0.0 {
                    *intercept
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `Σ cᵢ gᵢ` as a scalar function with the union of the kinks.
struct Combination<'a> {
    terms: Vec<(f64, &'a PayoffFn)>,
}

impl<'a> Combination<'a> {
    fn new(terms: Vec<(f64, &'a PayoffFn)>) -> Self {
        Combination { terms }
    }

    fn eval(&self, y: f64) -> f64 {
        self.terms.iter().map(|(c, g)| c * g.eval(y)).sum()
    }

    fn knots(&self) -> Vec<f64> {
        self.terms.iter().flat_map(|(_, g)| g.knots().iter().copied()).collect()
    }

    fn drift(&self) -> f64 {
        self.terms.iter().map(|(c, g)| c * g.slope_at_infinity()).sum()
    }

    /// `ln E[exp(Σ cᵢ gᵢ(Y))]`.
    fn log_mgf(&self, law: &GaussianLaw) -> Result<f64> {
        Quadrature::standard().log_expect(law, |y| self.eval(y), &self.knots(), self.drift())
    }
}

/// Law of `Y_T` under the minimal-entropy martingale measure.
pub fn q0_law(model: &BasisRiskModel) -> Result<GaussianLaw> {
    model.validate()?;
    let BasisRiskModel { b, a, rho, y0, t, .. } = *model;
    Ok(GaussianLaw {
        mean: y0 + b * t - rho * a * model.sharpe() * t,
        variance: a * a * t,
    })
}

/// `E^{Q⁰}[g(Y_T)]`.
pub fn q0_expectation(model: &BasisRiskModel, g: &PayoffFn) -> Result<f64> {
    let law = q0_law(model)?;
    Quadrature::standard().expect(&law, |y| g.eval(y), g.knots())
}

/// `ν̄_w(Σ cᵢ gᵢ(Y_T); γ)`.
fn unconditional(model: &BasisRiskModel, gamma: f64, terms: Vec<(f64, &PayoffFn)>) -> Result<f64> {
    check_gamma(gamma)?;
    let law = q0_law(model)?;
    let k = gamma * model.unspanned();
    let scaled = Combination::new(terms.into_iter().map(|(c, g)| (k * c, g)).collect());
    Ok(scaled.log_mgf(&law)? / k)
}

/// Unconditional writer price of `g(Y_T)`.
pub fn closed_form_price(model: &BasisRiskModel, gamma: f64, g: &PayoffFn) -> Result<f64> {
    unconditional(model, gamma, vec![(1.0, g)])
}

/// `ν_w(B|E) = ν̄_w(B − E) − ν̄_w(−E)` for `E = gE(Y_T)`, `B = gB(Y_T)`.
pub fn conditional_price(model: &BasisRiskModel, gamma: f64, g_e: &PayoffFn, g_b: &PayoffFn) -> Result<f64> {
    Ok(unconditional(model, gamma, vec![(1.0, g_b), (-1.0, g_e)])? - unconditional(model, gamma, vec![(-1.0, g_e)])?)
}

/// Conditional buyer price `ν_b(B|E) = −ν_w(−B|E)`.
pub fn conditional_buyer_price(model: &BasisRiskModel, gamma: f64, g_e: &PayoffFn, g_b: &PayoffFn) -> Result<f64> {
    Ok(unconditional(model, gamma, vec![(-1.0, g_e)])? - unconditional(model, gamma, vec![(-1.0, g_b), (-1.0, g_e)])?)
}

/// Both sides of the agreement inequality in log form, `(lhs, rhs)`:
///
/// ```text
/// lhs = (γ₂/γ₁)·ln( E[e^{γ₁B̃ − γ₁Ẽ₁}] / E[e^{−γ₁Ẽ₁}] )
/// rhs = ln( E[e^{−γ₂Ẽ₂}] / E[e^{−γ₂Ẽ₂ − γ₂B̃}] )
/// ```
///
/// with tildes denoting multiplication by `1 − ρ²`. Their difference is
/// `γ₂(1−ρ²)·(ν_b,2 − ν_w,1)`.
pub fn agreement_sides(
    model: &BasisRiskModel,
    agent1: (f64, &PayoffFn),
    agent2: (f64, &PayoffFn),
    g: &PayoffFn,
) -> Result<(f64, f64)> {
    let (g1, e1) = agent1;
    let (g2, e2) = agent2;
    check_gamma(g1)?;
    check_gamma(g2)?;
    let law = q0_law(model)?;
    let c = model.unspanned();
    let lmgf = |terms: Vec<(f64, &PayoffFn)>| Combination::new(terms).log_mgf(&law);
    let lhs = (g2 / g1) * (lmgf(vec![(g1 * c, g), (-g1 * c, e1)])? - lmgf(vec![(-g1 * c, e1)])?);
    let rhs = lmgf(vec![(-g2 * c, e2)])? - lmgf(vec![(-g2 * c, e2), (-g2 * c, g)])?;
    Ok((lhs, rhs))
}

/// Whether `g(Y_T)` has a nonempty agreement interval.
pub fn agreement_check(
    model: &BasisRiskModel,
    agent1: (f64, &PayoffFn),
    agent2: (f64, &PayoffFn),
    g: &PayoffFn,
) -> Result<bool> {
    let (lhs, rhs) = agreement_sides(model, agent1, agent2, g)?;
    Ok(lhs <= rhs)
}

/// `f(γ) = (ln E[X₁^γ] − ln E[X₂^γ]) / γ` on a grid, with its limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProfile {
    pub points: Vec<(f64, f64)>,
    /// `lim_{γ→0} f = E[ln X₁] − E[ln X₂]`.
    pub f_zero: f64,
    /// `lim_{γ→∞} f = ln sup X₁ − ln sup X₂`.
    pub f_inf: f64,
}

impl GammaProfile {
    /// Forward differences `Δf/Δγ` between consecutive grid points.
    pub fn slopes(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// Number of sign changes in the discrete derivative.
    pub fn monotonicity_breaks(&self) -> usize {
        let s: Vec<f64> = self.slopes().into_iter().filter(|v| *v != 0.0).collect();
        s.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }
}

/// Profile of `f` for `Xᵢ = xᵢ(Y)`, `Y ~ law`. Both payoffs must be
/// bounded and strictly positive.
pub fn gamma_profile(law: &GaussianLaw, x1: &PayoffFn, x2: &PayoffFn, gammas: &[f64]) -> Result<GammaProfile> {
    if !(law.variance > 0.0 && law.variance.is_finite() && law.mean.is_finite()) {
        return Err(Error::InvalidModel("law needs finite mean and positive variance".into()));
    }
    for x in [x1, x2] {
        if !(x.inf() > 0.0 && x.sup().is_finite()) {
            return Err(Error::InvalidModel("profile variables must be bounded and strictly positive".into()));
        }
    }
    let quad = Quadrature::standard();
    let ln_moment = |x: &PayoffFn, gamma: f64| quad.log_expect(law, |y| gamma * x.eval(y).ln(), x.knots(), 0.0);
    let points = gammas
        .iter()
        .map(|&gamma| {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::GammaOutOfRange(gamma));
            }
            Ok((gamma, (ln_moment(x1, gamma)? - ln_moment(x2, gamma)?) / gamma))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_log = |x: &PayoffFn| quad.expect(law, |y| x.eval(y).ln(), x.knots());
    Ok(GammaProfile {
        points,
        f_zero: mean_log(x1)? - mean_log(x2)?,
        f_inf: x1.sup().ln() - x2.sup().ln(),
    })
}
