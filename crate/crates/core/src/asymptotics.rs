//! Small-quantity behavior of prices.
//!
//! For `w(a) = ν_w(a·B⃗; γ | E)`:
//!
//! ```text
//! ∇w(a)  = E^{Q(a)}[B⃗],     ∇²w(a) = γ Δ^{Q(a)}(B⃗),     Q(a) = Q^(γ a·B⃗ − γE).
//! ```

use serde::{Deserialize, Serialize};

use crate::agreement::{AgentProfile, AGREEMENT_TOL};
use crate::error::{Error, Result};
use crate::hedging::projected_variance;
use crate::linalg;
use crate::market::{is_replicable, Claim, MarketTree, DEFAULT_REPLICATION_TOL};
use crate::measures::MartingaleMeasure;
use crate::pricing::Pricer;

fn check_quantity(claims: &[Claim], a: &[f64]) -> Result<()> {
    if claims.is_empty() || a.len() != claims.len() {
        return Err(Error::DimensionMismatch {
            expected: claims.len().max(1),
            got: a.len(),
        });
    }
    Ok(())
}

/// `Q(a)` for one pricer.
pub(crate) fn tilted_measure(pricer: &Pricer<'_>, claims: &[Claim], a: &[f64]) -> Result<(f64, MartingaleMeasure)> {
    check_quantity(claims, a)?;
    pricer.writer_with_measure(&Claim::combine(a, claims))
}

pub(crate) fn expectations(q: &MartingaleMeasure, claims: &[Claim]) -> Vec<f64> {
    claims.iter().map(|c| q.expect(c)).collect()
}

pub fn price_gradient(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claims: &[Claim],
    a: &[f64],
) -> Result<Vec<f64>> {
    let pricer = Pricer::new(tree, gamma, endowment)?;
    let (_, q) = tilted_measure(&pricer, claims, a)?;
    Ok(expectations(&q, claims))
}

pub fn price_hessian(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claims: &[Claim],
    a: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let pricer = Pricer::new(tree, gamma, endowment)?;
    let (_, q) = tilted_measure(&pricer, claims, a)?;
    scaled_variance(tree, &q, claims, gamma)
}

pub(crate) fn scaled_variance(
    tree: &MarketTree,
    q: &MartingaleMeasure,
    claims: &[Claim],
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let pv = projected_variance(tree, q, claims)?;
    Ok(pv
        .matrix
        .into_iter()
        .map(|row| row.into_iter().map(|v| gamma * v).collect())
        .collect())
}

/// One row of an expansion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub eps: f64,
    pub exact: f64,
    pub approx: f64,
    pub error: f64,
}

/// First and second derivatives of `w` at a base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub a: Vec<f64>,
    /// `w(a)`.
    pub value: f64,
    pub grad: Vec<f64>,
    /// `γΔ^{Q(a)}(B⃗)`.
    pub hessian: Vec<Vec<f64>>,
    pub eps_table: Vec<ExpansionRow>,
}

impl Expansion {
    pub fn at(tree: &MarketTree, gamma: f64, endowment: &Claim, claims: &[Claim], a: &[f64]) -> Result<Self> {
        Self::at_with(&Pricer::new(tree, gamma, endowment)?, claims, a)
    }

    /// [`Expansion::at`] for an existing pricer.
    pub fn at_with(pricer: &Pricer<'_>, claims: &[Claim], a: &[f64]) -> Result<Self> {
        let (value, q) = tilted_measure(pricer, claims, a)?;
        Ok(Expansion {
            a: a.to_vec(),
            value,
            grad: expectations(&q, claims),
            hessian: scaled_variance(pricer.tree(), &q, claims, pricer.gamma())?,
            eps_table: Vec::new(),
        })
    }

    /// Second-order model of `w(a + εδ) − w(a)`.
    pub fn increment(&self, delta: &[f64], eps: f64) -> f64 {
        eps * linalg::dot(&self.grad, delta) + 0.5 * eps * eps * linalg::quad_form(&self.hessian, delta)
    }

    /// Fills `eps_table` along `delta` with exact increments from the pricer.
    pub fn tabulate(
        self,
        tree: &MarketTree,
        gamma: f64,
        endowment: &Claim,
        claims: &[Claim],
        delta: &[f64],
        eps_grid: &[f64],
    ) -> Result<Self> {
        self.tabulate_with(&Pricer::new(tree, gamma, endowment)?, claims, delta, eps_grid)
    }

    /// Exact and second-order increments along `delta` for each `eps`.
    pub fn tabulate_with(mut self, pricer: &Pricer<'_>, claims: &[Claim], delta: &[f64], eps_grid: &[f64]) -> Result<Self> {
        check_quantity(claims, delta)?;
        self.eps_table = eps_grid
            .iter()
            .map(|&eps| {
                let point: Vec<f64> = self.a.iter().zip(delta).map(|(x, d)| x + eps * d).collect();
                let exact = pricer.writer(&Claim::combine(&point, claims))? - self.value;
                let approx = self.increment(delta, eps);
                Ok(ExpansionRow {
                    eps,
                    exact,
                    approx,
                    error: exact - approx,
                })
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }
}

/// `εa·E^{Q^(−γE)}[B⃗] + (ε²γ/2)·aᵀΔ^{Q^(−γE)}(B⃗)a`.
pub fn expand_price(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claims: &[Claim],
    a: &[f64],
    eps: f64,
) -> Result<f64> {
    let zero = vec![0.0; claims.len()];
    check_quantity(claims, a)?;
    Ok(Expansion::at(tree, gamma, endowment, claims, &zero)?.increment(a, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    /// `αB` is strictly agreeable for small `α > 0`: agent 2 buys from agent 1.
    BuySegment,
    /// Small `α < 0`: agent 1 buys from agent 2.
    SellSegment,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeDirection {
    pub segment: Segment,
    /// The claim is replicable, so no small trade helps either side.
    pub degenerate: bool,
}

/// The agents' endowment-only dual measures `Q^(−γᵢEᵢ)`.
fn base_measures(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
) -> Result<(MartingaleMeasure, MartingaleMeasure)> {
    Ok((
        agent1.pricer(tree)?.endowment_measure(),
        agent2.pricer(tree)?.endowment_measure(),
    ))
}

pub fn small_trade_direction(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claim: &Claim,
) -> Result<TradeDirection> {
    tree.check_claim(claim)?;
    if is_replicable(tree, claim, DEFAULT_REPLICATION_TOL)? {
        return Ok(TradeDirection {
            segment: Segment::None,
            degenerate: true,
        });
    }
    let (q1, q2) = base_measures(tree, agent1, agent2)?;
    let gap = q2.expect(claim) - q1.expect(claim);
    let segment = if gap > AGREEMENT_TOL {
        Segment::BuySegment
    } else if gap < -AGREEMENT_TOL {
        Segment::SellSegment
    } else {
        Segment::None
    };
    Ok(TradeDirection {
        segment,
        degenerate: false,
    })
}

/// Linear gap and curvature `(E^{Q₂} − E^{Q₁})[B]`, `γ₁Δ^{Q₁}(B) + γ₂Δ^{Q₂}(B)`.
fn gap_and_curvature(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claim: &Claim,
) -> Result<(f64, f64)> {
    tree.check_claim(claim)?;
    let (q1, q2) = base_measures(tree, agent1, agent2)?;
    let gap = q2.expect(claim) - q1.expect(claim);
    let claims = std::slice::from_ref(claim);
    let d1 = projected_variance(tree, &q1, claims)?.matrix[0][0];
    let d2 = projected_variance(tree, &q2, claims)?.matrix[0][0];
    Ok((gap, agent1.gamma * d1 + agent2.gamma * d2))
}

/// Second-order approximation of `ν_b,2(αB) − ν_w,1(αB)`.
pub fn approx_interval_width(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claim: &Claim,
    alpha: f64,
) -> Result<f64> {
    let (gap, curvature) = gap_and_curvature(tree, agent1, agent2, claim)?;
    Ok(alpha * gap - 0.5 * alpha * alpha * curvature)
}

/// Quantity maximizing the approximate width: `gap / curvature`.
pub fn approx_peq(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claim: &Claim,
) -> Result<f64> {
    let (gap, curvature) = gap_and_curvature(tree, agent1, agent2, claim)?;
    if curvature <= 1e-12 {
        return Err(Error::DegenerateClaim);
    }
    Ok(gap / curvature)
}
