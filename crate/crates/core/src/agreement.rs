//! Mutual agreement between a writer (agent 1) and a buyer (agent 2).
//!
//! A claim `B` can change hands at any price in `[ν_w(B;γ₁|E₁), ν_b(B;γ₂|E₂)]`.
//! The excess score `ν_b,2(B) − ν_w,1(B)` is maximized by the risk-sharing
//! claim `B* = (γ₁E₁ − γ₂E₂)/(γ₁ + γ₂)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{is_replicable, Claim, MarketTree, DEFAULT_REPLICATION_TOL};
use crate::pricing::{check_gamma, unconditional_buyer, Pricer};
use crate::solver::NewtonOptions;

/// Cutoff on the interval width separating strict, weak and no agreement.
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub gamma: f64,
    pub endowment: Claim,
    /// Nodal solver controls for every pricer built from this profile.
    #[serde(skip)]
    pub options: NewtonOptions,
}

impl AgentProfile {
    pub fn new(gamma: f64, endowment: Claim) -> Result<Self> {
        check_gamma(gamma)?;
        if !endowment.is_finite() {
            return Err(Error::InvalidModel("endowment has non-finite values".into()));
        }
        Ok(AgentProfile {
            gamma,
            endowment,
            options: NewtonOptions::default(),
        })
    }

    pub fn with_options(mut self, options: NewtonOptions) -> Self {
        self.options = options;
        self
    }

    pub fn pricer<'t>(&self, tree: &'t MarketTree) -> Result<Pricer<'t>> {
        Pricer::with_options(tree, self.gamma, &self.endowment, self.options)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreeability {
    /// Nondegenerate interval of agreeable prices.
    Strict,
    /// A single agreeable price.
    Weak,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// `ν_w(B;γ₁|E₁)`.
    pub writer: f64,
    /// `ν_b(B;γ₂|E₂)`.
    pub buyer: f64,
    pub interval: Option<(f64, f64)>,
    pub strict: bool,
    pub sigma: f64,
    pub bstar: Claim,
    pub bstar_replicable: bool,
}

/// `B* = (γ₁E₁ − γ₂E₂)/(γ₁ + γ₂)`.
pub fn optimal_claim(agent1: &AgentProfile, agent2: &AgentProfile) -> Result<Claim> {
    let (e1, e2) = (&agent1.endowment, &agent2.endowment);
    if e1.len() != e2.len() {
        return Err(Error::ClaimTreeMismatch {
            expected: e1.len(),
            got: e2.len(),
        });
    }
    let (g1, g2) = (agent1.gamma, agent2.gamma);
    Ok(Claim::new(
        e1.values()
            .iter()
            .zip(e2.values())
            .map(|(a, b)| (g1 * a - g2 * b) / (g1 + g2))
            .collect(),
    ))
}

/// `Σ = ν_b(B*;γ₂|E₂) − ν_w(B*;γ₁|E₁)` together with `B*`.
pub fn max_excess_score(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
) -> Result<(f64, Claim)> {
    let p1 = agent1.pricer(tree)?;
    let p2 = agent2.pricer(tree)?;
    let bstar = optimal_claim(agent1, agent2)?;
    Ok((p2.buyer(&bstar)? - p1.writer(&bstar)?, bstar))
}

/// `σ(B₁, B₂) = ν̄_b(B₁;γ₁) + ν̄_b(B₂;γ₂)`.
pub fn score(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    allocation: (&Claim, &Claim),
) -> Result<f64> {
    Ok(unconditional_buyer(tree, agent1.gamma, allocation.0)?
        + unconditional_buyer(tree, agent2.gamma, allocation.1)?)
}

fn classify(writer: f64, buyer: f64) -> Agreeability {
    let width = buyer - writer;
    if width > AGREEMENT_TOL {
        Agreeability::Strict
    } else if width >= -AGREEMENT_TOL {
        Agreeability::Weak
    } else {
        Agreeability::None
    }
}

pub fn agreement_interval(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claim: &Claim,
) -> Result<AgreementReport> {
    let p1 = agent1.pricer(tree)?;
    let p2 = agent2.pricer(tree)?;
    let writer = p1.writer(claim)?;
    let buyer = p2.buyer(claim)?;
    let bstar = optimal_claim(agent1, agent2)?;
    let sigma = p2.buyer(&bstar)? - p1.writer(&bstar)?;
    let bstar_replicable = is_replicable(tree, &bstar, DEFAULT_REPLICATION_TOL)?;
    let class = classify(writer, buyer);
    let interval = match class {
        Agreeability::None => None,
        _ => Some((writer, buyer.max(writer))),
    };
    Ok(AgreementReport {
        writer,
        buyer,
        interval,
        strict: class == Agreeability::Strict,
        sigma,
        bstar,
        bstar_replicable,
    })
}

pub fn is_agreeable(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claim: &Claim,
) -> Result<Agreeability> {
    let writer = agent1.pricer(tree)?.writer(claim)?;
    let buyer = agent2.pricer(tree)?.buyer(claim)?;
    Ok(classify(writer, buyer))
}
