//! Exponential-utility indirect utilities and indifference prices.
//!
//! Everything runs through one primitive: the log value function
//! `ℓ(C) = ln min_θ E[exp(C − γ θ·S_T)]` from the backward solver. With
//! `C = −γ(E − B)` and `C₀ = −γE`,
//!
//! ```text
//! ν_w(B; γ | E) = (ℓ(C) − ℓ(C₀)) / γ,    ν_b(B) = −ν_w(−B),
//! ```
//!
//! and the dual maximizer is the measure built from the same pass.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Claim, MarketTree, TradingStrategy};
use crate::measures::{self, MartingaleMeasure};
use crate::solver::{self, Backward, NewtonOptions};

pub const GAMMA_MIN: f64 = 1e-6;
pub const GAMMA_MAX: f64 = 1e6;

pub fn check_gamma(gamma: f64) -> Result<()> {
    if (GAMMA_MIN..=GAMMA_MAX).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::GammaOutOfRange(gamma))
    }
}

/// Node-indexed value function of `min_θ E[exp(−γ(X + gains))]`, kept in log form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub log_value: Vec<f64>,
    /// The minimizing (utility-maximizing) positions.
    pub strategy: TradingStrategy,
}

impl ValueFunction {
    pub fn value(&self, node: usize) -> f64 {
        self.log_value[node].exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub gamma: f64,
    pub writer: f64,
    pub buyer: f64,
    /// Arbitrage-free bounds `[inf, sup]` of `E^Q[B]`.
    pub bounds: (f64, f64),
    /// The writer's dual optimizer `Q^(γB − γE)`.
    pub dual_measure: MartingaleMeasure,
}

/// Prices claims for one agent `(γ, E)` on a fixed tree.
///
/// The endowment-only pass `C₀ = −γE` is solved once at construction.
#[derive(Debug, Clone)]
pub struct Pricer<'t> {
    tree: &'t MarketTree,
    gamma: f64,
    endowment: Claim,
    opts: NewtonOptions,
    base: Backward,
    stats: Cell<SolverStats>,
}

/// Worst nodal Newton outcome over every backward pass a pricer has run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub passes: usize,
    pub max_iterations: usize,
    /// Largest final gradient sup-norm at any node.
    pub max_grad_norm: f64,
}

impl SolverStats {
    fn record(self, pass: &Backward) -> Self {
        SolverStats {
            passes: self.passes + 1,
            max_iterations: self.max_iterations.max(pass.iterations),
            max_grad_norm: self.max_grad_norm.max(pass.grad_norm),
        }
    }

    pub fn merge(self, other: SolverStats) -> Self {
        SolverStats {
            passes: self.passes + other.passes,
            max_iterations: self.max_iterations.max(other.max_iterations),
            max_grad_norm: self.max_grad_norm.max(other.max_grad_norm),
        }
    }
}

impl<'t> Pricer<'t> {
    pub fn new(tree: &'t MarketTree, gamma: f64, endowment: &Claim) -> Result<Self> {
        Self::with_options(tree, gamma, endowment, NewtonOptions::default())
    }

    pub fn with_options(
        tree: &'t MarketTree,
        gamma: f64,
        endowment: &Claim,
        opts: NewtonOptions,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        tree.check_claim(endowment)?;
        let terminal: Vec<f64> = endowment.values().iter().map(|e| -gamma * e).collect();
        let base = solver::backward(tree, &terminal, &opts, None)?;
        let stats = Cell::new(SolverStats::default().record(&base));
        Ok(Pricer {
            tree,
            gamma,
            endowment: endowment.clone(),
            opts,
            base,
            stats,
        })
    }

    pub fn tree(&self) -> &'t MarketTree {
        self.tree
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn endowment(&self) -> &Claim {
        &self.endowment
    }

    /// Pass with terminal log-weights `γB − γE`.
    fn pass(&self, claim: &Claim) -> Result<Backward> {
        self.tree.check_claim(claim)?;
        let terminal: Vec<f64> = claim
            .values()
            .iter()
            .zip(self.endowment.values())
            .map(|(b, e)| self.gamma * (b - e))
            .collect();
        let pass = solver::backward(self.tree, &terminal, &self.opts, None)?;
        self.stats.set(self.stats.get().record(&pass));
        Ok(pass)
    }

    pub fn options(&self) -> NewtonOptions {
        self.opts
    }

    /// Solver statistics accumulated so far, the endowment pass included.
    pub fn stats(&self) -> SolverStats {
        self.stats.get()
    }

    pub fn writer(&self, claim: &Claim) -> Result<f64> {
        let p = self.pass(claim)?;
        Ok((p.log_value[0] - self.base.log_value[0]) / self.gamma)
    }

    pub fn buyer(&self, claim: &Claim) -> Result<f64> {
        Ok(-self.writer(&-claim)?)
    }

    pub fn quote(&self, claim: &Claim) -> Result<PriceQuote> {
        let p = self.pass(claim)?;
        let writer = (p.log_value[0] - self.base.log_value[0]) / self.gamma;
        let buyer = self.buyer(claim)?;
        Ok(PriceQuote {
            gamma: self.gamma,
            writer,
            buyer,
            bounds: measures::price_bounds(self.tree, claim)?,
            dual_measure: MartingaleMeasure::from_conditionals_unchecked(self.tree, p.cond)?,
        })
    }

    /// Writer's conditional price at every node.
    pub fn price_process(&self, claim: &Claim) -> Result<Vec<f64>> {
        let p = self.pass(claim)?;
        Ok(p
            .log_value
            .iter()
            .zip(&self.base.log_value)
            .map(|(a, b)| (a - b) / self.gamma)
            .collect())
    }

    /// `Q^(γB − γE)`, the maximizer in the dual representation of `ν_w(B|E)`.
    pub fn dual_measure(&self, claim: &Claim) -> Result<MartingaleMeasure> {
        let p = self.pass(claim)?;
        MartingaleMeasure::from_conditionals_unchecked(self.tree, p.cond)
    }

    /// `Q^(−γE)`.
    pub fn endowment_measure(&self) -> MartingaleMeasure {
        MartingaleMeasure::from_conditionals_unchecked(self.tree, self.base.cond.clone())
            .expect("solver output matches the tree")
    }

    /// Writer's hedge: the optimal position with the short claim minus the one without.
    pub fn hedge(&self, claim: &Claim) -> Result<TradingStrategy> {
        let p = self.pass(claim)?;
        let positions = p
            .eta
            .iter()
            .zip(&self.base.eta)
            .map(|(eb, e0)| eb.iter().zip(e0).map(|(x, y)| (y - x) / self.gamma).collect())
            .collect();
        TradingStrategy::from_positions(self.tree, positions)
    }

    /// Writer price and its dual measure from a single pass.
    pub fn writer_with_measure(&self, claim: &Claim) -> Result<(f64, MartingaleMeasure)> {
        let p = self.pass(claim)?;
        let price = (p.log_value[0] - self.base.log_value[0]) / self.gamma;
        Ok((price, MartingaleMeasure::from_conditionals_unchecked(self.tree, p.cond)?))
    }

    /// Price process and hedge from a single pass.
    pub(crate) fn writer_state(&self, claim: &Claim) -> Result<(f64, Vec<f64>, TradingStrategy)> {
        let p = self.pass(claim)?;
        let process: Vec<f64> = p
            .log_value
            .iter()
            .zip(&self.base.log_value)
            .map(|(a, b)| (a - b) / self.gamma)
            .collect();
        let positions = p
            .eta
            .iter()
            .zip(&self.base.eta)
            .map(|(eb, e0)| eb.iter().zip(e0).map(|(x, y)| (y - x) / self.gamma).collect())
            .collect();
        Ok((
            process[0],
            process,
            TradingStrategy::from_positions(self.tree, positions)?,
        ))
    }
}

/// Value function with terminal `exp(−γ·wealth)`.
pub fn value_function(tree: &MarketTree, gamma: f64, wealth: &Claim) -> Result<ValueFunction> {
    check_gamma(gamma)?;
    tree.check_claim(wealth)?;
    let terminal: Vec<f64> = wealth.values().iter().map(|w| -gamma * w).collect();
    let p = solver::backward(tree, &terminal, &NewtonOptions::default(), None)?;
    let positions = p
        .eta
        .iter()
        .map(|e| e.iter().map(|x| -x / gamma).collect())
        .collect();
    Ok(ValueFunction {
        log_value: p.log_value,
        strategy: TradingStrategy::from_positions(tree, positions)?,
    })
}

/// `u_γ(B|E) = sup_θ E[−exp(−γ(E + B + gains))]`.
pub fn indirect_utility(tree: &MarketTree, gamma: f64, endowment: &Claim, claim: &Claim) -> Result<f64> {
    tree.check_claim(endowment)?;
    let v = value_function(tree, gamma, &(endowment + claim))?;
    Ok(-v.value(0))
}

pub fn writer_price(tree: &MarketTree, gamma: f64, endowment: &Claim, claim: &Claim) -> Result<PriceQuote> {
    Pricer::new(tree, gamma, endowment)?.quote(claim)
}

/// Same quote as [`writer_price`]; `buyer` is `−ν_w(−B)`.
pub fn buyer_price(tree: &MarketTree, gamma: f64, endowment: &Claim, claim: &Claim) -> Result<PriceQuote> {
    writer_price(tree, gamma, endowment, claim)
}

pub fn price_process(tree: &MarketTree, gamma: f64, endowment: &Claim, claim: &Claim) -> Result<Vec<f64>> {
    Pricer::new(tree, gamma, endowment)?.price_process(claim)
}

pub fn dual_optimizer(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claim: &Claim,
) -> Result<MartingaleMeasure> {
    Pricer::new(tree, gamma, endowment)?.dual_measure(claim)
}

/// Unconditional writer price `ν̄_w(B; γ)`.
pub fn unconditional_writer(tree: &MarketTree, gamma: f64, claim: &Claim) -> Result<f64> {
    Pricer::new(tree, gamma, &Claim::zeros(tree.num_leaves()))?.writer(claim)
}

/// Unconditional buyer price `ν̄_b(B; γ)`.
pub fn unconditional_buyer(tree: &MarketTree, gamma: f64, claim: &Claim) -> Result<f64> {
    Pricer::new(tree, gamma, &Claim::zeros(tree.num_leaves()))?.buyer(claim)
}
