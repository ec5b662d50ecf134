//! Optimal hedges, residual risk, Kunita–Watanabe decompositions and
//! projected variances.
//!
//! The writer of `B` charges `ν_w(B|E)`, trades `θ^(B|E)` and keeps
//!
//! ```text
//! R^(w)(B|E) = B − ν_w(B|E) − ∫θ^(B|E) dS.
//! ```
//!
//! The buyer's residual is the writer's residual of `−B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::{terminal_gains, Claim, MarketTree, TradingStrategy, DEFAULT_REPLICATION_TOL};
use crate::measures::{verify_martingale, MartingaleMeasure};
use crate::pricing::Pricer;

const GRAM_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Writer,
    Buyer,
}

/// Price, hedge and residual of one side of a trade in `B`.
///
/// Writer: `B = price + gains(strategy) + residual`.
/// Buyer: `strategy = θ^(−B|E)`, `residual = R^(w)(−B|E)`, so
/// `B = price − gains(strategy) − residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub side: Side,
    pub price: f64,
    pub strategy: TradingStrategy,
    pub residual: Claim,
    /// Conditional residual at every node; zero at the root.
    pub residual_process: Vec<f64>,
}

impl Decomposition {
    /// Rebuilds the claim from its parts.
    pub fn reconstruct(&self, tree: &MarketTree) -> Result<Claim> {
        let g = terminal_gains(tree, &self.strategy)?;
        let sign = match self.side {
            Side::Writer => 1.0,
            Side::Buyer => -1.0,
        };
        Ok(Claim::new(
            g.values()
                .iter()
                .zip(self.residual.values())
                .map(|(gi, ri)| self.price + sign * (gi + ri))
                .collect(),
        ))
    }
}

/// The writer's hedge `θ^(B|E) = θ^(B−E) − θ^(−E)`.
pub fn optimal_strategy(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claim: &Claim,
) -> Result<TradingStrategy> {
    Pricer::new(tree, gamma, endowment)?.hedge(claim)
}

pub fn residual_risk(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claim: &Claim,
    side: Side,
) -> Result<Decomposition> {
    let pricer = Pricer::new(tree, gamma, endowment)?;
    residual_risk_with(&pricer, claim, side)
}

/// [`residual_risk`] reusing a pricer's endowment pass.
pub fn residual_risk_with(pricer: &Pricer<'_>, claim: &Claim, side: Side) -> Result<Decomposition> {
    let tree = pricer.tree();
    let written = match side {
        Side::Writer => claim.clone(),
        Side::Buyer => -claim,
    };
    let (nu, process, strategy) = pricer.writer_state(&written)?;
    let gains = strategy.gains_process(tree)?;
    let mut residual_process: Vec<f64> = process
        .iter()
        .zip(&gains)
        .map(|(v, g)| v - nu - g)
        .collect();
    let residual: Vec<f64> = tree
        .leaves()
        .iter()
        .zip(written.values())
        .map(|(&l, b)| b - nu - gains[l])
        .collect();
    for (&l, r) in tree.leaves().iter().zip(&residual) {
        residual_process[l] = *r;
    }
    let price = match side {
        Side::Writer => nu,
        Side::Buyer => -nu,
    };
    Ok(Decomposition {
        side,
        price,
        strategy,
        residual: Claim::new(residual),
        residual_process,
    })
}

/// `claim = mean + gains(strategy) + orthogonal` under a martingale measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KunitaWatanabe {
    pub mean: f64,
    pub strategy: TradingStrategy,
    pub orthogonal: Claim,
}

/// Kunita–Watanabe decomposition by one-step regressions, backwards.
///
/// At each node the position regresses the next conditional mean on the
/// price increment under `q`; because `q` is a martingale the pieces are
/// orthogonal and their sum is the `L²(q)` projection onto the gains.
pub fn kw_decompose(tree: &MarketTree, q: &MartingaleMeasure, claim: &Claim) -> Result<KunitaWatanabe> {
    tree.check_claim(claim)?;
    check_equivalent(tree, q)?;
    if !verify_martingale(tree, q, 1e-10) {
        return Err(Error::NotAMartingaleMeasure);
    }
    let d = tree.num_assets();
    let mut value = vec![0.0; tree.len()];
    for (&l, b) in tree.leaves().iter().zip(claim.values()) {
        value[l] = *b;
    }
    let mut strategy = TradingStrategy::zeros(tree);
    for &n in tree.internal_nodes().iter().rev() {
        let qn = q.conditional(n);
        let inc = tree.increments(n);
        let children = tree.children(n);
        let mean: f64 = children.iter().zip(qn).map(|(&c, w)| w * value[c]).sum();
        let mut cov = vec![vec![0.0; d]; d];
        let mut rhs = vec![0.0; d];
        for ((&c, w), ds) in children.iter().zip(qn).zip(inc) {
            for i in 0..d {
                rhs[i] += w * ds[i] * (value[c] - mean);
                for j in 0..d {
                    cov[i][j] += w * ds[i] * ds[j];
                }
            }
        }
        let theta = linalg::solve(&cov, &rhs, GRAM_PIVOT).map_err(|pivot| Error::SingularGram { pivot })?;
        strategy.set_position(n, theta);
        value[n] = mean;
    }
    let gains = terminal_gains(tree, &strategy)?;
    let mean = value[tree.root()];
    let orthogonal = Claim::new(
        claim
            .values()
            .iter()
            .zip(gains.values())
            .map(|(b, g)| b - mean - g)
            .collect(),
    );
    Ok(KunitaWatanabe {
        mean,
        strategy,
        orthogonal,
    })
}

/// `Δ^Q(B⃗)` with the projection residuals it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// Row-major, in claim order.
    pub matrix: Vec<Vec<f64>>,
    /// `B_i` minus its `L²(Q)` projection onto constants plus gains.
    pub residuals: Vec<Claim>,
}

impl ProjectionResult {
    /// `aᵀ Δ a`.
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        linalg::quad_form(&self.matrix, a)
    }
}

/// Projected variance–covariance of `claims` under a strictly positive `q`.
///
/// Solves the `q`-weighted normal equations on `{1} ∪ {1_node · ΔS^k}`.
/// Components whose residual is within the replication tolerance are
/// treated as replicable and contribute exact zeros.
pub fn projected_variance(
    tree: &MarketTree,
    q: &MartingaleMeasure,
    claims: &[Claim],
) -> Result<ProjectionResult> {
    if claims.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    for c in claims {
        tree.check_claim(c)?;
    }
    check_equivalent(tree, q)?;
    let rows = sparse_design(tree);
    let cols = 1 + tree.internal_nodes().len() * tree.num_assets();
    let weights = q.leaf_probabilities();

    let mut gram = vec![vec![0.0; cols]; cols];
    let mut rhs = vec![vec![0.0; cols]; claims.len()];
    for (l, row) in rows.iter().enumerate() {
        let w = weights[l];
        for &(i, x) in row {
            for &(j, y) in row {
                gram[i][j] += w * x * y;
            }
            for (k, c) in claims.iter().enumerate() {
                rhs[k][i] += w * x * c.values()[l];
            }
        }
    }
    let coef = linalg::solve_many(&gram, &rhs, GRAM_PIVOT).map_err(|pivot| Error::SingularGram { pivot })?;

    let residuals: Vec<Claim> = claims
        .iter()
        .zip(&coef)
        .map(|(c, x)| {
            let r: Vec<f64> = rows
                .iter()
                .zip(c.values())
                .map(|(row, b)| b - row.iter().map(|&(i, v)| v * x[i]).sum::<f64>())
                .collect();
            if linalg::sup_norm(&r) <= DEFAULT_REPLICATION_TOL * (1.0 + c.sup_norm()) {
                Claim::zeros(r.len())
            } else {
                Claim::new(r)
            }
        })
        .collect();
    let n = claims.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = weights
                .iter()
                .zip(residuals[i].values())
                .zip(residuals[j].values())
                .map(|((w, a), b)| w * a * b)
                .sum();
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    Ok(ProjectionResult { matrix, residuals })
}

/// Nonzero entries of the design row of every leaf: the constant and the
/// one-step increments along its path.
fn sparse_design(tree: &MarketTree) -> Vec<Vec<(usize, f64)>> {
    let d = tree.num_assets();
    let mut slot = vec![usize::MAX; tree.len()];
    for (j, &n) in tree.internal_nodes().iter().enumerate() {
        slot[n] = j;
    }
    tree.leaves()
        .iter()
        .map(|&leaf| {
            let mut row = vec![(0, 1.0)];
            let mut node = leaf;
            while let Some(parent) = tree.node(node).parent {
                let pos = tree
                    .children(parent)
                    .iter()
                    .position(|&c| c == node)
                    .expect("child listed under its parent");
                let ds = &tree.increments(parent)[pos];
                for (k, v) in ds.iter().enumerate() {
                    row.push((1 + slot[parent] * d + k, *v));
                }
                node = parent;
            }
            row
        })
        .collect()
}

fn check_equivalent(tree: &MarketTree, q: &MartingaleMeasure) -> Result<()> {
    if q.conditionals().len() != tree.len() {
        return Err(Error::DimensionMismatch {
            expected: tree.len(),
            got: q.conditionals().len(),
        });
    }
    if !q.is_equivalent() {
        return Err(Error::MeasureNotEquivalent);
    }
    Ok(())
}
