//! Demand and the partial-equilibrium price-quantity of two agents.
//!
//! Agent 1 writes `a·B⃗`, agent 2 buys it. The equilibrium quantity minimizes
//!
//! ```text
//! f(a) = ν_w,1(a·B⃗) − ν_b,2(a·B⃗) = ν_w,1(a·B⃗) + ν_w,2(−a·B⃗),
//! ```
//!
//! which is strictly convex when no nonzero combination of the claims is
//! replicable. The price is `p̂ = E^{Q₁(â)}[B⃗] = E^{Q₂(−â)}[B⃗]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agreement::AgentProfile;
use crate::asymptotics::{expectations, scaled_variance, tilted_measure};
use crate::error::{Error, Result};
use crate::linalg;
use crate::market::{replication_residuals, Claim, MarketTree, DEFAULT_REPLICATION_TOL};
use crate::pricing::Pricer;

pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-10;
pub const MAX_NEWTON_ITER: usize = 500;
/// Quantities beyond this sup-norm count as infinite demand.
pub const DEMAND_BOUND: f64 = 1e6;

const ARMIJO_SLOPE: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub a_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub grad_norm: f64,
    #[serde(rename = "iters")]
    pub iterations: usize,
    /// `‖E^{Q₁(â)}[B⃗] − E^{Q₂(−â)}[B⃗]‖∞`.
    pub clearing_residual: f64,
    pub clearing_ok: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "quantity")]
pub enum Demand {
    /// Quantity written at the price (negative: bought).
    Point(Vec<f64>),
    Unbounded,
}

/// Fails with the offending direction when some nonzero `a·B⃗` is replicable.
pub fn check_no_replicable_combination(tree: &MarketTree, claims: &[Claim]) -> Result<()> {
    if claims.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let resid = replication_residuals(tree, claims)?;
    let n = claims.len();
    // pad so the SVD returns a full right basis even with few leaves
    let rows = tree.num_leaves().max(n);
    let m = DMatrix::from_fn(rows, n, |r, c| resid[c].get(r).copied().unwrap_or(0.0));
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let (k, smin) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    let scale = 1.0 + claims.iter().map(Claim::sup_norm).fold(0.0, f64::max);
    if smin <= DEFAULT_REPLICATION_TOL * scale {
        let mut direction: Vec<f64> = v_t.row(k).iter().copied().collect();
        let norm = linalg::sup_norm(&direction);
        let lead = direction
            .iter()
            .copied()
            .find(|v| v.abs() > 1e-12 * norm)
            .unwrap_or(1.0);
        let sign = lead.signum() / norm;
        direction.iter_mut().for_each(|v| *v *= sign);
        return Err(Error::ReplicableCombination { direction });
    }
    Ok(())
}

/// Value, gradient and Hessian of the excess objective at `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    /// `E^{Q₁(a)}[B⃗]`.
    pub writer_marginal: Vec<f64>,
    /// `E^{Q₂(−a)}[B⃗]`.
    pub buyer_marginal: Vec<f64>,
}

struct Market<'t> {
    tree: &'t MarketTree,
    p1: Pricer<'t>,
    p2: Pricer<'t>,
    claims: &'t [Claim],
}

impl<'t> Market<'t> {
    fn new(
        tree: &'t MarketTree,
        agent1: &AgentProfile,
        agent2: &AgentProfile,
        claims: &'t [Claim],
    ) -> Result<Self> {
        check_no_replicable_combination(tree, claims)?;
        Ok(Market {
            tree,
            p1: agent1.pricer(tree)?,
            p2: agent2.pricer(tree)?,
            claims,
        })
    }

    fn evaluate(&self, a: &[f64], with_hessian: bool) -> Result<Objective> {
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let (w1, q1) = tilted_measure(&self.p1, self.claims, a)?;
        let (w2, q2) = tilted_measure(&self.p2, self.claims, &neg)?;
        let e1 = expectations(&q1, self.claims);
        let e2 = expectations(&q2, self.claims);
        let hessian = if with_hessian {
            let h1 = scaled_variance(self.tree, &q1, self.claims, self.p1.gamma())?;
            let h2 = scaled_variance(self.tree, &q2, self.claims, self.p2.gamma())?;
            h1.iter()
                .zip(&h2)
                .map(|(r1, r2)| r1.iter().zip(r2).map(|(x, y)| x + y).collect())
                .collect()
        } else {
            Vec::new()
        };
        Ok(Objective {
            value: w1 + w2,
            gradient: e1.iter().zip(&e2).map(|(x, y)| x - y).collect(),
            hessian,
            writer_marginal: e1,
            buyer_marginal: e2,
        })
    }
}

pub fn excess_objective(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claims: &[Claim],
    a: &[f64],
) -> Result<Objective> {
    if a.len() != claims.len() {
        return Err(Error::DimensionMismatch {
            expected: claims.len(),
            got: a.len(),
        });
    }
    Market::new(tree, agent1, agent2, claims)?.evaluate(a, true)
}

/// Damped Newton on a smooth convex function given by `eval(x, with_hessian)`.
///
/// `bail` is consulted on every trial point before evaluation; returning
/// true stops the iteration with `Ok(None)`.
fn newton<F>(
    mut x: Vec<f64>,
    tol: f64,
    eval: F,
    bail: &dyn Fn(&[f64]) -> bool,
) -> Result<Option<(Vec<f64>, Objective, usize)>>
where
    F: Fn(&[f64], bool) -> Result<Objective>,
{
    if bail(&x) {
        return Ok(None);
    }
    let mut cur = eval(&x, true)?;
    for iter in 0..=MAX_NEWTON_ITER {
        let gnorm = linalg::sup_norm(&cur.gradient);
        if gnorm <= tol {
            return Ok(Some((x, cur, iter)));
        }
        if iter == MAX_NEWTON_ITER {
            break;
        }
        let rhs: Vec<f64> = cur.gradient.iter().map(|g| -g).collect();
        let step = linalg::solve(&cur.hessian, &rhs, 1e-14).map_err(|pivot| Error::SingularGram { pivot })?;
        let slope = linalg::dot(&cur.gradient, &step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            if bail(&trial) {
                return Ok(None);
            }
            let ev = eval(&trial, false)?;
            let armijo = ev.value <= cur.value + ARMIJO_SLOPE * t * slope;
            // once decreases drop below rounding, accept anything that shrinks the gradient
            let flat = (ev.value - cur.value).abs() <= 8.0 * f64::EPSILON * cur.value.abs().max(1.0)
                && linalg::sup_norm(&ev.gradient) < gnorm;
            if armijo || flat {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(trial) => {
                cur = eval(&trial, true)?;
                x = trial;
            }
            None => {
                return Err(Error::NewtonDivergence {
                    iterations: iter,
                    grad_norm: gnorm,
                })
            }
        }
    }
    Err(Error::NewtonDivergence {
        iterations: MAX_NEWTON_ITER,
        grad_norm: linalg::sup_norm(&cur.gradient),
    })
}

/// The partial-equilibrium quantity `â` (written by agent 1) and price `p̂`.
pub fn solve_pepq(
    tree: &MarketTree,
    agent1: &AgentProfile,
    agent2: &AgentProfile,
    claims: &[Claim],
    tol: f64,
    start: &[f64],
) -> Result<EquilibriumResult> {
    if start.len() != claims.len() {
        return Err(Error::DimensionMismatch {
            expected: claims.len(),
            got: start.len(),
        });
    }
    let market = Market::new(tree, agent1, agent2, claims)?;
    let (a_hat, obj, iterations) = newton(start.to_vec(), tol, |a, h| market.evaluate(a, h), &|_| false)?
        .expect("never bails");
    let clearing_residual = linalg::sup_norm(&obj.gradient);
    log::debug!("equilibrium after {iterations} Newton steps: a = {a_hat:?}");
    Ok(EquilibriumResult {
        a_hat,
        p_hat: obj.writer_marginal,
        grad_norm: clearing_residual,
        iterations,
        clearing_residual,
        clearing_ok: clearing_residual <= 10.0 * tol,
        tol,
    })
}

/// Quantity the agent writes at unit prices `p`: the maximizer of
/// `a·p − ν_w(a·B⃗)`, i.e. the solution of `E^{Q̂(a)}[B⃗] = p`.
pub fn demand(tree: &MarketTree, agent: &AgentProfile, claims: &[Claim], p: &[f64]) -> Result<Demand> {
    if p.len() != claims.len() {
        return Err(Error::DimensionMismatch {
            expected: claims.len(),
            got: p.len(),
        });
    }
    check_no_replicable_combination(tree, claims)?;
    let pricer = agent.pricer(tree)?;
    let eval = |a: &[f64], with_hessian: bool| -> Result<Objective> {
        let (w, q) = tilted_measure(&pricer, claims, a)?;
        let e = expectations(&q, claims);
        Ok(Objective {
            value: w - linalg::dot(a, p),
            gradient: e.iter().zip(p).map(|(x, y)| x - y).collect(),
            hessian: if with_hessian {
                scaled_variance(tree, &q, claims, agent.gamma)?
            } else {
                Vec::new()
            },
            writer_marginal: e,
            buyer_marginal: p.to_vec(),
        })
    };
    let out_of_range = |a: &[f64]| linalg::sup_norm(a) > DEMAND_BOUND;
    match newton(vec![0.0; claims.len()], DEFAULT_EQUILIBRIUM_TOL, eval, &out_of_range) {
        Ok(Some((a, _, _))) => Ok(Demand::Point(a)),
        Ok(None) => Ok(Demand::Unbounded),
        // the tilt has pushed some conditional probability to zero: the iterates
        // are running off along a direction where the objective keeps falling
        Err(Error::MeasureNotEquivalent) | Err(Error::SingularGram { .. }) => Ok(Demand::Unbounded),
        Err(e) => Err(e),
    }
}

/// Recomputes both marginal prices at `±â` and compares them with `p̂`.
pub fn verify_clearing(
    result: &EquilibriumResult,
    tree: &MarketTree,
    agents: (&AgentProfile, &AgentProfile),
    claims: &[Claim],
) -> bool {
    let check = || -> Result<bool> {
        let neg: Vec<f64> = result.a_hat.iter().map(|x| -x).collect();
        let (_, q1) = tilted_measure(&agents.0.pricer(tree)?, claims, &result.a_hat)?;
        let (_, q2) = tilted_measure(&agents.1.pricer(tree)?, claims, &neg)?;
        let tol = 10.0 * result.tol;
        let close = |e: Vec<f64>| e.iter().zip(&result.p_hat).all(|(x, y)| (x - y).abs() <= tol);
        Ok(close(expectations(&q1, claims)) && close(expectations(&q2, claims)))
    };
    check().unwrap_or(false)
}
