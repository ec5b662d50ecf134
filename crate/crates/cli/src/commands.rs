//! One function per subcommand: scenario in, payload + table out.
//!
//! CSV columns (fixed):
//!
//! | command       | columns |
//! |---------------|---------|
//! | `price`       | claim, gamma, writer, buyer, bound_lo, bound_hi, replicable |
//! | `agree`       | claim, writer, buyer, interval_lo, interval_hi, class, segment |
//! | `equilibrium` | claim, a_hat, p_hat |
//! | `expand`      | eps, exact, approx, error |
//! | `hedge`       | claim, side, price, leaf, residual |
//! | `basisrisk`   | gamma, price |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use entropic_core::agreement::{agreement_interval, max_excess_score, AgentProfile, AGREEMENT_TOL};
use entropic_core::asymptotics::{small_trade_direction, Expansion};
use entropic_core::basisrisk::{
    agreement_sides, closed_form_price, conditional_buyer_price, conditional_price, gamma_profile, q0_expectation,
};
use entropic_core::equilibrium::{solve_pepq, verify_clearing};
use entropic_core::hedging::{residual_risk_with, Decomposition, Side};
use entropic_core::market::is_replicable;
use entropic_core::measures::price_bounds;
use entropic_core::pricing::{Pricer, SolverStats};
use entropic_core::scenario::Scenario;
use entropic_core::{Claim, Error, MarketTree, MartingaleMeasure, Result};

use crate::report::{Cell, Table};

/// Number of martingale measures sampled by `hedge` to check the
/// residual-width identity.
pub const HEDGE_SAMPLES: usize = 10;

/// Per-claim JSON, CSV rows and solver statistics.
type ClaimResult<J> = Result<(J, Vec<Vec<Cell>>, SolverStats)>;

pub struct Output {
    pub payload: Value,
    pub diagnostics: Value,
    pub table: Table,
}

pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub seed: u64,
}

impl Context<'_> {
    fn agent(&self, i: usize) -> Result<AgentProfile> {
        Ok(self.scenario.agent(i)?.clone().with_options(self.scenario.solver.newton()))
    }

    fn claims(&self) -> Result<Vec<(String, Claim)>> {
        let claims = self.scenario.task_claims()?;
        if claims.is_empty() {
            return Err(Error::SchemaViolation("no claims to act on".into()));
        }
        Ok(claims)
    }
}

fn stats_json(s: SolverStats) -> Value {
    json!({
        "backward_passes": s.passes,
        "max_newton_iterations": s.max_iterations,
        "max_newton_grad_norm": s.max_grad_norm,
    })
}

fn segment_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn price(ctx: &Context) -> Result<Output> {
    let tree = ctx.scenario.tree()?;
    let agent = ctx.agent(0)?;
    let mut gammas = vec![agent.gamma];
    gammas.extend(ctx.scenario.task.gamma_grid.iter().filter(|g| **g != agent.gamma));
    let rep_tol = ctx.scenario.solver.replication_tol;

    let per_claim: Vec<ClaimResult<Vec<Value>>> = ctx
        .claims()?
        .into_par_iter()
        .map(|(name, claim)| {
            let bounds = price_bounds(tree, &claim)?;
            let replicable = is_replicable(tree, &claim, rep_tol)?;
            let mut quotes = Vec::new();
            let mut rows = Vec::new();
            let mut stats = SolverStats::default();
            for &gamma in &gammas {
                let p = Pricer::with_options(tree, gamma, &agent.endowment, agent.options)?;
                let (writer, buyer) = (p.writer(&claim)?, p.buyer(&claim)?);
                stats = stats.merge(p.stats());
                quotes.push(json!({
                    "claim": name, "gamma": gamma, "writer": writer, "buyer": buyer,
                    "bounds": [bounds.0, bounds.1], "replicable": replicable,
                }));
                rows.push(vec![
                    name.as_str().into(),
                    gamma.into(),
                    writer.into(),
                    buyer.into(),
                    bounds.0.into(),
                    bounds.1.into(),
                    replicable.into(),
                ]);
            }
            Ok((quotes, rows, stats))
        })
        .collect();

    let mut quotes = Vec::new();
    let mut table = Table {
        columns: vec!["claim", "gamma", "writer", "buyer", "bound_lo", "bound_hi", "replicable"],
        rows: Vec::new(),
    };
    let mut stats = SolverStats::default();
    for r in per_claim {
        let (q, rows, s) = r?;
        quotes.extend(q);
        table.rows.extend(rows);
        stats = stats.merge(s);
    }
    Ok(Output {
        payload: json!({ "agent": { "gamma": agent.gamma }, "quotes": quotes }),
        diagnostics: stats_json(stats),
        table,
    })
}

pub fn agree(ctx: &Context) -> Result<Output> {
    let tree = ctx.scenario.tree()?;
    let (a1, a2) = (ctx.agent(0)?, ctx.agent(1)?);
    let rep_tol = ctx.scenario.solver.replication_tol;
    let (sigma, bstar) = max_excess_score(tree, &a1, &a2)?;
    let bstar_replicable = is_replicable(tree, &bstar, rep_tol)?;

    let results: Vec<Result<(Value, Vec<Cell>)>> = ctx
        .claims()?
        .into_par_iter()
        .map(|(name, claim)| {
            let rep = agreement_interval(tree, &a1, &a2, &claim)?;
            let dir = small_trade_direction(tree, &a1, &a2, &claim)?;
            let width = rep.buyer - rep.writer;
            let class = if width > AGREEMENT_TOL {
                "strict"
            } else if width >= -AGREEMENT_TOL {
                "weak"
            } else {
                "none"
            };
            let segment = segment_name(&dir.segment);
            let value = json!({
                "claim": name, "writer": rep.writer, "buyer": rep.buyer,
                "interval": rep.interval.map(|(lo, hi)| vec![lo, hi]),
                "class": class, "segment": segment, "degenerate": dir.degenerate,
            });
            let row = vec![
                name.as_str().into(),
                rep.writer.into(),
                rep.buyer.into(),
                rep.interval.map(|i| i.0).into(),
                rep.interval.map(|i| i.1).into(),
                class.into(),
                segment.into(),
            ];
            Ok((value, row))
        })
        .collect();

    let mut claims = Vec::new();
    let mut table = Table {
        columns: vec!["claim", "writer", "buyer", "interval_lo", "interval_hi", "class", "segment"],
        rows: Vec::new(),
    };
    for r in results {
        let (v, row) = r?;
        claims.push(v);
        table.rows.push(row);
    }
    Ok(Output {
        payload: json!({
            "sigma": sigma,
            "bstar": bstar.values(),
            "bstar_replicable": bstar_replicable,
            "claims": claims,
        }),
        diagnostics: json!({}),
        table,
    })
}

pub fn equilibrium(ctx: &Context) -> Result<Output> {
    let tree = ctx.scenario.tree()?;
    let (a1, a2) = (ctx.agent(0)?, ctx.agent(1)?);
    let named = ctx.claims()?;
    let claims: Vec<Claim> = named.iter().map(|(_, c)| c.clone()).collect();
    let start = if ctx.scenario.task.start.is_empty() {
        vec![0.0; claims.len()]
    } else {
        ctx.scenario.task.start.clone()
    };
    let tol = ctx.scenario.solver.equilibrium_tol;
    let eq = solve_pepq(tree, &a1, &a2, &claims, tol, &start)?;
    let verified = verify_clearing(&eq, tree, (&a1, &a2), &claims);
    let table = Table {
        columns: vec!["claim", "a_hat", "p_hat"],
        rows: named
            .iter()
            .zip(eq.a_hat.iter().zip(&eq.p_hat))
            .map(|((n, _), (a, p))| vec![n.as_str().into(), (*a).into(), (*p).into()])
            .collect(),
    };
    Ok(Output {
        payload: json!({
            "claims": named.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            "a_hat": eq.a_hat,
            "p_hat": eq.p_hat,
            "clearing_ok": eq.clearing_ok,
            "clearing_verified": verified,
        }),
        diagnostics: json!({
            "iterations": eq.iterations,
            "grad_norm": eq.grad_norm,
            "clearing_residual": eq.clearing_residual,
            "start": start,
        }),
        table,
    })
}

pub fn expand(ctx: &Context) -> Result<Output> {
    let tree = ctx.scenario.tree()?;
    let agent = ctx.agent(0)?;
    let named = ctx.claims()?;
    let claims: Vec<Claim> = named.iter().map(|(_, c)| c.clone()).collect();
    let task = &ctx.scenario.task;
    let at = if task.at.is_empty() { vec![0.0; claims.len()] } else { task.at.clone() };
    let direction = if task.direction.is_empty() {
        vec![1.0; claims.len()]
    } else {
        task.direction.clone()
    };
    let pricer = agent.pricer(tree)?;
    let ex = Expansion::at_with(&pricer, &claims, &at)?.tabulate_with(&pricer, &claims, &direction, &task.eps_grid)?;
    let table = Table {
        columns: vec!["eps", "exact", "approx", "error"],
        rows: ex
            .eps_table
            .iter()
            .map(|r| vec![r.eps.into(), r.exact.into(), r.approx.into(), r.error.into()])
            .collect(),
    };
    Ok(Output {
        payload: json!({
            "claims": named.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            "gamma": agent.gamma,
            "at": ex.a,
            "direction": direction,
            "value": ex.value,
            "gradient": ex.grad,
            "hessian": ex.hessian,
            "table": ex.eps_table,
        }),
        diagnostics: stats_json(pricer.stats()),
        table,
    })
}

fn decomposition_json(tree: &MarketTree, d: &Decomposition) -> Value {
    let positions: Vec<Value> = tree
        .internal_nodes()
        .iter()
        .map(|&n| json!({ "node": tree.node(n).id, "position": d.strategy.position(n) }))
        .collect();
    json!({
        "side": d.side,
        "price": d.price,
        "strategy": positions,
        "residual": d.residual.values(),
        "residual_mean_p": tree.expect(&d.residual),
    })
}

/// Strictly positive martingale measure with random vertex weights.
fn sample_measure(tree: &MarketTree, rng: &mut ChaCha8Rng) -> Result<MartingaleMeasure> {
    let weights: Vec<Vec<f64>> = tree
        .internal_nodes()
        .iter()
        .map(|&n| (0..tree.polytope_vertices(n).len()).map(|_| rng.gen_range(0.05..1.0)).collect())
        .collect();
    MartingaleMeasure::from_vertex_weights(tree, &weights)
}

pub fn hedge(ctx: &Context) -> Result<Output> {
    let tree = ctx.scenario.tree()?;
    let writer = ctx.agent(0)?;
    let buyer = if ctx.scenario.agents.len() > 1 { Some(ctx.agent(1)?) } else { None };
    let seed = ctx.seed;

    let results: Vec<ClaimResult<Value>> = ctx
        .claims()?
        .into_par_iter()
        .enumerate()
        .map(|(i, (name, claim))| {
            let p1 = writer.pricer(tree)?;
            let w = residual_risk_with(&p1, &claim, Side::Writer)?;
            let mut stats = p1.stats();
            let mut sides = vec![decomposition_json(tree, &w)];
            let mut decs = vec![w.clone()];
            let mut check = Value::Null;
            if let Some(b) = &buyer {
                let p2 = b.pricer(tree)?;
                let bu = residual_risk_with(&p2, &claim, Side::Buyer)?;
                stats = stats.merge(p2.stats());
                // E^Q[R₁ + R₂] is the same for every martingale measure
                let width = bu.price - w.price;
                let total = &w.residual + &bu.residual;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let mut worst: f64 = 0.0;
                for _ in 0..HEDGE_SAMPLES {
                    let q = sample_measure(tree, &mut rng)?;
                    worst = worst.max((q.expect(&total) - width).abs());
                }
                check = json!({ "width": width, "samples": HEDGE_SAMPLES, "max_deviation": worst });
                sides.push(decomposition_json(tree, &bu));
                decs.push(bu);
            }
            let rows = decs
                .iter()
                .flat_map(|d| {
                    let side = segment_name(&d.side);
                    let name = name.clone();
                    d.residual.values().iter().enumerate().map(move |(leaf, r)| {
                        vec![name.as_str().into(), side.as_str().into(), d.price.into(), leaf.into(), (*r).into()]
                    })
                })
                .collect();
            Ok((json!({ "claim": name, "sides": sides, "width_check": check }), rows, stats))
        })
        .collect();

    let mut claims = Vec::new();
    let mut table = Table {
        columns: vec!["claim", "side", "price", "leaf", "residual"],
        rows: Vec::new(),
    };
    let mut stats = SolverStats::default();
    for r in results {
        let (v, rows, s) = r?;
        claims.push(v);
        table.rows.extend(rows);
        stats = stats.merge(s);
    }
    let mut diagnostics = stats_json(stats);
    diagnostics["seed"] = json!(seed);
    Ok(Output {
        payload: json!({ "claims": claims }),
        diagnostics,
        table,
    })
}

pub fn basisrisk(ctx: &Context) -> Result<Output> {
    let spec = ctx
        .scenario
        .basisrisk
        .as_ref()
        .ok_or_else(|| Error::SchemaViolation("scenario has no basisrisk section".into()))?;
    let model = &spec.model;
    let g = &spec.payoff;
    let mean = q0_expectation(model, g)?;

    let agents: Vec<Value> = spec
        .agents
        .iter()
        .map(|a| {
            Ok(json!({
                "gamma": a.gamma,
                "unconditional": closed_form_price(model, a.gamma, g)?,
                "writer": conditional_price(model, a.gamma, &a.endowment, g)?,
                "buyer": conditional_buyer_price(model, a.gamma, &a.endowment, g)?,
            }))
        })
        .collect::<Result<_>>()?;

    let grid: Vec<(f64, f64)> = ctx
        .scenario
        .task
        .gamma_grid
        .par_iter()
        .map(|&gamma| Ok((gamma, closed_form_price(model, gamma, g)?)))
        .collect::<Result<_>>()?;

    let agreement = match spec.agents.as_slice() {
        [a1, a2] => {
            let (lhs, rhs) = agreement_sides(model, (a1.gamma, &a1.endowment), (a2.gamma, &a2.endowment), g)?;
            json!({ "lhs": lhs, "rhs": rhs, "agreeable": lhs <= rhs })
        }
        _ => Value::Null,
    };

    let profile = match &spec.profile {
        Some(p) => {
            let prof = gamma_profile(&p.law, &p.x1, &p.x2, &ctx.scenario.task.gamma_grid)?;
            json!({
                "points": prof.points,
                "f_zero": prof.f_zero,
                "f_inf": prof.f_inf,
                "monotonicity_breaks": prof.monotonicity_breaks(),
            })
        }
        None => Value::Null,
    };

    let table = Table {
        columns: vec!["gamma", "price"],
        rows: grid.iter().map(|(g, p)| vec![(*g).into(), (*p).into()]).collect(),
    };
    Ok(Output {
        payload: json!({
            "q0_mean": mean,
            "agents": agents,
            "gamma_grid": grid,
            "agreement": agreement,
            "profile": profile,
        }),
        diagnostics: json!({}),
        table,
    })
}
