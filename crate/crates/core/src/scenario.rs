//! Scenario documents (JSON).
//!
//! ```json
//! {
//!   "tree":   [{"id": 0, "prices": [1, 1]},
//!              {"id": 1, "parent": 0, "prob": 0.5, "prices": [1, 0.9]}, ...],
//!   "claims": {"B": [0, 1], "E": [1, 0]},
//!   "agents": [{"gamma": 1.0, "endowment": "E"}, {"gamma": 2.0}],
//!   "task":   {"claims": ["B"], "gamma_grid": [...], "eps_grid": [...]},
//!   "solver": {"tol": 1e-12, "max_iter": 200, "replication_tol": 1e-9},
//!   "basisrisk": {...}
//! }
//! ```
//!
//! Claim values are listed in leaf order: depth-first, children by ascending
//! id. An agent without `endowment` holds nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agreement::AgentProfile;
use crate::basisrisk::{BasisRiskModel, PayoffFn};
use crate::error::{Error, Result};
use crate::market::{build_tree, Claim, MarketTree, NodeSpec, DEFAULT_REPLICATION_TOL};
use crate::quadrature::GaussianLaw;
use crate::solver::NewtonOptions;

pub const DEFAULT_GAMMA_GRID: [f64; 7] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const DEFAULT_EPS_GRID: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    gamma: f64,
    #[serde(default)]
    endowment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    /// Claims the command acts on, in order; defaults to every named claim
    /// not used as an endowment.
    #[serde(default)]
    pub claims: Vec<String>,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    /// Expansion point for `expand`, one entry per claim (zero by default).
    #[serde(default)]
    pub at: Vec<f64>,
    /// Direction for `expand`, one entry per claim (all ones by default).
    #[serde(default)]
    pub direction: Vec<f64>,
    /// Newton starting point for `equilibrium`.
    #[serde(default)]
    pub start: Vec<f64>,
}

fn default_gamma_grid() -> Vec<f64> {
    DEFAULT_GAMMA_GRID.to_vec()
}

fn default_eps_grid() -> Vec<f64> {
    DEFAULT_EPS_GRID.to_vec()
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            claims: Vec::new(),
            gamma_grid: default_gamma_grid(),
            eps_grid: default_eps_grid(),
            at: Vec::new(),
            direction: Vec::new(),
            start: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    /// Nodal Newton gradient tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub replication_tol: f64,
    /// Gradient tolerance of the equilibrium solver.
    pub equilibrium_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        let n = NewtonOptions::default();
        SolverParams {
            tol: n.tol,
            max_iter: n.max_iter,
            replication_tol: DEFAULT_REPLICATION_TOL,
            equilibrium_tol: crate::equilibrium::DEFAULT_EQUILIBRIUM_TOL,
        }
    }
}

impl SolverParams {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisRiskAgent {
    pub gamma: f64,
    #[serde(default = "zero_payoff")]
    pub endowment: PayoffFn,
}

fn zero_payoff() -> PayoffFn {
    PayoffFn::constant(0.0).expect("finite")
}

/// Pair of strictly positive variables for the risk-aversion profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default = "standard_normal")]
    pub law: GaussianLaw,
    pub x1: PayoffFn,
    pub x2: PayoffFn,
}

fn standard_normal() -> GaussianLaw {
    GaussianLaw {
        mean: 0.0,
        variance: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisRiskSpec {
    pub model: BasisRiskModel,
    pub payoff: PayoffFn,
    /// One agent prices the payoff; two agents are also checked for agreement.
    pub agents: Vec<BasisRiskAgent>,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    tree: Vec<NodeSpec>,
    #[serde(default)]
    claims: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    agents: Vec<AgentDoc>,
    #[serde(default)]
    task: TaskParams,
    #[serde(default)]
    solver: SolverParams,
    #[serde(default)]
    basisrisk: Option<BasisRiskSpec>,
}

/// A validated scenario. `tree` is absent only for pure basis-risk documents.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub tree: Option<MarketTree>,
    pub claims: BTreeMap<String, Claim>,
    pub agents: Vec<AgentProfile>,
    pub task: TaskParams,
    pub solver: SolverParams,
    pub basisrisk: Option<BasisRiskSpec>,
}

impl Scenario {
    pub fn tree(&self) -> Result<&MarketTree> {
        self.tree
            .as_ref()
            .ok_or_else(|| Error::SchemaViolation("scenario has no tree".into()))
    }

    pub fn claim(&self, name: &str) -> Result<&Claim> {
        self.claims
            .get(name)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown claim '{name}'")))
    }

    /// The task's claims in order.
    pub fn task_claims(&self) -> Result<Vec<(String, Claim)>> {
        self.task
            .claims
            .iter()
            .map(|n| Ok((n.clone(), self.claim(n)?.clone())))
            .collect()
    }

    pub fn agent(&self, i: usize) -> Result<&AgentProfile> {
        self.agents.get(i).ok_or_else(|| {
            Error::SchemaViolation(format!("command needs {} agent(s), scenario has {}", i + 1, self.agents.len()))
        })
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::SchemaViolation(e.to_string()),
        _ => Error::Parse(e.to_string()),
    })?;
    if doc.tree.is_empty() && doc.basisrisk.is_none() {
        return Err(Error::SchemaViolation("scenario needs a tree or a basisrisk section".into()));
    }
    let tree = if doc.tree.is_empty() {
        None
    } else {
        let t = build_tree(&doc.tree)?;
        t.check_no_arbitrage()?;
        Some(t)
    };

    let mut claims = BTreeMap::new();
    if let Some(t) = &tree {
        for (name, values) in doc.claims {
            if values.len() != t.num_leaves() {
                return Err(Error::SchemaViolation(format!(
                    "claim '{name}' has {} values, tree has {} leaves",
                    values.len(),
                    t.num_leaves()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::SchemaViolation(format!("claim '{name}' has non-finite values")));
            }
            claims.insert(name, Claim::new(values));
        }
    } else if !doc.claims.is_empty() || !doc.agents.is_empty() {
        return Err(Error::SchemaViolation("claims and agents need a tree".into()));
    }

    if doc.agents.len() > 2 {
        return Err(Error::SchemaViolation(format!("at most two agents, got {}", doc.agents.len())));
    }
    let n = tree.as_ref().map_or(0, |t| t.num_leaves());
    let mut endowments = Vec::new();
    let agents = doc
        .agents
        .iter()
        .map(|a| {
            let e = match &a.endowment {
                Some(name) => {
                    endowments.push(name.clone());
                    claims
                        .get(name)
                        .cloned()
                        .ok_or_else(|| Error::SchemaViolation(format!("endowment names unknown claim '{name}'")))?
                }
                None => Claim::zeros(n),
            };
            AgentProfile::new(a.gamma, e)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut task = doc.task;
    if task.claims.is_empty() {
        task.claims = claims.keys().filter(|k| !endowments.contains(k)).cloned().collect();
    }
    for name in &task.claims {
        if !claims.contains_key(name) {
            return Err(Error::SchemaViolation(format!("task names unknown claim '{name}'")));
        }
    }
    for (label, v, len) in [
        ("at", &task.at, task.claims.len()),
        ("direction", &task.direction, task.claims.len()),
        ("start", &task.start, task.claims.len()),
    ] {
        if !v.is_empty() && v.len() != len {
            return Err(Error::SchemaViolation(format!("task.{label} has {} entries for {len} claims", v.len())));
        }
    }
    if task.gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::SchemaViolation("gamma_grid entries must be positive".into()));
    }
    if task.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::SchemaViolation("eps_grid entries must be positive".into()));
    }
    let s = doc.solver;
    if !(s.tol > 0.0 && s.replication_tol > 0.0 && s.equilibrium_tol > 0.0) || s.max_iter == 0 {
        return Err(Error::SchemaViolation("solver tolerances and max_iter must be positive".into()));
    }

    if let Some(br) = &doc.basisrisk {
        br.model.validate()?;
        if br.agents.is_empty() || br.agents.len() > 2 {
            return Err(Error::SchemaViolation("basisrisk needs one or two agents".into()));
        }
        for a in &br.agents {
            crate::pricing::check_gamma(a.gamma)?;
        }
    }

    Ok(Scenario {
        tree,
        claims,
        agents,
        task,
        solver: s,
        basisrisk: doc.basisrisk,
    })
}
