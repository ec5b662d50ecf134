//! Finite event-tree markets.
//!
//! A [`MarketTree`] holds the filtration, the subjective probabilities and the
//! asset prices. Asset 0 is the numeraire and is identically 1; the remaining
//! `d` assets are traded. Nodes are stored in depth-first preorder with
//! children visited in ascending id, which fixes the normative leaf order used
//! by every [`Claim`].

use std::collections::{HashMap, HashSet};
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope;

pub type NodeId = u64;

pub const MAX_BRANCHING: usize = 16;
pub const MAX_ASSETS: usize = 4;
pub const DEFAULT_REPLICATION_TOL: f64 = 1e-9;

/// One row of a tree description, as found in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default)]
    pub parent: Option<NodeId>,
    /// Probability of reaching this node from its parent. Ignored for the root.
    #[serde(default)]
    pub prob: Option<f64>,
    /// Numeraire first, then the risky assets.
    pub prices: Vec<f64>,
}

impl NodeSpec {
    pub fn root(id: NodeId, prices: Vec<f64>) -> Self {
        NodeSpec {
            id,
            parent: None,
            prob: None,
            prices,
        }
    }

    pub fn child(id: NodeId, parent: NodeId, prob: f64, prices: Vec<f64>) -> Self {
        NodeSpec {
            id,
            parent: Some(parent),
            prob: Some(prob),
            prices,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub time: usize,
    /// Index of the parent in [`MarketTree::nodes`].
    pub parent: Option<usize>,
    /// Child indices, ascending by id.
    pub children: Vec<usize>,
    /// Conditional probability given the parent (1 for the root).
    pub prob: f64,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MarketTree {
    nodes: Vec<TreeNode>,
    horizon: usize,
    num_assets: usize,
    leaves: Vec<usize>,
    leaf_index: Vec<Option<usize>>,
    leaf_span: Vec<(usize, usize)>,
    leaf_probs: Vec<f64>,
    internal: Vec<usize>,
    increments: Vec<Vec<Vec<f64>>>,
    vertices: Vec<Vec<Vec<f64>>>,
    interior: Vec<bool>,
}

/// Validates a node list and builds the tree.
pub fn build_tree(spec: &[NodeSpec]) -> Result<MarketTree> {
    if spec.is_empty() {
        return Err(Error::InvalidTree("no nodes".into()));
    }
    let mut by_id: HashMap<NodeId, usize> = HashMap::new();
    for (i, n) in spec.iter().enumerate() {
        if by_id.insert(n.id, i).is_some() {
            return Err(Error::InvalidTree(format!("duplicate node id {}", n.id)));
        }
    }
    let roots: Vec<&NodeSpec> = spec.iter().filter(|n| n.parent.is_none()).collect();
    if roots.len() != 1 {
        return Err(Error::InvalidTree(format!(
            "expected exactly one root, found {}",
            roots.len()
        )));
    }
    let width = spec[0].prices.len();
    if width < 2 {
        return Err(Error::InvalidTree(
            "price vectors need the numeraire and at least one risky asset".into(),
        ));
    }
    let num_assets = width - 1;
    if num_assets > MAX_ASSETS {
        return Err(Error::InvalidTree(format!(
            "{num_assets} risky assets exceeds the cap of {MAX_ASSETS}"
        )));
    }

    let mut kids: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for n in spec {
        if n.prices.len() != width {
            return Err(Error::InvalidTree(format!(
                "node {} has {} prices, expected {width}",
                n.id,
                n.prices.len()
            )));
        }
        if let Some(&bad) = n.prices.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidTree(format!(
                "node {} has non-finite price {bad}",
                n.id
            )));
        }
        if (n.prices[0] - 1.0).abs() > 1e-12 {
            return Err(Error::NumeraireNotOne {
                node: n.id,
                value: n.prices[0],
            });
        }
        if let Some(p) = n.parent {
            if !by_id.contains_key(&p) {
                return Err(Error::DanglingNode(format!(
                    "node {} references missing parent {p}",
                    n.id
                )));
            }
            match n.prob {
                Some(prob) if prob > 0.0 && prob <= 1.0 && prob.is_finite() => {}
                Some(prob) => return Err(Error::NonPositiveProbability { node: n.id, prob }),
                None => {
                    return Err(Error::InvalidTree(format!(
                        "node {} has no branch probability",
                        n.id
                    )))
                }
            }
            kids.entry(p).or_default().push(n.id);
        }
    }
    for v in kids.values_mut() {
        v.sort_unstable();
    }

    // depth-first preorder, children ascending by id
    let root_id = roots[0].id;
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(spec.len());
    let mut stack: Vec<(NodeId, Option<usize>, usize)> = vec![(root_id, None, 0)];
    while let Some((id, parent, time)) = stack.pop() {
        let s = &spec[by_id[&id]];
        let idx = nodes.len();
        nodes.push(TreeNode {
            id,
            time,
            parent,
            children: Vec::new(),
            prob: if parent.is_some() { s.prob.unwrap() } else { 1.0 },
            prices: s.prices.clone(),
        });
        if let Some(p) = parent {
            nodes[p].children.push(idx);
        }
        if let Some(ch) = kids.get(&id) {
            for &c in ch.iter().rev() {
                stack.push((c, Some(idx), time + 1));
            }
        }
    }
    if nodes.len() != spec.len() {
        let seen: HashSet<NodeId> = nodes.iter().map(|n| n.id).collect();
        let lost: Vec<NodeId> = spec
            .iter()
            .map(|n| n.id)
            .filter(|id| !seen.contains(id))
            .collect();
        return Err(Error::DanglingNode(format!(
            "nodes not reachable from the root: {lost:?}"
        )));
    }

    let horizon = nodes.iter().map(|n| n.time).max().unwrap();
    if horizon == 0 {
        return Err(Error::InvalidTree("tree has a single node".into()));
    }
    for n in &nodes {
        let k = n.children.len();
        if k == 0 && n.time != horizon {
            return Err(Error::InvalidTree(format!(
                "leaf {} at time {} before the horizon {horizon}",
                n.id, n.time
            )));
        }
        if k == 1 {
            return Err(Error::InvalidTree(format!("node {} has a single child", n.id)));
        }
        if k > MAX_BRANCHING {
            return Err(Error::InvalidTree(format!(
                "node {} has {k} children, cap is {MAX_BRANCHING}",
                n.id
            )));
        }
        if k > 0 {
            let sum: f64 = n.children.iter().map(|&c| nodes[c].prob).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::ProbabilitySumMismatch { node: n.id, sum });
            }
        }
    }
    Ok(MarketTree::assemble(nodes, horizon, num_assets))
}

impl MarketTree {
    fn assemble(nodes: Vec<TreeNode>, horizon: usize, num_assets: usize) -> Self {
        let n = nodes.len();
        let mut leaves = Vec::new();
        let mut leaf_index = vec![None; n];
        for (i, node) in nodes.iter().enumerate() {
            if node.children.is_empty() {
                leaf_index[i] = Some(leaves.len());
                leaves.push(i);
            }
        }
        // preorder keeps every subtree's leaves contiguous
        let mut leaf_span = vec![(0, 0); n];
        for i in (0..n).rev() {
            leaf_span[i] = match leaf_index[i] {
                Some(l) => (l, l + 1),
                None => {
                    let ch = &nodes[i].children;
                    (leaf_span[ch[0]].0, leaf_span[*ch.last().unwrap()].1)
                }
            };
        }
        let mut reach = vec![1.0; n];
        for i in 1..n {
            reach[i] = reach[nodes[i].parent.unwrap()] * nodes[i].prob;
        }
        let leaf_probs = leaves.iter().map(|&i| reach[i]).collect();
        let internal: Vec<usize> = (0..n).filter(|&i| leaf_index[i].is_none()).collect();

        let mut increments = vec![Vec::new(); n];
        let mut vertices = vec![Vec::new(); n];
        let mut interior = vec![true; n];
        for &i in &internal {
            let inc: Vec<Vec<f64>> = nodes[i]
                .children
                .iter()
                .map(|&c| {
                    (1..=num_assets)
                        .map(|k| nodes[c].prices[k] - nodes[i].prices[k])
                        .collect()
                })
                .collect();
            vertices[i] = polytope::vertices(&inc);
            interior[i] = polytope::has_interior(&vertices[i]);
            increments[i] = inc;
        }
        MarketTree {
            nodes,
            horizon,
            num_assets,
            leaves,
            leaf_index,
            leaf_span,
            leaf_probs,
            internal,
            increments,
            vertices,
            interior,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &TreeNode {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of risky assets `d`.
    pub fn num_assets(&self) -> usize {
        self.num_assets
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.nodes[idx].children
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        self.leaf_index[idx].is_some()
    }

    /// Node indices of the leaves in leaf order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf position of a terminal node.
    pub fn leaf_position(&self, idx: usize) -> Option<usize> {
        self.leaf_index[idx]
    }

    /// Half-open range of leaf positions below `idx`.
    pub fn leaf_span(&self, idx: usize) -> (usize, usize) {
        self.leaf_span[idx]
    }

    /// Non-terminal node indices in preorder.
    pub fn internal_nodes(&self) -> &[usize] {
        &self.internal
    }

    /// Subjective probability of each leaf.
    pub fn leaf_probabilities(&self) -> &[f64] {
        &self.leaf_probs
    }

    /// Risky-asset increments `S_child - S_node`, one row per child.
    pub fn increments(&self, idx: usize) -> &[Vec<f64>] {
        &self.increments[idx]
    }

    /// Vertices of the one-step martingale polytope at a non-terminal node.
    pub fn polytope_vertices(&self, idx: usize) -> &[Vec<f64>] {
        &self.vertices[idx]
    }

    /// Whether a strictly positive one-step martingale measure exists at `idx`.
    pub fn admits_interior_measure(&self, idx: usize) -> bool {
        self.interior[idx]
    }

    /// First node (preorder) with no equivalent one-step martingale measure.
    pub fn arbitrage_node(&self) -> Option<usize> {
        self.internal.iter().copied().find(|&i| !self.interior[i])
    }

    pub(crate) fn check_no_arbitrage(&self) -> Result<()> {
        match self.arbitrage_node() {
            Some(i) => Err(Error::NoMartingaleMeasure {
                node: self.nodes[i].id,
            }),
            None => Ok(()),
        }
    }

    pub fn check_claim(&self, claim: &Claim) -> Result<()> {
        if claim.len() != self.num_leaves() {
            return Err(Error::ClaimTreeMismatch {
                expected: self.num_leaves(),
                got: claim.len(),
            });
        }
        Ok(())
    }

    /// The elementary gains `1_{node} · (S^k_child - S^k_node)` for every
    /// non-terminal node and risky asset, in (preorder node, asset) order.
    pub fn gains_basis(&self) -> Vec<Claim> {
        let mut out = Vec::with_capacity(self.internal.len() * self.num_assets);
        for &n in &self.internal {
            for k in 0..self.num_assets {
                let mut v = vec![0.0; self.num_leaves()];
                for (c, &child) in self.nodes[n].children.iter().enumerate() {
                    let (lo, hi) = self.leaf_span[child];
                    v[lo..hi].fill(self.increments[n][c][k]);
                }
                out.push(Claim(v));
            }
        }
        out
    }

    /// Expectation of a leaf vector under subjective probabilities.
    pub fn expect(&self, claim: &Claim) -> f64 {
        claim.0.iter().zip(&self.leaf_probs).map(|(x, p)| x * p).sum()
    }
}

/// A terminal payoff: one value per leaf, in leaf order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Claim(Vec<f64>);

impl Claim {
    pub fn new(values: Vec<f64>) -> Self {
        Claim(values)
    }

    pub fn zeros(n: usize) -> Self {
        Claim(vec![0.0; n])
    }

    pub fn constant(n: usize, k: f64) -> Self {
        Claim(vec![k; n])
    }

    /// Indicator of a single leaf position.
    pub fn indicator(n: usize, leaf: usize) -> Self {
        let mut v = vec![0.0; n];
        v[leaf] = 1.0;
        Claim(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        crate::linalg::sup_norm(&self.0)
    }

    pub fn scale(&self, a: f64) -> Claim {
        Claim(self.0.iter().map(|x| a * x).collect())
    }

    pub fn shift(&self, k: f64) -> Claim {
        Claim(self.0.iter().map(|x| x + k).collect())
    }

    /// `Σ_k a_k B_k` for claims of equal length.
    pub fn combine(weights: &[f64], claims: &[Claim]) -> Claim {
        let n = claims.first().map_or(0, Claim::len);
        let mut v = vec![0.0; n];
        for (a, c) in weights.iter().zip(claims) {
            for (vi, ci) in v.iter_mut().zip(&c.0) {
                *vi += a * ci;
            }
        }
        Claim(v)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for Claim {
    fn from(v: Vec<f64>) -> Self {
        Claim(v)
    }
}

impl Add for &Claim {
    type Output = Claim;
    fn add(self, rhs: &Claim) -> Claim {
        Claim(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Claim {
    type Output = Claim;
    fn sub(self, rhs: &Claim) -> Claim {
        Claim(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Claim {
    type Output = Claim;
    fn neg(self) -> Claim {
        self.scale(-1.0)
    }
}

impl Mul<&Claim> for f64 {
    type Output = Claim;
    fn mul(self, rhs: &Claim) -> Claim {
        rhs.scale(self)
    }
}

/// Risky-asset positions held over the period following each non-terminal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingStrategy {
    /// Indexed like [`MarketTree::nodes`]; empty at leaves.
    positions: Vec<Vec<f64>>,
}

impl TradingStrategy {
    pub fn zeros(tree: &MarketTree) -> Self {
        let positions = (0..tree.len())
            .map(|i| {
                if tree.is_leaf(i) {
                    Vec::new()
                } else {
                    vec![0.0; tree.num_assets()]
                }
            })
            .collect();
        TradingStrategy { positions }
    }

    /// Builds a strategy from per-node positions; leaves must be empty.
    pub fn from_positions(tree: &MarketTree, positions: Vec<Vec<f64>>) -> Result<Self> {
        let s = TradingStrategy { positions };
        s.check(tree)?;
        Ok(s)
    }

    /// Strategy holding `position` at every node of the given time step.
    pub fn constant_at_time(tree: &MarketTree, time: usize, position: &[f64]) -> Self {
        let mut s = TradingStrategy::zeros(tree);
        for &n in tree.internal_nodes() {
            if tree.node(n).time == time {
                s.positions[n] = position.to_vec();
            }
        }
        s
    }

    pub fn position(&self, node: usize) -> &[f64] {
        &self.positions[node]
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn set_position(&mut self, node: usize, position: Vec<f64>) {
        self.positions[node] = position;
    }

    fn check(&self, tree: &MarketTree) -> Result<()> {
        if self.positions.len() != tree.len() {
            return Err(Error::StrategyTreeMismatch(format!(
                "{} node entries for a tree of {} nodes",
                self.positions.len(),
                tree.len()
            )));
        }
        for (i, p) in self.positions.iter().enumerate() {
            let expected = if tree.is_leaf(i) { 0 } else { tree.num_assets() };
            if p.len() != expected {
                return Err(Error::StrategyTreeMismatch(format!(
                    "node {} has {} positions, expected {expected}",
                    tree.node(i).id,
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::StrategyTreeMismatch(format!(
                    "node {} has a non-finite position",
                    tree.node(i).id
                )));
            }
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &TradingStrategy, b: f64) -> TradingStrategy {
        let positions = self
            .positions
            .iter()
            .zip(&other.positions)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        TradingStrategy { positions }
    }

    /// Cumulative gains at every node (0 at the root).
    pub fn gains_process(&self, tree: &MarketTree) -> Result<Vec<f64>> {
        self.check(tree)?;
        let mut g = vec![0.0; tree.len()];
        for &n in tree.internal_nodes() {
            for (c, &child) in tree.children(n).iter().enumerate() {
                g[child] = g[n] + crate::linalg::dot(&self.positions[n], &tree.increments(n)[c]);
            }
        }
        Ok(g)
    }
}

/// Terminal gains `Σ_path θ_node · (S_child − S_node)` at every leaf.
pub fn terminal_gains(tree: &MarketTree, strategy: &TradingStrategy) -> Result<Claim> {
    let g = strategy.gains_process(tree)?;
    Ok(Claim(tree.leaves().iter().map(|&l| g[l]).collect()))
}

/// Least-squares replication of `claim` by cash plus traded gains.
///
/// Returns the cost and the strategy when the max-norm residual is within
/// `tol · (1 + ‖claim‖∞)`, and `None` otherwise.
pub fn replicate(
    tree: &MarketTree,
    claim: &Claim,
    tol: f64,
) -> Result<Option<(f64, TradingStrategy)>> {
    tree.check_claim(claim)?;
    let basis = tree.gains_basis();
    let rows = tree.num_leaves();
    let cols = 1 + basis.len();
    let design = DMatrix::from_fn(rows, cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            basis[c - 1].0[r]
        }
    });
    let rhs = DVector::from_column_slice(claim.values());
    let svd = design.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    let coef = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::InvalidTree(e.to_string()))?;
    let fitted = &design * &coef;
    let resid = (&rhs - fitted).amax();
    if resid > tol * (1.0 + claim.sup_norm()) {
        return Ok(None);
    }
    let mut strategy = TradingStrategy::zeros(tree);
    let d = tree.num_assets();
    for (j, &n) in tree.internal_nodes().iter().enumerate() {
        strategy.positions[n] = (0..d).map(|k| coef[1 + j * d + k]).collect();
    }
    Ok(Some((coef[0], strategy)))
}

/// Residuals of the unweighted least-squares projection of each claim onto
/// cash plus traded gains, one vector per claim.
pub(crate) fn replication_residuals(tree: &MarketTree, claims: &[Claim]) -> Result<Vec<Vec<f64>>> {
    let basis = tree.gains_basis();
    let rows = tree.num_leaves();
    let cols = 1 + basis.len();
    let design = DMatrix::from_fn(rows, cols, |r, c| if c == 0 { 1.0 } else { basis[c - 1].0[r] });
    let svd = design.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    claims
        .iter()
        .map(|claim| {
            tree.check_claim(claim)?;
            let rhs = DVector::from_column_slice(claim.values());
            let coef = svd
                .solve(&rhs, eps)
                .map_err(|e| Error::InvalidTree(e.to_string()))?;
            Ok((&rhs - &design * coef).iter().copied().collect())
        })
        .collect()
}

pub fn is_replicable(tree: &MarketTree, claim: &Claim, tol: f64) -> Result<bool> {
    Ok(replicate(tree, claim, tol)?.is_some())
}

/// Whether `c1 − c2` is replicable.
pub fn risk_equivalent(tree: &MarketTree, c1: &Claim, c2: &Claim, tol: f64) -> Result<bool> {
    tree.check_claim(c1)?;
    tree.check_claim(c2)?;
    is_replicable(tree, &(c1 - c2), tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b2() -> MarketTree {
        build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 0.5, vec![1.0, 0.9]),
            NodeSpec::child(2, 0, 0.5, vec![1.0, 1.2]),
        ])
        .unwrap()
    }

    fn t1() -> MarketTree {
        build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 1.0 / 3.0, vec![1.0, 0.8]),
            NodeSpec::child(2, 0, 1.0 / 3.0, vec![1.0, 1.0]),
            NodeSpec::child(3, 0, 1.0 / 3.0, vec![1.0, 1.3]),
        ])
        .unwrap()
    }

    #[test]
    fn builds_minimal_trees() {
        assert_eq!(b2().len(), 3);
        let t = t1();
        assert_eq!(t.len(), 4);
        assert_eq!(t.num_leaves(), 3);
        assert_eq!(t.horizon(), 1);
        assert!(t.arbitrage_node().is_none());
    }

    #[test]
    fn rejects_bad_probabilities() {
        let err = build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 0.5, vec![1.0, 0.9]),
            NodeSpec::child(2, 0, 0.6, vec![1.0, 1.2]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::ProbabilitySumMismatch { node: 0, .. }));

        let err = build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 0.0, vec![1.0, 0.9]),
            NodeSpec::child(2, 0, 1.0, vec![1.0, 1.2]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveProbability { node: 1, .. }));
    }

    #[test]
    fn rejects_dangling_and_numeraire() {
        let err = build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 0.5, vec![1.0, 0.9]),
            NodeSpec::child(2, 7, 0.5, vec![1.0, 1.2]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DanglingNode(_)));

        let err = build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 0.5, vec![1.05, 0.9]),
            NodeSpec::child(2, 0, 0.5, vec![1.0, 1.2]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::NumeraireNotOne { node: 1, .. }));
    }

    #[test]
    fn rejects_cycles_and_uneven_depth() {
        // 1 and 2 point at each other; neither is reachable from the root
        let err = build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 2, 1.0, vec![1.0, 0.9]),
            NodeSpec::child(2, 1, 1.0, vec![1.0, 1.2]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DanglingNode(_)));

        let err = build_tree(&[
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(1, 0, 0.5, vec![1.0, 0.9]),
            NodeSpec::child(2, 0, 0.5, vec![1.0, 1.2]),
            NodeSpec::child(3, 2, 0.5, vec![1.0, 1.0]),
            NodeSpec::child(4, 2, 0.5, vec![1.0, 1.4]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidTree(_)));
    }

    #[test]
    fn leaf_order_is_depth_first_by_id() {
        // ids listed out of order; leaves must come out 3, 4, 5, 6
        let t = build_tree(&[
            NodeSpec::child(6, 2, 0.5, vec![1.0, 1.5]),
            NodeSpec::child(2, 0, 0.5, vec![1.0, 1.2]),
            NodeSpec::child(4, 1, 0.5, vec![1.0, 1.0]),
            NodeSpec::root(0, vec![1.0, 1.0]),
            NodeSpec::child(3, 1, 0.5, vec![1.0, 0.7]),
            NodeSpec::child(1, 0, 0.5, vec![1.0, 0.9]),
            NodeSpec::child(5, 2, 0.5, vec![1.0, 1.0]),
        ])
        .unwrap();
        let ids: Vec<NodeId> = t.leaves().iter().map(|&l| t.node(l).id).collect();
        assert_eq!(ids, vec![3, 4, 5, 6]);
        assert_eq!(t.leaf_span(t.root()), (0, 4));
    }

    #[test]
    fn gains_of_simple_strategies() {
        let t = t1();
        let zero = TradingStrategy::zeros(&t);
        assert_eq!(terminal_gains(&t, &zero).unwrap(), Claim::zeros(3));

        let one = TradingStrategy::constant_at_time(&t, 0, &[1.0]);
        let g = terminal_gains(&t, &one).unwrap();
        for (a, b) in g.values().iter().zip([-0.2, 0.0, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn strategy_shape_is_checked() {
        let t = t1();
        let bad = TradingStrategy::from_positions(&t, vec![vec![1.0, 2.0], vec![], vec![], vec![]]);
        assert!(matches!(bad, Err(Error::StrategyTreeMismatch(_))));
    }

    #[test]
    fn replication_on_b2_and_t1() {
        let (cost, theta) = replicate(&b2(), &Claim::new(vec![0.0, 1.0]), 1e-9)
            .unwrap()
            .unwrap();
        assert!((cost - 1.0 / 3.0).abs() < 1e-12);
        assert!((theta.position(0)[0] - 1.0 / 0.3).abs() < 1e-10);

        let (cost, theta) = replicate(&t1(), &Claim::constant(3, 5.0), 1e-9)
            .unwrap()
            .unwrap();
        assert!((cost - 5.0).abs() < 1e-12);
        assert!(theta.position(0)[0].abs() < 1e-12);

        assert!(replicate(&t1(), &Claim::indicator(3, 2), 1e-9)
            .unwrap()
            .is_none());
    }

    #[test]
    fn risk_equivalence_examples() {
        let t = t1();
        let b = Claim::new(vec![0.3, -1.0, 2.0]);
        assert!(risk_equivalent(&t, &b, &b, 1e-9).unwrap());
        assert!(risk_equivalent(&t, &b, &b.shift(3.0), 1e-9).unwrap());
        assert!(!risk_equivalent(&t, &Claim::indicator(3, 2), &Claim::zeros(3), 1e-9).unwrap());
        assert!(matches!(
            risk_equivalent(&t, &b, &Claim::zeros(2), 1e-9),
            Err(Error::ClaimTreeMismatch { .. })
        ));
    }
}
