//! Martingale measures, entropic tilts and penalty functions on a tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::polytope;
use crate::market::{Claim, MarketTree};
use crate::solver::{self, NewtonOptions};

/// Node-wise conditional probabilities on a tree, with derived leaf masses.
///
/// Values built through [`MartingaleMeasure::from_conditionals`] or by the
/// solvers satisfy the martingale constraint; the unchecked constructor
/// exists so that arbitrary measures can be tested with [`verify_martingale`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleMeasure {
    cond: Vec<Vec<f64>>,
    leaf: Vec<f64>,
}

impl MartingaleMeasure {
    /// Validated constructor: probabilities, sums and the martingale property at 1e-10.
    pub fn from_conditionals(tree: &MarketTree, cond: Vec<Vec<f64>>) -> Result<Self> {
        let q = Self::from_conditionals_unchecked(tree, cond)?;
        if !verify_martingale(tree, &q, 1e-10) {
            return Err(Error::NotAMartingaleMeasure);
        }
        Ok(q)
    }

    /// Only checks the shape.
    pub fn from_conditionals_unchecked(tree: &MarketTree, cond: Vec<Vec<f64>>) -> Result<Self> {
        if cond.len() != tree.len() {
            return Err(Error::DimensionMismatch {
                expected: tree.len(),
                got: cond.len(),
            });
        }
        for (i, c) in cond.iter().enumerate() {
            let k = tree.children(i).len();
            if c.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: c.len(),
                });
            }
        }
        let leaf = leaf_masses(tree, &cond);
        Ok(MartingaleMeasure { cond, leaf })
    }

    /// Builds conditionals from leaf masses. Conditionals below null nodes
    /// copy the subjective ones.
    pub fn from_leaf_probabilities(tree: &MarketTree, leaf: &[f64]) -> Result<Self> {
        if leaf.len() != tree.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: tree.num_leaves(),
                got: leaf.len(),
            });
        }
        let mass = |i: usize| -> f64 {
            let (lo, hi) = tree.leaf_span(i);
            leaf[lo..hi].iter().sum()
        };
        let cond = (0..tree.len())
            .map(|i| {
                let total = mass(i);
                tree.children(i)
                    .iter()
                    .map(|&c| {
                        if total > 0.0 {
                            mass(c) / total
                        } else {
                            tree.node(c).prob
                        }
                    })
                    .collect()
            })
            .collect();
        Self::from_conditionals_unchecked(tree, cond)
    }

    /// Node-wise convex combinations of the one-step polytope vertices.
    /// `weights[n]` is used at the n-th non-terminal node (in
    /// [`MarketTree::internal_nodes`] order) and is normalized; it must be
    /// nonnegative with a positive sum and one entry per vertex.
    pub fn from_vertex_weights(tree: &MarketTree, weights: &[Vec<f64>]) -> Result<Self> {
        let internal = tree.internal_nodes();
        if weights.len() != internal.len() {
            return Err(Error::DimensionMismatch {
                expected: internal.len(),
                got: weights.len(),
            });
        }
        let mut cond = vec![Vec::new(); tree.len()];
        for (&n, w) in internal.iter().zip(weights) {
            let verts = tree.polytope_vertices(n);
            if w.len() != verts.len() {
                return Err(Error::DimensionMismatch {
                    expected: verts.len(),
                    got: w.len(),
                });
            }
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| !(*x >= 0.0)) || !(total > 0.0 && total.is_finite()) {
                return Err(Error::InvalidModel("vertex weights must be nonnegative with a positive sum".into()));
            }
            let k = tree.children(n).len();
            cond[n] = (0..k)
                .map(|c| verts.iter().zip(w).map(|(v, x)| v[c] * x).sum::<f64>() / total)
                .collect();
        }
        Self::from_conditionals(tree, cond)
    }

    /// Vertex barycenter at every node; equivalent whenever the tree admits
    /// an equivalent martingale measure.
    pub fn barycentric(tree: &MarketTree) -> Result<Self> {
        if let Some(n) = tree.arbitrage_node() {
            return Err(Error::NoMartingaleMeasure { node: tree.node(n).id });
        }
        let mut cond = vec![Vec::new(); tree.len()];
        for &n in tree.internal_nodes() {
            cond[n] = polytope::barycenter(tree.polytope_vertices(n));
        }
        Self::from_conditionals(tree, cond)
    }

    /// The subjective measure `P` in conditional form.
    pub fn physical(tree: &MarketTree) -> Self {
        let cond = (0..tree.len())
            .map(|i| tree.children(i).iter().map(|&c| tree.node(c).prob).collect())
            .collect();
        MartingaleMeasure {
            cond,
            leaf: tree.leaf_probabilities().to_vec(),
        }
    }

    pub fn conditional(&self, node: usize) -> &[f64] {
        &self.cond[node]
    }

    pub fn conditionals(&self) -> &[Vec<f64>] {
        &self.cond
    }

    /// Leaf masses in leaf order.
    pub fn leaf_probabilities(&self) -> &[f64] {
        &self.leaf
    }

    pub fn expect(&self, claim: &Claim) -> f64 {
        linalg::dot(&self.leaf, claim.values())
    }

    /// Mass of every node.
    pub fn node_probabilities(&self, tree: &MarketTree) -> Vec<f64> {
        let mut m = vec![1.0; tree.len()];
        for &n in tree.internal_nodes() {
            for (j, &c) in tree.children(n).iter().enumerate() {
                m[c] = m[n] * self.cond[n][j];
            }
        }
        m
    }

    /// True when every conditional probability is strictly positive.
    pub fn is_equivalent(&self) -> bool {
        self.cond.iter().flatten().all(|&q| q > 0.0)
    }

    /// Leafwise mixture `λ·self + (1−λ)·other`.
    pub fn mix(&self, tree: &MarketTree, other: &MartingaleMeasure, lambda: f64) -> Result<Self> {
        let leaf: Vec<f64> = self
            .leaf
            .iter()
            .zip(&other.leaf)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Self::from_leaf_probabilities(tree, &leaf)
    }
}

fn leaf_masses(tree: &MarketTree, cond: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![1.0; tree.len()];
    for &n in tree.internal_nodes() {
        for (j, &c) in tree.children(n).iter().enumerate() {
            m[c] = m[n] * cond[n][j];
        }
    }
    tree.leaves().iter().map(|&l| m[l]).collect()
}

/// Leaf measure with density proportional to `exp(C)` against `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedMeasure {
    probs: Vec<f64>,
}

impl TiltedMeasure {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn expect(&self, claim: &Claim) -> f64 {
        linalg::dot(&self.probs, claim.values())
    }
}

pub fn tilt(tree: &MarketTree, c: &Claim) -> Result<TiltedMeasure> {
    tree.check_claim(c)?;
    let m = c.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = c
        .values()
        .iter()
        .zip(tree.leaf_probabilities())
        .map(|(x, p)| p * (x - m).exp())
        .collect();
    let s: f64 = w.iter().sum();
    Ok(TiltedMeasure {
        probs: w.into_iter().map(|x| x / s).collect(),
    })
}

/// `H(q|p) = Σ q ln(q/p)` with `0 ln 0 = 0`; infinite when `q` charges a `p`-null leaf.
pub fn relative_entropy(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut h = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            h += qi * (qi / pi).ln();
        }
    }
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub measure: MartingaleMeasure,
    /// `H(Q^(C) | P_C)`.
    pub entropy: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// The martingale measure of least relative entropy with respect to `P_C`.
/// `C ≡ 0` gives the minimal-entropy martingale measure `Q⁰`.
pub fn minimal_entropy_measure(tree: &MarketTree, c: &Claim, tol: f64) -> Result<EntropyReport> {
    minimal_entropy_measure_with(
        tree,
        c,
        &NewtonOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn minimal_entropy_measure_with(
    tree: &MarketTree,
    c: &Claim,
    opts: &NewtonOptions,
) -> Result<EntropyReport> {
    tree.check_claim(c)?;
    let pass = solver::backward(tree, c.values(), opts, None)?;
    let measure = MartingaleMeasure::from_conditionals_unchecked(tree, pass.cond)?;
    debug_assert!(measure.is_equivalent());
    let pc = tilt(tree, c)?;
    let entropy = relative_entropy(measure.leaf_probabilities(), pc.probabilities())?;
    Ok(EntropyReport {
        measure,
        entropy,
        iterations: pass.iterations,
        grad_norm: pass.grad_norm,
    })
}

/// `h_C(q) = H(q|P_C) − H(Q^(C)|P_C)`.
pub fn penalty(tree: &MarketTree, q: &MartingaleMeasure, c: &Claim) -> Result<f64> {
    let best = minimal_entropy_measure(tree, c, NewtonOptions::default().tol)?;
    let pc = tilt(tree, c)?;
    let h = relative_entropy(q.leaf_probabilities(), pc.probabilities())?;
    Ok((h - best.entropy).max(0.0))
}

/// Infimum and supremum of `E^Q[claim]` over all martingale measures
/// (the closed polytope), by backward recursion over nodal vertices.
pub fn price_bounds(tree: &MarketTree, claim: &Claim) -> Result<(f64, f64)> {
    tree.check_claim(claim)?;
    if let Some(&bad) = tree
        .internal_nodes()
        .iter()
        .find(|&&n| tree.polytope_vertices(n).is_empty())
    {
        return Err(Error::NoMartingaleMeasure {
            node: tree.node(bad).id,
        });
    }
    let n = tree.len();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        lo[leaf] = claim.values()[pos];
        hi[leaf] = claim.values()[pos];
    }
    for &node in tree.internal_nodes().iter().rev() {
        let ch = tree.children(node);
        let (mut best_lo, mut best_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in tree.polytope_vertices(node) {
            let l: f64 = v.iter().zip(ch).map(|(q, &c)| q * lo[c]).sum();
            let h: f64 = v.iter().zip(ch).map(|(q, &c)| q * hi[c]).sum();
            best_lo = best_lo.min(l);
            best_hi = best_hi.max(h);
        }
        lo[node] = best_lo;
        hi[node] = best_hi;
    }
    Ok((lo[0], hi[0]))
}

/// Checks probabilities, sums and the one-step martingale property at `tol`.
pub fn verify_martingale(tree: &MarketTree, q: &MartingaleMeasure, tol: f64) -> bool {
    if q.cond.len() != tree.len() {
        return false;
    }
    tree.internal_nodes().iter().all(|&n| {
        let c = &q.cond[n];
        if c.len() != tree.children(n).len() || c.iter().any(|&x| !(x >= -tol)) {
            return false;
        }
        if (c.iter().sum::<f64>() - 1.0).abs() > tol.max(1e-12) {
            return false;
        }
        let inc = tree.increments(n);
        (0..tree.num_assets()).all(|k| {
            let drift: f64 = c.iter().zip(inc).map(|(w, ds)| w * ds[k]).sum();
            drift.abs() <= tol
        })
    })
}
