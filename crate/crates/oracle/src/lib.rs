//! Brute-force reference computations for testing `entropic-core`.
//!
//! Nothing here calls the engines' solvers: trees are read only through
//! their raw node data (parents, probabilities, prices), and every quantity
//! is obtained by grid search, golden-section search or plain differencing.
//! Each function documents on which side of the exact value its result lies.

use entropic_core::{Claim, MarketTree};
use thiserror::Error;

pub mod fixtures;

/// Upper limit on the number of objective evaluations a grid may request.
pub const MAX_GRID_POINTS: f64 = 1e8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid has {0:e} points, above the 1e8 limit")]
    GridTooLarge(f64),
    #[error("unsupported input: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// One grid coordinate: `n + 1` equally spaced points on `[lo, hi]` with
/// `n = round((hi − lo)/step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Axis { lo, hi, step }
    }

    fn intervals(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.hi >= self.lo && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(OracleError::Unsupported(format!("bad axis {self:?}")));
        }
        let n = ((self.hi - self.lo) / self.step).round();
        if n > MAX_GRID_POINTS {
            return Err(OracleError::GridTooLarge(n));
        }
        Ok(n as usize)
    }

    fn count(&self) -> Result<f64> {
        Ok(self.intervals()? as f64 + 1.0)
    }

    /// Grid points. Point `i` is `lo + (hi − lo)·(i/n)`, so a grid whose
    /// step divides another's contains it exactly.
    pub fn points(&self) -> Result<Vec<f64>> {
        let n = self.intervals()?;
        if n == 0 {
            return Ok(vec![self.lo]);
        }
        Ok((0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * (i as f64 / n as f64))
            .collect())
    }
}

/// Axes for the free coordinates of a search. A single axis is reused for
/// every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Self {
        GridSpec {
            axes: vec![Axis::new(lo, hi, step)],
        }
    }

    /// `[0, 1]` in every coordinate, for probability parametrizations.
    pub fn unit(step: f64) -> Self {
        Self::uniform(0.0, 1.0, step)
    }

    fn axis(&self, k: usize) -> Result<Axis> {
        match self.axes.len() {
            0 => Err(OracleError::Unsupported("grid has no axes".into())),
            1 => Ok(self.axes[0]),
            _ => self
                .axes
                .get(k)
                .copied()
                .ok_or_else(|| OracleError::Unsupported(format!("grid has no axis {k}"))),
        }
    }

    fn size(&self, dims: usize) -> Result<f64> {
        (0..dims).try_fold(1.0, |acc, k| Ok(acc * self.axis(k)?.count()?))
    }

    /// Cartesian product of the first `dims` axes.
    fn product(&self, dims: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new()];
        for k in 0..dims {
            let pts = self.axis(k)?.points()?;
            out = out
                .into_iter()
                .flat_map(|p| {
                    pts.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

fn guard(points: f64) -> Result<()> {
    if points > MAX_GRID_POINTS {
        Err(OracleError::GridTooLarge(points))
    } else {
        Ok(())
    }
}

/// Risky-asset moves from node `n` to each child, read from raw prices.
fn moves(tree: &MarketTree, n: usize) -> Vec<Vec<f64>> {
    let here = &tree.node(n).prices;
    tree.node(n)
        .children
        .iter()
        .map(|&c| {
            let there = &tree.node(c).prices;
            (1..here.len()).map(|k| there[k] - here[k]).collect()
        })
        .collect()
}

fn leaf_values(tree: &MarketTree, claim: &Claim) -> Result<Vec<f64>> {
    let n = tree.nodes().iter().filter(|x| x.children.is_empty()).count();
    if claim.len() != n {
        return Err(OracleError::Unsupported(format!("claim has {} values for {n} leaves", claim.len())));
    }
    // nodes are stored in depth-first order, so leaves appear in leaf order
    let mut v = vec![0.0; tree.len()];
    let mut it = claim.values().iter();
    for (i, node) in tree.nodes().iter().enumerate() {
        if node.children.is_empty() {
            v[i] = *it.next().expect("counted");
        }
    }
    Ok(v)
}

/// Affine parametrization `q = base + Σ t_j·dir_j` of the one-step
/// martingale constraints `Σq = 1`, `Σ q·ΔS = 0`, with `t` the free
/// probabilities after Gauss–Jordan elimination.
struct Slice {
    free: Vec<usize>,
    base: Vec<f64>,
    dirs: Vec<Vec<f64>>,
}

fn martingale_slice(dx: &[Vec<f64>]) -> Slice {
    let k = dx.len();
    let d = dx[0].len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    rows.push(vec![1.0; k + 1]);
    for a in 0..d {
        let mut r: Vec<f64> = dx.iter().map(|x| x[a]).collect();
        r.push(0.0);
        rows.push(r);
    }
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..k {
        if r == rows.len() {
            break;
        }
        let (best, val) = (r..rows.len())
            .map(|i| (i, rows[i][c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val < 1e-12 {
            continue;
        }
        rows.swap(r, best);
        let p = rows[r][c];
        for x in rows[r].iter_mut() {
            *x /= p;
        }
        for i in 0..rows.len() {
            if i != r {
                let f = rows[i][c];
                if f != 0.0 {
                    for j in 0..=k {
                        rows[i][j] -= f * rows[r][j];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..k).filter(|c| !pivots.contains(c)).collect();
    let mut base = vec![0.0; k];
    for (i, &p) in pivots.iter().enumerate() {
        base[p] = rows[i][k];
    }
    let dirs = free
        .iter()
        .map(|&f| {
            let mut v = vec![0.0; k];
            v[f] = 1.0;
            for (i, &p) in pivots.iter().enumerate() {
                v[p] = -rows[i][f];
            }
            v
        })
        .collect();
    Slice { free, base, dirs }
}

/// `Σ q_j (v_j − ln(q_j/p_j))`, with `0·ln 0 = 0`.
fn entropy_objective(q: &[f64], p: &[f64], v: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .zip(v)
        .map(|((&q, &p), &v)| if q > 0.0 { q * (v - (q / p).ln()) } else { 0.0 })
        .sum()
}

/// Grid lower bound of `sup_Q E^Q[C] − H(Q|P)` over martingale measures,
/// by backward induction with a grid maximization at every node.
pub fn grid_entropy_value(tree: &MarketTree, c: &Claim, grid: &GridSpec) -> Result<f64> {
    let mut v = leaf_values(tree, c)?;
    let internal: Vec<usize> = (0..tree.len()).filter(|&i| !tree.node(i).children.is_empty()).collect();
    let mut total = 0.0;
    let mut slices = Vec::new();
    for &n in &internal {
        let s = martingale_slice(&moves(tree, n));
        if s.free.len() > 2 {
            return Err(OracleError::Unsupported(format!(
                "node {} has {} free polytope coordinates",
                tree.node(n).id,
                s.free.len()
            )));
        }
        total += grid.size(s.free.len())?;
        slices.push(s);
    }
    guard(total)?;
    for (&n, s) in internal.iter().zip(&slices).rev() {
        let kids = &tree.node(n).children;
        let p: Vec<f64> = kids.iter().map(|&c| tree.node(c).prob).collect();
        let vals: Vec<f64> = kids.iter().map(|&c| v[c]).collect();
        let mut best = f64::NEG_INFINITY;
        for t in grid.product(s.free.len())? {
            let q: Vec<f64> = (0..kids.len())
                .map(|j| s.base[j] + s.dirs.iter().zip(&t).map(|(d, x)| d[j] * x).sum::<f64>())
                .collect();
            if q.iter().any(|&x| x < -1e-13) {
                continue;
            }
            let q: Vec<f64> = q.iter().map(|&x| x.max(0.0)).collect();
            best = best.max(entropy_objective(&q, &p, &vals));
        }
        if best == f64::NEG_INFINITY {
            return Err(OracleError::Unsupported(format!("grid misses the polytope at node {}", tree.node(n).id)));
        }
        v[n] = best;
    }
    Ok(v[0])
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimum of a convex function of one variable; the returned value is
/// attained, hence never below the true minimum.
fn convex_min(f: &dyn Fn(f64) -> f64) -> f64 {
    let f0 = f(0.0);
    let mut l = 1.0;
    while f(l) < f0 || f(-l) < f0 {
        l *= 2.0;
        if l > 1e12 {
            return f(-l).min(f(l)).min(f0);
        }
    }
    let (mut a, mut b) = (-l, l);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    f0.min(f1).min(f2)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Upper bound of `sup_Q E^Q[C] − H(Q|P)` via the dual
/// `min_η ln Σ p_j e^{v_j + η·ΔS_j}` at every node, minimized by nested
/// golden-section search (at most two risky assets). Agrees with the exact
/// value to roughly machine precision.
pub fn dual_entropy_value(tree: &MarketTree, c: &Claim) -> Result<f64> {
    let mut v = leaf_values(tree, c)?;
    for n in (0..tree.len()).rev() {
        let kids = &tree.node(n).children;
        if kids.is_empty() {
            continue;
        }
        let dx = moves(tree, n);
        let terms: Vec<(f64, &[f64])> = kids
            .iter()
            .zip(&dx)
            .map(|(&c, x)| (tree.node(c).prob.ln() + v[c], x.as_slice()))
            .collect();
        let g = |eta: &[f64]| {
            log_sum_exp(
                terms
                    .iter()
                    .map(|(o, x)| o + x.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>()),
            )
        };
        v[n] = match dx[0].len() {
            1 => convex_min(&|e| g(&[e])),
            2 => convex_min(&|e1| convex_min(&|e2| g(&[e1, e2]))),
            d => return Err(OracleError::Unsupported(format!("{d} risky assets"))),
        };
    }
    Ok(v[0])
}

/// Writer price by the dual representation,
/// `(sup_Q{E^Q[γB − γE] − H} − sup_Q{E^Q[−γE] − H})/γ`, with the first
/// supremum taken on the grid and the second from the golden-section dual.
/// Never above the exact price.
pub fn grid_dual_price(tree: &MarketTree, gamma: f64, endowment: &Claim, claim: &Claim, grid: &GridSpec) -> Result<f64> {
    let tilted = Claim::new(
        claim
            .values()
            .iter()
            .zip(endowment.values())
            .map(|(b, e)| gamma * (b - e))
            .collect(),
    );
    let base = endowment.scale(-gamma);
    Ok((grid_entropy_value(tree, &tilted, grid)? - dual_entropy_value(tree, &base)?) / gamma)
}

/// Writer price from the golden-section dual alone; exact to roughly
/// machine precision.
pub fn dual_price(tree: &MarketTree, gamma: f64, endowment: &Claim, claim: &Claim) -> Result<f64> {
    let tilted = Claim::new(
        claim
            .values()
            .iter()
            .zip(endowment.values())
            .map(|(b, e)| gamma * (b - e))
            .collect(),
    );
    let base = endowment.scale(-gamma);
    Ok((dual_entropy_value(tree, &tilted)? - dual_entropy_value(tree, &base)?) / gamma)
}

/// Grid maximum of `E[−exp(−γ(G_T(θ) + E + B))]` over strategies, one
/// coordinate per (non-terminal node, risky asset). Never above the exact
/// indirect utility.
pub fn grid_strategy_utility(
    tree: &MarketTree,
    gamma: f64,
    endowment: &Claim,
    claim: &Claim,
    grid: &GridSpec,
) -> Result<f64> {
    let b = leaf_values(tree, claim)?;
    let e = leaf_values(tree, endowment)?;
    let coords: Vec<(usize, usize)> = (0..tree.len())
        .filter(|&i| !tree.node(i).children.is_empty())
        .flat_map(|i| (0..tree.node(i).prices.len() - 1).map(move |k| (i, k)))
        .collect();
    if coords.len() > 2 {
        return Err(OracleError::Unsupported(format!("{} strategy coordinates", coords.len())));
    }
    guard(grid.size(coords.len())?)?;
    let mut best = f64::NEG_INFINITY;
    for theta in grid.product(coords.len())? {
        // gains and probabilities accumulated down the tree
        let mut gains = vec![0.0; tree.len()];
        let mut mass = vec![1.0; tree.len()];
        let mut u = 0.0;
        for n in 0..tree.len() {
            let node = tree.node(n);
            if node.children.is_empty() {
                u -= mass[n] * (-gamma * (gains[n] + e[n] + b[n])).exp();
                continue;
            }
            let dx = moves(tree, n);
            for (j, &c) in node.children.iter().enumerate() {
                let step: f64 = coords
                    .iter()
                    .zip(&theta)
                    .filter(|((i, _), _)| *i == n)
                    .map(|((_, k), t)| t * dx[j][*k])
                    .sum();
                gains[c] = gains[n] + step;
                mass[c] = mass[n] * tree.node(c).prob;
            }
        }
        best = best.max(u);
    }
    Ok(best)
}

/// Central-difference gradient and Hessian of `f` at `a`, both `O(h²)`.
pub fn fd_derivatives(f: &dyn Fn(&[f64]) -> f64, a: &[f64], h: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut x = a.to_vec();
        for &(i, s) in shifts {
            x[i] += s;
        }
        f(&x)
    };
    let f0 = f(a);
    let grad = (0..n)
        .map(|i| (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h))
        .collect();
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        hess[i][i] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    (grad, hess)
}

/// Grid minimizer over `a ∈ [lo, hi]` of `ν_w,1(aB) − ν_b,2(aB)` (one
/// claim), with prices from [`dual_price`]. Ties go to the smallest `a`.
/// Agents are `(γ, endowment)` pairs.
pub fn grid_equilibrium(
    tree: &MarketTree,
    agents: [(f64, &Claim); 2],
    claim: &Claim,
    range: (f64, f64),
    step: f64,
) -> Result<f64> {
    let axis = Axis::new(range.0, range.1, step);
    guard(axis.count()?)?;
    let [(g1, e1), (g2, e2)] = agents;
    let w1_base = dual_entropy_value(tree, &e1.scale(-g1))?;
    let w2_base = dual_entropy_value(tree, &e2.scale(-g2))?;
    let value = |a: f64| -> Result<f64> {
        let c1 = Claim::new(claim.values().iter().zip(e1.values()).map(|(b, e)| g1 * (a * b - e)).collect());
        // ν_b,2(aB) = −ν_w,2(−aB)
        let c2 = Claim::new(claim.values().iter().zip(e2.values()).map(|(b, e)| g2 * (-a * b - e)).collect());
        Ok((dual_entropy_value(tree, &c1)? - w1_base) / g1 + (dual_entropy_value(tree, &c2)? - w2_base) / g2)
    };
    let mut best = (f64::INFINITY, range.0);
    for a in axis.points()? {
        let v = value(a)?;
        if v < best.0 {
            best = (v, a);
        }
    }
    Ok(best.1)
}
