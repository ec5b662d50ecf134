//! Backward induction for exponential criteria on a tree.
//!
//! Given terminal log-weights `C`, every non-terminal node solves
//!
//! ```text
//! log V_n = min_η  ln Σ_c p_c · V_c · exp(η · ΔS_c)
//! ```
//!
//! by damped Newton. The minimizer tilts the children into a one-step
//! martingale measure `π_c ∝ p_c V_c exp(η* · ΔS_c)`; chaining these gives
//! the minimal-entropy martingale measure relative to `P_C`, and for
//! `C = −γ X` the optimal exponential-utility position is `θ = −η*/γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::MarketTree;

/// Damped Newton controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Exit when the gradient sup-norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_HALVINGS: usize = 80;
const SPREAD_RESTART: f64 = 40.0;

#[derive(Debug, Clone)]
pub(crate) struct Backward {
    pub log_value: Vec<f64>,
    /// Minimizing tilt per non-terminal node (empty at leaves).
    pub eta: Vec<Vec<f64>>,
    /// Conditional probabilities of the children (empty at leaves).
    pub cond: Vec<Vec<f64>>,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub(crate) fn backward(
    tree: &MarketTree,
    terminal: &[f64],
    opts: &NewtonOptions,
    start: Option<&[Vec<f64>]>,
) -> Result<Backward> {
    tree.check_no_arbitrage()?;
    let n = tree.len();
    let mut log_value = vec![0.0; n];
    let mut eta = vec![Vec::new(); n];
    let mut cond = vec![Vec::new(); n];
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        log_value[leaf] = terminal[pos];
    }
    let mut iterations = 0;
    let mut grad_norm = 0.0_f64;
    for &node in tree.internal_nodes().iter().rev() {
        let children = tree.children(node);
        let offsets: Vec<f64> = children
            .iter()
            .map(|&c| tree.node(c).prob.ln() + log_value[c])
            .collect();
        let init = match start {
            Some(s) if s[node].len() == tree.num_assets() => s[node].clone(),
            _ => vec![0.0; tree.num_assets()],
        };
        let sol = minimize_log_sum_exp(&offsets, tree.increments(node), init, opts)?;
        log_value[node] = sol.value;
        iterations = iterations.max(sol.iterations);
        grad_norm = grad_norm.max(sol.grad_norm);
        eta[node] = sol.eta;
        cond[node] = sol.weights;
    }
    Ok(Backward {
        log_value,
        eta,
        cond,
        iterations,
        grad_norm,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct NodalSolution {
    pub eta: Vec<f64>,
    pub value: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

struct Eval {
    value: f64,
    weights: Vec<f64>,
    grad: Vec<f64>,
}

fn evaluate(offsets: &[f64], inc: &[Vec<f64>], eta: &[f64]) -> Eval {
    let z: Vec<f64> = offsets
        .iter()
        .zip(inc)
        .map(|(a, ds)| a + linalg::dot(eta, ds))
        .collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let weights: Vec<f64> = e.iter().map(|v| v / s).collect();
    let d = eta.len();
    let grad = (0..d)
        .map(|k| weights.iter().zip(inc).map(|(w, ds)| w * ds[k]).sum())
        .collect();
    Eval {
        value: m + s.ln(),
        weights,
        grad,
    }
}

fn exponent_range(offsets: &[f64], inc: &[Vec<f64>], eta: &[f64]) -> (f64, f64) {
    offsets
        .iter()
        .zip(inc)
        .map(|(a, ds)| a + linalg::dot(eta, ds))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z), hi.max(z)))
}

/// Vertex minimizer of `η ↦ max_c (offsets_c + η·inc_c)`, by enumerating
/// the `d + 1` children that balance there. The smooth minimizer lies within
/// `O(ln k)` of it in exponent units, which is where Newton behaves.
fn minimax_start(offsets: &[f64], inc: &[Vec<f64>], d: usize) -> Option<Vec<f64>> {
    const MAX_SUBSETS: usize = 5000;
    let k = offsets.len();
    let mut count = 1usize;
    for i in 0..=d.min(k) {
        count = count.saturating_mul(k - i) / (i + 1);
    }
    if k < d + 1 || count > MAX_SUBSETS {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset: Vec<usize> = (0..=d).collect();
    loop {
        // rows [inc_c, -1] · (η, t) = -offsets_c
        let a: Vec<Vec<f64>> = subset
            .iter()
            .map(|&c| inc[c].iter().copied().chain([-1.0]).collect())
            .collect();
        let b: Vec<f64> = subset.iter().map(|&c| -offsets[c]).collect();
        if let Ok(x) = linalg::solve(&a, &b, 1e-12) {
            let eta = x[..d].to_vec();
            let top = offsets
                .iter()
                .zip(inc)
                .map(|(o, ds)| o + linalg::dot(&eta, ds))
                .fold(f64::NEG_INFINITY, f64::max);
            if top.is_finite() && best.as_ref().is_none_or(|(v, _)| top < *v) {
                best = Some((top, eta));
            }
        }
        // next combination in lexicographic order
        let mut i = d + 1;
        loop {
            if i == 0 {
                return best.map(|(_, eta)| eta);
            }
            i -= 1;
            if subset[i] < k - (d + 1 - i) {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..=d {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

/// Bisects the (monotone) directional derivative along `dir`, starting from
/// a bracket of length `t0` that is doubled until it contains the minimum.
fn exact_line_search(
    offsets: &[f64],
    inc: &[Vec<f64>],
    eta: &[f64],
    dir: &[f64],
    t0: f64,
) -> (Vec<f64>, Eval) {
    let at = |t: f64| -> (Vec<f64>, Eval) {
        let x: Vec<f64> = eta.iter().zip(dir).map(|(e, s)| e + t * s).collect();
        let ev = evaluate(offsets, inc, &x);
        (x, ev)
    };
    let slope = |ev: &Eval| linalg::dot(&ev.grad, dir);
    let (mut lo, mut hi) = (0.0, t0);
    for _ in 0..64 {
        if slope(&at(hi).1) >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(&at(mid).1) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (at(lo), at(hi));
    if a.1.value <= b.1.value {
        a
    } else {
        b
    }
}

/// Minimizes `η ↦ ln Σ_c exp(offsets_c + η·inc_c)`.
pub(crate) fn minimize_log_sum_exp(
    offsets: &[f64],
    inc: &[Vec<f64>],
    mut eta: Vec<f64>,
    opts: &NewtonOptions,
) -> Result<NodalSolution> {
    let d = eta.len();
    let scale = inc
        .iter()
        .map(|v| linalg::sup_norm(v))
        .fold(1.0_f64, f64::max);
    let tol = opts.tol * scale;
    let mut cur = evaluate(offsets, inc, &eta);
    // far-apart exponents leave all weight on one child and a singular
    // Hessian; start from the piecewise-linear minimizer instead
    let (zmin, zmax) = exponent_range(offsets, inc, &eta);
    if zmax - zmin > SPREAD_RESTART {
        if let Some(start) = minimax_start(offsets, inc, d) {
            let ev = evaluate(offsets, inc, &start);
            if ev.value < cur.value {
                eta = start;
                cur = ev;
            }
        }
    }
    for iter in 0..=opts.max_iter {
        let gnorm = linalg::sup_norm(&cur.grad);
        // exponents of size |z| carry absolute rounding ~ eps·|z|, which the
        // weights (and so the gradient) inherit; no step can get below that
        let mag = offsets
            .iter()
            .zip(inc)
            .map(|(o, ds)| o.abs() + linalg::dot(&eta, ds).abs())
            .fold(1.0_f64, f64::max);
        if gnorm <= tol.max(8.0 * f64::EPSILON * mag * scale) {
            return Ok(NodalSolution {
                eta,
                value: cur.value,
                weights: cur.weights,
                iterations: iter,
                grad_norm: gnorm,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        // covariance of the increments under the current weights
        let mut hess = vec![vec![0.0; d]; d];
        for (w, ds) in cur.weights.iter().zip(inc) {
            for i in 0..d {
                for j in 0..d {
                    hess[i][j] += w * (ds[i] - cur.grad[i]) * (ds[j] - cur.grad[j]);
                }
            }
        }
        let rhs: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
        let newton = linalg::solve(&hess, &rhs, 1e-14)
            .ok()
            .filter(|s| s.iter().all(|x| x.is_finite()));
        let (zmin, zmax) = exponent_range(offsets, inc, &eta);
        let allowed = (zmax - zmin) + 10.0;
        let change = |s: &[f64]| {
            inc.iter()
                .map(|ds| linalg::dot(s, ds).abs())
                .fold(0.0_f64, f64::max)
        };
        let step = match newton {
            Some(s) if change(&s) <= allowed => s,
            // weights (nearly) sit on one child: the quadratic model is useless,
            // so minimize exactly along the Newton or gradient direction
            other => {
                let dir = other.unwrap_or(rhs);
                let (trial, ev) = exact_line_search(offsets, inc, &eta, &dir, allowed / change(&dir));
                if ev.value <= cur.value {
                    eta = trial;
                    cur = ev;
                    continue;
                }
                return Err(Error::NewtonDivergence {
                    iterations: iter,
                    grad_norm: gnorm,
                });
            }
        };
        let slope = linalg::dot(&cur.grad, &step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = eta.iter().zip(&step).map(|(e, s)| e + t * s).collect();
            let ev = evaluate(offsets, inc, &trial);
            let armijo = ev.value <= cur.value + ARMIJO_SLOPE * t * slope;
            // near the optimum the decrease is below rounding; fall back on the gradient
            let flat = (ev.value - cur.value).abs() <= 8.0 * f64::EPSILON * mag
                && linalg::sup_norm(&ev.grad) < gnorm;
            if armijo || flat {
                accepted = Some((trial, ev));
                break;
            }
            t *= BACKTRACK;
        }
        match accepted {
            Some((trial, ev)) => {
                eta = trial;
                cur = ev;
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
        iterations: opts.max_iter,
        grad_norm: linalg::sup_norm(&cur.grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_tilt_is_the_unique_martingale_measure() {
        let inc = vec![vec![-0.1], vec![0.2]];
        let sol = minimize_log_sum_exp(&[0.5f64.ln(), 0.5f64.ln()], &inc, vec![0.0], &NewtonOptions::default())
            .unwrap();
        assert!((sol.weights[1] - 1.0 / 3.0).abs() < 1e-13);
        assert!(sol.grad_norm <= 1e-12);
    }

    #[test]
    fn large_offsets_still_converge() {
        let inc = vec![vec![-0.2], vec![0.0], vec![0.3]];
        let offsets = [0.0, 0.0, 1.0e4];
        let sol = minimize_log_sum_exp(&offsets, &inc, vec![0.0], &NewtonOptions::default()).unwrap();
        let mean: f64 = sol.weights.iter().zip(&inc).map(|(w, d)| w * d[0]).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn start_point_does_not_matter() {
        let inc = vec![vec![-0.2], vec![0.0], vec![0.3]];
        let offsets = [0.1, -0.4, 0.7];
        let opts = NewtonOptions::default();
        let a = minimize_log_sum_exp(&offsets, &inc, vec![0.0], &opts).unwrap();
        let b = minimize_log_sum_exp(&offsets, &inc, vec![25.0], &opts).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_cap_is_loud() {
        let inc = vec![vec![-0.2], vec![0.0], vec![0.3]];
        let opts = NewtonOptions { tol: 1e-12, max_iter: 0 };
        let err = minimize_log_sum_exp(&[0.0, 0.0, 50.0], &inc, vec![0.0], &opts).unwrap_err();
        assert!(matches!(err, Error::NewtonDivergence { .. }));
    }
}
