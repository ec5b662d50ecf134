//! Vertex enumeration for the one-step martingale polytope
//! `{q ≥ 0 : Σ q_c = 1, Σ q_c ΔS_c = 0}` at a single node.
//!
//! Vertices are the feasible basic solutions: supports with linearly
//! independent columns `(1, ΔS_c)`. With at most 16 children and 4 risky
//! assets that is at most `Σ_{s≤5} C(16, s)` candidate supports.

use crate::linalg;

const FEAS_TOL: f64 = 1e-12;

/// All vertices of the conditional martingale polytope, deduplicated.
/// Empty when the polytope is empty (one-step arbitrage).
pub(crate) fn vertices(increments: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = increments.len();
    if k == 0 {
        return Vec::new();
    }
    let d = increments[0].len();
    let scale = 1.0
        + increments
            .iter()
            .map(|v| linalg::sup_norm(v))
            .fold(0.0_f64, f64::max);
    // column c of the constraint matrix
    let col = |c: usize| -> Vec<f64> {
        let mut v = Vec::with_capacity(d + 1);
        v.push(1.0);
        v.extend_from_slice(&increments[c]);
        v
    };
    let cols: Vec<Vec<f64>> = (0..k).map(col).collect();

    let mut out: Vec<Vec<f64>> = Vec::new();
    let max_support = k.min(d + 1);
    let mut support = Vec::with_capacity(max_support);
    for size in 1..=max_support {
        combinations(k, size, &mut support, 0, &mut |s| {
            if let Some(x) = basic_solution(&cols, s, scale) {
                let mut q = vec![0.0; k];
                for (&c, &xc) in s.iter().zip(&x) {
                    q[c] = xc.max(0.0);
                }
                let total: f64 = q.iter().sum();
                q.iter_mut().for_each(|v| *v /= total);
                if !out
                    .iter()
                    .any(|v| v.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-11))
                {
                    out.push(q);
                }
            }
        });
    }
    out
}

/// True when some strictly positive conditional martingale measure exists.
/// A coordinate is positive at some point of the polytope iff it is positive
/// at some vertex, so the vertex barycenter is interior iff any point is.
pub(crate) fn has_interior(vertices: &[Vec<f64>]) -> bool {
    if vertices.is_empty() {
        return false;
    }
    let k = vertices[0].len();
    (0..k).all(|c| vertices.iter().any(|v| v[c] > FEAS_TOL))
}

/// Barycenter of the vertices.
pub(crate) fn barycenter(vertices: &[Vec<f64>]) -> Vec<f64> {
    let k = vertices[0].len();
    let n = vertices.len() as f64;
    (0..k)
        .map(|c| vertices.iter().map(|v| v[c]).sum::<f64>() / n)
        .collect()
}

fn basic_solution(cols: &[Vec<f64>], support: &[usize], scale: f64) -> Option<Vec<f64>> {
    let rows = cols[0].len();
    let s = support.len();
    // normal equations of the (d+1) x s system A_S x = e_1
    let gram: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| linalg::dot(&cols[support[i]], &cols[support[j]]))
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = (0..s).map(|i| cols[support[i]][0]).collect();
    let x = linalg::solve(&gram, &rhs, 1e-10).ok()?;
    for r in 0..rows {
        let target = if r == 0 { 1.0 } else { 0.0 };
        let got: f64 = support
            .iter()
            .zip(&x)
            .map(|(&c, &xc)| cols[c][r] * xc)
            .sum();
        if (got - target).abs() > 1e-10 * scale {
            return None;
        }
    }
    if x.iter().any(|&v| v < -FEAS_TOL) {
        return None;
    }
    Some(x)
}

fn combinations(
    n: usize,
    size: usize,
    current: &mut Vec<usize>,
    start: usize,
    f: &mut dyn FnMut(&[usize]),
) {
    if current.len() == size {
        f(current);
        return;
    }
    for i in start..n {
        if n - i < size - current.len() {
            break;
        }
        current.push(i);
        combinations(n, size, current, i + 1, f);
        current.pop();
    }
}
