//! Small dense helpers.

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Fails with the offending pivot when its magnitude drops below
/// `rel_pivot` times the largest diagonal magnitude of the input.
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64], rel_pivot: f64) -> Result<Vec<f64>, f64> {
    solve_many(a, &[b.to_vec()], rel_pivot).map(|mut x| x.remove(0))
}

/// [`solve`] for several right-hand sides sharing one elimination.
pub(crate) fn solve_many(
    a: &[Vec<f64>],
    bs: &[Vec<f64>],
    rel_pivot: f64,
) -> Result<Vec<Vec<f64>>, f64> {
    let n = a.len();
    let r = bs.len();
    let scale = a
        .iter()
        .enumerate()
        .map(|(i, row)| row[i].abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut v = row.clone();
            v.extend(bs.iter().map(|b| b[i]));
            v
        })
        .collect();
    let width = n + r;

    for col in 0..n {
        let (piv_row, piv_val) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if piv_val < rel_pivot * scale {
            return Err(piv_val);
        }
        m.swap(col, piv_row);
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for c in col..width {
                    row[c] -= f * pivot_row[c];
                }
            }
        }
    }
    let mut xs = vec![vec![0.0; n]; r];
    for (k, x) in xs.iter_mut().enumerate() {
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][n + k] - s) / m[i][i];
        }
    }
    Ok(xs)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `aᵀ M a` for a square matrix stored as rows.
pub(crate) fn quad_form(m: &[Vec<f64>], a: &[f64]) -> f64 {
    m.iter()
        .zip(a)
        .map(|(row, ai)| ai * dot(row, a))
        .sum()
}
