#![allow(dead_code)]

use entropic_core::market::terminal_gains;
use entropic_core::{Claim, MarketTree, MartingaleMeasure, TradingStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
pub use entropic_oracle::fixtures::{b2, product_tree, t1, trinomial9, two_asset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn claim(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Claim {
    Claim::new((0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

pub fn strategy(rng: &mut ChaCha8Rng, tree: &MarketTree, bound: f64) -> TradingStrategy {
    let mut s = TradingStrategy::zeros(tree);
    for &n in tree.internal_nodes() {
        s.set_position(n, (0..tree.num_assets()).map(|_| rng.gen_range(-bound..bound)).collect());
    }
    s
}

/// `c + gains(θ)` for random `c` and `θ`.
pub fn replicable(rng: &mut ChaCha8Rng, tree: &MarketTree, bound: f64) -> Claim {
    let c = rng.gen_range(-bound..bound);
    let g = terminal_gains(tree, &strategy(rng, tree, bound)).unwrap();
    g.shift(c)
}

/// Strictly positive martingale measure from random vertex weights.
pub fn measure(rng: &mut ChaCha8Rng, tree: &MarketTree) -> MartingaleMeasure {
    let weights: Vec<Vec<f64>> = tree
        .internal_nodes()
        .iter()
        .map(|&n| {
            (0..tree.polytope_vertices(n).len())
                .map(|_| rng.gen_range(0.05..1.0))
                .collect()
        })
        .collect();
    MartingaleMeasure::from_vertex_weights(tree, &weights).unwrap()
}

pub fn fixtures() -> Vec<(&'static str, MarketTree)> {
    vec![("T1", t1()), ("9-leaf", trinomial9()), ("two-asset", two_asset())]
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
