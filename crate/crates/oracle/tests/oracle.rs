use entropic_core::pricing::Pricer;
use entropic_core::Claim;
use entropic_oracle::fixtures::{b2, t1, trinomial9, two_asset};
use entropic_oracle::{
    dual_price, fd_derivatives, grid_dual_price, grid_entropy_value, grid_equilibrium, Axis, GridSpec, OracleError,
};

fn claim(seed: u64, n: usize) -> Claim {
    // small deterministic generator; the oracle crate keeps no RNG dependency
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Claim::new(
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect(),
    )
}

#[test]
fn refining_the_grid_never_lowers_the_value() {
    let tree = t1();
    let c = claim(1, 3);
    let mut last = f64::NEG_INFINITY;
    for step in [0.1, 0.05, 0.025, 0.0125, 0.00625] {
        let v = grid_entropy_value(&tree, &c, &GridSpec::unit(step)).unwrap();
        assert!(v >= last - 1e-15, "{step}: {v} < {last}");
        last = v;
    }
}

#[test]
fn grid_price_approaches_the_exact_dual_price_from_below() {
    let tree = trinomial9();
    let (e, b) = (claim(2, 9), claim(3, 9));
    let exact = dual_price(&tree, 1.0, &e, &b).unwrap();
    let grid = grid_dual_price(&tree, 1.0, &e, &b, &GridSpec::unit(1e-3)).unwrap();
    assert!(grid <= exact + 1e-12 && exact - grid < 1e-4, "{grid} vs {exact}");
}

#[test]
fn exact_dual_price_matches_the_engine() {
    for (tree, n) in [(b2(), 2), (t1(), 3), (trinomial9(), 9), (two_asset(), 5)] {
        for seed in 0..3 {
            let (e, b) = (claim(10 + seed, n), claim(20 + seed, n));
            let engine = Pricer::new(&tree, 1.5, &e).unwrap().writer(&b).unwrap();
            let oracle = dual_price(&tree, 1.5, &e, &b).unwrap();
            assert!((engine - oracle).abs() < 1e-8, "{engine} vs {oracle}");
        }
    }
}

#[test]
fn finite_differences_are_exact_on_quadratics() {
    let f = |x: &[f64]| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] + 1.0;
    let (g, h) = fd_derivatives(&f, &[0.3, -0.7], 1e-3);
    assert!((g[0] - (1.8 + 1.4)).abs() < 1e-9 && (g[1] - (-0.6 + 0.5)).abs() < 1e-9);
    assert!((h[0][0] - 6.0).abs() < 1e-6 && (h[0][1] + 2.0).abs() < 1e-6 && h[1][1].abs() < 1e-6);
}

#[test]
fn symmetric_agents_do_not_trade() {
    let tree = t1();
    let e = claim(4, 3);
    let b = Claim::new(vec![0.0, 0.0, 1.0]);
    let a = grid_equilibrium(&tree, [(1.0, &e), (1.0, &e)], &b, (-1.0, 1.0), 1e-3).unwrap();
    assert!(a.abs() <= 1e-3);
}

#[test]
fn oversized_grids_are_refused() {
    assert!(matches!(Axis::new(0.0, 1.0, 1e-9).points(), Err(OracleError::GridTooLarge(_))));
    let tree = two_asset();
    let c = claim(5, 5);
    let err = grid_entropy_value(&tree, &c, &GridSpec::unit(1e-5)).unwrap_err();
    assert!(matches!(err, OracleError::GridTooLarge(_)));
}
