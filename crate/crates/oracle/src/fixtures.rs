//! Small trees shared by the test suites. Leaf order is depth-first.

use entropic_core::{build_tree, MarketTree, NodeSpec};

const THIRD: f64 = 1.0 / 3.0;

/// One-period binomial: `S0 = 1 → {0.9, 1.2}`, `P = (½, ½)`. Complete.
pub fn b2() -> MarketTree {
    build_tree(&[
        NodeSpec::root(0, vec![1.0, 1.0]),
        NodeSpec::child(1, 0, 0.5, vec![1.0, 0.9]),
        NodeSpec::child(2, 0, 0.5, vec![1.0, 1.2]),
    ])
    .expect("valid fixture")
}

/// One-period trinomial: `S0 = 1 → {0.8, 1.0, 1.3}`, uniform `P`.
pub fn t1() -> MarketTree {
    build_tree(&[
        NodeSpec::root(0, vec![1.0, 1.0]),
        NodeSpec::child(1, 0, THIRD, vec![1.0, 0.8]),
        NodeSpec::child(2, 0, THIRD, vec![1.0, 1.0]),
        NodeSpec::child(3, 0, THIRD, vec![1.0, 1.3]),
    ])
    .expect("valid fixture")
}

/// Two periods of the `T1` factors: nine leaves, uniform `P`.
pub fn trinomial9() -> MarketTree {
    let f = [0.8, 1.0, 1.3];
    let mut spec = vec![NodeSpec::root(0, vec![1.0, 1.0])];
    for (i, a) in f.iter().enumerate() {
        spec.push(NodeSpec::child(1 + i as u64, 0, THIRD, vec![1.0, *a]));
    }
    for (i, a) in f.iter().enumerate() {
        for (j, b) in f.iter().enumerate() {
            spec.push(NodeSpec::child(4 + (3 * i + j) as u64, 1 + i as u64, THIRD, vec![1.0, a * b]));
        }
    }
    build_tree(&spec).expect("valid fixture")
}

/// One period, stock `{0.9, 1.2}` crossed with an independent fair coin.
/// Leaves: (down, heads), (down, tails), (up, heads), (up, tails).
pub fn product_tree() -> MarketTree {
    build_tree(&[
        NodeSpec::root(0, vec![1.0, 1.0]),
        NodeSpec::child(1, 0, 0.25, vec![1.0, 0.9]),
        NodeSpec::child(2, 0, 0.25, vec![1.0, 0.9]),
        NodeSpec::child(3, 0, 0.25, vec![1.0, 1.2]),
        NodeSpec::child(4, 0, 0.25, vec![1.0, 1.2]),
    ])
    .expect("valid fixture")
}

/// Two risky assets over one period with five states; two free martingale
/// coordinates.
pub fn two_asset() -> MarketTree {
    build_tree(&[
        NodeSpec::root(0, vec![1.0, 1.0, 1.0]),
        NodeSpec::child(1, 0, 0.2, vec![1.0, 0.8, 1.1]),
        NodeSpec::child(2, 0, 0.2, vec![1.0, 1.2, 0.9]),
        NodeSpec::child(3, 0, 0.2, vec![1.0, 1.0, 1.0]),
        NodeSpec::child(4, 0, 0.2, vec![1.0, 1.1, 1.2]),
        NodeSpec::child(5, 0, 0.2, vec![1.0, 0.9, 0.8]),
    ])
    .expect("valid fixture")
}
