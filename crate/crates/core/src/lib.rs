//! Exponential-utility indifference pricing on finite event trees.

pub mod agreement;
pub mod asymptotics;
pub mod basisrisk;
pub mod equilibrium;
pub mod error;
pub mod hedging;
pub(crate) mod linalg;
pub mod market;
pub mod measures;
pub(crate) mod polytope;
pub mod pricing;
pub mod quadrature;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use market::{build_tree, Claim, MarketTree, NodeSpec, TradingStrategy};
pub use measures::MartingaleMeasure;
pub use pricing::{PriceQuote, Pricer};
pub use solver::NewtonOptions;
