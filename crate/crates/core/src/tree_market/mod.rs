//! Finite event-tree markets: filtration, prices, strategies, wealth,
//! densities and stopping times.

mod market;
mod process;
mod stopping;
mod tree;

pub use market::{validate_market, Diagnostic, MarketModel, ValidationReport};
pub use process::{
    wealth_from_fractions, wealth_from_units, DensityProcess, FractionStrategy, UnitStrategy,
    WealthProcess,
};
pub use stopping::{conditional_expectation, expectation_process, At, StoppingTime};
pub use tree::{EventTree, TreeNode};
