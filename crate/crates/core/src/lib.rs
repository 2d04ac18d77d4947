//! Executable non-arbitrage, viability and numéraire-portfolio checks.
//!
//! Finite event-tree markets get exact decision procedures with
//! machine-checkable certificates (arbitrage strategies or martingale
//! densities), numéraire and utility-optimal portfolios, equivalent measures
//! close to the physical one, and entropy-Hellinger diagnostics. A Monte Carlo
//! harness covers the three-dimensional Bessel model, where a numéraire
//! portfolio exists but no equivalent martingale measure does.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

// `!(x > 0)` is the NaN-rejecting form used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod arbitrage;
pub mod diffusion_mc;
pub mod entropy;
pub mod error;
pub mod generate;
pub mod io;
pub mod linalg;
pub mod measure_change;
pub mod numeraire;
pub mod sampling;
pub mod scalar;
pub mod simplex;
pub mod tree_market;
pub mod utility;

pub use error::{ArbitrageWitness, Error, Result};
pub use scalar::Scalar;

pub type Tree = tree_market::EventTree<f64>;
pub type Market = tree_market::MarketModel<f64>;
pub type Density = tree_market::DensityProcess<f64>;
pub type Units = tree_market::UnitStrategy<f64>;
pub type Fractions = tree_market::FractionStrategy<f64>;
pub type Wealth = tree_market::WealthProcess<f64>;
pub type Certificate = arbitrage::NaCertificate<f64>;
pub type Numeraire = numeraire::NumeraireSolution<f64>;
pub type Utility = utility::UtilityFunction<f64>;
pub type DeltaMeasure = measure_change::DeltaMeasure<f64>;
