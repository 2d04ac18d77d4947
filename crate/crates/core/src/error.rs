use serde::Serialize;
use thiserror::Error;

use crate::tree_market::Diagnostic;

/// Arbitrage witness attached to errors of operations that require
/// no-arbitrage. Values are widened to `f64` so the error type stays
/// independent of the scalar type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageWitness {
    /// Breadth-first index of the node where the one-period market fails.
    pub node: usize,
    /// Separating holdings (one per asset).
    pub direction: Vec<f64>,
    /// Gains `direction · ΔS_j` per child branch.
    pub gains: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market: {}", summarize(.0))]
    InvalidMarket(Vec<Diagnostic>),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("nonpositive price {value} for asset {asset} at node {node}")]
    NonpositivePrice { node: usize, asset: usize, value: f64 },

    #[error("wealth factor 1 + pi.R = {factor} is not positive on branch {node} -> {child}")]
    NonpositiveFactor { node: usize, child: usize, factor: f64 },

    #[error("nonpositive value {value} at node {node} ({context})")]
    NonpositiveValue {
        node: usize,
        value: f64,
        context: &'static str,
    },

    #[error("invalid stopping time: {0}")]
    InvalidStoppingTime(String),

    #[error("arbitrage at node {}: direction {:?}", .0.node, .0.direction)]
    Arbitrage(ArbitrageWitness),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("utility certification failed: {0}")]
    Utility(String),

    #[error("NUPBR fails: no sigma-martingale density exists")]
    NoNupbr(ArbitrageWitness),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
