use std::fmt;

use serde::Serialize;

use super::tree::EventTree;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Finite event-tree market: `d` discounted asset prices at every node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketModel<T> {
    pub label: String,
    tree: EventTree<T>,
    d: usize,
    prices: Vec<Vec<T>>,
}

impl<T: Scalar> MarketModel<T> {
    pub fn new(label: impl Into<String>, tree: EventTree<T>, prices: Vec<Vec<T>>) -> Result<Self> {
        if prices.len() != tree.len() {
            return Err(Error::Dimension {
                expected: tree.len(),
                got: prices.len(),
                context: "one price vector per node",
            });
        }
        let d = prices[0].len();
        if let Some(bad) = prices.iter().find(|p| p.len() != d) {
            return Err(Error::Dimension { expected: d, got: bad.len(), context: "asset count" });
        }
        Ok(Self { label: label.into(), tree, d, prices })
    }

    /// Builds a market from `(parent, branch probability, prices)` rows in
    /// breadth-first order.
    pub fn from_nodes(
        label: impl Into<String>,
        nodes: Vec<(Option<usize>, T, Vec<T>)>,
    ) -> Result<Self> {
        let (spec, prices): (Vec<_>, Vec<_>) =
            nodes.into_iter().map(|(p, q, s)| ((p, q), s)).unzip();
        Self::new(label, EventTree::from_parents(spec)?, prices)
    }

    /// One-period market with root price vector `s0` and one child per
    /// `(probability, prices)` pair.
    pub fn one_period(label: impl Into<String>, s0: Vec<T>, branches: Vec<(T, Vec<T>)>) -> Result<Self> {
        let mut nodes = vec![(None, T::one(), s0)];
        nodes.extend(branches.into_iter().map(|(p, s)| (Some(0), p, s)));
        Self::from_nodes(label, nodes)
    }

    pub fn tree(&self) -> &EventTree<T> {
        &self.tree
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn price(&self, node: usize) -> &[T] {
        &self.prices[node]
    }

    pub fn prices(&self) -> &[Vec<T>] {
        &self.prices
    }

    /// Price increments `S(child) − S(node)` for every child of `node`.
    pub fn increments(&self, node: usize) -> Vec<Vec<T>> {
        let s = &self.prices[node];
        self.tree
            .children(node)
            .iter()
            .map(|&c| self.prices[c].iter().zip(s).map(|(&a, &b)| a - b).collect())
            .collect()
    }

    /// Simple returns `(S(child) − S(node)) / S(node)` componentwise.
    pub fn returns(&self, node: usize) -> Result<Vec<Vec<T>>> {
        let s = &self.prices[node];
        if let Some(asset) = s.iter().position(|&v| v <= T::zero()) {
            return Err(Error::NonpositivePrice { node, asset, value: s[asset].to_f64_lossy() });
        }
        Ok(self
            .tree
            .children(node)
            .iter()
            .map(|&c| self.prices[c].iter().zip(s).map(|(&a, &b)| (a - b) / b).collect())
            .collect())
    }

    pub fn has_positive_prices(&self) -> bool {
        self.prices.iter().flatten().all(|&v| v > T::zero())
    }

    pub fn require_positive_prices(&self) -> Result<()> {
        for (node, p) in self.prices.iter().enumerate() {
            if let Some(asset) = p.iter().position(|&v| v <= T::zero()) {
                return Err(Error::NonpositivePrice { node, asset, value: p[asset].to_f64_lossy() });
            }
        }
        Ok(())
    }

    /// Fails with the full diagnostics list unless the market is valid.
    pub fn require_valid(&self) -> Result<()> {
        let report = validate_market(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidMarket(report.issues))
        }
    }

    /// Converts prices and probabilities to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MarketModel<U> {
        let conv = |v: &T| U::c(v.to_f64_lossy());
        MarketModel {
            label: self.label.clone(),
            tree: self.tree.map_probs(conv),
            d: self.d,
            prices: self.prices.iter().map(|p| p.iter().map(conv).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    ProbabilityRange { node: usize, prob: f64 },
    ProbabilitySum { node: usize, sum: f64 },
    Leveling { node: usize, depth: usize, horizon: usize },
    Ordering { node: usize },
    NonFinitePrice { node: usize, asset: usize },
    NoAssets,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::ProbabilityRange { node, prob } => {
                write!(f, "node {node}: branch probability {prob} outside (0, 1]")
            }
            Diagnostic::ProbabilitySum { node, sum } => {
                write!(f, "node {node}: probability sum {sum} ≠ 1")
            }
            Diagnostic::Leveling { node, depth, horizon } => {
                write!(f, "node {node}: leaf at depth {depth} in a {horizon}-period tree")
            }
            Diagnostic::Ordering { node } => write!(f, "node {node}: not in breadth-first order"),
            Diagnostic::NonFinitePrice { node, asset } => {
                write!(f, "node {node}: non-finite price for asset {asset}")
            }
            Diagnostic::NoAssets => write!(f, "market has no assets"),
        }
    }
}

/// Outcome of [`validate_market`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Violated invariants; empty iff the market is valid.
    pub issues: Vec<Diagnostic>,
    /// `(node, asset)` pairs with a nonpositive price. Not an invalidity: these
    /// only rule out the multiplicative (fraction-based) operations.
    pub nonpositive_prices: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn supports_fractions(&self) -> bool {
        self.nonpositive_prices.is_empty()
    }
}

/// Lists every violated market invariant with its node index.
pub fn validate_market<T: Scalar>(m: &MarketModel<T>) -> ValidationReport {
    let tree = m.tree();
    let tol = T::tol(1e-12);
    let mut issues = Vec::new();
    if m.d() == 0 {
        issues.push(Diagnostic::NoAssets);
    }
    for i in 0..tree.len() {
        let node = tree.node(i);
        if node.parent.is_some() && !(node.prob > T::zero() && node.prob <= T::one()) {
            issues.push(Diagnostic::ProbabilityRange { node: i, prob: node.prob.to_f64_lossy() });
        }
        if !node.children.is_empty() {
            let sum: T = tree.branch_probs(i).into_iter().sum();
            if !((sum - T::one()).abs() <= tol) {
                issues.push(Diagnostic::ProbabilitySum { node: i, sum: sum.to_f64_lossy() });
            }
        } else if node.depth != tree.horizon() {
            issues.push(Diagnostic::Leveling { node: i, depth: node.depth, horizon: tree.horizon() });
        }
        if i > 0 {
            let prev = tree.node(i - 1);
            let bfs = prev.depth < node.depth
                || (prev.depth == node.depth && prev.parent <= node.parent);
            if !bfs {
                issues.push(Diagnostic::Ordering { node: i });
            }
        }
    }
    let mut nonpositive_prices = Vec::new();
    for (i, p) in m.prices().iter().enumerate() {
        for (a, &v) in p.iter().enumerate() {
            if !v.is_finite() {
                issues.push(Diagnostic::NonFinitePrice { node: i, asset: a });
            } else if v <= T::zero() {
                nonpositive_prices.push((i, a));
            }
        }
    }
    ValidationReport { issues, nonpositive_prices }
}
