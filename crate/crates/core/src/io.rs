//! JSON market files.
//!
//! ```json
//! {
//!   "label": "binomial",
//!   "d": 1,
//!   "horizon": 1,
//!   "nodes": [
//!     {"id": 0, "parent": null, "prob": 1.0, "prices": [1.0]},
//!     {"id": 1, "parent": 0, "prob": 0.5, "prices": [2.0]},
//!     {"id": 2, "parent": 0, "prob": 0.5, "prices": [0.5]}
//!   ]
//! }
//! ```
//!
//! Node ids must be `0..N-1` in breadth-first order; the root has
//! `"parent": null` and its `prob` (if present) is ignored. Branch
//! probabilities outside `(0, 1]` and non-finite numbers are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree_market::{validate_market, DensityProcess, MarketModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    #[serde(default = "one")]
    pub prob: f64,
    pub prices: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub label: String,
    pub d: usize,
    pub horizon: usize,
    pub nodes: Vec<NodeRecord>,
}

impl MarketFile {
    pub fn from_market<T: Scalar>(m: &MarketModel<T>) -> Self {
        let tree = m.tree();
        let nodes = (0..tree.len())
            .map(|i| NodeRecord {
                id: i,
                parent: tree.parent(i),
                prob: tree.node(i).prob.to_f64_lossy(),
                prices: m.price(i).iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect();
        Self { label: m.label.clone(), d: m.d(), horizon: tree.horizon(), nodes }
    }

    /// Validated market in the requested scalar type.
    pub fn into_market<T: Scalar>(self) -> Result<MarketModel<T>> {
        for (pos, n) in self.nodes.iter().enumerate() {
            if n.id != pos {
                return Err(Error::Parse(format!("node at position {pos} has id {}; ids must be 0..N-1 in order", n.id)));
            }
            if n.prices.len() != self.d {
                return Err(Error::Parse(format!("node {}: {} prices for d = {}", n.id, n.prices.len(), self.d)));
            }
            if let Some(a) = n.prices.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("node {}: non-finite price for asset {a}", n.id)));
            }
            if n.parent.is_some() && !(n.prob > 0.0 && n.prob <= 1.0) {
                return Err(Error::Parse(format!("node {}: prob {} outside (0, 1]", n.id, n.prob)));
            }
        }
        let declared = self.horizon;
        let m = MarketModel::from_nodes(
            self.label,
            self.nodes
                .into_iter()
                .map(|n| {
                    let prob = if n.parent.is_none() { T::one() } else { T::c(n.prob) };
                    (n.parent, prob, n.prices.into_iter().map(T::c).collect())
                })
                .collect(),
        )?;
        let report = validate_market(&m);
        if !report.is_valid() {
            return Err(Error::InvalidMarket(report.issues));
        }
        if m.tree().horizon() != declared {
            return Err(Error::Parse(format!(
                "declared horizon {declared} but tree depth is {}",
                m.tree().horizon()
            )));
        }
        Ok(m)
    }
}

pub fn market_from_json<T: Scalar>(text: &str) -> Result<MarketModel<T>> {
    let file: MarketFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    file.into_market()
}

pub fn market_to_json<T: Scalar>(m: &MarketModel<T>) -> String {
    serde_json::to_string_pretty(&MarketFile::from_market(m)).expect("market serializes")
}

pub fn load_market<T: Scalar>(path: impl AsRef<Path>) -> Result<MarketModel<T>> {
    let text = std::fs::read_to_string(path)?;
    market_from_json(&text)
}

pub fn save_market<T: Scalar>(m: &MarketModel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, market_to_json(m))?;
    Ok(())
}

/// Density file: `{"z": [z_0, ..., z_{N-1}]}` with one value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFile {
    pub z: Vec<f64>,
}

pub fn load_density<T: Scalar>(path: impl AsRef<Path>, m: &MarketModel<T>) -> Result<DensityProcess<T>> {
    let text = std::fs::read_to_string(path)?;
    let file: DensityFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    DensityProcess::new(m.tree(), file.z.into_iter().map(T::c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BINOMIAL: &str = r#"{
      "label": "binomial", "d": 1, "horizon": 1,
      "nodes": [
        {"id": 0, "parent": null, "prob": 1.0, "prices": [1.0]},
        {"id": 1, "parent": 0, "prob": 0.5, "prices": [2.0]},
        {"id": 2, "parent": 0, "prob": 0.5, "prices": [0.5]}
      ]
    }"#;

    #[test]
    fn parses_binomial() {
        let m: MarketModel<f64> = market_from_json(BINOMIAL).unwrap();
        assert_eq!(m.d(), 1);
        assert_eq!(m.tree().len(), 3);
    }

    #[test]
    fn rejects_bad_probability_naming_node() {
        let bad = BINOMIAL.replace("\"prob\": 0.5, \"prices\": [2.0]", "\"prob\": 1.2, \"prices\": [2.0]");
        let err = market_from_json::<f64>(&bad).unwrap_err().to_string();
        assert!(err.contains("node 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_fields_and_reports_position() {
        let bad = BINOMIAL.replace("\"d\": 1", "\"d\": 1, \"extra\": true");
        let err = market_from_json::<f64>(&bad).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let overflow = BINOMIAL.replace("[2.0]", "[1e999]");
        assert!(market_from_json::<f64>(&overflow).is_err());
    }

    #[test]
    fn round_trip() {
        let m: MarketModel<f64> = market_from_json(BINOMIAL).unwrap();
        let again: MarketModel<f64> = market_from_json(&market_to_json(&m)).unwrap();
        assert_eq!(m, again);
    }
}
