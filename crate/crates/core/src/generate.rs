//! Seeded random finite markets.

use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tree_market::MarketModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriceModel {
    /// Every price i.i.d. uniform on the price range. Most such markets admit
    /// arbitrage once `d` and the depth grow.
    Uniform,
    /// Child price = parent price × `exp(sigma·ξ)`, clamped to the range.
    Multiplicative { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketGenerator {
    pub d_range: RangeInclusive<usize>,
    pub depth_range: RangeInclusive<usize>,
    pub branch_range: RangeInclusive<usize>,
    pub price_range: (f64, f64),
    pub price_model: PriceModel,
}

impl Default for MarketGenerator {
    fn default() -> Self {
        Self {
            d_range: 1..=3,
            depth_range: 1..=3,
            branch_range: 2..=4,
            price_range: (0.1, 10.0),
            price_model: PriceModel::Uniform,
        }
    }
}

impl MarketGenerator {
    /// Leveled tree; every internal node draws its own branch count, branch
    /// weights uniform on `[0.2, 1]` normalized, prices i.i.d. uniform.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R, label: impl Into<String>) -> MarketModel<T> {
        let d = rng.random_range(self.d_range.clone());
        let depth = rng.random_range(self.depth_range.clone());
        let (lo, hi) = self.price_range;
        let model = self.price_model;
        let prices = |rng: &mut R, parent: Option<&[T]>| -> Vec<T> {
            (0..d)
                .map(|i| match (model, parent) {
                    (PriceModel::Multiplicative { sigma }, Some(s)) => {
                        let z: f64 = rng.sample(StandardNormal);
                        T::c((s[i].to_f64_lossy() * (sigma * z).exp()).clamp(lo, hi))
                    }
                    _ => T::c(rng.random_range(lo..=hi)),
                })
                .collect()
        };
        let mut nodes: Vec<(Option<usize>, T, Vec<T>)> = vec![(None, T::one(), prices(rng, None))];
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &parent in &frontier {
                let k = rng.random_range(self.branch_range.clone());
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..=1.0)).collect();
                let total: f64 = raw.iter().sum();
                for w in raw {
                    next.push(nodes.len());
                    let s = prices(rng, Some(&nodes[parent].2));
                    nodes.push((Some(parent), T::c(w / total), s));
                }
            }
            frontier = next;
        }
        MarketModel::from_nodes(label, nodes).expect("generated tree is well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_market::validate_market;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_markets_are_valid() {
        let g = MarketGenerator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..100 {
            let m: MarketModel<f64> = g.sample(&mut rng, format!("m{i}"));
            let r = validate_market(&m);
            assert!(r.is_valid(), "{:?}", r.issues);
            assert!(r.supports_fractions());
            assert!((1..=3).contains(&m.d()));
        }
    }

    #[test]
    fn multiplicative_prices_stay_in_range() {
        let g = MarketGenerator { price_model: PriceModel::Multiplicative { sigma: 0.3 }, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..50 {
            let m: MarketModel<f64> = g.sample(&mut rng, format!("m{i}"));
            assert!(m.prices().iter().flatten().all(|&s| (0.1..=10.0).contains(&s)));
        }
    }
}
