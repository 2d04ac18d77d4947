//! Seeded samplers for test strategies and random stopping times.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{dot, Scalar};
use crate::tree_market::{wealth_from_units, FractionStrategy, MarketModel, UnitStrategy};

/// Gaussian unit holdings scaled so that `x0 + (H·S) ≥ 0` at every node
/// (`x0`-admissibility). Returns the strategy and its wealth process values.
pub fn admissible_units<T: Scalar, R: Rng + ?Sized>(
    m: &MarketModel<T>,
    rng: &mut R,
    x0: T,
) -> UnitStrategy<T> {
    let tree = m.tree();
    let mut h = UnitStrategy::zeros(tree, m.d());
    for v in tree.internal_nodes() {
        for x in h.holdings[v].iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *x = T::c(g);
        }
    }
    let gains = wealth_from_units(m, &h, T::zero()).expect("dimensions match by construction");
    let worst = gains.value.iter().copied().fold(T::zero(), T::min);
    if worst < -x0 {
        h = h.scaled(x0 / -worst);
    }
    h
}

/// Fractions drawn uniformly from `[-bound, bound]^d` per node, then shrunk by
/// bisection on the scale factor until `1 + π·R_j ≥ margin` on every branch.
pub fn feasible_fractions<T: Scalar, R: Rng + ?Sized>(
    m: &MarketModel<T>,
    rng: &mut R,
    bound: f64,
    margin: T,
) -> FractionStrategy<T> {
    let tree = m.tree();
    let mut pi = FractionStrategy::zeros(tree, m.d());
    for v in tree.internal_nodes() {
        let returns = m.returns(v).expect("positive prices required for fraction sampling");
        let raw: Vec<T> = (0..m.d()).map(|_| T::c(rng.random_range(-bound..=bound))).collect();
        let min_factor = |s: T| {
            returns
                .iter()
                .map(|r| T::one() + s * dot(&raw, r))
                .fold(T::infinity(), T::min)
        };
        let scale = if min_factor(T::one()) >= margin {
            T::one()
        } else {
            // min_factor(0) = 1 ≥ margin; bisect for the largest feasible scale
            let (mut lo, mut hi) = (T::zero(), T::one());
            for _ in 0..60 {
                let mid = (lo + hi) / T::c(2.0);
                if min_factor(mid) >= margin {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        pi.fractions[v] = raw.into_iter().map(|x| x * scale).collect();
    }
    pi
}
