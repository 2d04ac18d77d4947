//! Equivalent measures `Z_δ = q_δ/E[q_δ]`, `q_δ = q/(δ+q)`, arbitrarily close
//! to `P` in `L¹`, and the utility bound they carry.

use serde::Serialize;

use crate::arbitrage::find_sigma_density;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree_market::{DensityProcess, MarketModel};
use crate::utility::{maximize_utility, Measure, UtilityFunction, UtilityOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaMeasure<T> {
    pub delta: T,
    /// Leaf probabilities under `P`.
    pub probs: Vec<T>,
    /// Base leaf density, `E[q] = 1`.
    pub q: Vec<T>,
    pub q_delta: Vec<T>,
    /// `E[q_δ]`.
    pub mean_q_delta: T,
    pub z_delta: Vec<T>,
    /// `E|Z_δ − 1|`.
    pub l1_dist: T,
}

impl<T: Scalar> DeltaMeasure<T> {
    pub fn min_z(&self) -> T {
        self.z_delta.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_z(&self) -> T {
        self.z_delta.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `Δ₀ = E[q/(1+q)]`; `Z_δ ≤ 1/Δ₀` for every `δ ∈ (0,1)`.
    pub fn delta0(&self) -> T {
        expect(&self.probs, self.q.iter().map(|&q| q / (T::one() + q)))
    }
}

fn expect<T: Scalar>(probs: &[T], xs: impl Iterator<Item = T>) -> T {
    probs.iter().zip(xs).map(|(&p, x)| p * x).sum()
}

pub fn construct_q_delta<T: Scalar>(probs: &[T], q: &[T], delta: T) -> Result<DeltaMeasure<T>> {
    if probs.len() != q.len() {
        return Err(Error::Dimension { expected: probs.len(), got: q.len(), context: "leaf density" });
    }
    if let Some(k) = q.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::NonpositiveValue { node: k, value: q[k].to_f64_lossy(), context: "leaf density q" });
    }
    let mean = expect(probs, q.iter().copied());
    if (mean - T::one()).abs() > T::tol(1e-10) {
        return Err(Error::InvalidArgument(format!("E[q] = {mean} ≠ 1")));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1)")));
    }
    let q_delta: Vec<T> = q.iter().map(|&v| v / (delta + v)).collect();
    let mean_q_delta = expect(probs, q_delta.iter().copied());
    let z_delta: Vec<T> = q_delta.iter().map(|&v| v / mean_q_delta).collect();
    let l1_dist = expect(probs, z_delta.iter().map(|&z| (z - T::one()).abs()));
    Ok(DeltaMeasure { delta, probs: probs.to_vec(), q: q.to_vec(), q_delta, mean_q_delta, z_delta, l1_dist })
}

/// Upper end of the δ search.
pub const DELTA_MAX: f64 = 1.0 - 1e-12;

/// Largest δ found with `l1_dist ≤ eps`: first tries [`DELTA_MAX`], then walks
/// `δ_k = 2^{-k}` down to the first feasible point and bisects the bracket
/// above it to relative width `1e-12`. `l1_dist` need not be monotone in δ, so
/// the result is the largest feasible point of that bracket only.
pub fn delta_for_epsilon<T: Scalar>(probs: &[T], q: &[T], eps: T) -> Result<DeltaMeasure<T>> {
    if !(eps > T::zero() && eps <= T::one()) {
        return Err(Error::InvalidArgument(format!("epsilon = {eps} outside (0, 1]")));
    }
    let top = construct_q_delta(probs, q, T::c(DELTA_MAX))?;
    if top.l1_dist <= eps {
        return Ok(top);
    }
    let mut hi = T::c(DELTA_MAX);
    let mut lo = T::c(0.5);
    let mut best = None;
    for _ in 0..1000 {
        let dm = construct_q_delta(probs, q, lo)?;
        if dm.l1_dist <= eps {
            best = Some(dm);
            break;
        }
        hi = lo;
        lo = lo * T::c(0.5);
        if lo == T::zero() {
            break;
        }
    }
    let Some(mut best) = best else {
        return Err(Error::NoConvergence(format!("no δ > 0 reaches l1 distance {eps}")));
    };
    let resolution = T::tol(1e-12);
    while hi - best.delta > resolution * hi {
        let mid = (best.delta + hi) / T::c(2.0);
        if mid <= best.delta || mid >= hi {
            break;
        }
        let dm = construct_q_delta(probs, q, mid)?;
        if dm.l1_dist <= eps {
            best = dm;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Leaf probabilities and terminal σ-martingale density of `m`.
pub fn base_density<T: Scalar>(m: &MarketModel<T>) -> Result<(Vec<T>, Vec<T>)> {
    let sigma = find_sigma_density(m)?.ok_or_else(|| Error::InvalidArgument("market admits no σ-martingale density".into()))?;
    let tree = m.tree();
    let probs = tree.unconditional_probs();
    let leaves = tree.leaves();
    Ok((leaves.iter().map(|&l| probs[l]).collect(), sigma.density.leaf_values(tree)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueBoundReport<T> {
    pub delta: T,
    pub value: T,
    /// `U(x0 / (δ·E[q_δ]))`.
    pub bound: T,
    pub slack: T,
    pub holds: bool,
}

/// Maximizes under `Z_δ·P` and checks `value ≤ U(x0/(δ·E[q_δ])) + 1e-9`.
pub fn verify_value_bound<T: Scalar>(
    m: &MarketModel<T>,
    dm: &DeltaMeasure<T>,
    u: &UtilityFunction<T>,
    x0: T,
) -> Result<ValueBoundReport<T>> {
    let tree = m.tree();
    let base = DensityProcess::from_leaf_values(tree, &dm.q)?;
    if !base.is_emm_density(m, T::tol(1e-9)) {
        return Err(Error::InvalidArgument("q is not a martingale density of the market".into()));
    }
    let z = DensityProcess::from_leaf_values(tree, &dm.z_delta)?;
    let value = match maximize_utility(m, u, x0, &Measure::Density(z))? {
        UtilityOutcome::Solution(r) => r.value,
        UtilityOutcome::NoSolution { .. } => unreachable!("a martingale density excludes arbitrage"),
    };
    let bound = u.value(x0 / (dm.delta * dm.mean_q_delta));
    let slack = bound - value;
    Ok(ValueBoundReport { delta: dm.delta, value, bound, slack, holds: value <= bound + T::tol(1e-9) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_density() {
        let dm = construct_q_delta::<f64>(&[0.25, 0.75], &[1.0, 1.0], 0.3).unwrap();
        for &v in &dm.q_delta {
            assert!((v - 1.0 / 1.3).abs() < 1e-15);
        }
        assert!(dm.z_delta.iter().all(|&z| (z - 1.0).abs() < 1e-15));
        assert_eq!(dm.l1_dist, 0.0);
    }

    #[test]
    fn two_point_hand_values() {
        let dm = construct_q_delta::<f64>(&[0.5, 0.5], &[0.5, 1.5], 0.5).unwrap();
        assert!((dm.q_delta[0] - 0.5).abs() < 1e-15 && (dm.q_delta[1] - 0.75).abs() < 1e-15);
        assert!((dm.mean_q_delta - 0.625).abs() < 1e-15);
        assert!((dm.z_delta[0] - 0.8).abs() < 1e-15 && (dm.z_delta[1] - 1.2).abs() < 1e-15);
        assert!((dm.l1_dist - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(construct_q_delta::<f64>(&[0.5, 0.5], &[0.0, 2.0], 0.5).is_err());
        assert!(construct_q_delta::<f64>(&[0.5, 0.5], &[1.0, 1.0], 1.0).is_err());
        assert!(construct_q_delta::<f64>(&[0.5, 0.5], &[0.8, 1.0], 0.5).is_err());
    }

    #[test]
    fn epsilon_search() {
        let dm = delta_for_epsilon::<f64>(&[0.5, 0.5], &[0.5, 1.5], 0.2).unwrap();
        assert!(dm.delta >= 0.5 && dm.l1_dist <= 0.2, "{dm:?}");
        let flat = delta_for_epsilon::<f64>(&[0.5, 0.5], &[1.0, 1.0], 0.01).unwrap();
        assert_eq!(flat.delta, DELTA_MAX);
        let loose = delta_for_epsilon::<f64>(&[0.5, 0.5], &[0.5, 1.5], 1.0).unwrap();
        assert!(loose.delta > 0.99);
    }

    #[test]
    fn binomial_bound() {
        let m: MarketModel<f64> = MarketModel::one_period("b", vec![1.0], vec![(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap();
        let (p, q) = base_density(&m).unwrap();
        let dm = construct_q_delta(&p, &q, 0.5).unwrap();
        let r = verify_value_bound(&m, &dm, &UtilityFunction::Log, 1.0).unwrap();
        assert!(r.holds, "{r:?}");
        assert!((r.bound - (1.0 / (0.5 * dm.mean_q_delta)).ln()).abs() < 1e-15);
    }
}
