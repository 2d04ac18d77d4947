use serde::Serialize;

use super::market::MarketModel;
use super::tree::EventTree;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm_inf, Scalar};

/// Units of each asset held over the period following each node. Entries at
/// leaves are never read; predictability holds by construction because a
/// holding is indexed by the node at the start of its period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitStrategy<T> {
    pub holdings: Vec<Vec<T>>,
}

/// Wealth fractions invested in each asset over the period following each node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionStrategy<T> {
    pub fractions: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthProcess<T> {
    pub value: Vec<T>,
    pub x0: T,
}

/// Positive adapted process with unit root value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProcess<T> {
    pub z: Vec<T>,
}

impl<T: Scalar> UnitStrategy<T> {
    pub fn zeros<P>(tree: &EventTree<P>, d: usize) -> Self {
        Self { holdings: vec![vec![T::zero(); d]; tree.len()] }
    }

    /// Strategy that holds `h` at `node` and nothing elsewhere.
    pub fn single_node<P>(tree: &EventTree<P>, d: usize, node: usize, h: Vec<T>) -> Self {
        let mut s = Self::zeros(tree, d);
        s.holdings[node] = h;
        s
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            holdings: self.holdings.iter().map(|h| h.iter().map(|&v| v * c).collect()).collect(),
        }
    }
}

impl<T: Scalar> FractionStrategy<T> {
    pub fn zeros<P>(tree: &EventTree<P>, d: usize) -> Self {
        Self { fractions: vec![vec![T::zero(); d]; tree.len()] }
    }

    /// Equivalent unit holdings `H_i = π_i · W / S_i` along the given wealth.
    pub fn to_units(&self, m: &MarketModel<T>, wealth: &WealthProcess<T>) -> UnitStrategy<T> {
        let holdings = (0..m.tree().len())
            .map(|v| {
                self.fractions[v]
                    .iter()
                    .zip(m.price(v))
                    .map(|(&pi, &s)| pi * wealth.value[v] / s)
                    .collect()
            })
            .collect();
        UnitStrategy { holdings }
    }
}

impl<T: Scalar> WealthProcess<T> {
    pub fn terminal<P>(&self, tree: &EventTree<P>) -> Vec<T> {
        tree.leaves().iter().map(|&l| self.value[l]).collect()
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { value: self.value.iter().map(|&v| v * c).collect(), x0: self.x0 * c }
    }
}

fn check_dims<T>(m: &MarketModel<T>, rows: &[Vec<T>], context: &'static str) -> Result<()>
where
    T: Scalar,
{
    let tree = m.tree();
    if rows.len() != tree.len() {
        return Err(Error::Dimension { expected: tree.len(), got: rows.len(), context });
    }
    for v in tree.internal_nodes() {
        if rows[v].len() != m.d() {
            return Err(Error::Dimension { expected: m.d(), got: rows[v].len(), context });
        }
    }
    Ok(())
}

/// Additive self-financing wealth `x0 + (H·S)`.
pub fn wealth_from_units<T: Scalar>(
    m: &MarketModel<T>,
    h: &UnitStrategy<T>,
    x0: T,
) -> Result<WealthProcess<T>> {
    check_dims(m, &h.holdings, "unit strategy holdings")?;
    let tree = m.tree();
    let mut value = vec![T::zero(); tree.len()];
    value[0] = x0;
    for v in 0..tree.len() {
        for &c in tree.children(v) {
            let gain = h.holdings[v]
                .iter()
                .zip(m.price(c).iter().zip(m.price(v)))
                .fold(T::zero(), |acc, (&hv, (&sc, &sv))| acc + hv * (sc - sv));
            value[c] = value[v] + gain;
        }
    }
    Ok(WealthProcess { value, x0 })
}

/// Multiplicative self-financing wealth `x0 · ℰ(π·R)`; every one-period
/// factor `1 + π·R` must be positive.
pub fn wealth_from_fractions<T: Scalar>(
    m: &MarketModel<T>,
    pi: &FractionStrategy<T>,
    x0: T,
) -> Result<WealthProcess<T>> {
    check_dims(m, &pi.fractions, "fraction strategy")?;
    m.require_positive_prices()?;
    if !(x0 > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "initial capital must be positive, got {}",
            x0
        )));
    }
    let tree = m.tree();
    let mut value = vec![T::zero(); tree.len()];
    value[0] = x0;
    for v in 0..tree.len() {
        if tree.is_leaf(v) {
            continue;
        }
        let returns = m.returns(v)?;
        for (&c, r) in tree.children(v).iter().zip(&returns) {
            let factor = T::one() + dot(&pi.fractions[v], r);
            if !(factor > T::zero()) {
                return Err(Error::NonpositiveFactor { node: v, child: c, factor: factor.to_f64_lossy() });
            }
            value[c] = value[v] * factor;
        }
    }
    Ok(WealthProcess { value, x0 })
}

impl<T: Scalar> DensityProcess<T> {
    /// Validates positivity and the unit root value.
    pub fn new<P>(tree: &EventTree<P>, z: Vec<T>) -> Result<Self> {
        if z.len() != tree.len() {
            return Err(Error::Dimension { expected: tree.len(), got: z.len(), context: "density values" });
        }
        if let Some(node) = z.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::NonpositiveValue { node, value: z[node].to_f64_lossy(), context: "density" });
        }
        if (z[0] - T::one()).abs() > T::tol(1e-12) {
            return Err(Error::InvalidArgument(format!("density root value {} ≠ 1", z[0])));
        }
        Ok(Self { z })
    }

    pub fn ones<P>(tree: &EventTree<P>) -> Self {
        Self { z: vec![T::one(); tree.len()] }
    }

    /// Martingale extension of positive terminal values (leaf order), normalized
    /// to a unit root value.
    pub fn from_leaf_values(tree: &EventTree<T>, leaf: &[T]) -> Result<Self> {
        let leaves = tree.leaves();
        if leaf.len() != leaves.len() {
            return Err(Error::Dimension { expected: leaves.len(), got: leaf.len(), context: "leaf density" });
        }
        if let Some(k) = leaf.iter().position(|&v| !(v > T::zero())) {
            return Err(Error::NonpositiveValue { node: leaves[k], value: leaf[k].to_f64_lossy(), context: "leaf density" });
        }
        let mut z = vec![T::zero(); tree.len()];
        for (&l, &v) in leaves.iter().zip(leaf) {
            z[l] = v;
        }
        for v in (0..tree.len()).rev() {
            if !tree.is_leaf(v) {
                z[v] = tree.children(v).iter().map(|&c| tree.node(c).prob * z[c]).sum();
            }
        }
        let root = z[0];
        let z = z.into_iter().map(|v| v / root).collect();
        Ok(Self { z })
    }

    pub fn leaf_values(&self, tree: &EventTree<T>) -> Vec<T> {
        tree.leaves().iter().map(|&l| self.z[l]).collect()
    }

    /// `max |z(v) − Σ_j p_j z(child_j)|` over internal nodes.
    pub fn martingale_residual(&self, tree: &EventTree<T>) -> T {
        tree.internal_nodes()
            .into_iter()
            .map(|v| {
                let e: T = tree.children(v).iter().map(|&c| tree.node(c).prob * self.z[c]).sum();
                (e - self.z[v]).abs()
            })
            .fold(T::zero(), T::max)
    }

    /// Conditional one-step probabilities of the measure `z·P` at node `v`.
    pub fn transition(&self, tree: &EventTree<T>, v: usize) -> Vec<T> {
        let w: Vec<T> = tree.children(v).iter().map(|&c| tree.node(c).prob * self.z[c]).collect();
        let total: T = w.iter().copied().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `max_v ‖Σ_j q_j ΔS_j‖∞` under the one-step transitions of `z·P`.
    pub fn price_martingale_residual(&self, m: &MarketModel<T>) -> T {
        m.tree()
            .internal_nodes()
            .into_iter()
            .map(|v| {
                let q = self.transition(m.tree(), v);
                let inc = m.increments(v);
                let drift: Vec<T> = (0..m.d())
                    .map(|i| q.iter().zip(&inc).map(|(&qj, dj)| qj * dj[i]).sum())
                    .collect();
                norm_inf(&drift)
            })
            .fold(T::zero(), T::max)
    }

    /// Both densities are positive and the one-step transitions make prices
    /// martingales within `tol`, and `z` itself is a `P`-martingale within `tol`.
    pub fn is_emm_density(&self, m: &MarketModel<T>, tol: T) -> bool {
        self.z.iter().all(|&v| v > T::zero())
            && self.martingale_residual(m.tree()) <= tol
            && self.price_martingale_residual(m) <= tol
    }

    pub fn min(&self) -> T {
        self.z.iter().copied().fold(T::infinity(), T::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial() -> MarketModel<f64> {
        MarketModel::one_period("binomial", vec![1.0], vec![(0.5, vec![2.0]), (0.5, vec![0.5])])
            .unwrap()
    }

    #[test]
    fn buy_and_hold_units() {
        let m = binomial();
        let h = UnitStrategy::single_node(m.tree(), 1, 0, vec![1.0]);
        let w = wealth_from_units(&m, &h, 1.0).unwrap();
        assert_eq!(w.terminal(m.tree()), vec![2.0, 0.5]);
    }

    #[test]
    fn zero_units_keep_capital() {
        let m = binomial();
        let w = wealth_from_units(&m, &UnitStrategy::zeros(m.tree(), 1), 3.0).unwrap();
        assert!(w.value.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn unit_dimension_mismatch() {
        let m = binomial();
        let h = UnitStrategy { holdings: vec![vec![1.0, 2.0], vec![], vec![]] };
        assert!(matches!(wealth_from_units(&m, &h, 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn fractions_hand_computation() {
        let m = binomial();
        let mut pi = FractionStrategy::zeros(m.tree(), 1);
        let w0 = wealth_from_fractions(&m, &pi, 1.0).unwrap();
        assert!(w0.value.iter().all(|&v| v == 1.0));
        pi.fractions[0] = vec![0.5];
        let w = wealth_from_fractions(&m, &pi, 1.0).unwrap();
        assert_eq!(w.terminal(m.tree()), vec![1.5, 0.75]);
    }

    #[test]
    fn fraction_boundary_names_branch() {
        let m = binomial();
        let mut pi = FractionStrategy::zeros(m.tree(), 1);
        pi.fractions[0] = vec![2.0]; // 1 + 2·(−0.5) = 0 on the down branch
        match wealth_from_fractions(&m, &pi, 1.0) {
            Err(Error::NonpositiveFactor { node, child, factor }) => {
                assert_eq!((node, child), (0, 2));
                assert_eq!(factor, 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn density_from_leaves_and_residuals() {
        let m = binomial();
        let z = DensityProcess::from_leaf_values(m.tree(), &[2.0 / 3.0, 4.0 / 3.0]).unwrap();
        assert!((z.z[0] - 1.0).abs() < 1e-15);
        assert!(z.martingale_residual(m.tree()) < 1e-15);
        assert!(z.price_martingale_residual(&m) < 1e-15);
        assert!(DensityProcess::new(m.tree(), vec![1.0, 0.0, 2.0]).is_err());
    }
}
