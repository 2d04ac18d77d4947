//! Numéraire (growth-optimal) portfolio on trees and its supermartingale
//! verification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arbitrage::{check_na, node_na_lp, NaCertificate, NodeVerdict, DEGENERATE};
use crate::error::{ArbitrageWitness, Error, Result};
use crate::linalg::SymMatrix;
use crate::sampling::{admissible_units, feasible_fractions};
use crate::scalar::{dot, norm_inf, Scalar};
use crate::tree_market::{
    wealth_from_fractions, wealth_from_units, FractionStrategy, MarketModel, StoppingTime,
    WealthProcess,
};

/// One-period objective `Σ_j w_j φ(1 + π·R_j)` with `φ` the power utility of
/// relative risk aversion `gamma` (`gamma = 1` is `log`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowerObjective<T> {
    pub gamma: T,
}

impl<T: Scalar> PowerObjective<T> {
    pub fn log() -> Self {
        Self { gamma: T::one() }
    }

    fn is_log(&self) -> bool {
        self.gamma == T::one()
    }

    fn phi(&self, y: T) -> T {
        if self.is_log() {
            y.ln()
        } else {
            let a = T::one() - self.gamma;
            y.powf(a) / a
        }
    }

    fn dphi(&self, y: T) -> T {
        if self.is_log() {
            y.recip()
        } else {
            y.powf(-self.gamma)
        }
    }

    fn d2phi(&self, y: T) -> T {
        if self.is_log() {
            -(y * y).recip()
        } else {
            -self.gamma * y.powf(-self.gamma - T::one())
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NodeOptimum<T> {
    pub pi: Vec<T>,
    pub value: T,
    pub residual: T,
}

/// Damped Newton with backtracking inside `{1 + π·R_j > 0}`, started at `π = 0`.
/// Steps use the Hessian pseudoinverse, so iterates stay in the span of the
/// returns and the limit is the minimum-norm maximizer.
pub(crate) fn maximize_node<T: Scalar>(
    returns: &[Vec<T>],
    weights: &[T],
    obj: PowerObjective<T>,
) -> Result<NodeOptimum<T>> {
    let d = returns.first().map_or(0, |r| r.len());
    let eval = |pi: &[T]| -> Option<T> {
        let mut f = T::zero();
        for (r, &w) in returns.iter().zip(weights) {
            let y = T::one() + dot(pi, r);
            if !(y > T::zero()) {
                return None;
            }
            f = f + w * obj.phi(y);
        }
        Some(f)
    };
    let grad_hess = |pi: &[T]| -> (Vec<T>, SymMatrix<T>) {
        let mut g = vec![T::zero(); d];
        let mut h = SymMatrix::zeros(d);
        for (r, &w) in returns.iter().zip(weights) {
            let y = T::one() + dot(pi, r);
            let g1 = w * obj.dphi(y);
            for (gi, &ri) in g.iter_mut().zip(r) {
                *gi = *gi + g1 * ri;
            }
            h.add_outer(-w * obj.d2phi(y), r);
        }
        (g, h)
    };
    let mut pi = vec![T::zero(); d];
    let mut f = eval(&pi).expect("π = 0 is feasible");
    let (mut g, mut h) = grad_hess(&pi);
    let stop = T::tol(1e-14);
    let cap = T::c(1e12);
    for _ in 0..500 {
        if norm_inf(&g) <= stop {
            break;
        }
        let step = h.pinv_solve(&g, T::tol(1e-12));
        let slope = dot(&g, &step);
        if !(slope > T::zero()) {
            break;
        }
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..80 {
            let cand: Vec<T> = pi.iter().zip(&step).map(|(&p, &s)| p + t * s).collect();
            if let Some(fc) = eval(&cand) {
                if fc >= f + T::c(1e-4) * t * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                // near the optimum rounding hides the Armijo gain; accept on gradient decrease
                let (gc, _) = grad_hess(&cand);
                if norm_inf(&gc) < T::c(0.5) * norm_inf(&g) && fc >= f - T::tol(1e-15) * f.abs() {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t = t * T::c(0.5);
        }
        let Some((cand, fc)) = accepted else { break };
        pi = cand;
        f = fc;
        if norm_inf(&pi) > cap {
            return Err(Error::NoConvergence("objective unbounded: iterates diverge".into()));
        }
        let gh = grad_hess(&pi);
        g = gh.0;
        h = gh.1;
    }
    Ok(NodeOptimum { residual: norm_inf(&g), pi, value: f })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeLogOptimal<T> {
    pub pi_hat: Vec<T>,
    pub value: T,
    /// `‖Σ_j p_j R_j / (1 + π̂·R_j)‖∞`.
    pub residual: T,
}

pub(crate) fn node_log_optimal_at<T: Scalar>(
    node: usize,
    returns: &[Vec<T>],
    probs: &[T],
) -> Result<NodeLogOptimal<T>> {
    let d = returns.first().map_or(0, |r| r.len());
    if returns.iter().all(|r| norm_inf(r) < T::tol(DEGENERATE)) {
        return Ok(NodeLogOptimal { pi_hat: vec![T::zero(); d], value: T::zero(), residual: T::zero() });
    }
    let na = node_na_lp(returns, probs)?;
    if let NodeVerdict::Separating { h, gains } = na.verdict {
        return Err(Error::Arbitrage(ArbitrageWitness {
            node,
            direction: h.iter().map(|v| v.to_f64_lossy()).collect(),
            gains: gains.iter().map(|v| v.to_f64_lossy()).collect(),
        }));
    }
    let opt = maximize_node(returns, probs, PowerObjective::log())?;
    Ok(NodeLogOptimal { pi_hat: opt.pi, value: opt.value, residual: opt.residual })
}

/// Log-optimal fractions for one period with simple returns `returns[j]`
/// (one `d`-vector per branch). Fails with the separating direction when the
/// period admits arbitrage.
pub fn node_log_optimal<T: Scalar>(returns: &[Vec<T>], probs: &[T]) -> Result<NodeLogOptimal<T>> {
    node_log_optimal_at(0, returns, probs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumeraireSolution<T> {
    pub strategy: FractionStrategy<T>,
    pub wealth: WealthProcess<T>,
    /// First-order-condition residual per node (zero at leaves).
    pub foc_residual: Vec<T>,
    /// `x0 / Ŵ` at every node.
    pub deflator: Vec<T>,
}

impl<T: Scalar> NumeraireSolution<T> {
    pub fn worst_residual(&self) -> T {
        self.foc_residual.iter().copied().fold(T::zero(), T::max)
    }
}

/// Assembles per-node log-optimal fractions into the numéraire portfolio.
pub fn numeraire_portfolio<T: Scalar>(m: &MarketModel<T>, x0: T) -> Result<NumeraireSolution<T>> {
    m.require_valid()?;
    m.require_positive_prices()?;
    if let cert @ NaCertificate::Arbitrage { .. } = check_na(m)? {
        return Err(cert.into_witness_error());
    }
    let tree = m.tree();
    let mut strategy = FractionStrategy::zeros(tree, m.d());
    let mut foc_residual = vec![T::zero(); tree.len()];
    for v in tree.internal_nodes() {
        let sol = node_log_optimal_at(v, &m.returns(v)?, &tree.branch_probs(v))?;
        strategy.fractions[v] = sol.pi_hat;
        foc_residual[v] = sol.residual;
    }
    let wealth = wealth_from_fractions(m, &strategy, x0)?;
    let deflator = wealth.value.iter().map(|&w| x0 / w).collect();
    Ok(NumeraireSolution { strategy, wealth, foc_residual, deflator })
}

/// Test strategies for [`verify_numeraire`].
#[derive(Debug, Clone)]
pub enum TestStrategies<T> {
    List(Vec<FractionStrategy<T>>),
    Sampled { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingCheck<T> {
    pub cut: Vec<usize>,
    /// Largest `E[W_τ/Ŵ_τ] / (W_0/Ŵ_0)` over the test strategies.
    pub worst_ratio: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport<T> {
    pub n_tests: usize,
    pub tol: T,
    /// Largest `E[r_child | v] / r_v − 1` over tests and nodes, `r = W / Ŵ`.
    pub worst_violation: T,
    pub worst_node: Option<usize>,
    pub worst_test: Option<usize>,
    /// Largest `|E[r_child | v] / r_v − 1|` (martingale defect).
    pub max_abs_defect: T,
    pub stopping_checks: Vec<StoppingCheck<T>>,
    pub passed: bool,
}

/// Checks that `W / cand` is a supermartingale for every test wealth `W`
/// (started at `cand.x0`) through the one-step inequalities
/// `E[W_child/cand_child | v] ≤ W_v/cand_v`, measured relative to `W_v/cand_v`,
/// plus the expectation at three random stopping times.
pub fn verify_numeraire<T: Scalar>(
    m: &MarketModel<T>,
    cand: &WealthProcess<T>,
    tests: &TestStrategies<T>,
    tol: T,
) -> Result<VerifyReport<T>> {
    let tree = m.tree();
    if cand.value.len() != tree.len() {
        return Err(Error::Dimension { expected: tree.len(), got: cand.value.len(), context: "candidate wealth" });
    }
    if let Some(node) = cand.value.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::NonpositiveValue { node, value: cand.value[node].to_f64_lossy(), context: "candidate numéraire" });
    }
    let (strategies, cut_seed) = match tests {
        TestStrategies::List(list) => (list.clone(), 0),
        TestStrategies::Sampled { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let list = (0..*n).map(|_| feasible_fractions(m, &mut rng, 2.0, T::c(1e-6))).collect();
            (list, seed.wrapping_add(1))
        }
    };
    let mut cut_rng = ChaCha8Rng::seed_from_u64(cut_seed);
    let cuts: Vec<StoppingTime> = (0..3).map(|_| StoppingTime::random(tree, &mut cut_rng, 0.4)).collect();
    let uncond = tree.unconditional_probs();
    let mut report = VerifyReport {
        n_tests: strategies.len(),
        tol,
        worst_violation: T::neg_infinity(),
        worst_node: None,
        worst_test: None,
        max_abs_defect: T::zero(),
        stopping_checks: cuts
            .iter()
            .map(|c| StoppingCheck { cut: c.nodes().to_vec(), worst_ratio: T::neg_infinity() })
            .collect(),
        passed: true,
    };
    for (k, pi) in strategies.iter().enumerate() {
        let w = wealth_from_fractions(m, pi, cand.x0)?;
        let ratio: Vec<T> = w.value.iter().zip(&cand.value).map(|(&a, &b)| a / b).collect();
        for v in tree.internal_nodes() {
            let e: T = tree.children(v).iter().map(|&c| tree.node(c).prob * ratio[c]).sum();
            let rel = e / ratio[v] - T::one();
            if rel > report.worst_violation {
                report.worst_violation = rel;
                report.worst_node = Some(v);
                report.worst_test = Some(k);
            }
            report.max_abs_defect = report.max_abs_defect.max(rel.abs());
        }
        for (cut, check) in cuts.iter().zip(report.stopping_checks.iter_mut()) {
            let e: T = cut.nodes().iter().map(|&v| uncond[v] * ratio[v]).sum();
            check.worst_ratio = check.worst_ratio.max(e / ratio[0]);
        }
    }
    let stopping_ok = report
        .stopping_checks
        .iter()
        .all(|c| strategies.is_empty() || c.worst_ratio <= T::one() + tol);
    report.passed = (strategies.is_empty() || report.worst_violation <= tol) && stopping_ok;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeflatorProbe<T> {
    pub n: usize,
    pub seed: u64,
    pub x0: T,
    /// Largest `E[W_T · x0/Ŵ_T]` over the sampled wealths.
    pub max_expectation: T,
    pub violations: usize,
    pub passed: bool,
}

/// `E[W_T · x0 / Ŵ_T]` for one wealth process.
pub fn deflated_expectation<T: Scalar>(
    m: &MarketModel<T>,
    sol: &NumeraireSolution<T>,
    w: &WealthProcess<T>,
) -> T {
    let tree = m.tree();
    let uncond = tree.unconditional_probs();
    tree.leaves().iter().map(|&l| uncond[l] * w.value[l] * sol.deflator[l]).sum()
}

/// Samples `n` x0-admissible unit strategies and checks
/// `E[W_T · x0/Ŵ_T] ≤ x0 (1 + tol)` for each.
pub fn deflator_probe<T: Scalar>(
    m: &MarketModel<T>,
    sol: &NumeraireSolution<T>,
    n: usize,
    seed: u64,
    tol: T,
) -> Result<DeflatorProbe<T>> {
    let x0 = sol.wealth.x0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_expectation = T::neg_infinity();
    let mut violations = 0;
    for _ in 0..n {
        let h = admissible_units(m, &mut rng, x0);
        let w = wealth_from_units(m, &h, x0)?;
        let e = deflated_expectation(m, sol, &w);
        if e > x0 * (T::one() + tol) {
            violations += 1;
        }
        max_expectation = max_expectation.max(e);
    }
    Ok(DeflatorProbe { n, seed, x0, max_expectation, violations, passed: violations == 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let mut best = (lo, f64::NEG_INFINITY);
        for i in 1..n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let v = f(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        best.0
    }

    #[test]
    fn symmetric_binomial_half() {
        let r = node_log_optimal::<f64>(&[vec![1.0], vec![-0.5]], &[0.5, 0.5]).unwrap();
        let grid = grid_argmax(|p| 0.5 * (1.0 + p).ln() + 0.5 * (1.0 - 0.5 * p).ln(), -0.99, 1.99);
        assert!((grid - 0.5).abs() < 1e-4);
        assert!((r.pi_hat[0] - 0.5).abs() < 1e-12);
        assert!(r.residual < 1e-10);
    }

    #[test]
    fn skewed_binomial_is_the_asset() {
        let r = node_log_optimal::<f64>(&[vec![1.0], vec![-0.5]], &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let grid = grid_argmax(
            |p| 2.0 / 3.0 * (1.0 + p).ln() + 1.0 / 3.0 * (1.0 - 0.5 * p).ln(),
            -0.99,
            1.99,
        );
        assert!((grid - 1.0).abs() < 1e-4);
        assert!((r.pi_hat[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_node_returns_zero() {
        let r = node_log_optimal::<f64>(&[vec![0.0], vec![0.0]], &[0.5, 0.5]).unwrap();
        assert_eq!(r.pi_hat, vec![0.0]);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn arbitrage_node_errors_with_direction() {
        match node_log_optimal::<f64>(&[vec![0.0], vec![0.5]], &[0.5, 0.5]) {
            Err(Error::Arbitrage(w)) => assert!(w.direction[0] > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn redundant_assets_give_minimum_norm_fractions() {
        // two identical assets: any split of 0.5 is optimal, min-norm is (0.25, 0.25)
        let r = node_log_optimal::<f64>(&[vec![1.0, 1.0], vec![-0.5, -0.5]], &[0.5, 0.5]).unwrap();
        assert!((r.pi_hat[0] - 0.25).abs() < 1e-12 && (r.pi_hat[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn binomial_numeraire_wealth() {
        let m: MarketModel<f64> = MarketModel::one_period("b", vec![1.0], vec![(0.5, vec![2.0]), (0.5, vec![0.5])])
            .unwrap();
        let sol = numeraire_portfolio(&m, 1.0).unwrap();
        let t = sol.wealth.terminal(m.tree());
        assert!((t[0] - 1.5).abs() < 1e-12 && (t[1] - 0.75).abs() < 1e-12);
        let rep = verify_numeraire(
            &m,
            &sol.wealth,
            &TestStrategies::List(vec![FractionStrategy::zeros(m.tree(), 1)]),
            1e-8,
        )
        .unwrap();
        // E[1/Ŵ_1] = 0.5(1/1.5 + 1/0.75) = 1
        assert!(rep.max_abs_defect < 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn numeraire_requires_na() {
        let m: MarketModel<f64> = MarketModel::one_period("a", vec![1.0], vec![(0.5, vec![1.0]), (0.5, vec![1.5])])
            .unwrap();
        assert!(matches!(numeraire_portfolio(&m, 1.0), Err(Error::Arbitrage(_))));
    }

    #[test]
    fn nonpositive_candidate_rejected() {
        let m: MarketModel<f64> = MarketModel::one_period("b", vec![1.0], vec![(0.5, vec![2.0]), (0.5, vec![0.5])])
            .unwrap();
        let cand = WealthProcess { value: vec![1.0, 0.0, 1.0], x0: 1.0 };
        assert!(verify_numeraire(&m, &cand, &TestStrategies::Sampled { n: 1, seed: 0 }, 1e-8).is_err());
    }
}
