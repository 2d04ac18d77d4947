//! Entropy-Hellinger process of tree densities, the minimal-entropy EMM,
//! exponential utility, and concatenation of densities at stopping times.
//!
//! A tree density has no continuous martingale part, so the `⟨N^c⟩` term of
//! the entropy functional vanishes identically and `V^E` is a pure jump sum.

use std::fmt::Debug;

use num_traits::Num;
use serde::Serialize;

use crate::arbitrage::check_na;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{dot, norm_inf, Scalar};
use crate::tree_market::{DensityProcess, EventTree, MarketModel, StoppingTime, UnitStrategy};
use crate::utility::leaf_features;

/// `(1+x)log(1+x) − x`, nonnegative for `x > −1` with equality only at 0.
pub fn jump_term<T: Scalar>(x: T) -> T {
    let y = T::one() + x;
    if y == T::zero() {
        T::one()
    } else {
        y * y.ln() - x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport<T> {
    /// `ΔN(v) = Z(v)/Z(parent) − 1`; zero at the root.
    pub delta_n: Vec<T>,
    /// Jump term at each node (zero at the root).
    pub jump: Vec<T>,
    /// `V^E` accumulated along the root path.
    pub ve: Vec<T>,
    /// Compensator: `h^E(v) = h^E(parent) + E[jump | parent]`, predictable.
    pub he: Vec<T>,
    /// `Σ Z(parent)·jump` along the root path.
    pub weighted_ve: Vec<T>,
    /// `Z log Z` is locally integrable; always true on a finite tree.
    pub llogl_integrable: bool,
}

impl<T: Scalar> EntropyReport<T> {
    pub fn expected_terminal_ve(&self, tree: &EventTree<T>) -> T {
        tree.expect_leaves(&leaf_slice(tree, &self.ve))
    }

    pub fn expected_terminal_weighted_ve(&self, tree: &EventTree<T>) -> T {
        tree.expect_leaves(&leaf_slice(tree, &self.weighted_ve))
    }
}

fn leaf_slice<T: Copy>(tree: &EventTree<T>, v: &[T]) -> Vec<T> {
    tree.leaves().iter().map(|&l| v[l]).collect()
}

/// `E[Z_T log Z_T]`.
pub fn relative_entropy<T: Scalar>(tree: &EventTree<T>, z: &DensityProcess<T>) -> T {
    let leaf: Vec<T> = z.leaf_values(tree).into_iter().map(|v| v * v.ln()).collect();
    tree.expect_leaves(&leaf)
}

/// For a martingale density `E[Z_T log Z_T] = E[Σ_t Z_{t−1}·jump_t]`, which is
/// `E[V^E_T]` only when `Z_{t−1} ≡ 1`, i.e. on one-period trees.
pub fn entropy_hellinger<T: Scalar>(tree: &EventTree<T>, z: &DensityProcess<T>) -> Result<EntropyReport<T>> {
    if z.z.len() != tree.len() {
        return Err(Error::Dimension { expected: tree.len(), got: z.z.len(), context: "density values" });
    }
    if let Some(node) = z.z.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::NonpositiveValue { node, value: z.z[node].to_f64_lossy(), context: "density" });
    }
    let n = tree.len();
    let mut delta_n = vec![T::zero(); n];
    let mut jump = vec![T::zero(); n];
    let mut ve = vec![T::zero(); n];
    let mut he = vec![T::zero(); n];
    let mut weighted_ve = vec![T::zero(); n];
    for v in 0..n {
        if let Some(p) = tree.parent(v) {
            delta_n[v] = z.z[v] / z.z[p] - T::one();
            jump[v] = jump_term(delta_n[v]);
            ve[v] = ve[p] + jump[v];
            weighted_ve[v] = weighted_ve[p] + z.z[p] * jump[v];
        }
    }
    for v in tree.internal_nodes() {
        let comp: T = tree.children(v).iter().map(|&c| tree.node(c).prob * jump[c]).sum();
        for &c in tree.children(v) {
            he[c] = he[v] + comp;
        }
    }
    Ok(EntropyReport { delta_n, jump, ve, he, weighted_ve, llogl_integrable: true })
}

/// Martingale constraints on leaf `Q`-masses: total mass one and, for every
/// internal node and asset, `Σ_{leaves below} Q_ℓ ΔS(v → child on path) = 0`.
fn martingale_constraints<T: Scalar>(m: &MarketModel<T>) -> (Vec<Vec<T>>, Vec<T>) {
    let (_, _, feats) = leaf_features(m);
    let n_leaves = feats.len();
    let n_cons = feats.first().map_or(0, |f| f.len());
    let mut a = vec![vec![T::one(); n_leaves]];
    for k in 0..n_cons {
        a.push(feats.iter().map(|f| f[k]).collect());
    }
    let mut b = vec![T::zero(); a.len()];
    b[0] = T::one();
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinEntropy<T> {
    pub density: DensityProcess<T>,
    /// `E[Z_T log Z_T]`.
    pub entropy: T,
    /// `max(‖∇f + Aᵀν‖∞, ‖Ax − b‖∞)`.
    pub kkt_residual: T,
    pub iterations: usize,
}

/// `min_θ log Σ_c exp(lw_c − θ·Δ_c)` by damped Newton with pseudoinverse
/// steps (flat directions of redundant assets are left at zero). Returns the
/// minimizer, the minimum and the iteration count.
fn node_exp_dual<T: Scalar>(increments: &[Vec<T>], log_w: &[T]) -> Result<(Vec<T>, T, usize)> {
    let d = increments[0].len();
    let eval = |theta: &[T]| -> (T, Vec<T>) {
        let e: Vec<T> = log_w.iter().zip(increments).map(|(&lw, dc)| lw - dot(theta, dc)).collect();
        let top = e.iter().copied().fold(T::neg_infinity(), T::max);
        let s: T = e.iter().map(|&v| (v - top).exp()).sum();
        let q = e.iter().map(|&v| (v - top).exp() / s).collect();
        (top + s.ln(), q)
    };
    let scale = increments.iter().flatten().fold(T::one(), |acc, &v| acc.max(v.abs()));
    let target = T::tol(1e-14) * scale;
    let mut theta = vec![T::zero(); d];
    let (mut f, mut q) = eval(&theta);
    for it in 0..200 {
        let mean: Vec<T> = (0..d).map(|i| q.iter().zip(increments).map(|(&qc, dc)| qc * dc[i]).sum()).collect();
        let grad: Vec<T> = mean.iter().map(|&v| -v).collect();
        if norm_inf(&grad) <= target {
            return Ok((theta, f, it));
        }
        let mut hess = SymMatrix::zeros(d);
        for (&qc, dc) in q.iter().zip(increments) {
            let centred: Vec<T> = dc.iter().zip(&mean).map(|(&x, &mu)| x - mu).collect();
            hess.add_outer(qc, &centred);
        }
        let step: Vec<T> = hess.pinv_solve(&grad, T::tol(1e-13)).iter().map(|&v| -v).collect();
        let slope = dot(&grad, &step);
        // once the predicted decrease is below the resolution of f, take the
        // pure Newton step: the line search can no longer see progress
        let pure = -slope <= T::epsilon() * T::c(64.0) * (T::one() + f.abs());
        let mut t = T::one();
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<T> = theta.iter().zip(&step).map(|(&a, &b)| a + t * b).collect();
            let (fc, qc) = eval(&cand);
            if pure || fc <= f + T::c(1e-4) * t * slope {
                theta = cand;
                f = fc;
                q = qc;
                moved = true;
                break;
            }
            t = t * T::c(0.5);
        }
        if !moved {
            return Ok((theta, f, it));
        }
    }
    Err(Error::NoConvergence("node entropy dual".into()))
}

/// Backward recursion on the chain rule of relative entropy: at each node the
/// transition minimizes `Σ q_c (log(q_c/p_c) + V_c)` under the one-step
/// martingale constraint, a small log-sum-exp dual. The KKT residual is then
/// measured for the global program `min Σ x log(x/p)` s.t. `A x = b` over leaf
/// masses, with the multipliers implied by the node duals.
pub fn min_entropy_emm<T: Scalar>(m: &MarketModel<T>) -> Result<MinEntropy<T>> {
    let cert = check_na(m)?;
    if !cert.holds() {
        return Err(cert.into_witness_error());
    }
    let tree = m.tree();
    let d = m.d();
    let mut value = vec![T::zero(); tree.len()];
    // log(q_c / p_c) per non-root node
    let mut log_ratio = vec![T::zero(); tree.len()];
    let internal = tree.internal_nodes();
    let mut theta = vec![T::zero(); internal.len() * d];
    let mut iterations = 0;
    for (k, &v) in internal.iter().enumerate().rev() {
        let kids = tree.children(v);
        let log_w: Vec<T> = kids.iter().map(|&c| tree.node(c).prob.ln() - value[c]).collect();
        let (th, f, it) = node_exp_dual(&m.increments(v), &log_w)?;
        iterations += it;
        value[v] = -f;
        for (&c, dc) in kids.iter().zip(m.increments(v)) {
            log_ratio[c] = -value[c] - dot(&th, &dc) - f;
        }
        theta[k * d..(k + 1) * d].copy_from_slice(&th);
    }
    let probs = tree.unconditional_probs();
    let leaves = tree.leaves();
    let log_z: Vec<T> = leaves.iter().map(|&l| tree.path_to(l).iter().skip(1).map(|&u| log_ratio[u]).sum()).collect();
    let p: Vec<T> = leaves.iter().map(|&l| probs[l]).collect();
    let x: Vec<T> = log_z.iter().zip(&p).map(|(&lz, &pl)| pl * lz.exp()).collect();

    let (a, b) = martingale_constraints(m);
    let (_, _, feats) = leaf_features(m);
    let primal = a.iter().zip(&b).map(|(row, &bi)| (dot(row, &x) - bi).abs()).fold(T::zero(), T::max);
    let stationarity = log_z
        .iter()
        .zip(&feats)
        .map(|(&lz, f)| (lz - value[0] + dot(&theta, f)).abs())
        .fold(T::zero(), T::max);
    let kkt_residual = primal.max(stationarity);
    if !(kkt_residual <= T::tol(1e-8).max(T::epsilon() * T::c(1e4))) {
        return Err(Error::NoConvergence(format!("minimal-entropy KKT residual {kkt_residual}")));
    }
    let z: Vec<T> = log_z.iter().map(|&lz| lz.exp()).collect();
    let density = DensityProcess::from_leaf_values(tree, &z)?;
    let entropy = x.iter().zip(&log_z).map(|(&xi, &lz)| xi * lz).sum();
    Ok(MinEntropy { density, entropy, kkt_residual, iterations })
}

/// Strategies beyond this sup-norm signal an unbounded problem.
pub const THETA_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpUtility<T> {
    pub theta_hat: UnitStrategy<T>,
    /// `min E[exp(−(θ·S)_T)]`.
    pub value: T,
    /// `‖∇ E[exp(−(θ·S)_T)]‖∞` at the optimum.
    pub gradient_norm: T,
    /// `exp(−(θ̂·S)_T)/E[exp(−(θ̂·S)_T)]` extended to a density process.
    pub density: DensityProcess<T>,
    /// Price martingale residual of `density`.
    pub density_link_residual: T,
}

/// Minimizes `log E[exp(−(θ·S)_T)]` by Newton from `θ = 0` with
/// log-sum-exp evaluation; pseudoinverse steps give the minimum-norm θ̂.
pub fn exp_utility<T: Scalar>(m: &MarketModel<T>) -> Result<ExpUtility<T>> {
    let cert = check_na(m)?;
    if !cert.holds() {
        return Err(cert.into_witness_error());
    }
    let tree = m.tree();
    let (internal, leaves, feats) = leaf_features(m);
    let probs = tree.unconditional_probs();
    let p: Vec<T> = leaves.iter().map(|&l| probs[l]).collect();
    let n = internal.len() * m.d();

    // (log E[e^{−θ·g}], softmax weights)
    let lse = |theta: &[T]| -> (T, Vec<T>) {
        let e: Vec<T> = feats.iter().zip(&p).map(|(g, &pl)| pl.ln() - dot(g, theta)).collect();
        let mx = e.iter().copied().fold(T::neg_infinity(), T::max);
        let w: Vec<T> = e.iter().map(|&v| (v - mx).exp()).collect();
        let s: T = w.iter().copied().sum();
        (mx + s.ln(), w.into_iter().map(|v| v / s).collect())
    };
    let grad_hess = |w: &[T]| -> (Vec<T>, SymMatrix<T>) {
        let mean: Vec<T> = (0..n).map(|k| -w.iter().zip(&feats).map(|(&wl, g)| wl * g[k]).sum::<T>()).collect();
        let mut h = SymMatrix::zeros(n);
        for (&wl, g) in w.iter().zip(&feats) {
            let c: Vec<T> = (0..n).map(|k| -g[k] - mean[k]).collect();
            h.add_outer(wl, &c);
        }
        (mean, h)
    };
    let mut theta = vec![T::zero(); n];
    let (mut f, mut w) = lse(&theta);
    let (mut g, mut h) = grad_hess(&w);
    for _ in 0..500 {
        if norm_inf(&g) <= T::tol(1e-14) {
            break;
        }
        let step: Vec<T> = h.pinv_solve(&g, T::tol(1e-12)).into_iter().map(|v| -v).collect();
        let slope = dot(&g, &step);
        if !(slope < T::zero()) {
            break;
        }
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..80 {
            let cand: Vec<T> = theta.iter().zip(&step).map(|(&a, &s)| a + t * s).collect();
            let (fc, wc) = lse(&cand);
            let (gc, hc) = grad_hess(&wc);
            if fc <= f + T::c(1e-4) * t * slope
                || (norm_inf(&gc) < T::c(0.5) * norm_inf(&g) && fc <= f + T::tol(1e-15) * f.abs().max(T::one()))
            {
                accepted = Some((cand, fc, wc, gc, hc));
                break;
            }
            t = t * T::c(0.5);
        }
        let Some((cand, fc, wc, gc, hc)) = accepted else { break };
        theta = cand;
        f = fc;
        w = wc;
        g = gc;
        h = hc;
        if norm_inf(&theta) > T::c(THETA_CAP) {
            return Err(Error::NoConvergence(format!(
                "exponential utility: ‖θ‖∞ exceeds {THETA_CAP}; the infimum is not attained"
            )));
        }
    }
    let value = f.exp();
    let gradient_norm = norm_inf(&g) * value;
    if gradient_norm > T::tol(1e-8) {
        return Err(Error::NoConvergence(format!("exponential utility gradient norm {gradient_norm}")));
    }
    let z: Vec<T> = w.iter().zip(&p).map(|(&wl, &pl)| wl / pl).collect();
    let density = DensityProcess::from_leaf_values(tree, &z)?;
    let density_link_residual = density.price_martingale_residual(m);
    let mut theta_hat = UnitStrategy::zeros(tree, m.d());
    for (k, &v) in internal.iter().enumerate() {
        theta_hat.holdings[v] = theta[k * m.d()..(k + 1) * m.d()].to_vec();
    }
    Ok(ExpUtility { theta_hat, value, gradient_norm, density, density_link_residual })
}

/// Division-exact values: any ordered field (`f64`, `BigRational`, ...).
pub trait FieldValue: Clone + Num + PartialOrd + Debug {}
impl<T: Clone + Num + PartialOrd + Debug> FieldValue for T {}

/// `first` up to `cut`; beyond it, `first(u)·second(v)/second(u)` with `u` the
/// cut node above `v`. Values at or before the cut are copied verbatim.
pub fn concat_pair<P, T: FieldValue>(tree: &EventTree<P>, first: &[T], cut: &StoppingTime, second: &[T]) -> Result<Vec<T>> {
    for (k, seg) in [first, second].into_iter().enumerate() {
        if seg.len() != tree.len() {
            return Err(Error::Dimension { expected: tree.len(), got: seg.len(), context: "segment density" });
        }
        if let Some(v) = seg.iter().position(|x| !(*x > T::zero())) {
            return Err(Error::InvalidArgument(format!("segment {k}: nonpositive density {:?} at node {v}", seg[v])));
        }
    }
    Ok((0..tree.len())
        .map(|v| match tree.path_to(v).into_iter().find(|&u| cut.contains(u)) {
            Some(u) if u != v => first[u].clone() * second[v].clone() / second[u].clone(),
            _ => first[v].clone(),
        })
        .collect())
}

/// Left fold of [`concat_pair`] over `cuts[0] ≤ cuts[1] ≤ … = terminal`;
/// `segments.len() == cuts.len()` and segment `k` drives the interval
/// `(cuts[k−1], cuts[k]]`.
pub fn concatenate_densities<P, T: FieldValue>(
    tree: &EventTree<P>,
    cuts: &[StoppingTime],
    segments: &[Vec<T>],
) -> Result<Vec<T>> {
    if cuts.is_empty() || cuts.len() != segments.len() {
        return Err(Error::InvalidArgument(format!("{} cuts for {} segments", cuts.len(), segments.len())));
    }
    for w in cuts.windows(2) {
        if !w[0].precedes(tree, &w[1]) {
            return Err(Error::InvalidStoppingTime("cuts are not nested".into()));
        }
    }
    if cuts.last() != Some(&StoppingTime::terminal(tree)) {
        return Err(Error::InvalidStoppingTime("last cut must be the terminal time".into()));
    }
    let mut acc = segments[0].clone();
    for k in 1..segments.len() {
        acc = concat_pair(tree, &acc, &cuts[k - 1], &segments[k])?;
    }
    if segments.len() == 1 {
        concat_pair(tree, &acc, &cuts[0], &acc)
    } else {
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcatReport<T> {
    pub density: Vec<T>,
    pub positive: bool,
    /// `max_v |V^E(concat)(v) − Σ_k segment-k jumps on (τ_{k−1}, τ_k]|`.
    pub ve_additivity_residual: T,
    pub martingale_residual: T,
    pub price_residual: T,
}

/// Concatenates and verifies positivity, `V^E` additivity over intervals, and
/// the martingale-density property for the full market.
pub fn concatenation_report<T: Scalar>(
    m: &MarketModel<T>,
    cuts: &[StoppingTime],
    segments: &[Vec<T>],
) -> Result<ConcatReport<T>> {
    let tree = m.tree();
    let density = concatenate_densities(tree, cuts, segments)?;
    let z = DensityProcess { z: density.clone() };
    let report = entropy_hellinger(tree, &z)?;
    // segment of the step into v: first cut with no strict ancestor of v on it
    let mut additive = vec![T::zero(); tree.len()];
    let mut worst = T::zero();
    for v in 1..tree.len() {
        let p = tree.parent(v).expect("non-root");
        let k = cuts
            .iter()
            .position(|c| !tree.path_to(p).into_iter().any(|u| c.contains(u)))
            .expect("no leaf is a strict ancestor");
        let seg = &segments[k];
        additive[v] = additive[p] + jump_term(seg[v] / seg[p] - T::one());
        worst = worst.max((additive[v] - report.ve[v]).abs());
    }
    Ok(ConcatReport {
        positive: density.iter().all(|&v| v > T::zero()),
        ve_additivity_residual: worst,
        martingale_residual: z.martingale_residual(tree),
        price_residual: z.price_martingale_residual(m),
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial() -> MarketModel<f64> {
        MarketModel::one_period("b", vec![1.0], vec![(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap()
    }

    fn trinomial() -> MarketModel<f64> {
        MarketModel::one_period("t", vec![1.0], vec![(1.0 / 3.0, vec![2.0]), (1.0 / 3.0, vec![1.0]), (1.0 / 3.0, vec![0.5])])
            .unwrap()
    }

    #[test]
    fn jump_term_sign() {
        assert_eq!(jump_term(0.0f64), 0.0);
        for x in [-0.999, -0.5, -1e-3, 1e-3, 0.7, 5.0f64] {
            assert!(jump_term(x) > 0.0);
        }
    }

    #[test]
    fn one_step_fixture() {
        let m = binomial();
        let z = DensityProcess::new(m.tree(), vec![1.0, 2.0 / 3.0, 4.0 / 3.0]).unwrap();
        let r = entropy_hellinger(m.tree(), &z).unwrap();
        assert!((r.expected_terminal_ve(m.tree()) - 0.056633012265).abs() < 1e-11);
        assert!((relative_entropy(m.tree(), &z) - 0.056633012265).abs() < 1e-11);
    }

    #[test]
    fn min_entropy_binomial_is_the_unique_emm() {
        let r = min_entropy_emm(&binomial()).unwrap();
        assert!((r.density.z[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.entropy - 0.056633012265).abs() < 1e-11);
        assert!(r.kkt_residual < 1e-8);
    }

    #[test]
    fn min_entropy_trinomial_grid_oracle() {
        // EMM line q = (t/2, 1 − 1.5t, t), t ∈ (0, 2/3); golden-section on KL(q‖p)
        let p = 1.0 / 3.0;
        let kl = |t: f64| [t / 2.0, 1.0 - 1.5 * t, t].iter().map(|&q: &f64| q * (q / p).ln()).sum::<f64>();
        let (mut a, mut b) = (1e-9, 2.0 / 3.0 - 1e-9);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if kl(c) < kl(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let t = (a + b) / 2.0;
        let r = min_entropy_emm(&trinomial()).unwrap();
        let q: Vec<f64> = r.density.leaf_values(trinomial().tree()).iter().map(|z| z * p).collect();
        assert!((q[0] - t / 2.0).abs() < 1e-8 && (q[2] - t).abs() < 1e-8, "{q:?} vs t = {t}");
        assert!((q[0] - q[2] / 2.0).abs() < 1e-12);
        assert!(r.kkt_residual < 1e-8);
    }

    #[test]
    fn exp_utility_binomial_root_find() {
        // E[e^{−θΔS}] = ½e^{−θ} + ½e^{θ/2}; stationary at e^{1.5θ} = 2
        let theta = 2f64.ln() / 1.5;
        let r = exp_utility(&binomial()).unwrap();
        assert!((r.theta_hat.holdings[0][0] - theta).abs() < 1e-9);
        assert!((r.value - (0.5 * (-theta).exp() + 0.5 * (theta / 2.0).exp())).abs() < 1e-12);
        assert!((r.density.z[1] - 2.0 / 3.0).abs() < 1e-10);
        assert!(r.density_link_residual < 1e-10);
    }

    #[test]
    fn exp_utility_matches_min_entropy_on_trinomial() {
        let a = exp_utility(&trinomial()).unwrap();
        let b = min_entropy_emm(&trinomial()).unwrap();
        for (x, y) in a.density.z.iter().zip(&b.density.z) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_market_entropy_zero() {
        let m: MarketModel<f64> = MarketModel::one_period("c", vec![1.0], vec![(0.4, vec![1.0]), (0.6, vec![1.0])]).unwrap();
        let r = min_entropy_emm(&m).unwrap();
        assert!(r.entropy.abs() < 1e-14);
        let e = exp_utility(&m).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.theta_hat.holdings[0], vec![0.0]);
    }

    #[test]
    fn arbitrage_rejected() {
        let m: MarketModel<f64> = MarketModel::one_period("a", vec![1.0], vec![(0.5, vec![2.0]), (0.5, vec![1.0])]).unwrap();
        assert!(matches!(min_entropy_emm(&m), Err(Error::Arbitrage(_))));
        assert!(matches!(exp_utility(&m), Err(Error::Arbitrage(_))));
    }

    #[test]
    fn single_terminal_segment_is_identity() {
        let m = binomial();
        let z = vec![1.0, 0.8, 1.2];
        let out = concatenate_densities(m.tree(), &[StoppingTime::terminal(m.tree())], &[z.clone()]).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn interior_cut_report() {
        let m: MarketModel<f64> = MarketModel::from_nodes(
            "two-step",
            vec![
                (None, 1.0, vec![1.0]),
                (Some(0), 0.5, vec![2.0]),
                (Some(0), 0.5, vec![0.5]),
                (Some(1), 0.5, vec![4.0]),
                (Some(1), 0.5, vec![1.0]),
                (Some(2), 0.5, vec![1.0]),
                (Some(2), 0.5, vec![0.25]),
            ],
        )
        .unwrap();
        let (u, d) = (2.0 / 3.0, 4.0 / 3.0);
        let emm = vec![1.0, u, d, u * u, u * d, d * u, d * d];
        let flat = vec![1.0, 0.9, 1.1, 0.8, 1.0, 1.05, 1.15];
        let cuts = [StoppingTime::at_depth(m.tree(), 1).unwrap(), StoppingTime::terminal(m.tree())];
        let r = concatenation_report(&m, &cuts, &[emm.clone(), emm.clone()]).unwrap();
        assert!(r.price_residual < 1e-14 && r.ve_additivity_residual < 1e-14);
        // the second segment only matters after the cut
        let r = concatenation_report(&m, &cuts, &[emm.clone(), flat]).unwrap();
        assert_eq!(&r.density[..3], &emm[..3]);
        assert!(r.ve_additivity_residual < 1e-14);
    }

    #[test]
    fn zero_segment_value_names_node() {
        let m = binomial();
        let err = concatenate_densities(m.tree(), &[StoppingTime::terminal(m.tree())], &[vec![1.0, 0.0, 2.0]])
            .unwrap_err()
            .to_string();
        assert!(err.contains("node 1"), "{err}");
    }
}
