//! No-arbitrage and NUPBR decisions on finite trees, with certificates.
//!
//! A finite tree is arbitrage-free iff every one-period sub-market is. Each
//! node is decided by the max-min-slack LP
//!
//! ```text
//! maximize ε  s.t.  Σ_j q_j ΔS_j = 0,  Σ_j q_j = 1,  q_j ≥ ε
//! ```
//!
//! An optimum `ε* > 0` yields strictly positive one-step martingale weights;
//! otherwise the separation LP `max Σ_j g_j, g_j = H·ΔS_j ∈ [0, 1]` recovers a
//! Farkas direction `H` with nonnegative, somewhere-positive gains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{ArbitrageWitness, Error, Result};
use crate::sampling::admissible_units;
use crate::scalar::{dot, norm_inf, Scalar};
use crate::simplex::{LpStatus, StandardLp};
use crate::tree_market::{wealth_from_units, DensityProcess, MarketModel, UnitStrategy};

/// Strict-positivity threshold for `ε*`.
pub const TOL_POS: f64 = 1e-9;
/// Increments below this (sup-norm) make a node degenerate.
pub const DEGENERATE: f64 = 1e-12;

const PIVOT_TOL: f64 = 1e-11;
const PIVOT_TOL_TIGHT: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NodeVerdict<T> {
    /// Strictly positive one-period martingale weights.
    Interior { q: Vec<T> },
    /// Holdings `h` with gains `h·ΔS_j ≥ 0` for all branches, one positive.
    Separating { h: Vec<T>, gains: Vec<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeNa<T> {
    /// Optimal slack; `-inf` when the martingale constraints are infeasible.
    pub eps_star: T,
    pub verdict: NodeVerdict<T>,
    /// Whether the tightened re-solve was needed (|ε*| inside the ambiguity band).
    pub resolved_tight: bool,
}

impl<T: Scalar> NodeNa<T> {
    pub fn is_interior(&self) -> bool {
        matches!(self.verdict, NodeVerdict::Interior { .. })
    }
}

fn max_slack_lp<T: Scalar>(increments: &[Vec<T>], d: usize, pivot_tol: T) -> Result<(T, Vec<T>)> {
    let k = increments.len();
    let n = k + 2;
    let kk = T::from_usize_lossy(k);
    let mut a = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut row = vec![T::zero(); n];
        let mut total = T::zero();
        for (j, inc) in increments.iter().enumerate() {
            row[j] = inc[i];
            total = total + inc[i];
        }
        row[k] = total;
        row[k + 1] = -total;
        a.push(row);
    }
    let mut sum_row = vec![T::one(); n];
    sum_row[k] = kk;
    sum_row[k + 1] = -kk;
    a.push(sum_row);
    let mut b = vec![T::zero(); d + 1];
    b[d] = T::one();
    let mut c = vec![T::zero(); n];
    c[k] = T::one();
    c[k + 1] = -T::one();
    let sol = StandardLp { a, b, c }.solve(pivot_tol).map_err(Error::Lp)?;
    match sol.status {
        LpStatus::Infeasible => Ok((T::neg_infinity(), vec![])),
        LpStatus::Unbounded => Err(Error::Lp("max-slack LP reported unbounded (ε ≤ 1/k)".into())),
        LpStatus::Optimal => {
            let eps = sol.x[k] - sol.x[k + 1];
            let q = (0..k).map(|j| sol.x[j] + eps).collect();
            Ok((eps, q))
        }
    }
}

fn separation_lp<T: Scalar>(increments: &[Vec<T>], d: usize, pivot_tol: T) -> Result<(Vec<T>, Vec<T>)> {
    let k = increments.len();
    let n = 2 * d + 2 * k;
    let mut a = Vec::with_capacity(2 * k);
    let mut b = Vec::with_capacity(2 * k);
    for (j, inc) in increments.iter().enumerate() {
        let mut row = vec![T::zero(); n];
        for i in 0..d {
            row[i] = inc[i];
            row[d + i] = -inc[i];
        }
        row[2 * d + j] = -T::one();
        a.push(row);
        b.push(T::zero());
        let mut cap = vec![T::zero(); n];
        cap[2 * d + j] = T::one();
        cap[2 * d + k + j] = T::one();
        a.push(cap);
        b.push(T::one());
    }
    let mut c = vec![T::zero(); n];
    for j in 0..k {
        c[2 * d + j] = T::one();
    }
    let sol = StandardLp { a, b, c }.solve(pivot_tol).map_err(Error::Lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("separation LP status {:?}", sol.status)));
    }
    let h: Vec<T> = (0..d).map(|i| sol.x[i] - sol.x[d + i]).collect();
    let gains = increments.iter().map(|inc| dot(&h, inc)).collect();
    Ok((h, gains))
}

/// Decides the one-period market with branch increments `increments[j]`
/// (one `d`-vector per branch) and branch probabilities `probs`.
pub fn node_na_lp<T: Scalar>(increments: &[Vec<T>], probs: &[T]) -> Result<NodeNa<T>> {
    let k = increments.len();
    if k == 0 {
        return Err(Error::InvalidArgument("node has no branches".into()));
    }
    if probs.len() != k {
        return Err(Error::Dimension { expected: k, got: probs.len(), context: "branch probabilities" });
    }
    let d = increments[0].len();
    if increments.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: 0, context: "increment vectors" });
    }
    if increments.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite price increment".into()));
    }
    let degenerate = increments.iter().all(|r| norm_inf(r) < T::tol(DEGENERATE));
    if degenerate {
        return Ok(NodeNa {
            eps_star: T::one() / T::from_usize_lossy(k),
            verdict: NodeVerdict::Interior { q: probs.to_vec() },
            resolved_tight: false,
        });
    }
    let tol_pos = T::tol(TOL_POS);
    let (mut eps, mut q) = max_slack_lp(increments, d, T::tol(PIVOT_TOL))?;
    let mut resolved_tight = false;
    if eps.abs() < tol_pos {
        let (e2, q2) = max_slack_lp(increments, d, T::tol(PIVOT_TOL_TIGHT))?;
        eps = e2;
        q = q2;
        resolved_tight = true;
    }
    if eps > tol_pos {
        return Ok(NodeNa { eps_star: eps, verdict: NodeVerdict::Interior { q }, resolved_tight });
    }
    let (h, gains) = separation_lp(increments, d, T::tol(PIVOT_TOL))?;
    let max_gain = gains.iter().copied().fold(T::zero(), T::max);
    let min_gain = gains.iter().copied().fold(T::zero(), T::min);
    if max_gain > tol_pos && min_gain >= -T::tol(1e-12) {
        let gains = gains.into_iter().map(|g| g.max(T::zero())).collect();
        return Ok(NodeNa { eps_star: eps, verdict: NodeVerdict::Separating { h, gains }, resolved_tight });
    }
    Err(Error::Lp(format!(
        "ambiguous node: eps* = {eps}, best separating gain = {max_gain}, min gain = {min_gain}; \
         increments sup-norm = {}",
        increments.iter().map(|r| norm_inf(r)).fold(T::zero(), T::max)
    )))
}

/// Result of [`check_na`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum NaCertificate<T> {
    #[serde(rename = "NA")]
    NoArbitrage {
        /// Equivalent martingale measure density glued from the node weights.
        density: DensityProcess<T>,
        /// `(node, ε*)` for every internal node.
        node_slack: Vec<(usize, T)>,
    },
    #[serde(rename = "ARBITRAGE")]
    Arbitrage {
        node: usize,
        /// One-period strategy, zero except at `node`.
        strategy: UnitStrategy<T>,
        /// Gains per child of `node`.
        gains: Vec<T>,
    },
}

impl<T: Scalar> NaCertificate<T> {
    pub fn holds(&self) -> bool {
        matches!(self, NaCertificate::NoArbitrage { .. })
    }

    pub fn verdict(&self) -> &'static str {
        if self.holds() {
            "NA"
        } else {
            "ARBITRAGE"
        }
    }

    pub fn witness(&self) -> Option<ArbitrageWitness> {
        match self {
            NaCertificate::NoArbitrage { .. } => None,
            NaCertificate::Arbitrage { node, strategy, gains } => Some(ArbitrageWitness {
                node: *node,
                direction: strategy.holdings[*node].iter().map(|v| v.to_f64_lossy()).collect(),
                gains: gains.iter().map(|v| v.to_f64_lossy()).collect(),
            }),
        }
    }

    /// Replays an arbitrage certificate from zero capital; terminal gains per leaf.
    pub fn replay_gains(&self, m: &MarketModel<T>) -> Option<Vec<T>> {
        match self {
            NaCertificate::Arbitrage { strategy, .. } => {
                let w = wealth_from_units(m, strategy, T::zero()).ok()?;
                Some(w.terminal(m.tree()))
            }
            NaCertificate::NoArbitrage { .. } => None,
        }
    }

    pub fn into_witness_error(self) -> Error {
        match self.witness() {
            Some(w) => Error::Arbitrage(w),
            None => Error::InvalidArgument("no arbitrage certificate".into()),
        }
    }
}

/// Decides NA node by node. On success the per-node weights are glued into a
/// global density `z(child) = z(node) · q_j / p_j`; on failure the first
/// failing node (breadth-first) yields the certificate.
pub fn check_na<T: Scalar>(m: &MarketModel<T>) -> Result<NaCertificate<T>> {
    m.require_valid()?;
    let tree = m.tree();
    let mut z = vec![T::one(); tree.len()];
    let mut node_slack = Vec::new();
    for v in tree.internal_nodes() {
        let probs = tree.branch_probs(v);
        let res = node_na_lp(&m.increments(v), &probs)?;
        match res.verdict {
            NodeVerdict::Interior { q } => {
                for ((&c, &qj), &pj) in tree.children(v).iter().zip(&q).zip(&probs) {
                    z[c] = z[v] * qj / pj;
                }
                node_slack.push((v, res.eps_star));
            }
            NodeVerdict::Separating { h, gains } => {
                let strategy = UnitStrategy::single_node(tree, m.d(), v, h);
                return Ok(NaCertificate::Arbitrage { node: v, strategy, gains });
            }
        }
    }
    Ok(NaCertificate::NoArbitrage { density: DensityProcess { z }, node_slack })
}

/// Equivalent martingale measure density, or `None` under arbitrage.
pub fn find_emm<T: Scalar>(m: &MarketModel<T>) -> Result<Option<DensityProcess<T>>> {
    Ok(match check_na(m)? {
        NaCertificate::NoArbitrage { density, .. } => Some(density),
        NaCertificate::Arbitrage { .. } => None,
    })
}

/// σ-martingale density with its predictable integrand `φ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaDensity<T> {
    pub density: DensityProcess<T>,
    /// Always `"φ ≡ 1"` on finite trees.
    pub phi: &'static str,
    pub note: &'static str,
}

/// On finite trees local martingales are martingales, so the σ-martingale
/// density is the EMM density with `φ ≡ 1`.
pub fn find_sigma_density<T: Scalar>(m: &MarketModel<T>) -> Result<Option<SigmaDensity<T>>> {
    Ok(find_emm(m)?.map(|density| SigmaDensity {
        density,
        phi: "φ ≡ 1",
        note: "finite tree: σ-martingale and local martingale densities coincide with EMM densities",
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NupbrVerdict {
    pub holds: bool,
    pub verdict: &'static str,
    pub explanation: String,
}

/// NUPBR is decided through its equivalence with the existence of a
/// σ-martingale density; boundedness in probability itself is not finitely
/// checkable (see [`empirical_boundedness_probe`]).
pub fn check_nupbr<T: Scalar>(m: &MarketModel<T>) -> Result<NupbrVerdict> {
    let holds = find_sigma_density(m)?.is_some();
    let explanation = if holds {
        "a σ-martingale density exists (φ ≡ 1 on a finite tree), hence NUPBR holds".to_string()
    } else {
        "no σ-martingale density exists; on a finite tree NUPBR coincides with NA, which fails"
            .to_string()
    };
    Ok(NupbrVerdict { holds, verdict: if holds { "NUPBR" } else { "NO-NUPBR" }, explanation })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow<T> {
    pub level: f64,
    /// Quantile of the pooled terminal-wealth distribution over all strategies.
    pub pooled: T,
    /// Largest per-strategy quantile.
    pub sup: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessProbe<T> {
    pub n_strats: usize,
    pub seed: u64,
    pub rows: Vec<QuantileRow<T>>,
    pub max_terminal: T,
}

fn weighted_quantile<T: Scalar>(mut pts: Vec<(T, T)>, level: f64) -> T {
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let total: T = pts.iter().map(|p| p.1).sum();
    let target = T::c(level) * total;
    let mut acc = T::zero();
    for &(x, w) in &pts {
        acc = acc + w;
        if acc >= target {
            return x;
        }
    }
    pts.last().map(|p| p.0).unwrap_or(T::zero())
}

/// Quantiles of `X_T` for random 1-admissible unit strategies. Demonstrative
/// only: deterministic given `seed`.
pub fn empirical_boundedness_probe<T: Scalar>(
    m: &MarketModel<T>,
    n_strats: usize,
    seed: u64,
) -> Result<BoundednessProbe<T>> {
    m.require_valid()?;
    let tree = m.tree();
    let probs = tree.unconditional_probs();
    let leaves = tree.leaves();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pooled = Vec::with_capacity(n_strats * leaves.len());
    let mut per_strategy = Vec::with_capacity(n_strats);
    for _ in 0..n_strats {
        let h = admissible_units(m, &mut rng, T::one());
        let w = wealth_from_units(m, &h, T::one())?;
        let pts: Vec<(T, T)> = leaves.iter().map(|&l| (w.value[l], probs[l])).collect();
        pooled.extend(pts.iter().copied());
        per_strategy.push(pts);
    }
    let levels = [0.5, 0.9, 0.99];
    let rows = levels
        .iter()
        .map(|&level| QuantileRow {
            level,
            pooled: weighted_quantile(pooled.clone(), level),
            sup: per_strategy
                .iter()
                .map(|pts| weighted_quantile(pts.clone(), level))
                .fold(T::neg_infinity(), T::max),
        })
        .collect();
    let max_terminal = pooled.iter().map(|p| p.0).fold(T::neg_infinity(), T::max);
    Ok(BoundednessProbe { n_strats, seed, rows, max_terminal })
}
