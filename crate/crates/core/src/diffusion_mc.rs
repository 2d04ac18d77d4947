//! Monte Carlo for `dS = dt/S + dβ`, `S_0 = 1` (a three-dimensional Bessel
//! process): numéraire `S`, no equivalent martingale measure, finite log value.
//!
//! Paths are simulated exactly in law as `|(1,0,0) + W_t|` for a 3-d Brownian
//! motion `W`. Path `i` draws from `ChaCha8(seed)` on stream `i`, and every
//! reduction runs in path order, so results do not depend on the thread count.
//! Full paths are not stored; [`McBatch::replay_path`] regenerates one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Checkpoints on `[0, 1]` stored per path (plus `t = 0`).
pub const CHECKPOINTS: usize = 10;
/// Minimum step count for time integrals.
pub const MIN_STEPS_FOR_INTEGRALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub s1: f64,
    pub min_s: f64,
    /// `∫₀¹ S⁻² du`, trapezoid on the full grid.
    pub int_inv_s2: f64,
    /// Same on every second grid point (`None` for odd step counts).
    pub int_inv_s2_half: Option<f64>,
    /// `S` at [`McBatch::checkpoint_steps`].
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McBatch {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub checkpoint_steps: Vec<usize>,
    pub paths: Vec<PathSummary>,
}

fn path_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Streams `S` at steps `0..=n_steps` of path `i` into `visit(step, s)`.
fn walk(seed: u64, i: usize, n_steps: usize, mut visit: impl FnMut(usize, f64)) {
    let mut rng = path_rng(seed, i);
    let sd = (1.0 / n_steps as f64).sqrt();
    let mut w = [1.0f64, 0.0, 0.0];
    visit(0, 1.0);
    for k in 1..=n_steps {
        for x in w.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sd * z;
        }
        visit(k, (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt());
    }
}

impl McBatch {
    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt()).collect()
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        self.checkpoint_steps.iter().map(|&k| k as f64 * self.dt()).collect()
    }

    /// `S` at every grid point of path `i`, bit-identical to the simulation.
    pub fn replay_path(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_steps + 1);
        walk(self.seed, i, self.n_steps, |_, s| out.push(s));
        out
    }
}

pub fn simulate_bes3(n_paths: usize, n_steps: usize, seed: u64) -> Result<McBatch> {
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::InvalidArgument("n_paths and n_steps must be at least 1".into()));
    }
    let n_cp = CHECKPOINTS.min(n_steps);
    let checkpoint_steps: Vec<usize> = (0..=n_cp).map(|j| (j * n_steps + n_cp / 2) / n_cp).collect();
    let dt = 1.0 / n_steps as f64;
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut prev = 1.0;
            let mut full = 0.0;
            let mut half = 0.0;
            let mut prev_even = 1.0;
            let mut min_s = f64::INFINITY;
            let mut cps = Vec::with_capacity(checkpoint_steps.len());
            let mut next_cp = 0;
            let mut s1 = 1.0;
            walk(seed, i, n_steps, |k, s| {
                let f = 1.0 / (s * s);
                if k > 0 {
                    full += 0.5 * dt * (1.0 / (prev * prev) + f);
                    if k % 2 == 0 {
                        half += dt * (1.0 / (prev_even * prev_even) + f);
                        prev_even = s;
                    }
                }
                if next_cp < checkpoint_steps.len() && checkpoint_steps[next_cp] == k {
                    cps.push(s);
                    next_cp += 1;
                }
                min_s = min_s.min(s);
                prev = s;
                s1 = s;
            });
            PathSummary {
                s1,
                min_s,
                int_inv_s2: full,
                int_inv_s2_half: (n_steps % 2 == 0).then_some(half),
                checkpoints: cps,
            }
        })
        .collect();
    Ok(McBatch { n_paths, n_steps, seed, checkpoint_steps, paths })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub label: String,
    pub mean: f64,
    /// Sample standard deviation over `√n`; `None` when `n < 2`.
    pub std_error: Option<f64>,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error, summed in input order.
    pub fn from_samples(label: impl Into<String>, xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = (n >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Self { label: label.into(), mean, std_error, n }
    }

    /// `|mean − target| ≤ k·SE`; `None` without a standard error.
    pub fn within(&self, target: f64, k: f64) -> Option<bool> {
        self.std_error.map(|se| (self.mean - target).abs() <= k * se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReciprocalMoment {
    pub estimate: Estimate,
    /// `1 − Ê[1/S_1]`; positive because `1/S` is a strict local martingale.
    pub gap: f64,
    /// `Some(true)` when the gap exceeds 10 standard errors.
    pub no_emm: Option<bool>,
}

pub fn estimate_reciprocal_moment(b: &McBatch) -> ReciprocalMoment {
    let xs: Vec<f64> = b.paths.iter().map(|p| 1.0 / p.s1).collect();
    let estimate = Estimate::from_samples("E[1/S_1]", &xs);
    let gap = 1.0 - estimate.mean;
    let no_emm = estimate.std_error.map(|se| gap > 10.0 * se);
    ReciprocalMoment { estimate, gap, no_emm }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogValueReport {
    pub elog_s1: Estimate,
    pub eint_inv_s2: Estimate,
    /// Half-grid trapezoid (only for even step counts).
    pub eint_inv_s2_half: Option<Estimate>,
    /// `2 log 2`.
    pub bound: f64,
    /// `Ê∫S⁻² ≤ 2 log 2 + 3 SE`.
    pub bound_check: bool,
    /// Per-path `log S_1 − ½∫S⁻²`, the stochastic integral `∫dβ/S`.
    pub ito_residual: Estimate,
    /// `|Ê[log S_1] − ½Ê∫S⁻²| ≤ 3 SE` of the paired difference.
    pub ito_check: bool,
    /// Full versus half grid differ by less than 3 SE of the full-grid estimate.
    pub doubling_check: Option<bool>,
}

pub fn estimate_log_value(b: &McBatch) -> Result<LogValueReport> {
    if b.n_steps < MIN_STEPS_FOR_INTEGRALS {
        return Err(Error::InvalidArgument(format!(
            "n_steps = {} below the time-integral floor {MIN_STEPS_FOR_INTEGRALS}",
            b.n_steps
        )));
    }
    if b.n_paths < 2 {
        return Err(Error::InvalidArgument("at least two paths are needed for standard errors".into()));
    }
    let logs: Vec<f64> = b.paths.iter().map(|p| p.s1.ln()).collect();
    let ints: Vec<f64> = b.paths.iter().map(|p| p.int_inv_s2).collect();
    let diffs: Vec<f64> = logs.iter().zip(&ints).map(|(l, i)| l - 0.5 * i).collect();
    let elog_s1 = Estimate::from_samples("E[log S_1]", &logs);
    let eint_inv_s2 = Estimate::from_samples("E[int_0^1 S^-2 du]", &ints);
    let ito_residual = Estimate::from_samples("E[log S_1 - 0.5 int S^-2]", &diffs);
    let half: Option<Vec<f64>> = b.paths.iter().map(|p| p.int_inv_s2_half).collect();
    let eint_inv_s2_half = half.map(|h| Estimate::from_samples("E[int S^-2] (half grid)", &h));
    let se = eint_inv_s2.std_error.expect("n ≥ 2");
    let bound = 2.0 * 2f64.ln();
    Ok(LogValueReport {
        bound_check: eint_inv_s2.mean <= bound + 3.0 * se,
        ito_check: ito_residual.within(0.0, 3.0).expect("n ≥ 2"),
        doubling_check: eint_inv_s2_half.as_ref().map(|h| (h.mean - eint_inv_s2.mean).abs() < 3.0 * se),
        elog_s1,
        eint_inv_s2,
        eint_inv_s2_half,
        bound,
        ito_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRow {
    pub t: f64,
    pub reciprocal: Estimate,
}

/// `Ê[1/S_t]` at the checkpoints and whether it is nonincreasing within 3 SE.
pub fn reciprocal_checkpoints(b: &McBatch) -> (Vec<CheckpointRow>, bool) {
    let rows: Vec<CheckpointRow> = b
        .checkpoint_times()
        .into_iter()
        .enumerate()
        .map(|(j, t)| {
            let xs: Vec<f64> = b.paths.iter().map(|p| 1.0 / p.checkpoints[j]).collect();
            CheckpointRow { t, reciprocal: Estimate::from_samples(format!("E[1/S_{t}]"), &xs) }
        })
        .collect();
    let ok = rows.windows(2).all(|w| {
        let se = w[1].reciprocal.std_error.unwrap_or(0.0).max(w[0].reciprocal.std_error.unwrap_or(0.0));
        w[1].reciprocal.mean <= w[0].reciprocal.mean + 3.0 * se
    });
    (rows, ok)
}

/// Fractions `π_k ∈ [0, 1]` of wealth held in `S` on the checkpoint
/// intervals. Such strategies keep `X ≥ 0` in continuous time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeStrategy {
    pub label: String,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub strategy: ProbeStrategy,
    /// `Ê[X_T / S_1]` over paths that passed the clip audit.
    pub ratio: Estimate,
    /// Paths where wealth went negative at a checkpoint (rejected).
    pub clipped: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumeraireProbe {
    pub seed: u64,
    pub rows: Vec<ProbeRow>,
    /// `max (ratio − 1 − 3 SE)`; nonpositive when every strategy passes.
    pub worst_margin: f64,
    pub clipped_total: usize,
    pub passed: bool,
}

/// Tests `Ê[X_T/S_1] ≤ 1 + 3 SE` for `θ = 0`, buy-and-hold one share, and
/// `n_strats` random rebalancing strategies on the checkpoint intervals.
pub fn numeraire_probe(b: &McBatch, n_strats: usize, seed: u64) -> NumeraireProbe {
    let k = b.checkpoint_steps.len() - 1;
    let mut strategies = vec![
        ProbeStrategy { label: "theta = 0".into(), fractions: vec![0.0; k] },
        ProbeStrategy { label: "hold one share".into(), fractions: vec![1.0; k] },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..n_strats {
        let fractions = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        strategies.push(ProbeStrategy { label: format!("random {j}"), fractions });
    }
    let rows: Vec<ProbeRow> = strategies
        .into_par_iter()
        .map(|strategy| {
            let mut clipped = 0;
            let mut ratios = Vec::with_capacity(b.n_paths);
            for p in &b.paths {
                let mut x = 1.0;
                let mut ok = true;
                for (j, w) in p.checkpoints.windows(2).enumerate() {
                    let units = strategy.fractions[j] * x / w[0];
                    x += units * (w[1] - w[0]);
                    ok &= x >= 0.0;
                }
                if ok {
                    ratios.push(x / p.s1);
                } else {
                    clipped += 1;
                }
            }
            let ratio = Estimate::from_samples(strategy.label.clone(), &ratios);
            let passed = ratio.mean <= 1.0 + 3.0 * ratio.std_error.unwrap_or(0.0) + 1e-12;
            ProbeRow { strategy, ratio, clipped, passed }
        })
        .collect();
    let worst_margin = rows
        .iter()
        .map(|r| r.ratio.mean - 1.0 - 3.0 * r.ratio.std_error.unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    NumeraireProbe {
        seed,
        clipped_total: rows.iter().map(|r| r.clipped).sum(),
        passed: rows.iter().all(|r| r.passed),
        worst_margin,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedRow {
    pub level: u32,
    /// `Ê[log S_{τ_n}]` with `τ_n = 1 ∧ first grid time S ∉ (1/n, n)`.
    pub elog: Estimate,
    pub stopped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedTable {
    pub rows: Vec<StoppedRow>,
    pub unstopped: Estimate,
    pub finite: bool,
    /// Means nondecreasing in the level.
    pub nondecreasing: bool,
    /// `|Ê[log S_{τ_max}] − Ê[log S_1]| ≤ 3 SE` of the stopped estimate.
    pub converged: bool,
    /// Per-path `log S_1 − log S_{τ_max}`; resolves the localization bias,
    /// which the estimates' own standard errors do not.
    pub paired_tail: Estimate,
}

/// Replays every path once and stops it at each level.
pub fn stopped_experiments(b: &McBatch, levels: &[u32]) -> Result<StoppedTable> {
    if levels.is_empty() || levels.contains(&0) {
        return Err(Error::InvalidArgument("levels must be positive".into()));
    }
    if b.n_paths < 2 {
        return Err(Error::InvalidArgument("at least two paths are needed for standard errors".into()));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    // per path: (log S at τ_n per level, stopped before T per level)
    let per_path: Vec<(Vec<f64>, Vec<bool>)> = (0..b.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut at: Vec<Option<f64>> = vec![None; sorted.len()];
            let mut last = 1.0;
            walk(b.seed, i, b.n_steps, |_, s| {
                for (slot, &n) in at.iter_mut().zip(&sorted) {
                    let n = n as f64;
                    if slot.is_none() && !(s > 1.0 / n && s < n) {
                        *slot = Some(s);
                    }
                }
                last = s;
            });
            let stopped = at.iter().map(|a| a.is_some()).collect();
            // a path that stops exactly at the last step still counts as stopped
            (at.into_iter().map(|a| a.unwrap_or(last).ln()).collect(), stopped)
        })
        .collect();
    let unstopped_xs: Vec<f64> = b.paths.iter().map(|p| p.s1.ln()).collect();
    let unstopped = Estimate::from_samples("E[log S_1]", &unstopped_xs);
    let column = |j: usize| -> Vec<f64> { per_path.iter().map(|(v, _)| v[j]).collect() };
    let rows: Vec<StoppedRow> = sorted
        .iter()
        .enumerate()
        .map(|(j, &level)| StoppedRow {
            level,
            elog: Estimate::from_samples(format!("E[log S_tau_{level}]"), &column(j)),
            stopped_fraction: per_path.iter().filter(|(_, s)| s[j]).count() as f64 / b.n_paths as f64,
        })
        .collect();
    let nondecreasing = rows.windows(2).all(|w| w[1].elog.mean >= w[0].elog.mean);
    let last = rows.last().expect("at least one level");
    let converged = last.elog.within(unstopped.mean, 3.0).expect("n ≥ 2");
    let diffs: Vec<f64> = unstopped_xs.iter().zip(column(sorted.len() - 1)).map(|(u, s)| u - s).collect();
    Ok(StoppedTable {
        finite: rows.iter().all(|r| r.elog.mean.is_finite()),
        converged,
        nondecreasing,
        paired_tail: Estimate::from_samples("E[log S_1 - log S_tau_max]", &diffs),
        rows,
        unstopped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_and_deterministic() {
        let a = simulate_bes3(200, 50, 9).unwrap();
        let b = simulate_bes3(200, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.paths.iter().all(|p| p.min_s > 0.0));
        assert_eq!(a.replay_path(17).last().copied(), Some(a.paths[17].s1));
        assert_eq!(a.checkpoint_steps, vec![0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let b = simulate_bes3(500, 20, 3).unwrap();
                    (estimate_reciprocal_moment(&b), numeraire_probe(&b, 5, 1))
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn single_path_has_no_verdict() {
        let b = simulate_bes3(1, 10, 0).unwrap();
        let r = estimate_reciprocal_moment(&b);
        assert!(r.estimate.std_error.is_none() && r.no_emm.is_none());
    }

    #[test]
    fn integral_floor() {
        let b = simulate_bes3(10, 50, 0).unwrap();
        assert!(estimate_log_value(&b).is_err());
    }

    #[test]
    fn hold_one_share_ratio_is_one() {
        let b = simulate_bes3(300, 20, 4).unwrap();
        let p = numeraire_probe(&b, 0, 0);
        let hold = &p.rows[1];
        assert!((hold.ratio.mean - 1.0).abs() < 1e-12);
        assert_eq!(p.clipped_total, 0);
    }

    #[test]
    fn level_one_stops_immediately() {
        let b = simulate_bes3(50, 20, 2).unwrap();
        let t = stopped_experiments(&b, &[1]).unwrap();
        assert_eq!(t.rows[0].elog.mean, 0.0);
        assert_eq!(t.rows[0].stopped_fraction, 1.0);
    }
}
