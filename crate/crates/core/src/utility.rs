//! Expected-utility maximization on trees under equivalent measures, weak
//! viability, and the randomized four-way equivalence harness.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arbitrage::{check_na, find_emm, find_sigma_density, NaCertificate};
use crate::error::{Error, Result};
use crate::generate::MarketGenerator;
use crate::io::market_to_json;
use crate::linalg::SymMatrix;
use crate::numeraire::{maximize_node, numeraire_portfolio, PowerObjective};
use crate::scalar::{dot, norm_inf, Scalar};
use crate::tree_market::{
    wealth_from_fractions, wealth_from_units, DensityProcess, EventTree, FractionStrategy,
    MarketModel, UnitStrategy, WealthProcess,
};

type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// User-supplied utility on `(0, ∞)`. Without `d2u` the second derivative is
/// a central difference of `du`.
#[derive(Clone)]
pub struct CustomUtility<T> {
    pub name: String,
    pub u: ScalarFn<T>,
    pub du: ScalarFn<T>,
    pub d2u: Option<ScalarFn<T>>,
}

impl<T> fmt::Debug for CustomUtility<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomUtility")
            .field("name", &self.name)
            .field("d2u", &self.d2u.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum UtilityFunction<T> {
    Log,
    /// `x^{1−γ}/(1−γ)`, `γ > 0`, `γ ≠ 1`.
    Crra(T),
    Custom(CustomUtility<T>),
}

/// Probe grid: 10 points per decade on `[1e-8, 1e8]`.
pub const PROBE_LO: f64 = 1e-8;
pub const PROBE_HI: f64 = 1e8;
const PROBE_PER_DECADE: usize = 10;
/// Elasticity is measured where `x ≥ 1e4`.
const ELASTICITY_TAIL: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityCertificate {
    pub grid_points: usize,
    pub increasing: bool,
    pub concave: bool,
    /// `U'` strictly decreasing along the grid (the Inada trend check).
    pub marginal_decreasing: bool,
    pub marginal_at_lo: f64,
    pub marginal_at_hi: f64,
    /// `max x U'(x)/U(x)` over the upper tail where `U > 0`; `0` if `U ≤ 0` there.
    pub elasticity: f64,
    pub passed: bool,
}

impl<T: Scalar> UtilityFunction<T> {
    pub fn crra(gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) || gamma == T::one() || !gamma.is_finite() {
            return Err(Error::Utility(format!("CRRA needs γ > 0 and γ ≠ 1, got {gamma}")));
        }
        Ok(Self::Crra(gamma))
    }

    /// Certifies the custom utility on the probe grid before accepting it.
    pub fn custom(custom: CustomUtility<T>) -> Result<Self> {
        let u = Self::Custom(custom);
        let cert = u.certify();
        if !cert.passed {
            return Err(Error::Utility(format!("{}: {cert:?}", u.name())));
        }
        Ok(u)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Log => "log".into(),
            Self::Crra(g) => format!("crra:{g}"),
            Self::Custom(c) => c.name.clone(),
        }
    }

    pub fn value(&self, x: T) -> T {
        match self {
            Self::Log => x.ln(),
            Self::Crra(g) => {
                let a = T::one() - *g;
                x.powf(a) / a
            }
            Self::Custom(c) => (c.u)(x),
        }
    }

    pub fn marginal(&self, x: T) -> T {
        match self {
            Self::Log => x.recip(),
            Self::Crra(g) => x.powf(-*g),
            Self::Custom(c) => (c.du)(x),
        }
    }

    pub fn curvature(&self, x: T) -> T {
        match self {
            Self::Log => -(x * x).recip(),
            Self::Crra(g) => -*g * x.powf(-*g - T::one()),
            Self::Custom(c) => match &c.d2u {
                Some(f) => f(x),
                None => {
                    let h = x * T::c(1e-5);
                    ((c.du)(x + h) - (c.du)(x - h)) / (h + h)
                }
            },
        }
    }

    fn power(&self) -> Option<PowerObjective<T>> {
        match self {
            Self::Log => Some(PowerObjective::log()),
            Self::Crra(g) => Some(PowerObjective { gamma: *g }),
            Self::Custom(_) => None,
        }
    }

    /// Finite-difference checks of monotonicity, strict concavity, the Inada
    /// trend and asymptotic elasticity on the log-spaced probe grid. Evaluated
    /// in `f64` regardless of `T`.
    pub fn certify(&self) -> UtilityCertificate {
        let decades = (PROBE_HI / PROBE_LO).log10().round() as usize;
        let n = decades * PROBE_PER_DECADE + 1;
        let xs: Vec<f64> = (0..n)
            .map(|i| PROBE_LO * 10f64.powf(i as f64 / PROBE_PER_DECADE as f64))
            .collect();
        let u: Vec<f64> = xs.iter().map(|&x| self.value(T::c(x)).to_f64_lossy()).collect();
        let du: Vec<f64> = xs.iter().map(|&x| self.marginal(T::c(x)).to_f64_lossy()).collect();
        let finite = u.iter().chain(&du).all(|v| v.is_finite());
        let increasing = finite && u.windows(2).all(|w| w[1] > w[0]);
        let slopes: Vec<f64> = (0..n - 1).map(|i| (u[i + 1] - u[i]) / (xs[i + 1] - xs[i])).collect();
        let concave = finite && slopes.windows(2).all(|w| w[1] < w[0]);
        let marginal_decreasing = finite && du.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0);
        let elasticity = xs
            .iter()
            .zip(&u)
            .zip(&du)
            .filter(|((&x, &ux), _)| x >= ELASTICITY_TAIL && ux > 0.0)
            .map(|((&x, &ux), &dux)| x * dux / ux)
            .fold(0.0, f64::max);
        UtilityCertificate {
            grid_points: n,
            increasing,
            concave,
            marginal_decreasing,
            marginal_at_lo: du[0],
            marginal_at_hi: du[n - 1],
            elasticity,
            passed: increasing && concave && marginal_decreasing && elasticity < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "values")]
pub enum PortfolioStrategy<T> {
    Fractions(FractionStrategy<T>),
    Units(UnitStrategy<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalPortfolioResult<T> {
    pub strategy: PortfolioStrategy<T>,
    pub wealth: WealthProcess<T>,
    /// `E^Q U(W_T)`.
    pub value: T,
    /// Worst per-node first-order residual (recursion) or gradient sup-norm
    /// (direct program).
    pub residual: T,
    /// Normalized martingale density of the measure used.
    pub measure: DensityProcess<T>,
    pub method: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome")]
pub enum UtilityOutcome<T> {
    #[serde(rename = "solution")]
    Solution(OptimalPortfolioResult<T>),
    /// Only arbitrage makes the problem unbounded on a finite tree.
    #[serde(rename = "no-solution")]
    NoSolution { certificate: NaCertificate<T> },
}

impl<T> UtilityOutcome<T> {
    pub fn solution(&self) -> Option<&OptimalPortfolioResult<T>> {
        match self {
            UtilityOutcome::Solution(r) => Some(r),
            UtilityOutcome::NoSolution { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Measure<T> {
    Physical,
    /// Any positive density; only its terminal values matter.
    Density(DensityProcess<T>),
}

pub const RECURSION_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-8;

/// Martingale density of the measure and the market re-weighted by it.
fn measure_market<T: Scalar>(m: &MarketModel<T>, q: &Measure<T>) -> Result<(DensityProcess<T>, MarketModel<T>)> {
    let tree = m.tree();
    let density = match q {
        Measure::Physical => DensityProcess::ones(tree),
        Measure::Density(z) => {
            if z.z.len() != tree.len() {
                return Err(Error::Dimension { expected: tree.len(), got: z.z.len(), context: "measure density" });
            }
            for &l in &tree.leaves() {
                if !(z.z[l] > T::zero()) || !z.z[l].is_finite() {
                    return Err(Error::NonpositiveValue {
                        node: l,
                        value: z.z[l].to_f64_lossy(),
                        context: "measure density is not equivalent",
                    });
                }
            }
            DensityProcess::from_leaf_values(tree, &z.leaf_values(tree))?
        }
    };
    let mut spec: Vec<(Option<usize>, T, Vec<T>)> =
        (0..tree.len()).map(|v| (tree.parent(v), T::one(), m.price(v).to_vec())).collect();
    for v in tree.internal_nodes() {
        for (&c, qc) in tree.children(v).iter().zip(density.transition(tree, v)) {
            spec[c].1 = qc;
        }
    }
    Ok((density, MarketModel::from_nodes(m.label.clone(), spec)?))
}

/// Maximizes `E^Q U(x0 + (θ·S)_T)`. Log and CRRA on positive prices use the
/// homothetic backward recursion in fractions; custom utilities (or markets
/// with nonpositive prices) use damped Newton over all unit holdings from
/// zero. Arbitrage yields [`UtilityOutcome::NoSolution`]; any other failure is
/// an error.
pub fn maximize_utility<T: Scalar>(
    m: &MarketModel<T>,
    u: &UtilityFunction<T>,
    x0: T,
    q: &Measure<T>,
) -> Result<UtilityOutcome<T>> {
    m.require_valid()?;
    if !(x0 > T::zero()) || !x0.is_finite() {
        return Err(Error::InvalidArgument(format!("x0 = {x0} is outside dom(U) = (0, ∞)")));
    }
    let (measure, mq) = measure_market(m, q)?;
    let cert = check_na(m)?;
    if !cert.holds() {
        return Ok(UtilityOutcome::NoSolution { certificate: cert });
    }
    let result = match (u.power(), mq.has_positive_prices()) {
        (Some(obj), true) => power_recursion(&mq, u, obj, x0, measure)?,
        _ => direct_program(&mq, u, x0, measure)?,
    };
    if !result.value.is_finite() {
        return Err(Error::NoConvergence(format!("optimal value {} is not finite", result.value)));
    }
    Ok(UtilityOutcome::Solution(result))
}

fn power_recursion<T: Scalar>(
    mq: &MarketModel<T>,
    u: &UtilityFunction<T>,
    obj: PowerObjective<T>,
    x0: T,
    measure: DensityProcess<T>,
) -> Result<OptimalPortfolioResult<T>> {
    let tree = mq.tree();
    let log = obj.gamma == T::one();
    // log: additive offsets b; CRRA: multiplicative coefficients c
    let mut coef = vec![if log { T::zero() } else { T::one() }; tree.len()];
    let mut pi = FractionStrategy::zeros(tree, mq.d());
    let mut residual = T::zero();
    for v in tree.internal_nodes().into_iter().rev() {
        let kids = tree.children(v);
        let qv = tree.branch_probs(v);
        let returns = mq.returns(v)?;
        let weights: Vec<T> = if log {
            qv.clone()
        } else {
            qv.iter().zip(kids).map(|(&qj, &c)| qj * coef[c]).collect()
        };
        let opt = maximize_node(&returns, &weights, obj)?;
        let scale: T = weights.iter().copied().sum();
        residual = residual.max(opt.residual / scale);
        coef[v] = if log {
            opt.value + qv.iter().zip(kids).map(|(&qj, &c)| qj * coef[c]).sum::<T>()
        } else {
            opt.value * (T::one() - obj.gamma)
        };
        pi.fractions[v] = opt.pi;
    }
    let value = if log {
        x0.ln() + coef[0]
    } else {
        u.value(x0) * coef[0]
    };
    let wealth = wealth_from_fractions(mq, &pi, x0)?;
    Ok(OptimalPortfolioResult {
        strategy: PortfolioStrategy::Fractions(pi),
        wealth,
        value,
        residual,
        measure,
        method: "backward recursion",
    })
}

/// Gains of every leaf as linear functionals of the stacked holdings.
pub(crate) fn leaf_features<T: Scalar>(m: &MarketModel<T>) -> (Vec<usize>, Vec<usize>, Vec<Vec<T>>) {
    let tree = m.tree();
    let d = m.d();
    let internal = tree.internal_nodes();
    let mut offset = vec![usize::MAX; tree.len()];
    for (k, &v) in internal.iter().enumerate() {
        offset[v] = k * d;
    }
    let leaves = tree.leaves();
    let features = leaves
        .iter()
        .map(|&l| {
            let mut a = vec![T::zero(); internal.len() * d];
            let path = tree.path_to(l);
            for w in path.windows(2) {
                let (v, c) = (w[0], w[1]);
                for i in 0..d {
                    a[offset[v] + i] = m.price(c)[i] - m.price(v)[i];
                }
            }
            a
        })
        .collect();
    (internal, leaves, features)
}

fn direct_program<T: Scalar>(
    mq: &MarketModel<T>,
    u: &UtilityFunction<T>,
    x0: T,
    measure: DensityProcess<T>,
) -> Result<OptimalPortfolioResult<T>> {
    let tree = mq.tree();
    let (internal, leaves, feats) = leaf_features(mq);
    let probs = tree.unconditional_probs();
    let w: Vec<T> = leaves.iter().map(|&l| probs[l]).collect();
    let n = internal.len() * mq.d();

    let eval = |theta: &[T]| -> Option<T> {
        let mut f = T::zero();
        for (a, &wl) in feats.iter().zip(&w) {
            let x = x0 + dot(a, theta);
            if !(x > T::zero()) {
                return None;
            }
            f = f + wl * u.value(x);
        }
        f.is_finite().then_some(f)
    };
    let grad_hess = |theta: &[T]| -> (Vec<T>, SymMatrix<T>) {
        let mut g = vec![T::zero(); n];
        let mut h = SymMatrix::zeros(n);
        for (a, &wl) in feats.iter().zip(&w) {
            let x = x0 + dot(a, theta);
            let g1 = wl * u.marginal(x);
            for (gi, &ai) in g.iter_mut().zip(a) {
                *gi = *gi + g1 * ai;
            }
            h.add_outer(-wl * u.curvature(x), a);
        }
        (g, h)
    };

    let mut theta = vec![T::zero(); n];
    let mut f = eval(&theta).expect("zero holdings are feasible");
    let (mut g, mut h) = grad_hess(&theta);
    let stop = T::tol(GRADIENT_TOL) * T::c(1e-2);
    for _ in 0..1000 {
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
            let cand: Vec<T> = theta.iter().zip(&step).map(|(&p, &s)| p + t * s).collect();
            if let Some(fc) = eval(&cand) {
                let gc = grad_hess(&cand);
                if fc >= f + T::c(1e-4) * t * slope
                    || (norm_inf(&gc.0) < T::c(0.5) * norm_inf(&g) && fc >= f - T::tol(1e-15) * f.abs())
                {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t = t * T::c(0.5);
        }
        let Some((cand, fc, gc)) = accepted else { break };
        theta = cand;
        f = fc;
        g = gc.0;
        h = gc.1;
        if norm_inf(&theta) > T::c(1e12) {
            return Err(Error::NoConvergence("direct program iterates diverge".into()));
        }
    }
    let residual = norm_inf(&g);
    if residual > T::tol(GRADIENT_TOL) {
        return Err(Error::NoConvergence(format!("gradient norm {residual} after Newton iterations")));
    }
    let mut units = UnitStrategy::zeros(tree, mq.d());
    for (k, &v) in internal.iter().enumerate() {
        units.holdings[v] = theta[k * mq.d()..(k + 1) * mq.d()].to_vec();
    }
    let wealth = wealth_from_units(mq, &units, x0)?;
    Ok(OptimalPortfolioResult {
        strategy: PortfolioStrategy::Units(units),
        wealth,
        value: f,
        residual,
        measure,
        method: "direct concave program",
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViabilityResult<T> {
    pub q: DensityProcess<T>,
    pub result: OptimalPortfolioResult<T>,
    /// `U(x0 / E[z_T])`.
    pub bound: T,
    pub slack: T,
    pub holds: bool,
}

/// Weak viability: maximizes under `Q = z_T/E[z_T]·P` for a σ-martingale
/// density `z` and checks `value ≤ U(x0/E[z_T]) + 1e-9`.
pub fn viability_under_measure<T: Scalar>(
    m: &MarketModel<T>,
    u: &UtilityFunction<T>,
    x0: T,
) -> Result<ViabilityResult<T>> {
    m.require_valid()?;
    let Some(sigma) = find_sigma_density(m)? else {
        let cert = check_na(m)?;
        let witness = cert.witness().expect("no density implies an arbitrage certificate");
        return Err(Error::NoNupbr(witness));
    };
    let tree = m.tree();
    let ez = tree.expect_leaves(&sigma.density.leaf_values(tree));
    let outcome = maximize_utility(m, u, x0, &Measure::Density(sigma.density))?;
    let UtilityOutcome::Solution(result) = outcome else {
        return Err(Error::NoConvergence("no solution under an equivalent martingale measure".into()));
    };
    let bound = u.value(x0 / ez);
    let slack = bound - result.value;
    let holds = result.value <= bound + T::tol(1e-9);
    Ok(ViabilityResult { q: result.measure.clone(), result, bound, slack, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub n_markets: usize,
    pub generator: MarketGenerator,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    /// Log utility solvable under `P` with finite value and small residual.
    pub viable: bool,
    /// `check_na` verdict.
    pub no_arbitrage: bool,
    /// An EMM density was found and verified.
    pub emm: bool,
    /// The numéraire portfolio exists with small residual.
    pub numeraire: bool,
}

impl Verdicts {
    pub fn agree(&self) -> bool {
        self.viable == self.no_arbitrage && self.no_arbitrage == self.emm && self.emm == self.numeraire
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub index: usize,
    pub verdicts: Verdicts,
    pub notes: Vec<String>,
    pub market_json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub n_viable: usize,
    pub n_arbitrage: usize,
    pub disagreements: Vec<Disagreement>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// The four verdicts for one market. Beyond success, each verdict validates
/// its artifact: residuals for optimizers, the martingale property for the
/// density.
pub fn four_verdicts<T: Scalar>(m: &MarketModel<T>) -> (Verdicts, Vec<String>) {
    let mut notes = Vec::new();
    let mut note = |tag: &str, e: &dyn fmt::Display| notes.push(format!("{tag}: {e}"));
    let tol = T::tol(RECURSION_TOL);
    let viable = match maximize_utility(m, &UtilityFunction::Log, T::one(), &Measure::Physical) {
        Ok(UtilityOutcome::Solution(r)) => r.value.is_finite() && r.residual <= tol,
        Ok(UtilityOutcome::NoSolution { .. }) => false,
        Err(e) => {
            note("utility", &e);
            false
        }
    };
    let no_arbitrage = match check_na(m) {
        Ok(c) => c.holds(),
        Err(e) => {
            note("check_na", &e);
            false
        }
    };
    let emm = match find_emm(m) {
        Ok(Some(z)) => z.is_emm_density(m, T::tol(1e-9)),
        Ok(None) => false,
        Err(e) => {
            note("find_emm", &e);
            false
        }
    };
    let numeraire = match numeraire_portfolio(m, T::one()) {
        Ok(s) => s.worst_residual() <= tol,
        Err(Error::Arbitrage(_)) => false,
        Err(e) => {
            note("numeraire", &e);
            false
        }
    };
    (Verdicts { viable, no_arbitrage, emm, numeraire }, notes)
}

/// Instance `i` draws from `ChaCha8(seed)` on stream `i`, so results do not
/// depend on scheduling; the report keeps generation order.
pub fn equivalence_suite(config: &SuiteConfig) -> SuiteReport {
    let rows: Vec<(Verdicts, Option<Disagreement>)> = (0..config.n_markets)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let m: MarketModel<f64> = config.generator.sample(&mut rng, format!("suite-{}-{i}", config.seed));
            let (v, notes) = four_verdicts(&m);
            let dis = (!v.agree()).then(|| Disagreement { index: i, verdicts: v, notes, market_json: market_to_json(&m) });
            (v, dis)
        })
        .collect();
    SuiteReport {
        config: config.clone(),
        n_viable: rows.iter().filter(|(v, _)| v.viable).count(),
        n_arbitrage: rows.iter().filter(|(v, _)| !v.no_arbitrage).count(),
        disagreements: rows.into_iter().filter_map(|(_, d)| d).collect(),
    }
}

/// Same tree as `m` with every price replaced by the root price.
pub fn constant_market<T: Scalar>(m: &MarketModel<T>) -> MarketModel<T> {
    let tree: &EventTree<T> = m.tree();
    MarketModel::new(m.label.clone(), tree.clone(), vec![m.price(0).to_vec(); tree.len()])
        .expect("same shape")
}
