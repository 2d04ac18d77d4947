use std::path::PathBuf;

use clap::{ArgGroup, Args};
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use viability::arbitrage::{check_na, check_nupbr, NaCertificate};
use viability::diffusion_mc::{
    estimate_log_value, estimate_reciprocal_moment, numeraire_probe, reciprocal_checkpoints, simulate_bes3,
    stopped_experiments, MIN_STEPS_FOR_INTEGRALS,
};
use viability::entropy::{entropy_hellinger, exp_utility, min_entropy_emm, relative_entropy};
use viability::generate::{MarketGenerator, PriceModel};
use viability::io::{load_density, load_market};
use viability::measure_change::{base_density, delta_for_epsilon, verify_value_bound};
use viability::numeraire::{deflator_probe, numeraire_portfolio, verify_numeraire, TestStrategies};
use viability::tree_market::validate_market;
use viability::utility::{
    equivalence_suite, maximize_utility, Measure, SuiteConfig, UtilityFunction, UtilityOutcome, GRADIENT_TOL,
    RECURSION_TOL,
};
use viability::{Error, Market};

use crate::report::{Check, Report, Table};
use crate::{Command, GlobalOpts};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Clone, Args, Serialize)]
pub struct MarketArg {
    /// Market JSON file.
    #[arg(long)]
    pub market: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NumeraireArgs {
    #[command(flatten)]
    pub market: MarketArg,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    /// Sampled fraction strategies for the supermartingale test.
    #[arg(long, default_value_t = 1000)]
    pub n_tests: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub market: MarketArg,
    /// `log` or `crra:GAMMA`.
    #[arg(long, default_value = "log")]
    pub utility: String,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    /// `physical`, `emm`, or a density JSON file `{"z": [...]}`.
    #[arg(long, default_value = "physical")]
    pub measure: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub market: MarketArg,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value = "log")]
    pub utility: String,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("mode").args(["min_entropy", "exp_utility", "hellinger"])))]
pub struct EntropyArgs {
    #[command(flatten)]
    pub market: MarketArg,
    /// Minimal-entropy martingale density (the default).
    #[arg(long)]
    pub min_entropy: bool,
    /// Exponential-utility optimum and its dual density.
    #[arg(long)]
    pub exp_utility: bool,
    /// Entropy-Hellinger report for the density in this file.
    #[arg(long, value_name = "DENSITYFILE")]
    pub hellinger: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Random strategies for the numéraire probe.
    #[arg(long, default_value_t = 200)]
    pub strategies: usize,
    /// Localization levels `n` for `τ_n`.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    pub levels: Vec<u32>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 500)]
    pub n_markets: usize,
    #[arg(long, default_value_t = 1)]
    pub d_min: usize,
    #[arg(long, default_value_t = 3)]
    pub d_max: usize,
    #[arg(long, default_value_t = 1)]
    pub depth_min: usize,
    #[arg(long, default_value_t = 3)]
    pub depth_max: usize,
    #[arg(long, default_value_t = 2)]
    pub branch_min: usize,
    #[arg(long, default_value_t = 4)]
    pub branch_max: usize,
    #[arg(long, default_value_t = 0.1)]
    pub price_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub price_max: f64,
    /// `uniform` or `multiplicative:SIGMA`.
    #[arg(long, default_value = "uniform")]
    pub price_model: String,
}

pub fn run(cmd: &Command, g: &GlobalOpts, r: &mut Report) -> CliResult {
    match cmd {
        Command::Check(a) => check(a, g, r),
        Command::Numeraire(a) => numeraire(a, g, r),
        Command::Optimize(a) => optimize(a, g, r),
        Command::Measure(a) => measure(a, g, r),
        Command::Entropy(a) => entropy(a, g, r),
        Command::Simulate(a) => simulate(a, g, r),
        Command::EquivalenceSuite(a) => suite(a, g, r),
    }
}

fn load(a: &MarketArg) -> Result<Market, CliError> {
    Ok(load_market(&a.market)?)
}

fn parse_utility(s: &str) -> Result<UtilityFunction<f64>, CliError> {
    match s.split_once(':') {
        None if s == "log" => Ok(UtilityFunction::Log),
        Some(("crra", g)) => {
            let gamma: f64 = g.parse().map_err(|_| CliError::Usage(format!("bad CRRA coefficient {g:?}")))?;
            UtilityFunction::crra(gamma).map_err(|e| CliError::Usage(e.to_string()))
        }
        _ => Err(CliError::Usage(format!("unknown utility {s:?}; expected log or crra:GAMMA"))),
    }
}

fn to_value<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("result serializes")
}

/// Certificate checks shared by several commands.
fn certify(m: &Market, cert: &NaCertificate<f64>, g: &GlobalOpts, r: &mut Report) {
    match cert {
        NaCertificate::NoArbitrage { density, .. } => {
            let res = density.price_martingale_residual(m).max(density.martingale_residual(m.tree()));
            r.check(Check::new(
                "emm density",
                density.min() > 0.0 && res <= g.tol_eq,
                format!("min z = {:.6e}, martingale residual = {res:.3e}", density.min()),
            ));
        }
        NaCertificate::Arbitrage { node, .. } => {
            let gains = cert.replay_gains(m).unwrap_or_default();
            let lo = gains.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            r.check(Check::new(
                "arbitrage replay",
                lo >= -g.tol_eq && hi > g.tol_eq,
                format!("node {node}: terminal gains in [{lo:.6e}, {hi:.6e}]"),
            ));
        }
    }
}

fn check(a: &MarketArg, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let m = load(a)?;
    let cert = check_na(&m)?;
    let nupbr = check_nupbr(&m)?;
    certify(&m, &cert, g, r);
    r.result = json!({
        "label": m.label,
        "verdict": cert.verdict(),
        "nupbr": to_value(&nupbr),
        "certificate": to_value(&cert),
        "validation": to_value(&validate_market(&m)),
    });
    Ok(())
}

fn numeraire(a: &NumeraireArgs, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let m = load(&a.market)?;
    let sol = match numeraire_portfolio(&m, a.x0) {
        Ok(s) => s,
        Err(Error::Arbitrage(w)) => {
            let cert = check_na(&m)?;
            certify(&m, &cert, g, r);
            r.result = json!({ "exists": false, "witness": to_value(&w) });
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    r.check(Check::new(
        "first-order conditions",
        sol.worst_residual() <= g.tol_eq,
        format!("worst residual {:.3e}", sol.worst_residual()),
    ));
    let verify = verify_numeraire(&m, &sol.wealth, &TestStrategies::Sampled { n: a.n_tests, seed: g.seed }, g.tol_ineq)?;
    r.check(Check::new(
        "supermartingale ratios",
        verify.passed,
        format!("{} strategies, worst relative violation {:.3e}", verify.n_tests, verify.worst_violation),
    ));
    let probe = deflator_probe(&m, &sol, a.n_tests, g.seed.wrapping_add(1), g.tol_ineq)?;
    r.check(Check::new(
        "deflator probe",
        probe.passed,
        format!("max E[W_T/Ŵ_T]·x0 = {:.9} for x0 = {}", probe.max_expectation, probe.x0),
    ));
    r.result = json!({ "exists": true, "solution": to_value(&sol), "verify": to_value(&verify), "deflator_probe": to_value(&probe) });
    Ok(())
}

fn optimize(a: &OptimizeArgs, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let m = load(&a.market)?;
    let u = parse_utility(&a.utility)?;
    let q = match a.measure.as_str() {
        "physical" => Measure::Physical,
        "emm" => match check_na(&m)? {
            NaCertificate::NoArbitrage { density, .. } => Measure::Density(density),
            cert => {
                certify(&m, &cert, g, r);
                r.result = json!({ "outcome": "no-solution", "certificate": to_value(&cert) });
                return Ok(());
            }
        },
        path => Measure::Density(load_density(path, &m)?),
    };
    match maximize_utility(&m, &u, a.x0, &q)? {
        UtilityOutcome::Solution(s) => {
            let tol = if s.method == "backward recursion" { RECURSION_TOL } else { GRADIENT_TOL };
            r.check(Check::new("optimizer residual", s.residual <= tol, format!("{} ({}) ≤ {tol:e}", s.residual, s.method)));
            let tree = m.tree();
            let qz = s.measure.leaf_values(tree);
            let replay = tree.expect_leaves(
                &tree.leaves().iter().zip(&qz).map(|(&l, &z)| z * u.value(s.wealth.value[l])).collect::<Vec<_>>(),
            );
            r.check(Check::new(
                "value replay",
                (replay - s.value).abs() <= g.tol_eq * s.value.abs().max(1.0),
                format!("E^Q U(W_T) = {replay:.12}, reported {:.12}", s.value),
            ));
            r.result = json!({ "outcome": "solution", "utility": u.name(), "solution": to_value(&s) });
        }
        UtilityOutcome::NoSolution { certificate } => {
            certify(&m, &certificate, g, r);
            r.result = json!({ "outcome": "no-solution", "certificate": to_value(&certificate) });
        }
    }
    Ok(())
}

fn measure(a: &MeasureArgs, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let m = load(&a.market)?;
    let u = parse_utility(&a.utility)?;
    if !(a.epsilon > 0.0 && a.epsilon <= 1.0) {
        return Err(CliError::Usage(format!("epsilon {} outside (0, 1]", a.epsilon)));
    }
    let (p, q) = match base_density(&m) {
        Ok(x) => x,
        Err(_) => {
            let cert = check_na(&m)?;
            certify(&m, &cert, g, r);
            r.check(Check::new("martingale density", false, "the market admits arbitrage; no density to transform"));
            r.result = json!({ "certificate": to_value(&cert) });
            return Ok(());
        }
    };
    let dm = delta_for_epsilon(&p, &q, a.epsilon)?;
    let mean: f64 = p.iter().zip(&dm.z_delta).map(|(pi, z)| pi * z).sum();
    let cap = 1.0 / dm.delta0();
    r.check(Check::new("l1 distance", dm.l1_dist <= a.epsilon, format!("E|Z_δ − 1| = {:.6e} ≤ {}", dm.l1_dist, a.epsilon)));
    r.check(Check::new("normalization", (mean - 1.0).abs() <= 1e-12, format!("E[Z_δ] − 1 = {:.3e}", mean - 1.0)));
    r.check(Check::new("equivalence", dm.min_z() > 0.0, format!("min Z_δ = {:.6e}", dm.min_z())));
    r.check(Check::new("boundedness", dm.max_z() <= cap + 1e-12, format!("max Z_δ = {:.6} ≤ 1/Δ₀ = {cap:.6}", dm.max_z())));
    let bound = verify_value_bound(&m, &dm, &u, a.x0)?;
    r.check(Check::new("value bound", bound.holds, format!("value {:.9} ≤ bound {:.9}", bound.value, bound.bound)));
    r.result = json!({ "delta": dm.delta, "l1_dist": dm.l1_dist, "min_z": dm.min_z(), "max_z": dm.max_z(),
                       "measure": to_value(&dm), "value_bound": to_value(&bound) });
    Ok(())
}

fn entropy(a: &EntropyArgs, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let m = load(&a.market)?;
    if let Some(path) = &a.hellinger {
        let z = load_density(path, &m)?;
        let rep = entropy_hellinger(m.tree(), &z)?;
        let tree = m.tree();
        let monotone = |v: &[f64]| (1..tree.len()).all(|c| v[c] >= v[tree.parent(c).expect("non-root")]);
        r.check(Check::new("jump terms nonnegative", rep.jump.iter().all(|&j| j >= 0.0), "(1+x)log(1+x) − x ≥ 0"));
        r.check(Check::new("V^E nondecreasing", monotone(&rep.ve), "along every path"));
        r.check(Check::new("h^E nondecreasing", monotone(&rep.he), "along every path"));
        let is_martingale = z.martingale_residual(tree) <= g.tol_eq;
        let rel = relative_entropy(tree, &z);
        if is_martingale {
            let w = rep.expected_terminal_weighted_ve(tree);
            r.check(Check::new("relative entropy identity", (w - rel).abs() <= g.tol_eq, format!("E[Σ Z₋·jump] = {w:.12}, E[Z log Z] = {rel:.12}")));
        }
        r.result = json!({ "expected_ve": rep.expected_terminal_ve(tree), "relative_entropy": rel,
                           "martingale": is_martingale, "report": to_value(&rep) });
        return Ok(());
    }
    let min = match min_entropy_emm(&m) {
        Ok(x) => x,
        Err(Error::Arbitrage(_)) => {
            let cert = check_na(&m)?;
            certify(&m, &cert, g, r);
            r.result = json!({ "outcome": "arbitrage", "certificate": to_value(&cert) });
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    r.check(Check::new("kkt residual", min.kkt_residual <= 1e-8, format!("{:.3e}", min.kkt_residual)));
    if a.exp_utility {
        let e = exp_utility(&m)?;
        let gap = e.density.z.iter().zip(&min.density.z).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        r.check(Check::new("gradient norm", e.gradient_norm <= 1e-8, format!("{:.3e}", e.gradient_norm)));
        r.check(Check::new("density link", e.density_link_residual <= g.tol_eq, format!("martingale residual {:.3e}", e.density_link_residual)));
        r.check(Check::new("duality", gap <= 1e-6, format!("max |z_exp − z_min| = {gap:.3e}")));
        r.result = json!({ "exp_utility": to_value(&e), "min_entropy": to_value(&min) });
    } else {
        r.result = json!({ "min_entropy": to_value(&min) });
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let b = simulate_bes3(a.paths, a.steps, g.seed)?;
    let rm = estimate_reciprocal_moment(&b);
    let reference = 2.0 * Normal::standard().cdf(1.0) - 1.0;
    r.check(Check::new("positivity", b.paths.iter().all(|p| p.min_s > 0.0), "S > 0 on every grid point"));
    if let Some(se) = rm.estimate.std_error {
        r.check(Check::new(
            "E[1/S_1] closed form",
            (rm.estimate.mean - reference).abs() <= 3.0 * se,
            format!("{:.6} vs 2Φ(1) − 1 = {reference:.6}, SE {se:.2e}", rm.estimate.mean),
        ));
        r.check(Check::new("no EMM", rm.no_emm == Some(true), format!("gap 1 − E[1/S_1] = {:.6} ({:.1} SE)", rm.gap, rm.gap / se)));
    }
    let log_value = if a.steps >= MIN_STEPS_FOR_INTEGRALS && a.paths >= 2 {
        let lv = estimate_log_value(&b)?;
        r.check(Check::new("2 log 2 bound", lv.bound_check, format!("E∫S⁻² = {:.6} ≤ {:.6} + 3 SE", lv.eint_inv_s2.mean, lv.bound)));
        r.check(Check::new("Itô identity", lv.ito_check, format!("E[log S_1 − ½∫S⁻²] = {:.3e}", lv.ito_residual.mean)));
        if let Some(ok) = lv.doubling_check {
            r.check(Check::new("grid doubling", ok, "half-grid trapezoid within 3 SE"));
        }
        Some(lv)
    } else {
        None
    };
    let probe = numeraire_probe(&b, a.strategies, g.seed.wrapping_add(1));
    r.check(Check::new(
        "numéraire probe",
        probe.passed,
        format!("{} strategies, worst margin {:.3e}, clipped {}", probe.rows.len(), probe.worst_margin, probe.clipped_total),
    ));
    let (checkpoints, cp_ok) = reciprocal_checkpoints(&b);
    r.check(Check::new("1/S supermartingale", cp_ok, "checkpoint means nonincreasing within 3 SE"));
    let stopped = if a.paths >= 2 {
        let t = stopped_experiments(&b, &a.levels)?;
        r.check(Check::new("localization finite", t.finite, "every stopped estimate finite"));
        r.check(Check::new("localization monotone", t.nondecreasing, "E[log S_τn] nondecreasing in n"));
        r.check(Check::new("localization limit", t.converged, "largest level within 3 SE of E[log S_1]"));
        r.tables.push(Table {
            name: "stopped".into(),
            header: vec!["level".into(), "mean".into(), "std_error".into(), "stopped_fraction".into()],
            rows: t
                .rows
                .iter()
                .map(|x| vec![x.level.to_string(), x.elog.mean.to_string(), fmt_se(x.elog.std_error), x.stopped_fraction.to_string()])
                .collect(),
        });
        Some(t)
    } else {
        None
    };
    r.tables.push(Table {
        name: "checkpoints".into(),
        header: vec!["t".into(), "mean_reciprocal".into(), "std_error".into()],
        rows: checkpoints
            .iter()
            .map(|c| vec![c.t.to_string(), c.reciprocal.mean.to_string(), fmt_se(c.reciprocal.std_error)])
            .collect(),
    });
    r.result = json!({
        "n_paths": b.n_paths, "n_steps": b.n_steps, "seed": b.seed,
        "reference_reciprocal": reference,
        "reciprocal_moment": to_value(&rm),
        "log_value": to_value(&log_value),
        "numeraire_probe": { "worst_margin": probe.worst_margin, "clipped_total": probe.clipped_total, "passed": probe.passed,
                              "rows": probe.rows.iter().map(|x| to_value(&x.ratio)).collect::<Vec<_>>() },
        "checkpoints": to_value(&checkpoints),
        "stopped": to_value(&stopped),
    });
    Ok(())
}

fn fmt_se(se: Option<f64>) -> String {
    se.map(|s| s.to_string()).unwrap_or_default()
}

fn suite(a: &SuiteArgs, g: &GlobalOpts, r: &mut Report) -> CliResult {
    let bad = |what: &str| CliError::Usage(format!("invalid generator: {what}"));
    if a.d_min == 0 || a.d_min > a.d_max {
        return Err(bad("d range"));
    }
    if a.depth_min == 0 || a.depth_min > a.depth_max {
        return Err(bad("depth range"));
    }
    if a.branch_min == 0 || a.branch_min > a.branch_max {
        return Err(bad("branch range"));
    }
    if !(a.price_min > 0.0 && a.price_min <= a.price_max && a.price_max.is_finite()) {
        return Err(bad("price range"));
    }
    let price_model = match a.price_model.split_once(':') {
        None if a.price_model == "uniform" => PriceModel::Uniform,
        Some(("multiplicative", s)) => PriceModel::Multiplicative {
            sigma: s.parse().ok().filter(|x: &f64| *x > 0.0 && x.is_finite()).ok_or_else(|| bad("sigma"))?,
        },
        _ => return Err(bad("price model")),
    };
    let config = SuiteConfig {
        n_markets: a.n_markets,
        generator: MarketGenerator {
            d_range: a.d_min..=a.d_max,
            depth_range: a.depth_min..=a.depth_max,
            branch_range: a.branch_min..=a.branch_max,
            price_range: (a.price_min, a.price_max),
            price_model,
        },
        seed: g.seed,
    };
    let report = equivalence_suite(&config);
    r.check(Check::new(
        "four-way agreement",
        report.passed(),
        format!(
            "{} markets: {} viable, {} with arbitrage, {} disagreements",
            a.n_markets,
            report.n_viable,
            report.n_arbitrage,
            report.disagreements.len()
        ),
    ));
    r.result = to_value(&report);
    Ok(())
}
