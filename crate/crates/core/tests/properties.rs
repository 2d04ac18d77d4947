mod common;

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use viability::arbitrage::check_na;
use viability::diffusion_mc::simulate_bes3;
use viability::entropy::{concat_pair, exp_utility, jump_term, min_entropy_emm, relative_entropy};
use viability::generate::{MarketGenerator, PriceModel};
use viability::measure_change::{base_density, construct_q_delta};
use viability::numeraire::numeraire_portfolio;
use viability::tree_market::{DensityProcess, MarketModel, StoppingTime};
use viability::utility::{maximize_utility, CustomUtility, Measure, PortfolioStrategy, UtilityFunction};
use viability::Market;

fn viable_market(seed: u64) -> Market {
    common::na_markets(1, seed, 1..=3).pop().unwrap()
}

fn fractions(out: &viability::utility::UtilityOutcome<f64>) -> Vec<Vec<f64>> {
    match &out.solution().unwrap().strategy {
        PortfolioStrategy::Fractions(f) => f.fractions.clone(),
        PortfolioStrategy::Units(_) => panic!("expected fractions"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn jump_term_is_nonnegative(x in -0.999_999f64..50.0) {
        prop_assert!(jump_term(x) >= 0.0);
    }

    #[test]
    fn crra_is_homothetic(seed in any::<u64>(), gamma in 0.2f64..6.0, x0 in 0.01f64..100.0) {
        prop_assume!((gamma - 1.0).abs() > 1e-3);
        let m = viable_market(seed);
        let u = UtilityFunction::crra(gamma).unwrap();
        let one = maximize_utility(&m, &u, 1.0, &Measure::Physical).unwrap();
        let scaled = maximize_utility(&m, &u, x0, &Measure::Physical).unwrap();
        for (a, b) in fractions(&one).iter().flatten().zip(fractions(&scaled).iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let (v1, vx) = (one.solution().unwrap().value, scaled.solution().unwrap().value);
        let expect = v1 * x0.powf(1.0 - gamma);
        prop_assert!((vx - expect).abs() <= 1e-10 * expect.abs().max(1e-300), "{vx} vs {expect}");
    }

    #[test]
    fn log_optimum_is_the_numeraire(seed in any::<u64>(), x0 in 0.1f64..10.0) {
        let m = viable_market(seed);
        let out = maximize_utility(&m, &UtilityFunction::Log, x0, &Measure::Physical).unwrap();
        let sol = numeraire_portfolio(&m, x0).unwrap();
        for (a, b) in fractions(&out).iter().flatten().zip(sol.strategy.fractions.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn measure_change_is_normalized_bounded_and_monotone(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let w: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
        let norm: f64 = p.iter().zip(&w).map(|(a, b)| a * b).sum();
        let q: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let mut prev: Option<viability::DeltaMeasure> = None;
        for delta in [0.9, 0.5, 0.1, 0.01, 1e-4] {
            let dm = construct_q_delta(&p, &q, delta).unwrap();
            let mean: f64 = p.iter().zip(&dm.z_delta).map(|(a, b)| a * b).sum();
            prop_assert!((mean - 1.0).abs() <= 1e-12);
            prop_assert!(dm.min_z() > 0.0);
            prop_assert!(dm.max_z() <= 1.0 / dm.delta0() + 1e-12);
            if let Some(prev) = &prev {
                for (a, b) in prev.q_delta.iter().zip(&dm.q_delta) {
                    prop_assert!(b >= a);
                }
                prop_assert!(dm.l1_dist <= prev.l1_dist + 1e-15);
            }
            prev = Some(dm);
        }
    }

    #[test]
    fn min_entropy_beats_sampled_emms(seed in any::<u64>()) {
        let m = viable_market(seed);
        let best = min_entropy_emm(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..50 {
            let z = DensityProcess::new(m.tree(), common::random_emm(&m, &mut rng)).unwrap();
            prop_assert!(z.price_martingale_residual(&m) < 1e-9);
            prop_assert!(best.entropy <= relative_entropy(m.tree(), &z) + 1e-12);
        }
    }

    #[test]
    fn concatenation_is_associative_over_rationals(seed in any::<u64>()) {
        let m = viable_market(seed);
        let tree = m.tree();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = StoppingTime::random(tree, &mut rng, 0.5);
        let c2 = loop {
            let c = StoppingTime::random(tree, &mut rng, 0.3);
            if c1.precedes(tree, &c) {
                break c;
            }
        };
        let mut seg = || -> Vec<BigRational> {
            (0..tree.len())
                .map(|_| BigRational::new(BigInt::from(rng.random_range(1..10_000)), BigInt::from(rng.random_range(1..10_000))))
                .collect()
        };
        let (a, b, c) = (seg(), seg(), seg());
        let left = concat_pair(tree, &concat_pair(tree, &a, &c1, &b).unwrap(), &c2, &c).unwrap();
        let right = concat_pair(tree, &a, &c1, &concat_pair(tree, &b, &c2, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }
}

#[test]
fn small_delta_probe_on_fixtures() {
    let mut markets = common::fixtures();
    markets.extend(common::na_markets(30, 71, 1..=3));
    for m in &markets {
        let (p, q) = base_density(m).unwrap();
        let dm = construct_q_delta(&p, &q, 1e-6).unwrap();
        assert!(dm.l1_dist < 1e-5, "{}: {}", m.label, dm.l1_dist);
    }
}

fn power_log_mix() -> UtilityFunction<f64> {
    UtilityFunction::custom(CustomUtility {
        name: "log + 2 sqrt".into(),
        u: Arc::new(|x: f64| x.ln() + 2.0 * x.sqrt()),
        du: Arc::new(|x: f64| 1.0 / x + 1.0 / x.sqrt()),
        d2u: None,
    })
    .unwrap()
}

#[test]
fn custom_utility_matches_grid_search_on_one_period_markets() {
    let u = power_log_mix();
    let gen = MarketGenerator { d_range: 1..=1, depth_range: 1..=1, ..MarketGenerator::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 40 {
        let m: Market = gen.sample(&mut rng, "one-period");
        if !check_na(&m).unwrap().holds() {
            continue;
        }
        checked += 1;
        let out = maximize_utility(&m, &u, 1.0, &Measure::Physical).unwrap();
        let value = out.solution().unwrap().value;
        let inc: Vec<f64> = m.increments(0).iter().map(|d| d[0]).collect();
        let probs = m.tree().branch_probs(0);
        // admissible holdings keep every terminal wealth positive
        let hi = inc.iter().filter(|&&d| d < 0.0).map(|d| -1.0 / d).fold(f64::INFINITY, f64::min);
        let lo = inc.iter().filter(|&&d| d > 0.0).map(|d| -1.0 / d).fold(f64::NEG_INFINITY, f64::max);
        let n = 400_000;
        let grid_best = (1..n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .map(|th| probs.iter().zip(&inc).map(|(p, d)| p * u.value(1.0 + th * d)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(value >= grid_best - 1e-12, "{value} < grid {grid_best}");
        assert!(value - grid_best <= 1e-6, "{value} vs grid {grid_best}");
    }
}

#[test]
fn min_entropy_converges_and_matches_exp_utility_on_many_markets() {
    let gens = [
        MarketGenerator { price_model: PriceModel::Multiplicative { sigma: 0.3 }, ..MarketGenerator::default() },
        MarketGenerator { price_model: PriceModel::Multiplicative { sigma: 1.0 }, ..MarketGenerator::default() },
        MarketGenerator { d_range: 1..=1, ..MarketGenerator::default() },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut n = 0;
    for k in 0..3000 {
        let m: Market = gens[k % 3].sample(&mut rng, format!("m{k}"));
        if !check_na(&m).unwrap().holds() {
            continue;
        }
        n += 1;
        let me = min_entropy_emm(&m).unwrap_or_else(|e| panic!("{k}: {e}"));
        assert!(me.kkt_residual < 1e-8);
        assert!(me.density.price_martingale_residual(&m) < 1e-9);
        let ex = exp_utility(&m).unwrap_or_else(|e| panic!("{k}: {e}"));
        for (a, b) in ex.density.z.iter().zip(&me.density.z) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{k}: {a} vs {b}");
        }
    }
    assert!(n > 300, "only {n} viable markets");
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn bessel_terminal_law_matches_an_independent_generator() {
    // S_1 = |x0 + W_1| for a 3-d Brownian motion started at (1, 0, 0)
    let n = 20_000;
    let batch = simulate_bes3(n, 100, 3).unwrap();
    let ours: Vec<f64> = batch.paths.iter().map(|p| p.s1).collect();
    let mut rng = rand::rngs::StdRng::seed_from_u64(12345);
    let theirs: Vec<f64> = (0..n)
        .map(|_| {
            let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            ((1.0 + g[0]).powi(2) + g[1] * g[1] + g[2] * g[2]).sqrt()
        })
        .collect();
    let d = ks_statistic(ours, theirs);
    // 0.1% critical value
    let crit = 1.949 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "KS {d} ≥ {crit}");
}

#[test]
fn f32_instantiation_agrees_with_f64() {
    for seed in 0..20 {
        let m = viable_market(seed);
        let m32: MarketModel<f32> = m.cast();
        assert!(check_na(&m32).unwrap().holds());
        let a = numeraire_portfolio(&m, 1.0).unwrap();
        let b = numeraire_portfolio(&m32, 1.0f32).unwrap();
        for (x, y) in a.wealth.value.iter().zip(&b.wealth.value) {
            assert!((x - *y as f64).abs() <= 1e-3 * x.abs().max(1.0), "{x} vs {y}");
        }
        let (p, q) = base_density(&m32).unwrap();
        let dm = construct_q_delta(&p, &q, 0.1f32).unwrap();
        let mean: f32 = p.iter().zip(&dm.z_delta).map(|(a, b)| a * b).sum();
        assert!((mean - 1.0).abs() < 1e-5);
    }
}
