#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use viability::arbitrage::check_na;
use viability::entropy::min_entropy_emm;
use viability::generate::{MarketGenerator, PriceModel};
use viability::tree_market::{DensityProcess, EventTree, MarketModel};
use viability::{Density, Market, Tree};

/// One period, one asset, S0 = 1, up 2 / down 0.5.
pub fn binomial(p_up: f64) -> Market {
    MarketModel::one_period("binomial", vec![1.0], vec![(p_up, vec![2.0]), (1.0 - p_up, vec![0.5])]).unwrap()
}

pub fn trinomial() -> Market {
    let p = 1.0 / 3.0;
    MarketModel::one_period("trinomial", vec![1.0], vec![(p, vec![2.0]), (p, vec![1.0]), (p, vec![0.5])]).unwrap()
}

/// Two periods, two assets, uneven branching.
pub fn two_period() -> Market {
    MarketModel::from_nodes(
        "two-period",
        vec![
            (None, 1.0, vec![1.0, 1.0]),
            (Some(0), 0.3, vec![1.4, 0.9]),
            (Some(0), 0.7, vec![0.8, 1.05]),
            (Some(1), 0.5, vec![1.9, 1.0]),
            (Some(1), 0.5, vec![0.9, 0.8]),
            (Some(2), 0.2, vec![0.6, 1.15]),
            (Some(2), 0.3, vec![1.0, 1.15]),
            (Some(2), 0.5, vec![0.8, 0.85]),
        ],
    )
    .unwrap()
}

pub fn fixtures() -> Vec<Market> {
    vec![binomial(0.5), binomial(2.0 / 3.0), trinomial(), two_period()]
}

/// Random markets without arbitrage, drawn from the multiplicative price model
/// so that most candidates are viable.
pub fn na_markets(n: usize, seed: u64, depth: std::ops::RangeInclusive<usize>) -> Vec<Market> {
    let gen = MarketGenerator {
        depth_range: depth,
        price_model: PriceModel::Multiplicative { sigma: 0.3 },
        ..MarketGenerator::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while out.len() < n {
        let m: Market = gen.sample(&mut rng, format!("na-{k}"));
        k += 1;
        if check_na(&m).unwrap().holds() {
            out.push(m);
        }
    }
    out
}

pub fn reweighted_tree(tree: &Tree, rng: &mut impl Rng) -> Tree {
    let mut probs = vec![1.0; tree.len()];
    for v in tree.internal_nodes() {
        let raw: Vec<f64> = tree.children(v).iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for (&c, w) in tree.children(v).iter().zip(raw) {
            probs[c] = w / s;
        }
    }
    EventTree::from_parents((0..tree.len()).map(|v| (tree.parent(v), probs[v])).collect()).unwrap()
}

/// Random positive martingale density for the tree's own probabilities.
pub fn random_martingale_density(tree: &Tree, rng: &mut impl Rng) -> Density {
    let q = reweighted_tree(tree, rng);
    let mut z = vec![1.0; tree.len()];
    for v in 1..tree.len() {
        let p = tree.parent(v).unwrap();
        z[v] = z[p] * q.node(v).prob / tree.node(v).prob;
    }
    DensityProcess::new(tree, z).unwrap()
}

/// Random strictly positive EMM density: the minimal-entropy EMM relative to a
/// randomly reweighted reference measure, expressed against the original one.
pub fn random_emm(m: &Market, rng: &mut impl Rng) -> Vec<f64> {
    let tree = m.tree();
    let alt_tree = reweighted_tree(tree, rng);
    let alt = MarketModel::new("alt", alt_tree.clone(), m.prices().to_vec()).unwrap();
    let z_alt = min_entropy_emm(&alt).unwrap().density.z;
    let p = tree.unconditional_probs();
    let p_alt = alt_tree.unconditional_probs();
    (0..tree.len()).map(|v| z_alt[v] * p_alt[v] / p[v]).collect()
}
