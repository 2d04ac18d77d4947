use rand::Rng;
use serde::Serialize;

use super::tree::EventTree;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stopping time on a tree: an antichain of nodes met exactly once by every
/// root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoppingTime {
    cut: Vec<usize>,
}

impl StoppingTime {
    pub fn new<P>(tree: &EventTree<P>, mut cut: Vec<usize>) -> Result<Self> {
        cut.sort_unstable();
        cut.dedup();
        if let Some(&bad) = cut.iter().find(|&&v| v >= tree.len()) {
            return Err(Error::InvalidStoppingTime(format!("node {bad} out of range")));
        }
        let mut member = vec![false; tree.len()];
        for &v in &cut {
            member[v] = true;
        }
        for leaf in tree.leaves() {
            let hits = tree.path_to(leaf).into_iter().filter(|&v| member[v]).count();
            if hits != 1 {
                return Err(Error::InvalidStoppingTime(format!(
                    "path to leaf {leaf} meets the cut {hits} times"
                )));
            }
        }
        Ok(Self { cut })
    }

    pub fn root() -> Self {
        Self { cut: vec![0] }
    }

    pub fn terminal<P>(tree: &EventTree<P>) -> Self {
        Self { cut: tree.leaves() }
    }

    /// All nodes at a fixed depth (the deterministic time `t`).
    pub fn at_depth<P>(tree: &EventTree<P>, t: usize) -> Result<Self> {
        Self::new(tree, (0..tree.len()).filter(|&v| tree.depth(v) == t).collect())
    }

    /// Random stopping time: at each node stop with probability `stop_prob`,
    /// leaves always stop.
    pub fn random<P, R: Rng + ?Sized>(tree: &EventTree<P>, rng: &mut R, stop_prob: f64) -> Self {
        let mut cut = Vec::new();
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            if tree.is_leaf(v) || rng.random::<f64>() < stop_prob {
                cut.push(v);
            } else {
                stack.extend(tree.children(v).iter().rev());
            }
        }
        cut.sort_unstable();
        Self { cut }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.cut
    }

    pub fn contains(&self, v: usize) -> bool {
        self.cut.binary_search(&v).is_ok()
    }

    /// The cut node on the root path of `leaf`.
    pub fn node_on_path<P>(&self, tree: &EventTree<P>, leaf: usize) -> usize {
        tree.path_to(leaf)
            .into_iter()
            .find(|&v| self.contains(v))
            .expect("stopping time covers every path")
    }

    /// `self ≤ other` pathwise.
    pub fn precedes<P>(&self, tree: &EventTree<P>, other: &StoppingTime) -> bool {
        tree.leaves().into_iter().all(|l| {
            tree.is_ancestor_or_self(self.node_on_path(tree, l), other.node_on_path(tree, l))
        })
    }
}

/// Where a conditional expectation is evaluated.
#[derive(Debug, Clone)]
pub enum At<'a> {
    Node(usize),
    Time(&'a StoppingTime),
}

/// `E[X | F_at]` for `X` given by one value per node of `cut`, under the tree's
/// probabilities. Returns one value per node of `at` (in the cut's node order).
pub fn conditional_expectation<T: Scalar>(
    tree: &EventTree<T>,
    cut: &StoppingTime,
    values: &[T],
    at: At<'_>,
) -> Result<Vec<T>> {
    let full = expectation_process(tree, cut, values)?;
    let targets: Vec<usize> = match at {
        At::Node(v) => vec![v],
        At::Time(st) => st.nodes().to_vec(),
    };
    targets
        .into_iter()
        .map(|v| {
            full.get(v).copied().flatten().ok_or_else(|| {
                Error::InvalidStoppingTime(format!("node {v} lies strictly after the value cut"))
            })
        })
        .collect()
}

/// Conditional expectations at every node weakly before `cut` (`None` below it).
pub fn expectation_process<T: Scalar>(
    tree: &EventTree<T>,
    cut: &StoppingTime,
    values: &[T],
) -> Result<Vec<Option<T>>> {
    if values.len() != cut.nodes().len() {
        return Err(Error::Dimension {
            expected: cut.nodes().len(),
            got: values.len(),
            context: "one value per cut node",
        });
    }
    let mut full: Vec<Option<T>> = vec![None; tree.len()];
    for (&v, &x) in cut.nodes().iter().zip(values) {
        full[v] = Some(x);
    }
    for v in (0..tree.len()).rev() {
        if full[v].is_some() || tree.is_leaf(v) {
            continue;
        }
        let mut acc = T::zero();
        let mut complete = true;
        for &c in tree.children(v) {
            match full[c] {
                Some(x) => acc = acc + tree.node(c).prob * x,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            full[v] = Some(acc);
        }
    }
    Ok(full)
}
