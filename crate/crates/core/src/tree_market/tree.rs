use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode<T> {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// Probability of this node conditional on its parent (1 at the root).
    pub prob: T,
}

/// Finite filtration as an event tree. Nodes are indexed breadth-first from
/// the root; the only stored probabilities are conditional branch
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTree<T> {
    nodes: Vec<TreeNode<T>>,
    horizon: usize,
}

impl<T: Clone> EventTree<T> {
    /// Builds the tree from `(parent, branch probability)` pairs. Node 0 must be
    /// the root and every parent index must precede its child.
    ///
    /// Structural defects that make the tree unusable are errors; probability
    /// and leveling defects are left to [`crate::tree_market::validate_market`].
    pub fn from_parents(spec: Vec<(Option<usize>, T)>) -> Result<Self> {
        if spec.is_empty() {
            return Err(Error::MalformedTree("no nodes".into()));
        }
        if spec[0].0.is_some() {
            return Err(Error::MalformedTree("node 0 must be the root".into()));
        }
        let mut nodes: Vec<TreeNode<T>> = Vec::with_capacity(spec.len());
        for (id, (parent, prob)) in spec.into_iter().enumerate() {
            let depth = match parent {
                None if id == 0 => 0,
                None => {
                    return Err(Error::MalformedTree(format!("node {id} is a second root")))
                }
                Some(p) if p >= id => {
                    return Err(Error::MalformedTree(format!(
                        "node {id} has parent {p}, which does not precede it"
                    )))
                }
                Some(p) => {
                    nodes[p].children.push(id);
                    nodes[p].depth + 1
                }
            };
            nodes.push(TreeNode { parent, children: Vec::new(), depth, prob });
        }
        let horizon = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Ok(Self { nodes, horizon })
    }

    /// Converts branch probabilities to another scalar type.
    pub fn map_probs<U>(&self, f: impl Fn(&T) -> U) -> EventTree<U> {
        EventTree {
            nodes: self
                .nodes
                .iter()
                .map(|n| TreeNode {
                    parent: n.parent,
                    children: n.children.clone(),
                    depth: n.depth,
                    prob: f(&n.prob),
                })
                .collect(),
            horizon: self.horizon,
        }
    }
}

impl<T> EventTree<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn node(&self, i: usize) -> &TreeNode<T> {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.nodes[i].parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.nodes[i].children
    }

    pub fn depth(&self, i: usize) -> usize {
        self.nodes[i].depth
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.nodes[i].children.is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_leaf(i)).collect()
    }

    /// Root-to-node path including both ends.
    pub fn path_to(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut cur = i;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Whether `anc` is `node` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, anc: usize, node: usize) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == anc {
                return true;
            }
            if self.nodes[c].depth <= self.nodes[anc].depth {
                return false;
            }
            cur = self.nodes[c].parent;
        }
        false
    }

    /// The child of `anc` on the path to `node`, if `node` is a strict descendant.
    pub fn child_towards(&self, anc: usize, node: usize) -> Option<usize> {
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            if p == anc {
                return Some(cur);
            }
            cur = p;
        }
        None
    }
}

impl<T: Scalar> EventTree<T> {
    /// Unconditional probabilities of every node (product along the root path).
    pub fn unconditional_probs(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            out[i] = match n.parent {
                None => T::one(),
                Some(p) => out[p] * n.prob,
            };
        }
        out
    }

    /// Conditional probabilities of each child of `i`, in child order.
    pub fn branch_probs(&self, i: usize) -> Vec<T> {
        self.nodes[i].children.iter().map(|&c| self.nodes[c].prob).collect()
    }

    /// Expectation of terminal values given as one value per leaf
    /// (in [`EventTree::leaves`] order).
    pub fn expect_leaves(&self, leaf_values: &[T]) -> T {
        let probs = self.unconditional_probs();
        self.leaves().iter().zip(leaf_values).map(|(&l, &v)| probs[l] * v).sum()
    }
}
