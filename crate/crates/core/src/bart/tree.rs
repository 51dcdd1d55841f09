//! Binary regression tree stored as a node arena, with a per-row cache of
//! the leaf each training row falls into.

use serde::{Deserialize, Serialize};

use super::predictors::Predictors;

pub(crate) const NONE: u32 = u32::MAX;

/// Splitting rule of an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Rows with `x[var] < threshold` go left.
    Continuous { var: usize, threshold: f64 },
    /// Rows whose category code is in `right` go right; every other code,
    /// including codes never seen in training, goes left.
    Categorical { var: usize, right: u64 },
}

impl SplitRule {
    pub fn var(&self) -> usize {
        match *self {
            SplitRule::Continuous { var, .. } | SplitRule::Categorical { var, .. } => var,
        }
    }

    #[inline]
    pub fn goes_left(&self, value: f64) -> bool {
        match *self {
            SplitRule::Continuous { threshold, .. } => value < threshold,
            SplitRule::Categorical { right, .. } => {
                let code = value as i64;
                !(0..64).contains(&code) || right & (1u64 << code) == 0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: u32,
    pub left: u32,
    pub right: u32,
    pub rule: Option<SplitRule>,
    /// Leaf parameter; meaningless on internal nodes.
    pub mu: f64,
    pub depth: u32,
}

impl Node {
    fn leaf(parent: u32, depth: u32, mu: f64) -> Self {
        Node {
            parent,
            left: NONE,
            right: NONE,
            rule: None,
            mu,
            depth,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.rule.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<Node>,
    free: Vec<u32>,
    pub(crate) leaf_of_row: Vec<u32>,
}

impl PartialEq for DecisionTree {
    /// Structural equality over reachable nodes; arena layout and caches are
    /// ignored.
    fn eq(&self, other: &Self) -> bool {
        self.preorder() == other.preorder()
    }
}

/// One node in a preorder listing, the persisted form of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum PreorderNode {
    Leaf { mu: f64 },
    Cont { var: usize, threshold: f64 },
    Cat { var: usize, right: u64 },
}

impl DecisionTree {
    pub fn stump(mu: f64) -> Self {
        DecisionTree {
            nodes: vec![Node::leaf(NONE, 0, mu)],
            free: Vec::new(),
            leaf_of_row: Vec::new(),
        }
    }

    pub const ROOT: u32 = 0;

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    #[cfg(test)]
    fn alive(&self, id: u32) -> bool {
        !self.free.contains(&id)
    }

    pub fn is_stump(&self) -> bool {
        self.nodes[0].is_leaf()
    }

    /// Ids of live nodes, in preorder.
    pub fn preorder_ids(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            out.push(id);
            let n = &self.nodes[id as usize];
            if !n.is_leaf() {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<u32> {
        self.preorder_ids()
            .into_iter()
            .filter(|&id| self.nodes[id as usize].is_leaf())
            .collect()
    }

    pub fn internal_nodes(&self) -> Vec<u32> {
        self.preorder_ids()
            .into_iter()
            .filter(|&id| !self.nodes[id as usize].is_leaf())
            .collect()
    }

    /// Internal nodes whose two children are both leaves.
    pub fn nog_nodes(&self) -> Vec<u32> {
        self.internal_nodes()
            .into_iter()
            .filter(|&id| self.is_nog(id))
            .collect()
    }

    pub fn is_nog(&self, id: u32) -> bool {
        let n = &self.nodes[id as usize];
        !n.is_leaf()
            && self.nodes[n.left as usize].is_leaf()
            && self.nodes[n.right as usize].is_leaf()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn depth(&self) -> u32 {
        self.preorder_ids()
            .into_iter()
            .map(|id| self.nodes[id as usize].depth)
            .max()
            .unwrap_or(0)
    }

    /// Split counts per predictor.
    pub fn split_counts(&self, n_vars: usize, counts: &mut [f64]) {
        debug_assert!(counts.len() >= n_vars);
        for id in self.internal_nodes() {
            if let Some(rule) = self.nodes[id as usize].rule {
                counts[rule.var()] += 1.0;
            }
        }
    }

    fn alloc(&mut self, node: Node) -> u32 {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = node;
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    /// Turns leaf `leaf` into an internal node with two fresh leaves and
    /// returns their ids. The row cache is not touched.
    pub fn grow(&mut self, leaf: u32, rule: SplitRule, mu_left: f64, mu_right: f64) -> (u32, u32) {
        assert!(self.nodes[leaf as usize].is_leaf(), "grow on internal node");
        let depth = self.nodes[leaf as usize].depth + 1;
        let l = self.alloc(Node::leaf(leaf, depth, mu_left));
        let r = self.alloc(Node::leaf(leaf, depth, mu_right));
        let n = &mut self.nodes[leaf as usize];
        n.left = l;
        n.right = r;
        n.rule = Some(rule);
        (l, r)
    }

    /// Collapses a node whose children are both leaves back into a leaf.
    pub fn prune(&mut self, node: u32, mu: f64) {
        assert!(self.is_nog(node), "prune needs two leaf children");
        let (l, r) = {
            let n = &self.nodes[node as usize];
            (n.left, n.right)
        };
        self.free.push(l);
        self.free.push(r);
        let n = &mut self.nodes[node as usize];
        n.left = NONE;
        n.right = NONE;
        n.rule = None;
        n.mu = mu;
    }

    pub(crate) fn set_rule(&mut self, node: u32, rule: SplitRule) {
        self.nodes[node as usize].rule = Some(rule);
    }

    pub(crate) fn set_mu(&mut self, node: u32, mu: f64) {
        self.nodes[node as usize].mu = mu;
    }

    /// Leaf reached from `start` by a row whose predictor values are given
    /// by `value(var)`.
    #[inline]
    pub fn route_from<F: Fn(usize) -> f64>(&self, start: u32, value: F) -> u32 {
        let mut id = start;
        loop {
            let n = &self.nodes[id as usize];
            match &n.rule {
                None => return id,
                Some(rule) => {
                    id = if rule.goes_left(value(rule.var())) {
                        n.left
                    } else {
                        n.right
                    };
                }
            }
        }
    }

    #[inline]
    pub fn predict_with<F: Fn(usize) -> f64>(&self, value: F) -> f64 {
        self.nodes[self.route_from(Self::ROOT, value) as usize].mu
    }

    pub fn predict_row(&self, x: &Predictors, row: usize) -> f64 {
        self.predict_with(|var| x.value(row, var))
    }

    /// Routes every training row and stores its leaf.
    pub(crate) fn rebuild_cache(&mut self, x: &Predictors) {
        let n = x.n_rows();
        let mut cache = Vec::with_capacity(n);
        for i in 0..n {
            cache.push(self.route_from(Self::ROOT, |var| x.value(i, var)));
        }
        self.leaf_of_row = cache;
    }

    /// Marks which live nodes lie in the subtree rooted at `node`.
    pub(crate) fn subtree_mask(&self, node: u32) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            mask[id as usize] = true;
            let n = &self.nodes[id as usize];
            if !n.is_leaf() {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
        mask
    }

    pub fn preorder(&self) -> Vec<PreorderNode> {
        self.preorder_ids()
            .into_iter()
            .map(|id| {
                let n = &self.nodes[id as usize];
                match n.rule {
                    None => PreorderNode::Leaf { mu: n.mu },
                    Some(SplitRule::Continuous { var, threshold }) => {
                        PreorderNode::Cont { var, threshold }
                    }
                    Some(SplitRule::Categorical { var, right }) => PreorderNode::Cat { var, right },
                }
            })
            .collect()
    }

    /// Rebuilds a tree from its preorder listing. Returns `None` if the
    /// listing is not a complete binary tree.
    pub fn from_preorder(list: &[PreorderNode]) -> Option<Self> {
        let mut tree = DecisionTree {
            nodes: Vec::with_capacity(list.len()),
            free: Vec::new(),
            leaf_of_row: Vec::new(),
        };
        let mut pos = 0;
        build(&mut tree, list, &mut pos, NONE, 0)?;
        if pos != list.len() {
            return None;
        }
        Some(tree)
    }

    #[cfg(test)]
    pub(crate) fn check_structure(&self) {
        for id in self.preorder_ids() {
            assert!(self.alive(id));
            let n = &self.nodes[id as usize];
            if !n.is_leaf() {
                assert_eq!(self.nodes[n.left as usize].parent, id);
                assert_eq!(self.nodes[n.right as usize].parent, id);
                assert_eq!(self.nodes[n.left as usize].depth, n.depth + 1);
            }
        }
    }
}

fn build(tree: &mut DecisionTree, list: &[PreorderNode], pos: &mut usize, parent: u32, depth: u32) -> Option<u32> {
    let item = *list.get(*pos)?;
    *pos += 1;
    let id = tree.nodes.len() as u32;
    tree.nodes.push(Node::leaf(parent, depth, 0.0));
    let rule = match item {
        PreorderNode::Leaf { mu } => {
            tree.nodes[id as usize].mu = mu;
            return Some(id);
        }
        PreorderNode::Cont { var, threshold } => SplitRule::Continuous { var, threshold },
        PreorderNode::Cat { var, right } => SplitRule::Categorical { var, right },
    };
    let l = build(tree, list, pos, id, depth + 1)?;
    let r = build(tree, list, pos, id, depth + 1)?;
    let n = &mut tree.nodes[id as usize];
    n.rule = Some(rule);
    n.left = l;
    n.right = r;
    Some(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grow_then_prune_restores_topology() {
        let mut t = DecisionTree::stump(0.0);
        let (l, _) = t.grow(0, SplitRule::Continuous { var: 0, threshold: 0.5 }, 1.0, 2.0);
        let before = t.clone();
        t.grow(l, SplitRule::Categorical { var: 1, right: 0b10 }, 3.0, 4.0);
        assert_eq!(t.n_leaves(), 3);
        t.check_structure();
        t.prune(l, 1.0);
        assert_eq!(t, before);
        t.check_structure();
    }

    #[test]
    fn single_split_prediction() {
        let mut t = DecisionTree::stump(0.0);
        t.grow(0, SplitRule::Continuous { var: 0, threshold: 0.5 }, -1.0, 1.0);
        assert_eq!(t.predict_with(|_| 0.2), -1.0);
        assert_eq!(t.predict_with(|_| 0.7), 1.0);
    }

    #[test]
    fn unseen_category_goes_left() {
        let rule = SplitRule::Categorical { var: 0, right: 0b100 };
        assert!(!rule.goes_left(2.0));
        assert!(rule.goes_left(1.0));
        assert!(rule.goes_left(17.0));
        assert!(rule.goes_left(99.0));
    }

    #[test]
    fn preorder_roundtrip() {
        let mut t = DecisionTree::stump(0.0);
        let (l, r) = t.grow(0, SplitRule::Continuous { var: 2, threshold: 0.1 }, 0.5, -0.25);
        t.grow(r, SplitRule::Categorical { var: 1, right: 5 }, 1e-300, 3.0);
        t.grow(l, SplitRule::Continuous { var: 0, threshold: -7.0 }, 0.1, 0.2);
        let back = DecisionTree::from_preorder(&t.preorder()).unwrap();
        assert_eq!(back, t);
        back.check_structure();
        assert!(DecisionTree::from_preorder(&[PreorderNode::Cont { var: 0, threshold: 1.0 }]).is_none());
    }
}
