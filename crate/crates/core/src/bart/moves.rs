//! Tree proposals for the backfitting sampler and their Metropolis-Hastings
//! ratio components.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forest::BartHyper;
use super::predictors::{PredictorKind, Predictors};
use super::tree::{DecisionTree, SplitRule};

/// Probabilities of each move kind on a tree that is not a stump. A stump
/// can only grow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs {
            grow: 0.28,
            prune: 0.28,
            change: 0.40,
            swap: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveProbs {
    fn total(&self) -> f64 {
        self.grow + self.prune + self.change + self.swap
    }

    pub fn is_valid(&self) -> bool {
        let all = [self.grow, self.prune, self.change, self.swap];
        all.iter().all(|p| p.is_finite() && *p >= 0.0) && self.grow > 0.0 && self.prune > 0.0
    }

    pub fn grow_prob(&self, stump: bool) -> f64 {
        if stump {
            1.0
        } else {
            self.grow / self.total()
        }
    }

    pub fn prune_prob(&self, stump: bool) -> f64 {
        if stump {
            0.0
        } else {
            self.prune / self.total()
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, stump: bool, rng: &mut R) -> MoveKind {
        if stump {
            return MoveKind::Grow;
        }
        let u = rng.random::<f64>() * self.total();
        if u < self.grow {
            MoveKind::Grow
        } else if u < self.grow + self.prune {
            MoveKind::Prune
        } else if u < self.grow + self.prune + self.change {
            MoveKind::Change
        } else {
            MoveKind::Swap
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MoveDetail {
    /// No valid proposal existed; counts as a rejection.
    Null,
    Grow { leaf: u32, rule: SplitRule },
    Prune { node: u32 },
    Change { node: u32, rule: SplitRule },
    /// `children` holds one child, or both when they carry the same rule.
    /// `reroute` lists `(row, new leaf)` for every row under `parent`.
    Swap {
        parent: u32,
        children: Vec<u32>,
        reroute: Vec<(u32, u32)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeMove {
    pub kind: MoveKind,
    pub detail: MoveDetail,
    pub log_proposal_ratio: f64,
    pub log_prior_ratio: f64,
    pub log_likelihood_ratio: f64,
}

impl TreeMove {
    fn null(kind: MoveKind) -> Self {
        TreeMove {
            kind,
            detail: MoveDetail::Null,
            log_proposal_ratio: 0.0,
            log_prior_ratio: 0.0,
            log_likelihood_ratio: 0.0,
        }
    }

    pub fn is_null(&self) -> bool {
        self.detail == MoveDetail::Null
    }

    pub fn log_ratio(&self) -> f64 {
        self.log_proposal_ratio + self.log_prior_ratio + self.log_likelihood_ratio
    }

    pub fn acceptance_probability(&self) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        let r = self.log_ratio();
        if r.is_nan() {
            0.0
        } else if r >= 0.0 {
            1.0
        } else {
            r.exp()
        }
    }
}

/// Integrated log-likelihood of a leaf holding `n` residuals with sum `s`,
/// up to terms common to every tree shape.
#[inline]
pub fn leaf_log_lik(n: f64, s: f64, sigma2: f64, sigma_mu2: f64) -> f64 {
    let denom = sigma2 + n * sigma_mu2;
    -0.5 * (denom / sigma2).ln() + s * s * sigma_mu2 / (2.0 * sigma2 * denom)
}

/// Prior probability that a node at `depth` splits.
#[inline]
pub fn split_prob(hyper: &BartHyper, depth: u32) -> f64 {
    hyper.alpha * (1.0 + depth as f64).powf(-hyper.beta)
}

fn grow_log_prior(hyper: &BartHyper, depth: u32) -> f64 {
    let pd = split_prob(hyper, depth);
    let pc = split_prob(hyper, depth + 1);
    pd.ln() + 2.0 * (1.0 - pc).ln() - (1.0 - pd).ln()
}

/// Reusable buffers for proposals.
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    rows: Vec<u32>,
    vals: Vec<f64>,
    cuts: Vec<usize>,
    counts: Vec<u32>,
    vars: Vec<usize>,
    masks: Vec<u64>,
    pub(crate) leaf_n: Vec<u32>,
    pub(crate) leaf_s: Vec<f64>,
}

impl Scratch {
    /// Per-node row counts and residual sums for the current leaves.
    pub(crate) fn leaf_stats(&mut self, tree: &DecisionTree, resid: &[f64]) {
        let len = tree.nodes.len();
        self.leaf_n.clear();
        self.leaf_n.resize(len, 0);
        self.leaf_s.clear();
        self.leaf_s.resize(len, 0.0);
        for (&leaf, &r) in tree.leaf_of_row.iter().zip(resid) {
            self.leaf_n[leaf as usize] += 1;
            self.leaf_s[leaf as usize] += r;
        }
    }
}

/// Inputs that a proposal is evaluated against.
pub struct MoveContext<'a> {
    pub x: &'a Predictors,
    pub resid: &'a [f64],
    pub sigma2: f64,
    pub hyper: &'a BartHyper,
}

impl MoveContext<'_> {
    fn ll(&self, n: f64, s: f64) -> f64 {
        leaf_log_lik(n, s, self.sigma2, self.hyper.sigma_mu * self.hyper.sigma_mu)
    }
}

/// Proposes one move on `tree` and evaluates its acceptance ratio. The tree
/// must carry a row cache for `ctx.x`.
pub fn propose_move<R: Rng + ?Sized>(tree: &DecisionTree, ctx: &MoveContext<'_>, rng: &mut R) -> TreeMove {
    let mut scratch = Scratch::default();
    propose_with(tree, ctx, &mut scratch, rng)
}

pub(crate) fn propose_with<R: Rng + ?Sized>(
    tree: &DecisionTree,
    ctx: &MoveContext<'_>,
    scratch: &mut Scratch,
    rng: &mut R,
) -> TreeMove {
    let kind = ctx.hyper.move_probs.draw(tree.is_stump(), rng);
    match kind {
        MoveKind::Grow => propose_grow(tree, ctx, scratch, rng),
        MoveKind::Prune => propose_prune(tree, ctx, scratch, rng),
        MoveKind::Change => propose_change(tree, ctx, scratch, rng),
        MoveKind::Swap => propose_swap(tree, ctx, scratch, rng),
    }
}

fn propose_grow<R: Rng + ?Sized>(
    tree: &DecisionTree,
    ctx: &MoveContext<'_>,
    scratch: &mut Scratch,
    rng: &mut R,
) -> TreeMove {
    let leaves = tree.leaves();
    let leaf = leaves[rng.random_range(0..leaves.len())];
    collect_rows(tree, |l| l == leaf, &mut scratch.rows);
    let Some(rule) = draw_rule(ctx, tree, |l| l == leaf, scratch, rng) else {
        return TreeMove::null(MoveKind::Grow);
    };
    let (nl, sl, nr, sr) = split_sums(ctx, &scratch.rows, rule);
    let probs = &ctx.hyper.move_probs;
    let stump = tree.is_stump();
    let node = tree.node(leaf);
    let parent_was_nog = node.parent != super::tree::NONE && tree.is_nog(node.parent);
    let nog_after = tree.nog_nodes().len() + 1 - usize::from(parent_was_nog);
    let log_proposal_ratio = probs.prune_prob(false).ln() - (nog_after as f64).ln() - probs.grow_prob(stump).ln()
        + (leaves.len() as f64).ln();
    TreeMove {
        kind: MoveKind::Grow,
        detail: MoveDetail::Grow { leaf, rule },
        log_proposal_ratio,
        log_prior_ratio: grow_log_prior(ctx.hyper, node.depth),
        log_likelihood_ratio: ctx.ll(nl, sl) + ctx.ll(nr, sr) - ctx.ll(nl + nr, sl + sr),
    }
}

fn propose_prune<R: Rng + ?Sized>(
    tree: &DecisionTree,
    ctx: &MoveContext<'_>,
    _scratch: &mut Scratch,
    rng: &mut R,
) -> TreeMove {
    let nogs = tree.nog_nodes();
    if nogs.is_empty() {
        return TreeMove::null(MoveKind::Prune);
    }
    let node = nogs[rng.random_range(0..nogs.len())];
    let n = tree.node(node);
    let (l, r) = (n.left, n.right);
    let (mut nl, mut sl, mut nr, mut sr) = (0.0, 0.0, 0.0, 0.0);
    for (&leaf, &res) in tree.leaf_of_row.iter().zip(ctx.resid) {
        if leaf == l {
            nl += 1.0;
            sl += res;
        } else if leaf == r {
            nr += 1.0;
            sr += res;
        }
    }
    let probs = &ctx.hyper.move_probs;
    let n_leaves = tree.n_leaves();
    let after_stump = node == DecisionTree::ROOT;
    let log_proposal_ratio = probs.grow_prob(after_stump).ln() - ((n_leaves - 1) as f64).ln()
        - probs.prune_prob(false).ln()
        + (nogs.len() as f64).ln();
    TreeMove {
        kind: MoveKind::Prune,
        detail: MoveDetail::Prune { node },
        log_proposal_ratio,
        log_prior_ratio: -grow_log_prior(ctx.hyper, n.depth),
        log_likelihood_ratio: ctx.ll(nl + nr, sl + sr) - ctx.ll(nl, sl) - ctx.ll(nr, sr),
    }
}

fn propose_change<R: Rng + ?Sized>(
    tree: &DecisionTree,
    ctx: &MoveContext<'_>,
    scratch: &mut Scratch,
    rng: &mut R,
) -> TreeMove {
    let nogs = tree.nog_nodes();
    if nogs.is_empty() {
        return TreeMove::null(MoveKind::Change);
    }
    let node = nogs[rng.random_range(0..nogs.len())];
    let (l, r) = {
        let n = tree.node(node);
        (n.left, n.right)
    };
    let member = |leaf: u32| leaf == l || leaf == r;
    collect_rows(tree, member, &mut scratch.rows);
    let Some(rule) = draw_rule(ctx, tree, member, scratch, rng) else {
        return TreeMove::null(MoveKind::Change);
    };
    let (nl, sl, nr, sr) = split_sums(ctx, &scratch.rows, rule);
    let (mut ol, mut osl, mut or, mut osr) = (0.0, 0.0, 0.0, 0.0);
    for &row in &scratch.rows {
        let res = ctx.resid[row as usize];
        if tree.leaf_of_row[row as usize] == l {
            ol += 1.0;
            osl += res;
        } else {
            or += 1.0;
            osr += res;
        }
    }
    TreeMove {
        kind: MoveKind::Change,
        detail: MoveDetail::Change { node, rule },
        log_proposal_ratio: 0.0,
        log_prior_ratio: 0.0,
        log_likelihood_ratio: ctx.ll(nl, sl) + ctx.ll(nr, sr) - ctx.ll(ol, osl) - ctx.ll(or, osr),
    }
}

fn propose_swap<R: Rng + ?Sized>(
    tree: &DecisionTree,
    ctx: &MoveContext<'_>,
    scratch: &mut Scratch,
    rng: &mut R,
) -> TreeMove {
    let internal_child = |id: u32| !tree.node(id).is_leaf();
    let parents: Vec<u32> = tree
        .internal_nodes()
        .into_iter()
        .filter(|&p| {
            let n = tree.node(p);
            internal_child(n.left) || internal_child(n.right)
        })
        .collect();
    if parents.is_empty() {
        return TreeMove::null(MoveKind::Swap);
    }
    let parent = parents[rng.random_range(0..parents.len())];
    let pn = tree.node(parent);
    let (l, r) = (pn.left, pn.right);
    let children = if internal_child(l) && internal_child(r) {
        if tree.node(l).rule == tree.node(r).rule {
            vec![l, r]
        } else if rng.random::<bool>() {
            vec![l]
        } else {
            vec![r]
        }
    } else if internal_child(l) {
        vec![l]
    } else {
        vec![r]
    };

    let parent_rule = pn.rule.expect("internal parent");
    let child_rule = tree.node(children[0]).rule.expect("internal child");
    let mut swapped = tree.clone();
    swapped.set_rule(parent, child_rule);
    for &c in &children {
        swapped.set_rule(c, parent_rule);
    }

    let in_sub = tree.subtree_mask(parent);
    scratch.leaf_stats(tree, ctx.resid);
    let len = tree.nodes.len();
    let mut new_n = vec![0u32; len];
    let mut new_s = vec![0.0; len];
    let mut reroute = Vec::new();
    for (row, &leaf) in tree.leaf_of_row.iter().enumerate() {
        if !in_sub[leaf as usize] {
            continue;
        }
        let to = swapped.route_from(parent, |var| ctx.x.value(row, var));
        new_n[to as usize] += 1;
        new_s[to as usize] += ctx.resid[row];
        reroute.push((row as u32, to));
    }
    let node_min = ctx.hyper.node_min as u32;
    let mut delta = 0.0;
    for id in tree.preorder_ids() {
        if !in_sub[id as usize] || !tree.node(id).is_leaf() {
            continue;
        }
        if new_n[id as usize] < node_min.max(1) {
            return TreeMove::null(MoveKind::Swap);
        }
        delta += ctx.ll(new_n[id as usize] as f64, new_s[id as usize])
            - ctx.ll(scratch.leaf_n[id as usize] as f64, scratch.leaf_s[id as usize]);
    }
    TreeMove {
        kind: MoveKind::Swap,
        detail: MoveDetail::Swap {
            parent,
            children,
            reroute,
        },
        log_proposal_ratio: 0.0,
        log_prior_ratio: 0.0,
        log_likelihood_ratio: delta,
    }
}

fn collect_rows(tree: &DecisionTree, member: impl Fn(u32) -> bool, out: &mut Vec<u32>) {
    out.clear();
    for (row, &leaf) in tree.leaf_of_row.iter().enumerate() {
        if member(leaf) {
            out.push(row as u32);
        }
    }
}

fn split_sums(ctx: &MoveContext<'_>, rows: &[u32], rule: SplitRule) -> (f64, f64, f64, f64) {
    let var = rule.var();
    let col = ctx.x.column(var);
    let (mut nl, mut sl, mut nr, mut sr) = (0.0, 0.0, 0.0, 0.0);
    for &row in rows {
        let res = ctx.resid[row as usize];
        if rule.goes_left(col[row as usize]) {
            nl += 1.0;
            sl += res;
        } else {
            nr += 1.0;
            sr += res;
        }
    }
    (nl, sl, nr, sr)
}

/// Draws a split rule for the rows in `scratch.rows`: the variable uniformly
/// among those admitting a valid rule, then the rule uniformly among that
/// variable's candidates.
fn draw_rule<R: Rng + ?Sized>(
    ctx: &MoveContext<'_>,
    tree: &DecisionTree,
    member: impl Fn(u32) -> bool,
    scratch: &mut Scratch,
    rng: &mut R,
) -> Option<SplitRule> {
    let node_min = ctx.hyper.node_min.max(1);
    if scratch.rows.len() < 2 * node_min {
        return None;
    }
    scratch.vars.clear();
    scratch.vars.extend(0..ctx.x.n_cols());
    let mut vars = std::mem::take(&mut scratch.vars);
    vars.shuffle(rng);
    let mut found = None;
    for &var in &vars {
        let rule = match ctx.x.kind(var) {
            PredictorKind::Continuous => continuous_rule(ctx, tree, var, &member, node_min, scratch, rng),
            PredictorKind::Categorical { n_levels } => {
                categorical_rule(ctx, var, n_levels, node_min, scratch, rng)
            }
        };
        if rule.is_some() {
            found = rule;
            break;
        }
    }
    scratch.vars = vars;
    found
}

fn continuous_rule<R: Rng + ?Sized>(
    ctx: &MoveContext<'_>,
    tree: &DecisionTree,
    var: usize,
    member: &impl Fn(u32) -> bool,
    node_min: usize,
    scratch: &mut Scratch,
    rng: &mut R,
) -> Option<SplitRule> {
    let col = ctx.x.column(var);
    let n_node = scratch.rows.len();
    scratch.vals.clear();
    if n_node * 16 < col.len() {
        scratch.vals.extend(scratch.rows.iter().map(|&r| col[r as usize]));
        scratch.vals.sort_unstable_by(f64::total_cmp);
    } else {
        for &row in ctx.x.sorted_rows(var) {
            if member(tree.leaf_of_row[row as usize]) {
                scratch.vals.push(col[row as usize]);
            }
        }
    }
    let v = &scratch.vals;
    scratch.cuts.clear();
    for j in node_min..=(n_node - node_min) {
        if v[j - 1] < v[j] {
            scratch.cuts.push(j);
        }
    }
    let n_cuts = scratch.cuts.len();
    if n_cuts == 0 {
        return None;
    }
    let max_cuts = ctx.hyper.max_cuts.max(1);
    let j = if n_cuts <= max_cuts {
        scratch.cuts[rng.random_range(0..n_cuts)]
    } else if max_cuts == 1 {
        scratch.cuts[(n_cuts - 1) / 2]
    } else {
        let i = rng.random_range(0..max_cuts);
        let pos = (i * (n_cuts - 1)) / (max_cuts - 1);
        scratch.cuts[pos]
    };
    let (lo, hi) = (v[j - 1], v[j]);
    let mut threshold = 0.5 * (lo + hi);
    if threshold <= lo || threshold > hi {
        threshold = hi;
    }
    Some(SplitRule::Continuous { var, threshold })
}

fn categorical_rule<R: Rng + ?Sized>(
    ctx: &MoveContext<'_>,
    var: usize,
    n_levels: usize,
    node_min: usize,
    scratch: &mut Scratch,
    rng: &mut R,
) -> Option<SplitRule> {
    let col = ctx.x.column(var);
    scratch.counts.clear();
    scratch.counts.resize(n_levels.max(1), 0);
    for &row in &scratch.rows {
        let code = col[row as usize] as usize;
        if code < scratch.counts.len() {
            scratch.counts[code] += 1;
        }
    }
    let present: Vec<usize> = (0..scratch.counts.len()).filter(|&c| scratch.counts[c] > 0).collect();
    if present.len() < 2 {
        return None;
    }
    let total = scratch.rows.len() as u32;
    let node_min = node_min as u32;
    let right_count = |mask: u64, counts: &[u32]| -> u32 {
        present
            .iter()
            .filter(|&&c| mask & (1u64 << c) != 0)
            .map(|&c| counts[c])
            .sum()
    };
    let ok = |nr: u32| nr >= node_min && total - nr >= node_min;
    // The lowest present level always goes left, so each partition is
    // listed once.
    let free = &present[1..];
    if present.len() <= 10 {
        scratch.masks.clear();
        for bits in 1u32..(1u32 << free.len()) {
            let mut mask = 0u64;
            for (k, &c) in free.iter().enumerate() {
                if bits & (1 << k) != 0 {
                    mask |= 1u64 << c;
                }
            }
            if ok(right_count(mask, &scratch.counts)) {
                scratch.masks.push(mask);
            }
        }
        if scratch.masks.is_empty() {
            return None;
        }
        let right = scratch.masks[rng.random_range(0..scratch.masks.len())];
        Some(SplitRule::Categorical { var, right })
    } else {
        for _ in 0..200 {
            let mut mask = 0u64;
            for &c in free {
                if rng.random::<bool>() {
                    mask |= 1u64 << c;
                }
            }
            if mask != 0 && ok(right_count(mask, &scratch.counts)) {
                return Some(SplitRule::Categorical { var, right: mask });
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng_from_seed;

    #[test]
    fn leaf_log_lik_matches_marginal_density() {
        // Marginal of n iid N(mu, s2) draws with mu ~ N(0, m2), up to terms
        // that do not depend on the sum.
        let (s2, m2) = (0.7, 0.3);
        let y = [0.4, -1.1, 2.0];
        let n = y.len() as f64;
        let s: f64 = y.iter().sum();
        let brute = |ys: &[f64]| {
            let h = 1e-4;
            let mut acc = 0.0;
            let mut mu = -20.0;
            while mu < 20.0 {
                let ll: f64 = ys.iter().map(|v| -(v - mu) * (v - mu) / (2.0 * s2)).sum();
                acc += (ll - mu * mu / (2.0 * m2)).exp() * h;
                mu += h;
            }
            (acc / (2.0 * std::f64::consts::PI * m2).sqrt()).ln()
        };
        let z = [0.0; 3];
        let diff_brute = brute(&y) - brute(&z);
        let diff = leaf_log_lik(n, s, s2, m2) - leaf_log_lik(n, 0.0, s2, m2);
        let quad: f64 = y.iter().map(|v| -v * v / (2.0 * s2)).sum();
        assert!((diff_brute - (diff + quad)).abs() < 1e-6);
    }

    #[test]
    fn kind_frequencies_follow_probabilities() {
        let probs = MoveProbs::default();
        let mut rng = rng_from_seed(9);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            let k = probs.draw(false, &mut rng);
            counts[k as usize] += 1;
        }
        let want = [0.28, 0.28, 0.40, 0.04];
        for (c, p) in counts.iter().zip(want) {
            let f = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 4.0 * se, "{f} vs {p}");
        }
        assert_eq!(probs.draw(true, &mut rng), MoveKind::Grow);
    }

    #[test]
    fn acceptance_probability_bounds() {
        let mut m = TreeMove::null(MoveKind::Grow);
        assert_eq!(m.acceptance_probability(), 0.0);
        m.detail = MoveDetail::Prune { node: 0 };
        m.log_likelihood_ratio = 5.0;
        assert_eq!(m.acceptance_probability(), 1.0);
        m.log_likelihood_ratio = -1.0;
        assert!((m.acceptance_probability() - (-1.0f64).exp()).abs() < 1e-15);
        m.log_likelihood_ratio = f64::NAN;
        assert_eq!(m.acceptance_probability(), 0.0);
    }
}
