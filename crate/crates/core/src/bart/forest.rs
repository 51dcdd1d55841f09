use rand::Rng;
use serde::{Deserialize, Serialize};

use super::moves::{propose_with, MoveContext, MoveDetail, MoveKind, MoveProbs, Scratch};
use super::predictors::Predictors;
use super::tree::DecisionTree;
use crate::error::{Result, RiaftError};
use crate::stats::{chi_squared_quantile, sample_scaled_inv_chi2, std_normal, variance};

/// Smallest residual variance or leaf scale the engine will work with.
pub const SCALE_FLOOR: f64 = 1e-10;

/// Resolved hyperparameters of a forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BartHyper {
    /// Depth prior base: a node at depth d splits with probability
    /// `alpha * (1 + d)^-beta`.
    pub alpha: f64,
    pub beta: f64,
    /// Prior sd of each leaf parameter.
    pub sigma_mu: f64,
    /// Degrees of freedom and scale of the scaled inverse chi-squared prior
    /// on sigma^2.
    pub nu: f64,
    pub lambda: f64,
    pub node_min: usize,
    pub max_cuts: usize,
    pub move_probs: MoveProbs,
}

/// User-facing settings from which [`BartHyper`] is resolved against a
/// response vector. Unset scales are calibrated from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BartConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Leaf scale is `range / (2 k sqrt(m))` unless `sigma_mu` is given.
    pub k: f64,
    pub nu: f64,
    /// Prior probability that sigma falls below `sigma_hat`.
    pub sigma_quantile: f64,
    /// Rough noise sd used to calibrate `lambda`; the response sd if unset.
    pub sigma_hat: Option<f64>,
    pub sigma_mu: Option<f64>,
    pub lambda: Option<f64>,
    pub node_min: usize,
    pub max_cuts: usize,
    pub move_probs: MoveProbs,
}

impl Default for BartConfig {
    fn default() -> Self {
        BartConfig {
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            sigma_quantile: 0.9,
            sigma_hat: None,
            sigma_mu: None,
            lambda: None,
            node_min: 5,
            max_cuts: 100,
            move_probs: MoveProbs::default(),
        }
    }
}

impl BartConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(RiaftError::Config(what.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("depth prior alpha must lie in (0, 1)");
        }
        if !(self.beta >= 0.0) {
            return bad("depth prior beta must be nonnegative");
        }
        if !(self.k > 0.0 && self.nu > 0.0) {
            return bad("k and nu must be positive");
        }
        if !(self.sigma_quantile > 0.0 && self.sigma_quantile < 1.0) {
            return bad("sigma_quantile must lie in (0, 1)");
        }
        for v in [self.sigma_hat, self.sigma_mu, self.lambda].into_iter().flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return bad("sigma_hat, sigma_mu and lambda must be positive");
            }
        }
        if !self.move_probs.is_valid() {
            return bad("move probabilities must be nonnegative with positive grow and prune");
        }
        Ok(())
    }
}

/// Accepted/proposed counts per move kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl MoveCounts {
    pub fn rate(&self, kind: MoveKind) -> f64 {
        let k = kind as usize;
        if self.proposed[k] == 0 {
            0.0
        } else {
            self.accepted[k] as f64 / self.proposed[k] as f64
        }
    }
}

/// Sum-of-trees model with its residual variance.
#[derive(Debug, Clone)]
pub struct Forest {
    pub hyper: BartHyper,
    pub trees: Vec<DecisionTree>,
    pub sigma2: f64,
    pub counts: MoveCounts,
    fit: Vec<f64>,
    fit_id: Option<u64>,
    sweeps: u64,
    scratch: Scratch,
    resid: Vec<f64>,
}

impl PartialEq for Forest {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper && self.sigma2.to_bits() == other.sigma2.to_bits() && self.trees == other.trees
    }
}

/// Builds `m` single-leaf trees predicting zero, with scales calibrated from
/// `response`.
pub fn init_forest(m: usize, response: &[f64], config: &BartConfig) -> Result<Forest> {
    if m == 0 {
        return Err(RiaftError::Config("forest needs at least one tree".into()));
    }
    if response.is_empty() {
        return Err(RiaftError::EmptyResponse);
    }
    if let Some(i) = response.iter().position(|v| !v.is_finite()) {
        return Err(RiaftError::NonFinite(format!("response row {}", i + 1)));
    }
    config.validate()?;
    let var = variance(response);
    let sigma2 = var.max(SCALE_FLOOR);
    let (lo, hi) = response
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sigma_mu = config
        .sigma_mu
        .unwrap_or((hi - lo) / (2.0 * config.k * (m as f64).sqrt()))
        .max(SCALE_FLOOR);
    let sigma_hat = config.sigma_hat.unwrap_or(sigma2.sqrt());
    let lambda = config.lambda.unwrap_or_else(|| {
        sigma_hat * sigma_hat * chi_squared_quantile(1.0 - config.sigma_quantile, config.nu) / config.nu
    });
    let hyper = BartHyper {
        alpha: config.alpha,
        beta: config.beta,
        sigma_mu,
        nu: config.nu,
        lambda: lambda.max(SCALE_FLOOR),
        node_min: config.node_min.max(1),
        max_cuts: config.max_cuts.max(1),
        move_probs: config.move_probs,
    };
    Ok(Forest::from_parts(hyper, vec![DecisionTree::stump(0.0); m], sigma2))
}

impl Forest {
    pub fn from_parts(hyper: BartHyper, trees: Vec<DecisionTree>, sigma2: f64) -> Self {
        Forest {
            hyper,
            trees,
            sigma2,
            counts: MoveCounts::default(),
            fit: Vec::new(),
            fit_id: None,
            sweeps: 0,
            scratch: Scratch::default(),
            resid: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.trees.len()
    }

    /// Training-set fit from the last sweep on `x`, if caches are current.
    pub fn fitted(&self, x: &Predictors) -> Option<&[f64]> {
        (self.fit_id == Some(x.id()) && self.fit.len() == x.n_rows()).then_some(&self.fit[..])
    }

    fn refresh_caches(&mut self, x: &Predictors) {
        let n = x.n_rows();
        self.fit.clear();
        self.fit.resize(n, 0.0);
        for tree in &mut self.trees {
            tree.rebuild_cache(x);
            for (f, &leaf) in self.fit.iter_mut().zip(&tree.leaf_of_row) {
                *f += tree.nodes[leaf as usize].mu;
            }
        }
        self.fit_id = Some(x.id());
    }

    fn recompute_fit(&mut self) {
        for f in self.fit.iter_mut() {
            *f = 0.0;
        }
        for tree in &self.trees {
            for (f, &leaf) in self.fit.iter_mut().zip(&tree.leaf_of_row) {
                *f += tree.nodes[leaf as usize].mu;
            }
        }
    }

    /// One backfitting pass over every tree followed by a sigma^2 draw.
    pub fn backfit_sweep<R: Rng + ?Sized>(&mut self, x: &Predictors, r: &[f64], rng: &mut R) -> Result<()> {
        let n = x.n_rows();
        if r.len() != n {
            return Err(RiaftError::Dimension(format!(
                "response has {} rows, predictors {n}",
                r.len()
            )));
        }
        if let Some(i) = r.iter().position(|v| !v.is_finite()) {
            return Err(RiaftError::NonFinite(format!("residual row {}", i + 1)));
        }
        if self.fitted(x).is_none() {
            self.refresh_caches(x);
        }
        let sigma2 = self.sigma2;
        let hyper = self.hyper;
        let mut resid = std::mem::take(&mut self.resid);
        resid.resize(n, 0.0);
        let prior_prec = 1.0 / (hyper.sigma_mu * hyper.sigma_mu);
        let m = self.trees.len();
        {
            let t0 = &self.trees[0];
            for i in 0..n {
                resid[i] = r[i] - self.fit[i] + t0.nodes[t0.leaf_of_row[i] as usize].mu;
            }
        }
        for h in 0..m {
            let tree = &mut self.trees[h];
            let mv = {
                let ctx = MoveContext {
                    x,
                    resid: &resid,
                    sigma2,
                    hyper: &hyper,
                };
                propose_with(tree, &ctx, &mut self.scratch, rng)
            };
            self.counts.proposed[mv.kind as usize] += 1;
            let p = mv.acceptance_probability();
            if p > 0.0 && rng.random::<f64>() < p {
                self.counts.accepted[mv.kind as usize] += 1;
                apply_move(tree, x, mv.detail);
            }

            self.scratch.leaf_stats(tree, &resid);
            for id in tree.leaves() {
                let k = id as usize;
                let prec = self.scratch.leaf_n[k] as f64 / sigma2 + prior_prec;
                let mean = self.scratch.leaf_s[k] / sigma2 / prec;
                tree.set_mu(id, mean + std_normal(rng) / prec.sqrt());
            }
            // Move the partial residual on to the next tree in one pass.
            let cur = &self.trees[h];
            if h + 1 < m {
                let next = &self.trees[h + 1];
                for i in 0..n {
                    resid[i] += next.nodes[next.leaf_of_row[i] as usize].mu - cur.nodes[cur.leaf_of_row[i] as usize].mu;
                }
            } else {
                for i in 0..n {
                    self.fit[i] = r[i] - resid[i] + cur.nodes[cur.leaf_of_row[i] as usize].mu;
                }
            }
        }
        self.resid = resid;
        self.sweeps += 1;
        if self.sweeps % 64 == 0 {
            self.recompute_fit();
        }

        let ss: f64 = r.iter().zip(&self.fit).map(|(a, b)| (a - b) * (a - b)).sum();
        let dof = hyper.nu + n as f64;
        self.sigma2 = sample_scaled_inv_chi2(rng, dof, (hyper.nu * hyper.lambda + ss) / dof).max(SCALE_FLOOR);
        Ok(())
    }

    /// Per-row sum of leaf values, accumulated tree by tree from zero. The
    /// result is bit-identical whether or not the row cache is used.
    pub fn predict(&self, x: &Predictors) -> Vec<f64> {
        self.predict_inner(x, None)
    }

    /// Predictions with column `col` set to `value` on every row.
    pub fn predict_override(&self, x: &Predictors, col: usize, value: f64) -> Vec<f64> {
        self.predict_inner(x, Some((col, value)))
    }

    fn predict_inner(&self, x: &Predictors, over: Option<(usize, f64)>) -> Vec<f64> {
        let n = x.n_rows();
        let cached = self.fitted(x).is_some();
        let mut out = vec![0.0; n];
        for tree in &self.trees {
            let reroute = match over {
                None => !cached,
                Some((col, _)) => {
                    !cached
                        || tree
                            .internal_nodes()
                            .into_iter()
                            .any(|id| tree.node(id).rule.is_some_and(|r| r.var() == col))
                }
            };
            if reroute {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += match over {
                        Some((col, value)) => tree.predict_with(|v| if v == col { value } else { x.value(i, v) }),
                        None => tree.predict_row(x, i),
                    };
                }
            } else {
                for (o, &leaf) in out.iter_mut().zip(&tree.leaf_of_row) {
                    *o += tree.nodes[leaf as usize].mu;
                }
            }
        }
        out
    }

    /// Share of splitting rules that use each predictor; all zeros when the
    /// forest has no splits.
    pub fn vip(&self, n_vars: usize) -> Vec<f64> {
        compute_vip(self, n_vars)
    }
}

pub fn compute_vip(forest: &Forest, n_vars: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_vars];
    for tree in &forest.trees {
        tree.split_counts(n_vars, &mut counts);
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for c in counts.iter_mut() {
            *c /= total;
        }
    }
    counts
}

fn apply_move(tree: &mut DecisionTree, x: &Predictors, detail: MoveDetail) {
    match detail {
        MoveDetail::Null => {}
        MoveDetail::Grow { leaf, rule } => {
            let (l, r) = tree.grow(leaf, rule, 0.0, 0.0);
            let col = x.column(rule.var());
            for (i, slot) in tree.leaf_of_row.iter_mut().enumerate() {
                if *slot == leaf {
                    *slot = if rule.goes_left(col[i]) { l } else { r };
                }
            }
        }
        MoveDetail::Prune { node } => {
            let (l, r) = {
                let n = tree.node(node);
                (n.left, n.right)
            };
            tree.prune(node, 0.0);
            for slot in tree.leaf_of_row.iter_mut() {
                if *slot == l || *slot == r {
                    *slot = node;
                }
            }
        }
        MoveDetail::Change { node, rule } => {
            let (l, r) = {
                let n = tree.node(node);
                (n.left, n.right)
            };
            tree.set_rule(node, rule);
            let col = x.column(rule.var());
            for (i, slot) in tree.leaf_of_row.iter_mut().enumerate() {
                if *slot == l || *slot == r {
                    *slot = if rule.goes_left(col[i]) { l } else { r };
                }
            }
        }
        MoveDetail::Swap {
            parent,
            children,
            reroute,
        } => {
            let parent_rule = tree.node(parent).rule.expect("internal parent");
            let child_rule = tree.node(children[0]).rule.expect("internal child");
            tree.set_rule(parent, child_rule);
            for c in children {
                tree.set_rule(c, parent_rule);
            }
            for (row, leaf) in reroute {
                tree.leaf_of_row[row as usize] = leaf;
            }
        }
    }
}
