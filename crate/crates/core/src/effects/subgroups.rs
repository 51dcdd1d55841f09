//! Fit-the-fit subgroup discovery.

use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, RandomForestModel, RegNode, RegTree, TreeParams};
use super::iste::IsteEstimate;
use crate::data::{ColumnKind, Covariate};
use crate::error::{Result, RiaftError};
use crate::stats::{rng_from_seed, Summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitTheFitConfig {
    pub forest: ForestConfig,
    /// Stop once the best addition raises R^2 by less than this (in R^2
    /// units, so 0.01 is one percentage point).
    pub threshold: f64,
}

impl Default for FitTheFitConfig {
    fn default() -> Self {
        FitTheFitConfig {
            forest: ForestConfig::default(),
            threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTheFitResult {
    /// Covariate indices in the order they entered.
    pub selected: Vec<usize>,
    /// R^2 after each accepted step.
    pub r2_path: Vec<f64>,
    pub forest: Option<RandomForestModel>,
}

/// Numeric feature columns (categorical codes as numbers).
pub fn feature_matrix(covs: &[Covariate]) -> Result<Vec<Vec<f64>>> {
    for c in covs {
        if c.values.iter().any(|v| v.is_nan()) {
            return Err(RiaftError::MissingCovariates(c.name.clone()));
        }
    }
    Ok(covs.iter().map(|c| c.values.clone()).collect())
}

/// Forward selection of covariates for a random forest regressing the
/// individual effect estimates.
pub fn fit_the_fit(zeta: &[f64], x: &[Vec<f64>], cfg: &FitTheFitConfig) -> Result<FitTheFitResult> {
    if x.iter().any(|c| c.len() != zeta.len()) {
        return Err(RiaftError::Dimension("covariates and effects must align".into()));
    }
    if zeta.is_empty() {
        return Err(RiaftError::EmptyResponse);
    }
    let m = zeta.iter().sum::<f64>() / zeta.len() as f64;
    let empty = FitTheFitResult {
        selected: Vec::new(),
        r2_path: Vec::new(),
        forest: None,
    };
    if zeta.iter().all(|v| (v - m).abs() <= 1e-12 * (1.0 + m.abs())) {
        return Ok(empty);
    }
    let mut selected: Vec<usize> = Vec::new();
    let mut path = Vec::new();
    let mut current: Option<RandomForestModel> = None;
    let mut remaining: Vec<usize> = (0..x.len()).collect();
    while !remaining.is_empty() {
        let mut best: Option<(usize, RandomForestModel)> = None;
        for (pos, &c) in remaining.iter().enumerate() {
            let mut feats = selected.clone();
            feats.push(c);
            let rf = RandomForestModel::fit(x, zeta, &feats, &cfg.forest);
            if best.as_ref().is_none_or(|b| rf.r2 > b.1.r2) {
                best = Some((pos, rf));
            }
        }
        let (pos, rf) = best.expect("nonempty candidates");
        if let Some(prev) = path.last() {
            if rf.r2 - prev < cfg.threshold {
                break;
            }
        }
        selected.push(remaining.remove(pos));
        path.push(rf.r2);
        current = Some(rf);
    }
    Ok(FitTheFitResult {
        selected,
        r2_path: path,
        forest: current,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub depth: usize,
    pub min_leaf: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { depth: 3, min_leaf: 20 }
    }
}

/// One covariate restriction; continuous bounds are `lower < x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(l) = &self.levels {
            return write!(f, "{} in {{{}}}", self.variable, l.join(","));
        }
        match (self.lower, self.upper) {
            (Some(a), Some(b)) => write!(f, "{a} < {} <= {b}", self.variable),
            (Some(a), None) => write!(f, "{} > {a}", self.variable),
            (None, Some(b)) => write!(f, "{} <= {b}", self.variable),
            (None, None) => write!(f, "{} any", self.variable),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRule {
    pub conditions: Vec<Condition>,
    pub n: usize,
    /// Mean posterior-mean effect over members.
    pub effect: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(skip)]
    pub members: Vec<usize>,
}

impl SubgroupRule {
    pub fn describe(&self) -> String {
        if self.conditions.is_empty() {
            return "all".into();
        }
        self.conditions
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

enum Bound {
    Range(Option<f64>, Option<f64>),
    Codes(Vec<usize>),
}

fn collect_leaves(tree: &RegTree, id: usize, path: &mut Vec<(usize, f64, bool)>, out: &mut Vec<(usize, Vec<(usize, f64, bool)>)>) {
    match tree.nodes[id] {
        RegNode::Leaf { .. } => out.push((id, path.clone())),
        RegNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            path.push((feature, threshold, true));
            collect_leaves(tree, left, path, out);
            path.pop();
            path.push((feature, threshold, false));
            collect_leaves(tree, right, path, out);
            path.pop();
        }
    }
}

fn conditions(path: &[(usize, f64, bool)], covs: &[Covariate]) -> Vec<Condition> {
    let mut bounds: Vec<(usize, Bound)> = Vec::new();
    for &(j, thr, left) in path {
        let entry = match bounds.iter().position(|b| b.0 == j) {
            Some(p) => p,
            None => {
                let init = match &covs[j].kind {
                    ColumnKind::Continuous => Bound::Range(None, None),
                    ColumnKind::Categorical { levels } => Bound::Codes((0..levels.len()).collect()),
                };
                bounds.push((j, init));
                bounds.len() - 1
            }
        };
        match &mut bounds[entry].1 {
            Bound::Range(lo, hi) => {
                if left {
                    *hi = Some(hi.map_or(thr, |h: f64| h.min(thr)));
                } else {
                    *lo = Some(lo.map_or(thr, |l: f64| l.max(thr)));
                }
            }
            Bound::Codes(codes) => codes.retain(|&c| (c as f64 <= thr) == left),
        }
    }
    bounds
        .into_iter()
        .map(|(j, b)| match b {
            Bound::Range(lower, upper) => Condition {
                variable: covs[j].name.clone(),
                lower,
                upper,
                levels: None,
            },
            Bound::Codes(codes) => {
                let ColumnKind::Categorical { levels } = &covs[j].kind else {
                    unreachable!()
                };
                Condition {
                    variable: covs[j].name.clone(),
                    lower: None,
                    upper: None,
                    levels: Some(codes.iter().map(|&c| levels[c].clone()).collect()),
                }
            }
        })
        .collect()
}

/// Summarizes a fitted forest by one shallow CART tree fitted to its
/// predictions; each leaf becomes a subgroup whose effect is averaged from
/// the individual estimates.
pub fn extract_rules(
    rf: &RandomForestModel,
    covs: &[Covariate],
    iste: &IsteEstimate,
    cfg: &RuleConfig,
) -> Result<Vec<SubgroupRule>> {
    let x = feature_matrix(covs)?;
    let n = iste.n_rows();
    if x.iter().any(|c| c.len() != n) {
        return Err(RiaftError::Dimension("covariates and effects must align".into()));
    }
    let target = rf.predict(&x);
    let mut rng = rng_from_seed(0);
    let tree = RegTree::fit(
        &x,
        &target,
        (0..n).collect(),
        &rf.features,
        TreeParams {
            max_depth: cfg.depth,
            min_leaf: cfg.min_leaf,
            mtry: None,
        },
        &mut rng,
    );
    let mut leaves = Vec::new();
    collect_leaves(&tree, 0, &mut Vec::new(), &mut leaves);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for i in 0..n {
        members[tree.leaf_of(&x, i)].push(i);
    }
    let means = iste.means();
    Ok(leaves
        .into_iter()
        .filter_map(|(id, path)| {
            let rows = std::mem::take(&mut members[id]);
            if rows.is_empty() {
                return None;
            }
            let s = Summary::from_draws(&iste.subgroup_draws(&rows));
            Some(SubgroupRule {
                conditions: conditions(&path, covs),
                n: rows.len(),
                effect: rows.iter().map(|&i| means[i]).sum::<f64>() / rows.len() as f64,
                lower: s.lower,
                upper: s.upper,
                members: rows,
            })
        })
        .collect())
}
