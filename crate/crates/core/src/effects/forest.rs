//! CART regression trees and bagged random forests.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree over column-major numeric features; `x <= threshold`
/// goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; `None` tries all.
    pub mtry: Option<usize>,
}

struct Grower<'a, R: Rng> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    features: &'a [usize],
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<RegNode>,
    buf: Vec<(f64, f64)>,
}

impl<R: Rng> Grower<'_, R> {
    /// Best `(feature, threshold, sse_reduction)` for a node.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let tried: Vec<usize> = match self.params.mtry {
            Some(m) if m < self.features.len() => sample(self.rng, self.features.len(), m.max(1))
                .into_iter()
                .map(|k| self.features[k])
                .collect(),
            _ => self.features.to_vec(),
        };
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let mut best: Option<(usize, f64, f64)> = None;
        for f in tried {
            self.buf.clear();
            self.buf.extend(rows.iter().map(|&i| (self.x[f][i], self.y[i])));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += self.buf[k].1;
                let nl = k + 1;
                if nl < min_leaf || n - nl < min_leaf || self.buf[k].0 == self.buf[k + 1].0 {
                    continue;
                }
                let nr = (n - nl) as f64;
                let right = total - left;
                // SSE reduction = sum_l^2/n_l + sum_r^2/n_r - total^2/n
                let gain = left * left / nl as f64 + right * right / nr - total * total / n as f64;
                if best.is_none_or(|b| gain > b.2) {
                    best = Some((f, 0.5 * (self.buf[k].0 + self.buf[k + 1].0), gain));
                }
            }
        }
        best.filter(|b| b.2 > 1e-12 * (1.0 + total.abs()))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let value = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(RegNode::Leaf { value, n: rows.len() });
        if depth >= self.params.max_depth {
            return id;
        }
        if let Some((feature, threshold, _)) = self.best_split(&rows) {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[feature][i] <= threshold);
            let left = self.grow(l, depth + 1);
            let right = self.grow(r, depth + 1);
            self.nodes[id] = RegNode::Split {
                feature,
                threshold,
                left,
                right,
            };
        }
        id
    }
}

impl RegTree {
    /// Grows a tree on `rows` (repeats allowed) using only `features`.
    pub fn fit<R: Rng>(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, features: &[usize], params: TreeParams, rng: &mut R) -> Self {
        assert!(!rows.is_empty(), "tree needs at least one row");
        let mut g = Grower {
            x,
            y,
            features,
            params,
            rng,
            nodes: Vec::new(),
            buf: Vec::with_capacity(rows.len()),
        };
        g.grow(rows, 0);
        RegTree { nodes: g.nodes }
    }

    pub fn leaf_of(&self, x: &[Vec<f64>], row: usize) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                RegNode::Leaf { .. } => return id,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature][row] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[Vec<f64>], row: usize) -> f64 {
        match self.nodes[self.leaf_of(x, row)] {
            RegNode::Leaf { value, .. } => value,
            RegNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn d(nodes: &[RegNode], id: usize) -> usize {
            match nodes[id] {
                RegNode::Leaf { .. } => 0,
                RegNode::Split { left, right, .. } => 1 + d(nodes, left).max(d(nodes, right)),
            }
        }
        d(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; `None` uses `ceil(L / 3)`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 200,
            max_depth: 6,
            min_leaf: 5,
            mtry: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    /// Feature columns the forest may split on.
    pub features: Vec<usize>,
    pub trees: Vec<RegTree>,
    /// In-sample R^2.
    pub r2: f64,
    /// Out-of-bag predictions; `NaN` for rows in every bootstrap sample.
    pub oob: Vec<f64>,
}

pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let rss: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    if tss > 0.0 {
        1.0 - rss / tss
    } else if rss == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

impl RandomForestModel {
    /// Bagged CART forest over the listed feature columns of `x`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], features: &[usize], cfg: &ForestConfig) -> Self {
        let n = y.len();
        let mtry = cfg.mtry.unwrap_or(features.len().div_ceil(3)).clamp(1, features.len().max(1));
        let params = TreeParams {
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_leaf,
            mtry: Some(mtry),
        };
        let mut master = rng_from_seed(cfg.seed);
        let seeds: Vec<u64> = (0..cfg.trees).map(|_| master.random()).collect();
        let grown: Vec<(RegTree, Vec<bool>)> = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = rng_from_seed(s);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut inbag = vec![false; n];
                for &r in &rows {
                    inbag[r] = true;
                }
                (RegTree::fit(x, y, rows, features, params, &mut rng), inbag)
            })
            .collect();
        let mut oob_sum = vec![0.0; n];
        let mut oob_n = vec![0usize; n];
        let mut fit = vec![0.0; n];
        for (t, inbag) in &grown {
            for i in 0..n {
                let p = t.predict(x, i);
                fit[i] += p;
                if !inbag[i] {
                    oob_sum[i] += p;
                    oob_n[i] += 1;
                }
            }
        }
        let k = grown.len().max(1) as f64;
        fit.iter_mut().for_each(|v| *v /= k);
        RandomForestModel {
            features: features.to_vec(),
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            r2: r_squared(y, &fit),
            oob: oob_sum
                .iter()
                .zip(&oob_n)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
                .collect(),
        }
    }

    pub fn predict_row(&self, x: &[Vec<f64>], row: usize) -> f64 {
        self.trees.iter().map(|t| t.predict(x, row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let n = x.first().map_or(0, |c| c.len());
        (0..n).map(|i| self.predict_row(x, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_finds_a_step() {
        let x = vec![(0..100).map(|i| i as f64 / 100.0).collect::<Vec<_>>()];
        let y: Vec<f64> = x[0].iter().map(|&v| if v <= 0.5 { 1.0 } else { 3.0 }).collect();
        let mut rng = rng_from_seed(0);
        let t = RegTree::fit(
            &x,
            &y,
            (0..100).collect(),
            &[0],
            TreeParams {
                max_depth: 3,
                min_leaf: 5,
                mtry: None,
            },
            &mut rng,
        );
        match t.nodes[0] {
            RegNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.505).abs() < 1e-12);
            }
            _ => panic!("no split"),
        }
        // pure children stop splitting
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn forest_is_deterministic_and_fits() {
        let x: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..200).map(|i| ((i * (j + 3)) % 17) as f64).collect())
            .collect();
        let y: Vec<f64> = (0..200).map(|i| x[1][i] * 2.0).collect();
        let cfg = ForestConfig {
            trees: 20,
            ..Default::default()
        };
        let a = RandomForestModel::fit(&x, &y, &[0, 1, 2], &cfg);
        let b = RandomForestModel::fit(&x, &y, &[0, 1, 2], &cfg);
        assert_eq!(a, b);
        assert!(a.r2 > 0.8 && a.r2 <= 1.0);
    }
}
