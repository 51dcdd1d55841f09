//! Multivariate amputation driven by weighted sum scores.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Result, RiaftError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Right,
    Both,
}

/// One product term of a weighted sum score; repeated names give powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WssTerm {
    pub coef: f64,
    pub vars: Vec<String>,
}

impl WssTerm {
    fn new(coef: f64, vars: &[&str]) -> Self {
        WssTerm {
            coef,
            vars: vars.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmputationPattern {
    /// Columns masked together in an amputated row.
    pub targets: Vec<String>,
    pub wss: Vec<WssTerm>,
    pub tail: Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmputationPlan {
    /// Share of rows assigned to each pattern's subsample.
    pub proportions: Vec<f64>,
    pub patterns: Vec<AmputationPattern>,
    /// Share of rows made incomplete, within every subsample.
    pub missingness: f64,
}

impl Default for AmputationPlan {
    fn default() -> Self {
        use Tail::*;
        let p = |targets: &[&str], wss: Vec<WssTerm>, tail| AmputationPattern {
            targets: targets.iter().map(|s| s.to_string()).collect(),
            wss,
            tail,
        };
        let t = WssTerm::new;
        AmputationPlan {
            proportions: vec![0.30, 0.09, 0.09, 0.08, 0.08, 0.16, 0.10, 0.10],
            patterns: vec![
                p(&["x5"], vec![t(1.0, &["x3"]), t(1.0, &["x4"]), t(1.0, &["x3", "x4"])], Right),
                p(
                    &["x6"],
                    vec![
                        t(1.0, &["x3"]),
                        t(1.0, &["x4"]),
                        t(1.0, &["x5"]),
                        t(1.0, &["x5", "x5"]),
                        t(1.0, &["x3", "x4"]),
                    ],
                    Right,
                ),
                p(
                    &["x7"],
                    vec![
                        t(1.0, &["x4"]),
                        t(1.0, &["x5"]),
                        t(1.0, &["x6"]),
                        t(1.0, &["x6", "x6"]),
                        t(1.0, &["x4", "x5"]),
                    ],
                    Right,
                ),
                p(
                    &["x8"],
                    vec![t(1.0, &["x5"]), t(1.0, &["x6"]), t(1.0, &["x7"]), t(1.0, &["x6", "x7"])],
                    Right,
                ),
                p(&["x5", "x6"], vec![t(1.0, &["x3"]), t(1.0, &["x4"])], Right),
                p(&["x6", "x7"], vec![t(1.0, &["x5"])], Both),
                p(
                    &["x7", "x8"],
                    vec![t(1.0, &["x4"]), t(1.0, &["x5"]), t(0.5, &["x4", "x5"])],
                    Both,
                ),
                p(
                    &["x6", "x8"],
                    vec![t(1.0, &["x3"]), t(1.0, &["x4"]), t(1.0, &["x3", "x4"])],
                    Both,
                ),
            ],
            missingness: 0.4,
        }
    }
}

impl AmputationPlan {
    pub fn validate(&self, names: &[String]) -> Result<()> {
        if self.proportions.len() != self.patterns.len() {
            return Err(RiaftError::Config("one proportion per pattern required".into()));
        }
        let s: f64 = self.proportions.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.proportions.iter().any(|&p| p < 0.0) {
            return Err(RiaftError::Config(format!("subsample proportions must sum to 1, got {s}")));
        }
        if !(0.0..1.0).contains(&self.missingness) {
            return Err(RiaftError::Config("missingness must lie in [0, 1)".into()));
        }
        for (h, p) in self.patterns.iter().enumerate() {
            if p.targets.is_empty() {
                return Err(RiaftError::Config(format!("pattern {} has no targets", h + 1)));
            }
            for v in p.targets.iter().chain(p.wss.iter().flat_map(|t| t.vars.iter())) {
                if !names.contains(v) {
                    return Err(RiaftError::MissingColumn(v.clone()));
                }
            }
            for t in &p.wss {
                if let Some(v) = t.vars.iter().find(|v| p.targets.contains(v)) {
                    return Err(RiaftError::Config(format!(
                        "pattern {} scores on its own target `{v}`",
                        h + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Subsample sizes by largest remainder.
fn split_sizes(n: usize, props: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = raw.iter().enumerate().map(|(i, r)| (i, r - r.floor())).collect();
    rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let short = n - sizes.iter().sum::<usize>();
    for &(i, _) in rem.iter().take(short) {
        sizes[i] += 1;
    }
    sizes
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Missingness probabilities for standardized scores, shifted so that they
/// sum to `quota`.
pub fn calibrated_probs(scores: &[f64], tail: Tail, quota: f64) -> Vec<f64> {
    let s: Vec<f64> = match tail {
        Tail::Right => scores.to_vec(),
        Tail::Both => scores.iter().map(|v| v.abs()).collect(),
    };
    let total = |shift: f64| s.iter().map(|v| logistic(v + shift)).sum::<f64>();
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < quota {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);
    s.iter().map(|v| logistic(v + shift)).collect()
}

/// Weighted sum score of each listed row.
pub fn weighted_sum_scores(ds: &SurvivalDataset, rows: &[usize], wss: &[WssTerm]) -> Result<Vec<f64>> {
    let names = ds.covariate_names();
    let cols: Vec<Vec<usize>> = wss
        .iter()
        .map(|t| {
            t.vars
                .iter()
                .map(|v| names.iter().position(|n| n == v).ok_or_else(|| RiaftError::MissingColumn(v.clone())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows
        .iter()
        .map(|&i| {
            wss.iter()
                .zip(&cols)
                .map(|(t, c)| t.coef * c.iter().map(|&j| ds.covariates[j].values[i]).product::<f64>())
                .sum()
        })
        .collect())
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - m) / sd } else { 0.0 };
    }
}

/// Masks covariate cells according to `plan`. Outcomes, clusters and
/// treatment are never touched.
pub fn ampute<R: Rng + ?Sized>(ds: &SurvivalDataset, plan: &AmputationPlan, rng: &mut R) -> Result<SurvivalDataset> {
    let names = ds.covariate_names();
    plan.validate(&names)?;
    let mut out = ds.clone();
    if plan.missingness == 0.0 {
        return Ok(out);
    }
    for p in &plan.patterns {
        for v in p.targets.iter().chain(p.wss.iter().flat_map(|t| t.vars.iter())) {
            let j = names.iter().position(|n| n == v).expect("validated");
            if ds.mask.column_count(j) > 0 {
                return Err(RiaftError::Config(format!("column `{v}` already has missing values")));
            }
        }
    }
    let n = ds.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let sizes = split_sizes(n, &plan.proportions);
    let mut start = 0;
    for (h, (p, &size)) in plan.patterns.iter().zip(&sizes).enumerate() {
        if size == 0 {
            return Err(RiaftError::EmptyGroup {
                kind: "amputation subsample",
                label: h + 1,
            });
        }
        let rows = &order[start..start + size];
        start += size;
        let mut wss = weighted_sum_scores(ds, rows, &p.wss)?;
        standardize(&mut wss);
        let probs = calibrated_probs(&wss, p.tail, plan.missingness * size as f64);
        let targets: Vec<usize> = p
            .targets
            .iter()
            .map(|v| names.iter().position(|n| n == v).expect("validated"))
            .collect();
        for (&i, &pr) in rows.iter().zip(&probs) {
            if rng.random::<f64>() < pr {
                for &j in &targets {
                    out.set_cell(i, j, None);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_sum_to_n() {
        let s = split_sizes(2000, &AmputationPlan::default().proportions);
        assert_eq!(s, vec![600, 180, 180, 160, 160, 320, 200, 200]);
        assert_eq!(split_sizes(7, &[0.5, 0.5]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn calibration_hits_quota() {
        let scores: Vec<f64> = (0..100).map(|i| (i as f64 - 50.0) / 29.0).collect();
        for tail in [Tail::Right, Tail::Both] {
            let p = calibrated_probs(&scores, tail, 40.0);
            assert!((p.iter().sum::<f64>() - 40.0).abs() < 1e-8);
        }
        let p = calibrated_probs(&scores, Tail::Right, 40.0);
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }
}
