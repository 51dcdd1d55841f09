//! Clustered, right-censored survival data: the in-memory model, validation
//! and resampling.

mod io;

pub use io::{codebook_path, load_dataset, read_codebook, read_dataset, write_codebook, write_dataset, Codebook,
    CodebookColumn, Schema};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RiaftError};
use crate::stats::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// Values are integer codes indexing `levels`.
    Categorical { levels: Vec<String> },
}

impl ColumnKind {
    pub fn n_levels(&self) -> Option<usize> {
        match self {
            ColumnKind::Continuous => None,
            ColumnKind::Categorical { levels } => Some(levels.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: ColumnKind,
    /// One entry per row; `NaN` where the mask marks the cell missing.
    pub values: Vec<f64>,
}

/// Row-major boolean matrix; `true` marks a missing covariate cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingMask {
    n_rows: usize,
    n_cols: usize,
    cells: Vec<bool>,
}

impl MissingMask {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        MissingMask {
            n_rows,
            n_cols,
            cells: vec![false; n_rows * n_cols],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.n_cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, missing: bool) {
        self.cells[row * self.n_cols + col] = missing;
    }

    pub fn any(&self) -> bool {
        self.cells.iter().any(|&m| m)
    }

    pub fn column_count(&self, col: usize) -> usize {
        (0..self.n_rows).filter(|&r| self.get(r, col)).count()
    }

    pub fn row_incomplete(&self, row: usize) -> bool {
        self.cells[row * self.n_cols..(row + 1) * self.n_cols]
            .iter()
            .any(|&m| m)
    }
}

/// A clustered right-censored survival sample.
///
/// Clusters and treatment arms are stored 0-based internally; on disk they
/// are the 1-based labels `1..=K` and `1..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    pub cluster: Vec<usize>,
    pub n_clusters: usize,
    pub treatment: Option<Vec<usize>>,
    pub n_arms: usize,
    pub covariates: Vec<Covariate>,
    pub mask: MissingMask,
}

impl SurvivalDataset {
    /// Builds a dataset and checks every structural invariant. `NaN`
    /// covariate values are taken to be missing.
    pub fn new(
        time: Vec<f64>,
        event: Vec<bool>,
        cluster: Vec<usize>,
        treatment: Option<Vec<usize>>,
        covariates: Vec<Covariate>,
    ) -> Result<Self> {
        let n = time.len();
        if n == 0 {
            return Err(RiaftError::EmptyDataset);
        }
        if event.len() != n || cluster.len() != n {
            return Err(RiaftError::Dimension(
                "time, event and cluster must have equal length".into(),
            ));
        }
        for (row, &t) in time.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(RiaftError::NonPositiveTime { row: row + 1 });
            }
        }
        let n_clusters = cluster.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; n_clusters];
        for &c in &cluster {
            counts[c] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(RiaftError::EmptyGroup {
                kind: "cluster",
                label: k + 1,
            });
        }
        let n_arms = match &treatment {
            Some(a) => {
                if a.len() != n {
                    return Err(RiaftError::Dimension("treatment length".into()));
                }
                a.iter().max().map_or(0, |m| m + 1)
            }
            None => 0,
        };
        let mut mask = MissingMask::new(n, covariates.len());
        for (j, cov) in covariates.iter().enumerate() {
            if cov.values.len() != n {
                return Err(RiaftError::Dimension(format!(
                    "covariate `{}` has {} values, expected {n}",
                    cov.name,
                    cov.values.len()
                )));
            }
            for (i, v) in cov.values.iter().enumerate() {
                if v.is_nan() {
                    mask.set(i, j, true);
                } else if let Some(levels) = cov.kind.n_levels() {
                    if v.fract() != 0.0 || *v < 0.0 || *v as usize >= levels {
                        return Err(RiaftError::Invariant(format!(
                            "categorical `{}` has out-of-range code {v} at row {}",
                            cov.name,
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(SurvivalDataset {
            time,
            event,
            cluster,
            n_clusters,
            treatment,
            n_arms,
            covariates,
            mask,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.time.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_clusters];
        for &c in &self.cluster {
            counts[c] += 1;
        }
        counts
    }

    pub fn has_missing(&self) -> bool {
        self.mask.any()
    }

    /// Marks a covariate cell missing (or restores it with `value`).
    pub fn set_cell(&mut self, row: usize, col: usize, value: Option<f64>) {
        match value {
            Some(v) => {
                self.covariates[col].values[row] = v;
                self.mask.set(row, col, false);
            }
            None => {
                self.covariates[col].values[row] = f64::NAN;
                self.mask.set(row, col, true);
            }
        }
    }

    /// New dataset made of the given rows (repeats allowed). Cluster labels
    /// are compacted if resampling left a cluster empty.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let pick_f = |v: &[f64]| rows.iter().map(|&r| v[r]).collect::<Vec<_>>();
        let mut cluster: Vec<usize> = rows.iter().map(|&r| self.cluster[r]).collect();
        let mut present = vec![false; self.n_clusters];
        for &c in &cluster {
            present[c] = true;
        }
        if present.iter().any(|p| !p) {
            let mut remap = vec![usize::MAX; self.n_clusters];
            let mut next = 0;
            for (k, p) in present.iter().enumerate() {
                if *p {
                    remap[k] = next;
                    next += 1;
                }
            }
            for c in cluster.iter_mut() {
                *c = remap[*c];
            }
        }
        let treatment = self
            .treatment
            .as_ref()
            .map(|a| rows.iter().map(|&r| a[r]).collect::<Vec<_>>());
        let covariates = self
            .covariates
            .iter()
            .map(|c| Covariate {
                name: c.name.clone(),
                kind: c.kind.clone(),
                values: pick_f(&c.values),
            })
            .collect();
        let mut ds = SurvivalDataset::new(
            pick_f(&self.time),
            rows.iter().map(|&r| self.event[r]).collect(),
            cluster,
            treatment,
            covariates,
        )?;
        // Keep the arm count even if an arm vanished from the resample.
        ds.n_arms = ds.n_arms.max(self.n_arms);
        Ok(ds)
    }

    /// Same outcomes, clusters and treatment with the covariate block replaced.
    pub fn with_covariates(&self, covariates: Vec<Covariate>) -> Result<Self> {
        let mut ds = SurvivalDataset::new(
            self.time.clone(),
            self.event.clone(),
            self.cluster.clone(),
            self.treatment.clone(),
            covariates,
        )?;
        ds.n_arms = self.n_arms;
        Ok(ds)
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.n_rows();
        let events = self.event.iter().filter(|&&e| e).count();
        let columns = self
            .covariates
            .iter()
            .enumerate()
            .map(|(j, c)| (c.name.clone(), self.mask.column_count(j) as f64 / n as f64))
            .collect();
        let incomplete = (0..n).filter(|&i| self.mask.row_incomplete(i)).count();
        let arm_counts = self.treatment.as_ref().map(|a| {
            let mut counts = vec![0usize; self.n_arms];
            for &x in a {
                counts[x] += 1;
            }
            counts
        });
        ValidationReport {
            n_rows: n,
            n_clusters: self.n_clusters,
            cluster_sizes: self.cluster_sizes(),
            censoring_proportion: 1.0 - events as f64 / n as f64,
            column_missingness: columns,
            incomplete_row_proportion: incomplete as f64 / n as f64,
            cell_missingness: if self.covariates.is_empty() {
                0.0
            } else {
                self.mask.cells.iter().filter(|&&m| m).count() as f64
                    / (n * self.covariates.len()) as f64
            },
            arm_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_rows: usize,
    pub n_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    /// `1 - mean(delta)`.
    pub censoring_proportion: f64,
    pub column_missingness: Vec<(String, f64)>,
    /// Share of rows with at least one missing covariate.
    pub incomplete_row_proportion: f64,
    /// Share of all covariate cells that are missing.
    pub cell_missingness: f64,
    pub arm_counts: Option<Vec<usize>>,
}

/// Resamples `n` rows with replacement, uniformly over the whole sample;
/// cluster labels travel with their rows.
pub fn bootstrap_resample(ds: &SurvivalDataset, seed: u64) -> Result<SurvivalDataset> {
    let mut rng = rng_from_seed(seed);
    let n = ds.n_rows();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    ds.select_rows(&rows)
}

/// Jointly permutes the `(time, event)` pairs across rows, leaving
/// covariates, clusters and treatment in place.
pub fn permute_outcomes(ds: &SurvivalDataset, seed: u64) -> SurvivalDataset {
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..ds.n_rows()).collect();
    order.shuffle(&mut rng);
    let mut out = ds.clone();
    for (i, &src) in order.iter().enumerate() {
        out.time[i] = ds.time[src];
        out.event[i] = ds.event[src];
    }
    out
}
