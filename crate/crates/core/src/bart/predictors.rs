use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::{ColumnKind, SurvivalDataset};
use crate::error::{Result, RiaftError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Largest number of levels a categorical predictor may have; split subsets
/// are stored as a 64-bit mask.
pub const MAX_LEVELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Continuous,
    Categorical { n_levels: usize },
}

/// Dense, fully observed, column-major predictor matrix.
///
/// Continuous columns carry a precomputed row order so that in-node sorted
/// values can be collected in one linear pass.
#[derive(Debug, Clone)]
pub struct Predictors {
    id: u64,
    n_rows: usize,
    names: Vec<String>,
    kinds: Vec<PredictorKind>,
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Predictors {
    pub fn new(names: Vec<String>, kinds: Vec<PredictorKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != kinds.len() || names.len() != columns.len() {
            return Err(RiaftError::Dimension("predictor names/kinds/columns".into()));
        }
        let n_rows = columns.first().map_or(0, |c| c.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(RiaftError::Dimension(format!("predictor `{}` length", names[j])));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(RiaftError::NonFinite(format!(
                    "predictor `{}` row {}",
                    names[j],
                    i + 1
                )));
            }
            if let PredictorKind::Categorical { n_levels } = kinds[j] {
                if n_levels > MAX_LEVELS {
                    return Err(RiaftError::Config(format!(
                        "categorical `{}` has {n_levels} levels; at most {MAX_LEVELS} supported",
                        names[j]
                    )));
                }
            }
        }
        let order = columns
            .iter()
            .zip(&kinds)
            .map(|(col, kind)| match kind {
                PredictorKind::Continuous => {
                    let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                    idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                    idx
                }
                PredictorKind::Categorical { .. } => Vec::new(),
            })
            .collect();
        Ok(Predictors {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            n_rows,
            names,
            kinds,
            columns,
            order,
        })
    }

    /// Predictors `{A, X}`: the treatment arm (when present and requested)
    /// as a categorical first column, then every covariate.
    pub fn from_dataset(ds: &SurvivalDataset, include_treatment: bool) -> Result<Self> {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut columns = Vec::new();
        if include_treatment {
            if let Some(a) = &ds.treatment {
                names.push("a".to_string());
                kinds.push(PredictorKind::Categorical {
                    n_levels: ds.n_arms,
                });
                columns.push(a.iter().map(|&v| v as f64).collect());
            }
        }
        for (j, cov) in ds.covariates.iter().enumerate() {
            if ds.mask.column_count(j) > 0 {
                return Err(RiaftError::MissingCovariates(cov.name.clone()));
            }
            names.push(cov.name.clone());
            kinds.push(match &cov.kind {
                ColumnKind::Continuous => PredictorKind::Continuous,
                ColumnKind::Categorical { levels } => PredictorKind::Categorical {
                    n_levels: levels.len(),
                },
            });
            columns.push(cov.values.clone());
        }
        if columns.is_empty() {
            return Err(RiaftError::Config("no predictors".into()));
        }
        let mut p = Predictors::new(names, kinds, columns)?;
        if p.n_rows == 0 {
            p.n_rows = ds.n_rows();
        }
        Ok(p)
    }

    /// Identity of the underlying data; clones share it.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kind(&self, col: usize) -> PredictorKind {
        self.kinds[col]
    }

    pub fn kinds(&self) -> &[PredictorKind] {
        &self.kinds
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.columns[col]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub(crate) fn sorted_rows(&self, col: usize) -> &[u32] {
        &self.order[col]
    }

    /// Checks that `other` has the same column layout (names and kinds).
    pub fn check_compatible(&self, other: &Predictors) -> Result<()> {
        if self.names != other.names || self.kinds.len() != other.kinds.len() {
            return Err(RiaftError::Schema(format!(
                "expected predictors {:?}, got {:?}",
                self.names, other.names
            )));
        }
        for (a, b) in self.kinds.iter().zip(&other.kinds) {
            let same = matches!(
                (a, b),
                (PredictorKind::Continuous, PredictorKind::Continuous)
                    | (PredictorKind::Categorical { .. }, PredictorKind::Categorical { .. })
            );
            if !same {
                return Err(RiaftError::Schema("predictor kinds differ".into()));
            }
        }
        Ok(())
    }
}
