use serde::{Deserialize, Serialize};

use crate::bart::Predictors;
use crate::data::SurvivalDataset;
use crate::error::{Result, RiaftError};
use crate::sampler::{predict_posterior, PosteriorDraws};
use crate::stats::Summary;

/// Posterior of individual log-time contrasts between two arms (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsteEstimate {
    pub pair: (usize, usize),
    /// `draws[d][i]`.
    pub draws: Vec<Vec<f64>>,
    pub summary: Vec<Summary>,
}

impl IsteEstimate {
    pub fn from_draws(pair: (usize, usize), draws: Vec<Vec<f64>>) -> Result<Self> {
        let n = draws.first().map_or(0, |d| d.len());
        if draws.iter().any(|d| d.len() != n) {
            return Err(RiaftError::Dimension("ragged effect draws".into()));
        }
        let summary = (0..n)
            .map(|i| Summary::from_draws(&draws.iter().map(|d| d[i]).collect::<Vec<_>>()))
            .collect();
        Ok(IsteEstimate { pair, draws, summary })
    }

    pub fn n_rows(&self) -> usize {
        self.summary.len()
    }

    /// Posterior-mean effect per individual.
    pub fn means(&self) -> Vec<f64> {
        self.summary.iter().map(|s| s.mean).collect()
    }

    /// Per-draw average over the listed rows.
    pub fn subgroup_draws(&self, rows: &[usize]) -> Vec<f64> {
        self.draws
            .iter()
            .map(|d| rows.iter().map(|&i| d[i]).sum::<f64>() / rows.len() as f64)
            .collect()
    }
}

fn check_pair(draws: &PosteriorDraws, pair: (usize, usize)) -> Result<()> {
    let j = draws.header.n_arms;
    if j == 0 {
        return Err(RiaftError::Config("model was fitted without a treatment".into()));
    }
    if pair.0 >= j || pair.1 >= j {
        return Err(RiaftError::Config(format!(
            "arms ({}, {}) out of range 1..={j}",
            pair.0 + 1,
            pair.1 + 1
        )));
    }
    Ok(())
}

fn contrast(a: &[&[f64]], b: &[&[f64]]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(fa, fb)| fa.iter().zip(fb.iter()).map(|(x, y)| x - y).collect())
        .collect()
}

/// Individual effects on the training rows from the stored counterfactual
/// predictions.
pub fn estimate_iste(draws: &PosteriorDraws, pair: (usize, usize)) -> Result<IsteEstimate> {
    check_pair(draws, pair)?;
    let a = draws.arm_draws(pair.0)?;
    let b = draws.arm_draws(pair.1)?;
    IsteEstimate::from_draws(pair, contrast(&a, &b))
}

/// Individual effects for the rows of `ds` (training or new data) from the
/// persisted forests.
pub fn estimate_iste_new(draws: &PosteriorDraws, ds: &SurvivalDataset, pair: (usize, usize)) -> Result<IsteEstimate> {
    check_pair(draws, pair)?;
    let x = Predictors::from_dataset(ds, draws.header.treatment_col.is_some())?;
    let a = predict_posterior(draws, &x, Some(pair.0))?;
    let b = predict_posterior(draws, &x, Some(pair.1))?;
    let ar: Vec<&[f64]> = a.iter().map(|v| v.as_slice()).collect();
    let br: Vec<&[f64]> = b.iter().map(|v| v.as_slice()).collect();
    IsteEstimate::from_draws(pair, contrast(&ar, &br))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub pair: (usize, usize),
    /// Per-draw sample-average effect.
    pub draws: Vec<f64>,
    pub summary: Summary,
}

/// Sample-average effect per draw, summarized over draws.
pub fn estimate_ate(iste: &IsteEstimate) -> AteEstimate {
    let n = iste.n_rows() as f64;
    let draws: Vec<f64> = iste.draws.iter().map(|d| d.iter().sum::<f64>() / n).collect();
    AteEstimate {
        pair: iste.pair,
        summary: Summary::from_draws(&draws),
        draws,
    }
}

/// Concatenates the draws of fits to several imputed copies of the same
/// rows.
pub fn pool_imputations(runs: &[PosteriorDraws]) -> Result<PosteriorDraws> {
    let first = runs.first().ok_or(RiaftError::MissingDraws("any run"))?;
    let mut out = first.clone();
    for r in &runs[1..] {
        let h = &r.header;
        if h.n_rows != first.header.n_rows
            || h.n_clusters != first.header.n_clusters
            || h.n_arms != first.header.n_arms
            || h.predictor_names != first.header.predictor_names
        {
            return Err(RiaftError::Dimension("imputation runs are not row-aligned".into()));
        }
        out.draws.extend(r.draws.iter().cloned());
    }
    Ok(out)
}

/// Pools effect draws from several imputed fits.
pub fn pool_iste(runs: &[IsteEstimate]) -> Result<IsteEstimate> {
    let first = runs.first().ok_or(RiaftError::MissingDraws("any run"))?;
    let mut draws = Vec::new();
    for r in runs {
        if r.pair != first.pair || r.n_rows() != first.n_rows() {
            return Err(RiaftError::Dimension("imputation runs are not row-aligned".into()));
        }
        draws.extend(r.draws.iter().cloned());
    }
    IsteEstimate::from_draws(first.pair, draws)
}
