//! Permutation-null variable selection from variable inclusion proportions,
//! with bootstrap-imputation aggregation for incomplete data.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap_resample, permute_outcomes, SurvivalDataset};
use crate::error::{Result, RiaftError};
use crate::sampler::{run_chain, ChainConfig, PosteriorDraws};
use crate::sim::{chained_impute, ImputeConfig};
use crate::stats::{quantile_higher, rng_from_seed, stream_seed};

const STREAM_PERMUTE: u64 = 1;
const STREAM_NULL_CHAIN: u64 = 2;
const STREAM_BOOT: u64 = 3;
const STREAM_IMPUTE: u64 = 4;
const STREAM_REPLICATE: u64 = 5;

/// Element-wise mean of the per-draw VIP vectors.
pub fn average_vip(draws: &PosteriorDraws) -> Result<Vec<f64>> {
    let rows = draws.vip_rows();
    let first = rows.first().ok_or(RiaftError::MissingDraws("kept iterations"))?;
    let mut out = vec![0.0; first.len()];
    for r in &rows {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= rows.len() as f64);
    Ok(out)
}

/// Covariate part of the VIP vector: drops the treatment column if the model
/// had one.
fn covariate_vip(draws: &PosteriorDraws) -> Result<Vec<f64>> {
    let mut v = average_vip(draws)?;
    if let Some(c) = draws.header.treatment_col {
        v.remove(c);
    }
    Ok(v)
}

fn selection_chain(cfg: &ChainConfig, seed: u64) -> ChainConfig {
    ChainConfig {
        seed,
        keep_f: false,
        keep_counterfactual: false,
        keep_forests: false,
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Chain for the observed outcomes.
    pub chain: ChainConfig,
    /// Chain for each permuted fit.
    pub null_chain: ChainConfig,
    pub permutations: usize,
    pub alpha: f64,
    /// Retries of a failed permutation chain.
    pub max_retries: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            chain: ChainConfig {
                m: 20,
                ..Default::default()
            },
            null_chain: ChainConfig {
                draws: 1500,
                burn_in: 500,
                m: 20,
                ..Default::default()
            },
            permutations: 100,
            alpha: 0.05,
            max_retries: 2,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(RiaftError::Config("at least one permutation required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RiaftError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.chain.validate()?;
        self.null_chain.validate()
    }
}

/// `P x L` matrix of VIPs from fits to permuted outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationNull {
    pub rows: Vec<Vec<f64>>,
}

impl PermutationNull {
    pub fn column(&self, l: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[l]).collect()
    }
}

/// Fits one chain per permutation of the outcome pairs. A failed chain is
/// retried on a fresh chain seed up to `max_retries` times.
pub fn build_null(ds: &SurvivalDataset, p: usize, cfg: &SelectionConfig, seed: u64) -> Result<PermutationNull> {
    if p == 0 {
        return Err(RiaftError::Config("at least one permutation required".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|k| {
            let perm = permute_outcomes(ds, stream_seed(seed, STREAM_PERMUTE, k as u64));
            let mut attempt = 0;
            loop {
                let chain_seed = stream_seed(seed, STREAM_NULL_CHAIN, (k * 16 + attempt) as u64);
                match run_chain(&perm, &selection_chain(&cfg.null_chain, chain_seed)).and_then(|d| covariate_vip(&d)) {
                    Ok(v) => return Ok(v),
                    Err(e) if attempt < cfg.max_retries => {
                        log::warn!("permutation {} failed ({e}); retrying", k + 1);
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    Ok(PermutationNull {
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub names: Vec<String>,
    pub vip: Vec<f64>,
    /// Null `1 - alpha` quantile per covariate.
    pub threshold: Vec<f64>,
    pub selected: Vec<bool>,
    /// Bootstrap mode: times each covariate was selected.
    pub boot_count: Option<Vec<usize>>,
    pub boot_b: Option<usize>,
    pub pi: Option<f64>,
}

impl SelectionResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&j| self.selected[j]).collect()
    }

    pub fn selected_names(&self) -> Vec<String> {
        self.selected_indices().into_iter().map(|j| self.names[j].clone()).collect()
    }

    /// CSV with columns `covariate,vip,threshold,selected,boot_count`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["covariate", "vip", "threshold", "selected", "boot_count"])?;
        for j in 0..self.names.len() {
            let num = |v: &[f64]| v.get(j).map_or(String::new(), |x| x.to_string());
            out.write_record([
                self.names[j].clone(),
                num(&self.vip),
                num(&self.threshold),
                (self.selected[j] as u8).to_string(),
                self.boot_count.as_ref().map_or(String::new(), |c| c[j].to_string()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Selects covariate `l` when its VIP strictly exceeds the `1 - alpha`
/// quantile (higher rule) of its null column.
pub fn local_threshold_select(names: &[String], vip: &[f64], null: &PermutationNull, alpha: f64) -> Result<SelectionResult> {
    if null.rows.is_empty() {
        return Err(RiaftError::Config("empty permutation null".into()));
    }
    if null.rows.iter().any(|r| r.len() != vip.len()) || names.len() != vip.len() {
        return Err(RiaftError::Dimension("VIP vector and null rows differ in length".into()));
    }
    if (null.rows.len() as f64) < (1.0 / alpha - 1e-9).ceil() {
        log::warn!(
            "{} permutations cannot resolve the {} quantile; the threshold is the null maximum",
            null.rows.len(),
            1.0 - alpha
        );
    }
    let threshold: Vec<f64> = (0..vip.len())
        .map(|l| quantile_higher(&null.column(l), 1.0 - alpha).expect("nonempty"))
        .collect();
    let selected = vip.iter().zip(&threshold).map(|(v, t)| v > t).collect();
    Ok(SelectionResult {
        names: names.to_vec(),
        vip: vip.to_vec(),
        threshold,
        selected,
        boot_count: None,
        boot_b: None,
        pi: None,
    })
}

/// Full permutation selection on a complete dataset.
pub fn select_variables(ds: &SurvivalDataset, cfg: &SelectionConfig, seed: u64) -> Result<SelectionResult> {
    cfg.validate()?;
    let draws = run_chain(ds, &selection_chain(&cfg.chain, seed))?;
    let vip = covariate_vip(&draws)?;
    let null = build_null(ds, cfg.permutations, cfg, seed)?;
    local_threshold_select(&ds.covariate_names(), &vip, &null, cfg.alpha)
}

/// Selections from `B` bootstrap-imputed copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSelection {
    pub names: Vec<String>,
    pub replicates: Vec<SelectionResult>,
    pub counts: Vec<usize>,
}

impl BootstrapSelection {
    /// Covariates selected in at least `pi * B` replicates.
    pub fn select(&self, pi: f64) -> SelectionResult {
        let b = self.replicates.len();
        let need = pi * b as f64;
        let l = self.names.len();
        let mean = |f: fn(&SelectionResult) -> &Vec<f64>| -> Vec<f64> {
            (0..l)
                .map(|j| self.replicates.iter().map(|r| f(r)[j]).sum::<f64>() / b.max(1) as f64)
                .collect()
        };
        SelectionResult {
            names: self.names.clone(),
            vip: mean(|r| &r.vip),
            threshold: mean(|r| &r.threshold),
            selected: self.counts.iter().map(|&c| c as f64 >= need - 1e-9).collect(),
            boot_count: Some(self.counts.clone()),
            boot_b: Some(b),
            pi: Some(pi),
        }
    }
}

/// Runs permutation selection on `B` bootstrap resamples, each singly
/// imputed. Imputation failures redraw the resample up to three times.
pub fn bootstrap_selections(
    ds: &SurvivalDataset,
    b: usize,
    impute: &ImputeConfig,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<BootstrapSelection> {
    if b == 0 {
        return Err(RiaftError::Config("B must be at least 1".into()));
    }
    cfg.validate()?;
    let replicates: Vec<Result<SelectionResult>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut attempt = 0u64;
            let completed = loop {
                let key = r as u64 * 4 + attempt;
                let boot = bootstrap_resample(ds, stream_seed(seed, STREAM_BOOT, key))?;
                let mut rng = rng_from_seed(stream_seed(seed, STREAM_IMPUTE, key));
                match chained_impute(&boot, impute, &mut rng) {
                    Ok(c) => break c,
                    Err(e) if attempt < 3 => {
                        log::warn!("imputation of bootstrap replicate {} failed ({e}); redrawing", r + 1);
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            };
            select_variables(&completed, cfg, stream_seed(seed, STREAM_REPLICATE, r as u64))
        })
        .collect();
    let replicates: Vec<SelectionResult> = replicates.into_iter().collect::<Result<_>>()?;
    let names = ds.covariate_names();
    let mut counts = vec![0usize; names.len()];
    for rep in &replicates {
        for (c, &s) in counts.iter_mut().zip(&rep.selected) {
            *c += s as usize;
        }
    }
    Ok(BootstrapSelection {
        names,
        replicates,
        counts,
    })
}

pub fn aggregate_bootstrap_select(
    ds: &SurvivalDataset,
    b: usize,
    pi: f64,
    impute: &ImputeConfig,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<SelectionResult> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(RiaftError::Config(format!("pi must lie in (0, 1), got {pi}")));
    }
    Ok(bootstrap_selections(ds, b, impute, cfg, seed)?.select(pi))
}
