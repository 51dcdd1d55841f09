//! Run configuration: a JSON file whose sections mirror the library
//! configs. Command-line flags are applied on top.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use riaft_core::effects::{FitTheFitConfig, RuleConfig};
use riaft_core::sampler::ChainConfig;
use riaft_core::select::SelectionConfig;
use riaft_core::sim::{AmputationPlan, DgpConfig, ImputeConfig, ScenarioConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub chain: ChainConfig,
    pub selection: SelectionConfig,
    /// Bootstrap-imputed datasets for selection; 0 runs a single selection
    /// on the data as given.
    pub bootstrap: usize,
    pub pi: f64,
    pub dgp: DgpConfig,
    pub scenario: ScenarioConfig,
    pub impute: ImputeConfig,
    pub amputation: AmputationPlan,
    pub fit_the_fit: FitTheFitConfig,
    pub rules: RuleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            chain: ChainConfig::default(),
            selection: SelectionConfig::default(),
            bootstrap: 0,
            pi: 0.5,
            dgp: DgpConfig::default(),
            scenario: ScenarioConfig::default(),
            impute: ImputeConfig::default(),
            amputation: AmputationPlan::default(),
            fit_the_fit: FitTheFitConfig::default(),
            rules: RuleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening config {}", p.display()))?;
                serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn check_pi(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            bail!("pi must lie in (0, 1), got {}", self.pi);
        }
        Ok(())
    }
}

/// Parses a 1-based arm pair such as `1,2` into 0-based indices.
pub fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad arm `{a}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad arm `{b}`"))?;
    if a == 0 || b == 0 {
        return Err("arms are 1-based".into());
    }
    Ok((a - 1, b - 1))
}

/// Every ordered pair `(a, b)` with `a < b`.
pub fn all_pairs(n_arms: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..n_arms {
        for b in a + 1..n_arms {
            out.push((a, b));
        }
    }
    out
}
