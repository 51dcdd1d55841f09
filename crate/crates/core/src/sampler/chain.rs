use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::centering::{center_responses, CenteringConstants};
use super::draws::{Draw, DrawHeader, PosteriorDraws};
use super::gibbs::{augment_censored, ExpansionMode, InterceptBlock};
use crate::bart::{init_forest, BartConfig, Forest, ForestSnapshot, Predictors};
use crate::data::SurvivalDataset;
use crate::error::{Result, RiaftError};
use crate::stats::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Total iterations per chain, burn-in included.
    pub draws: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    /// Number of trees.
    pub m: usize,
    pub bart: BartConfig,
    pub expansion: ExpansionMode,
    pub seed: u64,
    /// Independent chains; chain c is seeded with `seed + c`.
    pub chains: usize,
    pub keep_f: bool,
    pub keep_counterfactual: bool,
    pub keep_forests: bool,
    /// Log a heartbeat every this many iterations; 0 disables it.
    pub progress_every: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            draws: 4500,
            burn_in: 1000,
            thin: 1,
            m: 200,
            bart: BartConfig::default(),
            expansion: ExpansionMode::default(),
            seed: 0,
            chains: 1,
            keep_f: true,
            keep_counterfactual: true,
            keep_forests: false,
            progress_every: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws <= self.burn_in {
            return Err(RiaftError::Config(format!(
                "draws ({}) must exceed burn-in ({})",
                self.draws, self.burn_in
            )));
        }
        if self.thin == 0 || self.m == 0 || self.chains == 0 {
            return Err(RiaftError::Config("thin, m and chains must be at least 1".into()));
        }
        self.bart.validate()
    }

    /// Kept draws per chain.
    pub fn kept(&self) -> usize {
        (self.draws - self.burn_in).div_ceil(self.thin)
    }
}

/// Full state of one chain.
#[derive(Debug, Clone)]
pub struct RiaftState {
    pub intercepts: InterceptBlock,
    pub forest: Forest,
    /// Augmented centered log-times.
    pub z: Vec<f64>,
    pub centering: CenteringConstants,
}

/// Compact, serializable view of a chain state for abort dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDump {
    pub iter: usize,
    pub b: Vec<f64>,
    pub tau2: f64,
    pub alpha: Vec<f64>,
    pub sigma2: f64,
    pub z: Vec<f64>,
    pub forest: ForestSnapshot,
}

struct Chain<'a> {
    ds: &'a SurvivalDataset,
    x: &'a Predictors,
    cfg: &'a ChainConfig,
    lower: Vec<f64>,
    sizes: Vec<usize>,
    state: RiaftState,
    fit: Vec<f64>,
    resp: Vec<f64>,
    sums: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(ds: &'a SurvivalDataset, x: &'a Predictors, cfg: &'a ChainConfig, centering: CenteringConstants) -> Result<Self> {
        let lower: Vec<f64> = ds.time.iter().map(|t| t.ln() - centering.mu_aft).collect();
        let mut bart = cfg.bart.clone();
        if bart.sigma_hat.is_none() {
            bart.sigma_hat = Some(centering.sigma_aft);
        }
        let forest = init_forest(cfg.m, &lower, &bart)?;
        let n = ds.n_rows();
        Ok(Chain {
            ds,
            x,
            cfg,
            sizes: ds.cluster_sizes(),
            state: RiaftState {
                intercepts: InterceptBlock::new(ds.n_clusters),
                forest,
                z: lower.clone(),
                centering,
            },
            lower,
            fit: vec![0.0; n],
            resp: vec![0.0; n],
            sums: vec![0.0; ds.n_clusters],
        })
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let cluster = &self.ds.cluster;
        let st = &mut self.state;
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..self.fit.len() {
            self.sums[cluster[i]] += st.z[i] - self.fit[i];
        }
        st.intercepts
            .update(rng, &self.sums, &self.sizes, st.forest.sigma2, self.cfg.expansion)?;

        let b = &st.intercepts.b;
        for i in 0..self.resp.len() {
            self.resp[i] = st.z[i] - b[cluster[i]];
        }
        st.forest.backfit_sweep(self.x, &self.resp, rng)?;
        self.fit.copy_from_slice(st.forest.fitted(self.x).expect("caches current after sweep"));

        let fit = &self.fit;
        augment_censored(
            rng,
            &mut st.z,
            &self.ds.event,
            &self.lower,
            |i| fit[i] + b[cluster[i]],
            st.forest.sigma2,
        );
        Ok(())
    }

    fn record(&self, chain: usize, iter: usize, n_arms: usize, treatment_col: Option<usize>) -> Draw {
        let st = &self.state;
        let mu = st.centering.mu_aft;
        let shift = |mut v: Vec<f64>| {
            v.iter_mut().for_each(|x| *x += mu);
            v
        };
        let f = self.cfg.keep_f.then(|| shift(st.forest.predict(self.x)));
        let f_arm = match (self.cfg.keep_counterfactual, treatment_col) {
            (true, Some(col)) => Some(
                (0..n_arms)
                    .map(|a| shift(st.forest.predict_override(self.x, col, a as f64)))
                    .collect(),
            ),
            _ => None,
        };
        Draw {
            chain,
            iter,
            b: st.intercepts.b.clone(),
            tau2: st.intercepts.tau2,
            sigma2: st.forest.sigma2,
            alpha: st.intercepts.alpha.clone(),
            vip: st.forest.vip(self.x.n_cols()),
            f,
            f_arm,
            forest: self.cfg.keep_forests.then(|| ForestSnapshot::of(&st.forest)),
        }
    }

    fn dump(&self, iter: usize) -> String {
        let st = &self.state;
        let d = StateDump {
            iter,
            b: st.intercepts.b.clone(),
            tau2: st.intercepts.tau2,
            alpha: st.intercepts.alpha.clone(),
            sigma2: st.forest.sigma2,
            z: st.z.clone(),
            forest: ForestSnapshot::of(&st.forest),
        };
        serde_json::to_string(&d).unwrap_or_default()
    }
}

fn run_one(
    ds: &SurvivalDataset,
    x: &Predictors,
    cfg: &ChainConfig,
    centering: CenteringConstants,
    chain: usize,
    treatment_col: Option<usize>,
) -> Result<Vec<Draw>> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, chain as u64));
    let mut ch = Chain::new(ds, x, cfg, centering)?;
    let mut out = Vec::with_capacity(cfg.kept());
    for it in 0..cfg.draws {
        // Every sub-step validates its inputs before mutating, so a failed
        // step leaves the last valid state in place.
        if let Err(e) = ch.step(&mut rng) {
            let last_state = ch.dump(it);
            log::error!("chain {chain} aborted at iteration {it}: {e}");
            return Err(RiaftError::ChainAborted {
                chain,
                iter: it,
                reason: e.to_string(),
                last_state,
            });
        }
        if cfg.progress_every > 0 && (it + 1) % cfg.progress_every == 0 {
            log::info!("chain {chain}: iteration {}/{}", it + 1, cfg.draws);
        }
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            out.push(ch.record(chain, it, ds.n_arms, treatment_col));
        }
    }
    Ok(out)
}

/// Runs the riAFT-BART sampler on a fully observed dataset. When the
/// dataset carries treatment labels they enter the trees as a categorical
/// predictor alongside the covariates.
pub fn run_chain(ds: &SurvivalDataset, cfg: &ChainConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let x = Predictors::from_dataset(ds, true)?;
    let centering = center_responses(ds)?;
    let treatment_col = ds.treatment.as_ref().map(|_| 0);
    let per_chain: Vec<Result<Vec<Draw>>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_one(ds, &x, cfg, centering, c, treatment_col))
        .collect();
    let mut draws = Vec::with_capacity(cfg.kept() * cfg.chains);
    for r in per_chain {
        draws.extend(r?);
    }
    Ok(PosteriorDraws {
        header: DrawHeader {
            config: cfg.clone(),
            centering,
            predictor_names: x.names().to_vec(),
            treatment_col,
            n_arms: if ds.treatment.is_some() { ds.n_arms } else { 0 },
            n_rows: ds.n_rows(),
            n_clusters: ds.n_clusters,
        },
        draws,
    })
}
