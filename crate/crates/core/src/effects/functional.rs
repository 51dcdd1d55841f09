//! Survival-probability and RMST functionals of the posterior draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::iste::IsteEstimate;
use crate::error::{Result, RiaftError};
use crate::sampler::{ExpansionMode, PosteriorDraws};
use crate::stats::{adaptive_simpson, norm_sf, rng_from_seed, sample_inv_gamma, sample_normal, Summary};

/// How the cluster intercept enters a per-draw prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InterceptMode {
    /// The row's own cluster intercept from each draw.
    InCluster,
    /// A fresh cluster: one `b ~ N(0, tau^2 alpha)` per draw, with `alpha`
    /// redrawn from its prior in per-cluster expansion mode.
    Integrated { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "t")]
pub enum Functional {
    SurvivalProb(f64),
    Rmst(f64),
}

/// Quadrature tolerance for RMST, in time units.
pub const RMST_TOL: f64 = 1e-6;

/// `P(T > t)` for `log T ~ N(f + b, sigma^2)`.
pub fn survival_prob(t: f64, f: f64, b: f64, sigma: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    norm_sf((t.ln() - f - b) / sigma)
}

/// `int_0^t_star S(u) du` for the same log-normal law.
pub fn rmst(t_star: f64, f: f64, b: f64, sigma: f64) -> Result<f64> {
    if !(t_star > 0.0) {
        return Err(RiaftError::Config(format!("RMST horizon must be positive, got {t_star}")));
    }
    adaptive_simpson(|u| survival_prob(u, f, b, sigma), 0.0, t_star, RMST_TOL)
}

impl Functional {
    pub fn eval(&self, f: f64, b: f64, sigma: f64) -> Result<f64> {
        match *self {
            Functional::SurvivalProb(t) => Ok(survival_prob(t, f, b, sigma)),
            Functional::Rmst(t) => rmst(t, f, b, sigma),
        }
    }

    fn validate(&self) -> Result<()> {
        let t = match *self {
            Functional::SurvivalProb(t) | Functional::Rmst(t) => t,
        };
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(RiaftError::Config(format!("evaluation time must be positive, got {t}")))
        }
    }
}

/// One intercept per draw (and per cluster in in-cluster mode).
fn intercepts(draws: &PosteriorDraws, mode: InterceptMode) -> Vec<Option<f64>> {
    match mode {
        InterceptMode::InCluster => vec![None; draws.n_draws()],
        InterceptMode::Integrated { seed } => {
            let mut rng = rng_from_seed(seed);
            let global = draws.header.config.expansion == ExpansionMode::Global;
            draws
                .draws
                .iter()
                .map(|d| {
                    let alpha = if global {
                        d.alpha.first().copied().unwrap_or(1.0)
                    } else {
                        sample_inv_gamma(&mut rng, 0.5, 1.0)
                    };
                    Some(sample_normal(&mut rng, 0.0, (d.tau2 * alpha).sqrt()))
                })
                .collect()
        }
    }
}

/// `out[d][i]` = functional of draw `d` at row `i`, where `f[d][i]` is the
/// uncentered mean function and `cluster[i]` the row's cluster.
pub fn functional_draws(
    draws: &PosteriorDraws,
    f: &[&[f64]],
    cluster: &[usize],
    functional: Functional,
    mode: InterceptMode,
) -> Result<Vec<Vec<f64>>> {
    functional.validate()?;
    if f.len() != draws.n_draws() {
        return Err(RiaftError::Dimension("one prediction vector per draw required".into()));
    }
    if mode == InterceptMode::InCluster && cluster.iter().any(|&c| c >= draws.header.n_clusters) {
        return Err(RiaftError::Dimension("cluster label outside the fitted clusters".into()));
    }
    let b_new = intercepts(draws, mode);
    draws
        .draws
        .par_iter()
        .zip(f.par_iter())
        .zip(b_new.par_iter())
        .map(|((d, fd), bn)| {
            if fd.len() != cluster.len() {
                return Err(RiaftError::Dimension("predictions and clusters must align".into()));
            }
            let sigma = d.sigma2.sqrt();
            fd.iter()
                .zip(cluster)
                .map(|(&fi, &c)| functional.eval(fi, bn.unwrap_or_else(|| d.b[c]), sigma))
                .collect()
        })
        .collect()
}

/// Posterior of a functional for one training row under arm `arm`.
pub fn predict_functional(
    draws: &PosteriorDraws,
    cluster: &[usize],
    row: usize,
    arm: usize,
    functional: Functional,
    mode: InterceptMode,
) -> Result<(Vec<f64>, Summary)> {
    if row >= draws.header.n_rows || cluster.len() != draws.header.n_rows {
        return Err(RiaftError::Dimension(format!("row {row} outside the fitted data")));
    }
    let f = draws.arm_draws(arm)?;
    let single: Vec<&[f64]> = f.iter().map(|v| &v[row..=row]).collect();
    let out = functional_draws(draws, &single, &cluster[row..=row], functional, mode)?;
    let v: Vec<f64> = out.into_iter().map(|d| d[0]).collect();
    let s = Summary::from_draws(&v);
    Ok((v, s))
}

pub fn predict_survival_prob(
    draws: &PosteriorDraws,
    cluster: &[usize],
    row: usize,
    arm: usize,
    t: f64,
    mode: InterceptMode,
) -> Result<(Vec<f64>, Summary)> {
    predict_functional(draws, cluster, row, arm, Functional::SurvivalProb(t), mode)
}

pub fn predict_rmst(
    draws: &PosteriorDraws,
    cluster: &[usize],
    row: usize,
    arm: usize,
    t_star: f64,
    mode: InterceptMode,
) -> Result<(Vec<f64>, Summary)> {
    predict_functional(draws, cluster, row, arm, Functional::Rmst(t_star), mode)
}

/// Individual contrasts on a functional scale, from the stored
/// counterfactual predictions of the training rows.
pub fn functional_effect(
    draws: &PosteriorDraws,
    cluster: &[usize],
    pair: (usize, usize),
    functional: Functional,
    mode: InterceptMode,
) -> Result<IsteEstimate> {
    let a = functional_draws(draws, &draws.arm_draws(pair.0)?, cluster, functional, mode)?;
    let b = functional_draws(draws, &draws.arm_draws(pair.1)?, cluster, functional, mode)?;
    let diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    IsteEstimate::from_draws(pair, diff)
}
