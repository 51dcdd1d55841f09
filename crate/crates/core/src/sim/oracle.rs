//! Closed-form individual effects of the heterogeneity design.

use super::dgp::{log_rate, shape, weibull_survival, DgpConfig, DgpMode};
use crate::error::{Result, RiaftError};
use crate::stats::adaptive_simpson;

/// Effect scale for individual contrasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectScale {
    LogTime,
    /// Survival probability at a fixed time.
    SurvivalProb(f64),
    /// Restricted mean survival time up to a horizon.
    Rmst(f64),
}

fn check(cfg: &DgpConfig, design: &[Vec<f64>], cluster: &[usize], b: &[f64], pair: (usize, usize)) -> Result<()> {
    if cfg.mode != DgpMode::Heterogeneity {
        return Err(RiaftError::Config("effect oracle needs heterogeneity mode".into()));
    }
    if pair.0 >= cfg.n_arms() || pair.1 >= cfg.n_arms() {
        return Err(RiaftError::Config(format!("arm pair {pair:?} out of range")));
    }
    if design.len() != cluster.len() {
        return Err(RiaftError::Dimension("design and cluster labels must align".into()));
    }
    if cluster.iter().any(|&c| c >= b.len()) {
        return Err(RiaftError::Dimension("cluster label without an intercept".into()));
    }
    Ok(())
}

/// Weibull RMST `int_0^t S(u) du` by adaptive quadrature.
pub fn weibull_rmst(t_star: f64, log_rate: f64, eta: f64) -> Result<f64> {
    adaptive_simpson(|u| weibull_survival(u, log_rate, eta), 0.0, t_star, 1e-9)
}

/// True `E[g(T(a)) - g(T(a'))]` per row for `pair = (a, a')` (0-based).
pub fn true_effect(
    design: &[Vec<f64>],
    cluster: &[usize],
    b: &[f64],
    cfg: &DgpConfig,
    pair: (usize, usize),
    scale: EffectScale,
) -> Result<Vec<f64>> {
    check(cfg, design, cluster, b, pair)?;
    design
        .iter()
        .zip(cluster)
        .map(|(x, &c)| {
            let eta = shape(cfg, x);
            let l1 = log_rate(cfg, x, pair.0, b[c]);
            let l2 = log_rate(cfg, x, pair.1, b[c]);
            Ok(match scale {
                EffectScale::LogTime => (l2 - l1) / eta,
                EffectScale::SurvivalProb(t) => weibull_survival(t, l1, eta) - weibull_survival(t, l2, eta),
                EffectScale::Rmst(t) => weibull_rmst(t, l1, eta)? - weibull_rmst(t, l2, eta)?,
            })
        })
        .collect()
}

/// Log-time individual effect `zeta_{a,a'}(x, b)`.
pub fn true_iste_oracle(
    design: &[Vec<f64>],
    cluster: &[usize],
    b: &[f64],
    cfg: &DgpConfig,
    pair: (usize, usize),
) -> Result<Vec<f64>> {
    true_effect(design, cluster, b, cfg, pair, EffectScale::LogTime)
}
