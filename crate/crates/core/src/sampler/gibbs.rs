//! Conjugate updates for the random intercepts, their variance and the
//! parameter-expansion terms, plus the censoring augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RiaftError};
use crate::stats::{sample_inv_gamma, sample_normal, sample_trunc_normal};

/// How the parameter-expansion variance multiplier is indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// One `alpha_k ~ IG(1/2, 1)` per cluster, with
    /// `alpha_k | . ~ IG(1, 1 + b_k^2 / (2 tau^2))` and
    /// `tau^2 | . ~ IG(K/2 + 1, 1 + sum_k b_k^2 / (2 alpha_k))`.
    #[default]
    PerCluster,
    /// A single scalar drawn from `IG(1, 1 + sum_k b_k^2 / (2 tau^2))`, with
    /// `tau^2 | . ~ IG(K/2 + 1, (sum_k b_k^2 + 2 alpha) / (2 alpha))`.
    Global,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RiaftError::Invariant(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Mean and variance of the normal conditional of one random intercept,
/// given the sum of its cluster's log-scale residuals.
pub fn b_conditional(resid_sum: f64, n_k: usize, tau2: f64, alpha: f64, sigma2: f64) -> Result<(f64, f64)> {
    check_positive("tau2", tau2)?;
    check_positive("alpha", alpha)?;
    check_positive("sigma2", sigma2)?;
    let ta = tau2 * alpha;
    let denom = n_k as f64 * ta + sigma2;
    Ok((ta * resid_sum / denom, sigma2 * ta / denom))
}

pub fn gibbs_update_b<R: Rng + ?Sized>(
    rng: &mut R,
    resid_sum: f64,
    n_k: usize,
    tau2: f64,
    alpha: f64,
    sigma2: f64,
) -> Result<f64> {
    let (m, v) = b_conditional(resid_sum, n_k, tau2, alpha, sigma2)?;
    Ok(sample_normal(rng, m, v.sqrt()))
}

/// `(shape, scale)` of the inverse-gamma conditional of a global `alpha`.
pub fn alpha_global_conditional(b: &[f64], tau2: f64) -> (f64, f64) {
    let ss: f64 = b.iter().map(|v| v * v).sum();
    (1.0, 1.0 + ss / (2.0 * tau2))
}

/// `(shape, scale)` of the inverse-gamma conditional of one `alpha_k`.
pub fn alpha_cluster_conditional(b_k: f64, tau2: f64) -> (f64, f64) {
    (1.0, 1.0 + b_k * b_k / (2.0 * tau2))
}

/// `(shape, scale)` of the inverse-gamma conditional of `tau^2` given one
/// expansion term per cluster.
pub fn tau2_conditional(b: &[f64], alpha: &[f64]) -> (f64, f64) {
    debug_assert_eq!(b.len(), alpha.len());
    let s: f64 = b.iter().zip(alpha).map(|(bk, ak)| bk * bk / (2.0 * ak)).sum();
    (b.len() as f64 / 2.0 + 1.0, 1.0 + s)
}

pub fn gibbs_update_alpha<R: Rng + ?Sized>(
    rng: &mut R,
    b: &[f64],
    tau2: f64,
    mode: ExpansionMode,
    alpha: &mut [f64],
) -> Result<()> {
    check_positive("tau2", tau2)?;
    match mode {
        ExpansionMode::Global => {
            let (shape, scale) = alpha_global_conditional(b, tau2);
            let a = sample_inv_gamma(rng, shape, scale);
            alpha.iter_mut().for_each(|v| *v = a);
        }
        ExpansionMode::PerCluster => {
            for (ak, &bk) in alpha.iter_mut().zip(b) {
                let (shape, scale) = alpha_cluster_conditional(bk, tau2);
                *ak = sample_inv_gamma(rng, shape, scale);
            }
        }
    }
    Ok(())
}

pub fn gibbs_update_tau2<R: Rng + ?Sized>(rng: &mut R, b: &[f64], alpha: &[f64]) -> Result<f64> {
    for &a in alpha {
        check_positive("alpha", a)?;
    }
    let (shape, scale) = tau2_conditional(b, alpha);
    Ok(sample_inv_gamma(rng, shape, scale))
}

/// State of the random-intercept block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptBlock {
    pub b: Vec<f64>,
    pub tau2: f64,
    /// One entry per cluster; all equal in global mode.
    pub alpha: Vec<f64>,
}

impl InterceptBlock {
    pub fn new(k: usize) -> Self {
        InterceptBlock {
            b: vec![0.0; k],
            tau2: 1.0,
            alpha: vec![1.0; k],
        }
    }

    /// Updates every `b_k`, then `tau^2`, then the expansion terms.
    /// `resid_sums[k]` and `sizes[k]` summarize cluster k's residuals.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        resid_sums: &[f64],
        sizes: &[usize],
        sigma2: f64,
        mode: ExpansionMode,
    ) -> Result<()> {
        for k in 0..self.b.len() {
            self.b[k] = gibbs_update_b(rng, resid_sums[k], sizes[k], self.tau2, self.alpha[k], sigma2)?;
        }
        self.tau2 = gibbs_update_tau2(rng, &self.b, &self.alpha)?;
        gibbs_update_alpha(rng, &self.b, self.tau2, mode, &mut self.alpha)
    }
}

/// Redraws the latent log-times of censored rows from the normal
/// `N(mean_i, sigma2)` truncated below at `lower_i`.
pub fn augment_censored<R: Rng + ?Sized>(
    rng: &mut R,
    z: &mut [f64],
    event: &[bool],
    lower: &[f64],
    mean: impl Fn(usize) -> f64,
    sigma2: f64,
) {
    let sd = sigma2.sqrt();
    for i in 0..z.len() {
        if !event[i] {
            z[i] = sample_trunc_normal(rng, mean(i), sd, lower[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, rng_from_seed, variance};

    #[test]
    fn b_conditional_examples() {
        let (m, v) = b_conditional(2.0, 4, 1.0, 1.0, 1.0).unwrap();
        assert!((m - 0.4).abs() < 1e-15 && (v - 0.2).abs() < 1e-15);
        // empty cluster: prior
        let (m, v) = b_conditional(0.0, 0, 2.0, 1.5, 1.0).unwrap();
        assert_eq!((m, v), (0.0, 3.0));
        // likelihood-dominated limit
        let (m, _) = b_conditional(3.0 * 0.7, 3, 1.0, 1.0, 1e-12).unwrap();
        assert!((m - 0.7).abs() < 1e-9);
        assert!(b_conditional(1.0, 1, -1.0, 1.0, 1.0).is_err());
        assert!(b_conditional(1.0, 1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn expansion_conditionals() {
        assert_eq!(alpha_global_conditional(&[0.0, 0.0], 3.0), (1.0, 1.0));
        assert_eq!(alpha_global_conditional(&[1.0, 1.0], 1.0), (1.0, 2.0));
        assert_eq!(tau2_conditional(&[1.0, 1.0], &[1.0, 1.0]), (2.0, 2.0));
        assert_eq!(tau2_conditional(&[0.0; 4], &[0.3; 4]), (3.0, 1.0));
        // Per-cluster form reduces to the global one when all alpha agree.
        let b = [0.4, -1.3, 2.0];
        let a = 0.7;
        let (_, s) = tau2_conditional(&b, &[a; 3]);
        let ss: f64 = b.iter().map(|v| v * v).sum();
        assert!((s - (ss + 2.0 * a) / (2.0 * a)).abs() < 1e-14);
    }

    #[test]
    fn inverse_alpha_has_gamma_mean() {
        let mut rng = rng_from_seed(8);
        let mut alpha = vec![1.0; 2];
        let mut inv = Vec::new();
        for _ in 0..100_000 {
            gibbs_update_alpha(&mut rng, &[1.0, 1.0], 1.0, ExpansionMode::Global, &mut alpha).unwrap();
            inv.push(1.0 / alpha[0]);
        }
        // 1/alpha ~ Gamma(1, rate 2): mean 1/2
        assert!((mean(&inv) - 0.5).abs() / 0.5 < 0.02);
    }

    #[test]
    fn augmentation_respects_bounds() {
        let mut rng = rng_from_seed(2);
        let event = [true, false, false];
        let lower = [0.3, 1.0, -2.0];
        let mut z = lower.to_vec();
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            augment_censored(&mut rng, &mut z, &event, &lower, |i| [0.0, 1.0, 8.0][i], 0.25);
            assert_eq!(z[0], 0.3);
            assert!(z[1] >= 1.0 && z[2] >= -2.0);
            draws.push(z[2]);
        }
        // far-above-bound row is effectively untruncated
        assert!((mean(&draws) - 8.0).abs() < 0.02);
        assert!((variance(&draws) - 0.25).abs() < 0.02);
    }
}
