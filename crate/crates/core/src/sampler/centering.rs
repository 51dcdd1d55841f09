use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Result, RiaftError};
use crate::stats::{inv_mills, log_norm_sf, mean, variance};

/// Smallest residual scale reported for degenerate samples.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Intercept and scale of an intercept-only log-normal AFT fit, on the log
/// time scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteringConstants {
    pub mu_aft: f64,
    pub sigma_aft: f64,
    /// True when the scale collapsed to the floor.
    #[serde(default)]
    pub degenerate: bool,
}

/// Right-censored log-normal log-likelihood at `(mu, sigma)`.
pub fn censored_lognormal_loglik(log_y: &[f64], event: &[bool], mu: f64, sigma: f64) -> f64 {
    let mut ll = 0.0;
    for (&ly, &d) in log_y.iter().zip(event) {
        let z = (ly - mu) / sigma;
        ll += if d { -sigma.ln() - 0.5 * z * z } else { log_norm_sf(z) };
    }
    ll
}

/// Value, gradient and Hessian in `(mu, log sigma)`.
fn derivatives(log_y: &[f64], event: &[bool], mu: f64, theta: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let sigma = theta.exp();
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for (&ly, &d) in log_y.iter().zip(event) {
        let z = (ly - mu) / sigma;
        if d {
            ll += -theta - 0.5 * z * z;
            g[0] += z / sigma;
            g[1] += z * z - 1.0;
            h[0][0] -= 1.0 / (sigma * sigma);
            h[0][1] -= 2.0 * z / sigma;
            h[1][1] -= 2.0 * z * z;
        } else {
            let m = inv_mills(z);
            let dm = m * (m - z);
            ll += log_norm_sf(z);
            g[0] += m / sigma;
            g[1] += m * z;
            h[0][0] -= dm / (sigma * sigma);
            h[0][1] -= (dm * z + m) / sigma;
            h[1][1] -= dm * z * z + m * z;
        }
    }
    h[1][0] = h[0][1];
    (ll, g, h)
}

/// Maximum-likelihood `(mu, sigma)` of the intercept-only log-normal AFT
/// model under right censoring.
pub fn center_responses(ds: &SurvivalDataset) -> Result<CenteringConstants> {
    let log_y: Vec<f64> = ds.time.iter().map(|t| t.ln()).collect();
    fit_lognormal(&log_y, &ds.event)
}

pub fn fit_lognormal(log_y: &[f64], event: &[bool]) -> Result<CenteringConstants> {
    let n_events = event.iter().filter(|&&d| d).count();
    if n_events < 2 {
        return Err(RiaftError::TooFewEvents(n_events));
    }
    let m0 = mean(log_y);
    let s0 = variance(log_y).sqrt();
    if s0 < 1e-12 {
        log::warn!("log survival times have zero spread; residual scale set to {SIGMA_FLOOR}");
        return Ok(CenteringConstants {
            mu_aft: m0,
            sigma_aft: SIGMA_FLOOR,
            degenerate: true,
        });
    }
    if n_events == log_y.len() {
        return Ok(CenteringConstants {
            mu_aft: m0,
            sigma_aft: s0,
            degenerate: false,
        });
    }

    let mut mu = m0;
    let mut theta = s0.ln();
    for _ in 0..100 {
        let (ll, g, h) = derivatives(log_y, event, mu, theta);
        if (g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-8 {
            return Ok(CenteringConstants {
                mu_aft: mu,
                sigma_aft: theta.exp(),
                degenerate: false,
            });
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        // Newton direction when the Hessian is negative definite, gradient
        // ascent otherwise.
        let (mut dmu, mut dth) = if h[0][0] < 0.0 && det > 0.0 {
            (
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[0][1] * g[0] + h[0][0] * g[1]) / det,
            )
        } else {
            (g[0] * 1e-2, g[1] * 1e-2)
        };
        let mut step_ok = false;
        for _ in 0..60 {
            let cand = censored_lognormal_loglik(log_y, event, mu + dmu, (theta + dth).exp());
            if cand.is_finite() && cand >= ll - 1e-12 {
                step_ok = true;
                break;
            }
            dmu *= 0.5;
            dth *= 0.5;
        }
        if !step_ok {
            break;
        }
        mu += dmu;
        theta += dth;
    }
    log::warn!("Newton iterations for the centering fit did not converge; using profile search");
    profile_search(log_y, event, m0, s0)
}

fn argmax_mu(log_y: &[f64], event: &[bool], sigma: f64, lo: f64, hi: f64) -> f64 {
    // The log-likelihood is concave in mu for fixed sigma: bisect on its
    // derivative.
    let dmu = |mu: f64| -> f64 {
        log_y
            .iter()
            .zip(event)
            .map(|(&ly, &d)| {
                let z = (ly - mu) / sigma;
                if d {
                    z / sigma
                } else {
                    inv_mills(z) / sigma
                }
            })
            .sum()
    };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if dmu(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

fn profile_search(log_y: &[f64], event: &[bool], m0: f64, s0: f64) -> Result<CenteringConstants> {
    let (lo_y, hi_y) = log_y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let profile = |theta: f64| -> (f64, f64) {
        let sigma = theta.exp();
        let mu = argmax_mu(log_y, event, sigma, lo_y - 50.0 * sigma - 10.0 * s0, hi_y + 50.0 * sigma + 10.0 * s0);
        (censored_lognormal_loglik(log_y, event, mu, sigma), mu)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (s0.ln() - 12.0, s0.ln() + 6.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = profile(c).0;
    let mut fd = profile(d).0;
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = profile(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = profile(d).0;
        }
        if b - a < 1e-10 {
            break;
        }
    }
    let theta = 0.5 * (a + b);
    let (ll, mu) = profile(theta);
    if !ll.is_finite() || !mu.is_finite() {
        return Err(RiaftError::Convergence(format!(
            "centering fit failed (start mu {m0}, sigma {s0})"
        )));
    }
    Ok(CenteringConstants {
        mu_aft: mu,
        sigma_aft: theta.exp().max(SIGMA_FLOOR),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{rng_from_seed, sample_normal};
    use rand_distr::{Distribution, Exp};

    #[test]
    fn uncensored_matches_moments() {
        let ly = [0.1, 0.5, -0.3, 1.2];
        let c = fit_lognormal(&ly, &[true; 4]).unwrap();
        assert!((c.mu_aft - mean(&ly)).abs() < 1e-15);
        assert!((c.sigma_aft - variance(&ly).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_scale_is_floored() {
        let c = fit_lognormal(&[0.0, 0.0, 0.0], &[true; 3]).unwrap();
        assert_eq!(c.mu_aft, 0.0);
        assert_eq!(c.sigma_aft, SIGMA_FLOOR);
        assert!(c.degenerate);
    }

    #[test]
    fn all_censored_is_an_error() {
        assert!(matches!(
            fit_lognormal(&[0.0, 1.0], &[false, false]),
            Err(RiaftError::TooFewEvents(0))
        ));
    }

    #[test]
    fn half_censored_recovers_truth() {
        let mut rng = rng_from_seed(4);
        let n = 5000;
        let (mu, sigma) = (1.0, 0.5);
        // exponential censoring on the time scale, rate tuned near 50%
        let cens = Exp::new(1.0 / 3.2).unwrap();
        let mut ly = Vec::new();
        let mut ev = Vec::new();
        for _ in 0..n {
            let t = sample_normal(&mut rng, mu, sigma);
            let c: f64 = cens.sample(&mut rng);
            let lc = c.ln();
            ly.push(t.min(lc));
            ev.push(t <= lc);
        }
        let frac = 1.0 - ev.iter().filter(|&&d| d).count() as f64 / n as f64;
        assert!((0.3..0.7).contains(&frac), "censoring {frac}");
        let c = fit_lognormal(&ly, &ev).unwrap();
        assert!((c.mu_aft - mu).abs() < 0.05, "{c:?}");
        assert!((c.sigma_aft - sigma).abs() < 0.05, "{c:?}");
        // Profile search agrees with Newton.
        let p = profile_search(&ly, &ev, mean(&ly), variance(&ly).sqrt()).unwrap();
        assert!((p.mu_aft - c.mu_aft).abs() < 1e-6);
        assert!((p.sigma_aft - c.sigma_aft).abs() < 1e-6);
    }
}
