//! Lower-truncated normal sampling.
//!
//! Close to (or below) the mean, plain rejection from the parent normal is
//! efficient. Beyond `NAIVE_LIMIT` standard deviations above the mean we use
//! the exponential-proposal rejection scheme with the optimal rate
//! `(a + sqrt(a^2 + 4)) / 2`, whose acceptance rate tends to one in the tail.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{inv_mills, std_normal};

const NAIVE_LIMIT: f64 = 0.3;

/// Standard normal conditioned on exceeding `a`.
pub fn sample_trunc_normal_std<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a < NAIVE_LIMIT {
        loop {
            let z = std_normal(rng);
            if z >= a {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / rate;
        let log_accept = -0.5 * (z - rate) * (z - rate);
        let u: f64 = rng.random();
        if u.ln() <= log_accept {
            return z;
        }
    }
}

/// Draw from `N(mu, sigma^2)` conditioned on exceeding `lower`.
pub fn sample_trunc_normal<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64, lower: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let a = (lower - mu) / sigma;
    let draw = mu + sigma * sample_trunc_normal_std(rng, a);
    // Guard against rounding pushing a draw a hair below the bound.
    draw.max(lower)
}

/// Analytic mean of `N(mu, sigma^2)` truncated below at `lower`.
pub fn trunc_normal_mean(mu: f64, sigma: f64, lower: f64) -> f64 {
    mu + sigma * inv_mills((lower - mu) / sigma)
}
