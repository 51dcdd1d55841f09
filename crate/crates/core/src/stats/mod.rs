//! Numerical building blocks shared by the sampler, the effect estimators and
//! the simulation harness.

mod quad;
mod truncnorm;

pub use quad::adaptive_simpson;
pub use truncnorm::{sample_trunc_normal, sample_trunc_normal_std, trunc_normal_mean};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

/// Generator used everywhere in the crate. ChaCha is stable across platforms
/// and library versions, which the bit-reproducibility guarantees rely on.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `index`-th independent task under a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index)
}

/// Seed for task `index` of a named stream, decorrelated from other
/// streams under the same master seed by a SplitMix64 finalizer.
pub fn stream_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate far into the right tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse Mills ratio `phi(x) / (1 - Phi(x))`.
pub fn inv_mills(x: f64) -> f64 {
    if x < 3.0 {
        norm_pdf(x) / norm_sf(x)
    } else {
        // Continued fraction for Q(x)/phi(x) = 1/(x + 1/(x + 2/(x + ...))).
        let mut t = x;
        for k in (1..=80).rev() {
            t = x + k as f64 / t;
        }
        t
    }
}

/// `log(1 - Phi(x))` without underflow for large `x`.
pub fn log_norm_sf(x: f64) -> f64 {
    if x < 3.0 {
        norm_sf(x).ln()
    } else {
        -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln() - inv_mills(x).ln()
    }
}

pub fn norm_quantile(p: f64) -> f64 {
    statrs::distribution::Normal::standard().inverse_cdf(p)
}

pub fn chi_squared_quantile(p: f64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("chi-squared degrees of freedom must be positive")
        .inverse_cdf(p)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * std_normal(rng)
}

/// Draw from Inverse-Gamma(shape, scale) with density proportional to
/// `x^{-shape-1} exp(-scale/x)`.
pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0)
        .expect("gamma shape must be positive")
        .sample(rng);
    scale / g
}

/// Draw from a scaled inverse chi-squared with `dof` degrees of freedom and
/// scale `s2`, i.e. `dof * s2 / chi2_dof`.
pub fn sample_scaled_inv_chi2<R: Rng + ?Sized>(rng: &mut R, dof: f64, s2: f64) -> f64 {
    sample_inv_gamma(rng, dof / 2.0, dof * s2 / 2.0)
}

/// Empirical quantile using the "higher" rule: the sorted value at index
/// `ceil(p * (n - 1))`. Returns `None` for an empty sample.
pub fn quantile_higher(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = (p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).ceil() as usize;
    Some(sorted[idx.min(sorted.len() - 1)])
}

/// Linear-interpolation quantile of a pre-sorted slice, used for credible
/// intervals.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divisor n).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Posterior summary: mean and equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Summary {
    pub fn from_draws(draws: &[f64]) -> Self {
        let mut sorted = draws.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) {
            if lo == hi {
                return Summary { mean: lo, lower: lo, upper: lo };
            }
        }
        let mean = mean(draws);
        Summary {
            mean,
            lower: quantile_sorted(&sorted, 0.025).min(mean),
            upper: quantile_sorted(&sorted, 0.975).max(mean),
        }
    }
}
