use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Result, RiaftError};

/// Largest allowed gap between the achieved and the requested censoring
/// proportion.
pub const CENSORING_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct CensoredTimes {
    /// Exponential censoring rate.
    pub rate: f64,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    /// Realized censored share.
    pub achieved: f64,
}

/// Censored share when `C_i = e_i / rate`.
pub fn censored_fraction(times: &[f64], unit_exp: &[f64], rate: f64) -> f64 {
    let c = times
        .iter()
        .zip(unit_exp)
        .filter(|(&t, &e)| e / rate < t)
        .count();
    c as f64 / times.len() as f64
}

/// Draws exponential censoring times with a rate chosen so the realized
/// censored share matches `target`.
///
/// The unit exponentials are drawn once and the rate is found by bisection
/// on `log(rate)`; the realized share is a nondecreasing step function of the
/// rate, so the search lands on the step closest to the target.
pub fn solve_censoring_rate<R: Rng + ?Sized>(times: &[f64], target: f64, rng: &mut R) -> Result<CensoredTimes> {
    if !(target > 0.0 && target < 1.0) {
        return Err(RiaftError::Config(format!("censoring target must lie in (0, 1), got {target}")));
    }
    if times.is_empty() {
        return Err(RiaftError::EmptyDataset);
    }
    if times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(RiaftError::NonFinite("survival times must be positive and finite".into()));
    }
    let e: Vec<f64> = times.iter().map(|_| Exp1.sample(rng)).collect();
    // Row i is censored iff rate > e_i / t_i.
    let ratios: Vec<f64> = e.iter().zip(times).map(|(e, t)| e / t).collect();
    let lo_r = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_r = ratios.iter().cloned().fold(0.0, f64::max);
    let mut lo = (lo_r * 0.5).ln();
    let mut hi = (hi_r * 2.0).ln();
    let n = times.len() as f64;
    let frac = |log_rate: f64| censored_fraction(times, &e, log_rate.exp());
    let want = (target * n).round() / n;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = frac(mid);
        if (f - want).abs() < 0.5 / n {
            lo = mid;
            hi = mid;
            break;
        }
        if f < want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_rate = 0.5 * (lo + hi);
    let achieved = frac(log_rate);
    if (achieved - target).abs() > CENSORING_TOLERANCE {
        return Err(RiaftError::Unreachable {
            target,
            detail: format!("closest achievable censoring share is {achieved:.4} with {} rows", times.len()),
        });
    }
    let rate = log_rate.exp();
    let mut time = Vec::with_capacity(times.len());
    let mut event = Vec::with_capacity(times.len());
    for (&t, &ei) in times.iter().zip(&e) {
        let c = ei / rate;
        if c < t {
            time.push(c);
            event.push(false);
        } else {
            time.push(t);
            event.push(true);
        }
    }
    Ok(CensoredTimes {
        rate,
        time,
        event,
        achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng_from_seed;

    #[test]
    fn hits_target_and_is_monotone() {
        let mut rng = rng_from_seed(3);
        let t: Vec<f64> = (0..2000).map(|i| 0.01 + (i as f64 * 0.37).sin().abs()).collect();
        for target in [0.05, 0.3, 0.5, 0.9] {
            let r = solve_censoring_rate(&t, target, &mut rng).unwrap();
            assert!((r.achieved - target).abs() <= 0.5 / 2000.0 + 1e-12);
            let c = r.event.iter().filter(|e| !**e).count() as f64 / 2000.0;
            assert_eq!(c, r.achieved);
        }
        let e: Vec<f64> = (0..2000).map(|_| Exp1.sample(&mut rng)).collect();
        let mut prev = 0.0;
        for k in -10..10 {
            let f = censored_fraction(&t, &e, (k as f64).exp());
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn tiny_sample_is_unreachable() {
        let mut rng = rng_from_seed(1);
        assert!(matches!(
            solve_censoring_rate(&[1.0], 0.5, &mut rng),
            Err(RiaftError::Unreachable { .. })
        ));
        assert!(solve_censoring_rate(&[1.0], 1.0, &mut rng).is_err());
    }
}
