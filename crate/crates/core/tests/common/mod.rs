#![allow(dead_code)]

use riaft_core::data::{ColumnKind, Covariate, SurvivalDataset};
use riaft_core::sampler::ChainConfig;
use riaft_core::stats::{rng_from_seed, sample_normal};
use rand::Rng;

pub fn cont(name: &str, values: Vec<f64>) -> Covariate {
    Covariate {
        name: name.into(),
        kind: ColumnKind::Continuous,
        values,
    }
}

/// `log T = 1 + 2 x1 + b_k + 0.5 * effect * a + N(0, 0.3^2)`, with `l`
/// standard normal covariates and independent log-normal censoring.
pub struct Toy {
    pub ds: SurvivalDataset,
    pub f_true: Vec<f64>,
    pub b_true: Vec<f64>,
}

pub fn toy(n: usize, k: usize, l: usize, arms: usize, b_sd: f64, seed: u64) -> Toy {
    let mut rng = rng_from_seed(seed);
    let cluster: Vec<usize> = (0..n).map(|i| i % k).collect();
    let b: Vec<f64> = (0..k).map(|_| sample_normal(&mut rng, 0.0, b_sd)).collect();
    let x: Vec<Vec<f64>> = (0..l).map(|_| (0..n).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect()).collect();
    let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..arms.max(1))).collect();
    let f: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * x[0][i] + 0.5 * a[i] as f64 * x[1.min(l - 1)][i]).collect();
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for i in 0..n {
        let t = (f[i] + b[cluster[i]] + sample_normal(&mut rng, 0.0, 0.3)).exp();
        let c = sample_normal(&mut rng, 3.0, 1.0).exp();
        time.push(t.min(c));
        event.push(t <= c);
    }
    let covs = x.into_iter().enumerate().map(|(j, v)| cont(&format!("x{}", j + 1), v)).collect();
    let ds = SurvivalDataset::new(time, event, cluster, (arms > 0).then_some(a), covs).unwrap();
    Toy { ds, f_true: f, b_true: b }
}

pub fn short_chain(seed: u64) -> ChainConfig {
    ChainConfig {
        draws: 400,
        burn_in: 200,
        m: 20,
        seed,
        ..Default::default()
    }
}
