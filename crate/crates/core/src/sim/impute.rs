//! Single imputation by chained equations.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, SurvivalDataset};
use crate::error::{Result, RiaftError};
use crate::stats::std_normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    pub cycles: usize,
    /// Donor pool size for predictive mean matching.
    pub donors: usize,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig { cycles: 10, donors: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Pmm,
    Logistic,
    Multinomial(usize),
}

fn method_for(ds: &SurvivalDataset, j: usize) -> Method {
    let c = &ds.covariates[j];
    match &c.kind {
        ColumnKind::Categorical { levels } => Method::Multinomial(levels.len()),
        ColumnKind::Continuous => {
            let binary = c
                .values
                .iter()
                .enumerate()
                .filter(|(i, _)| !ds.mask.get(*i, j))
                .all(|(_, &v)| v == 0.0 || v == 1.0);
            if binary {
                Method::Logistic
            } else {
                Method::Pmm
            }
        }
    }
}

/// Predictor matrix for imputing column `target`: intercept, every other
/// covariate (categorical as treatment dummies), log time and the event flag.
fn design(ds: &SurvivalDataset, values: &[Vec<f64>], target: usize) -> DMatrix<f64> {
    let n = ds.n_rows();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for (j, c) in ds.covariates.iter().enumerate() {
        if j == target {
            continue;
        }
        match &c.kind {
            ColumnKind::Continuous => cols.push(values[j].clone()),
            ColumnKind::Categorical { levels } => {
                for l in 1..levels.len() {
                    cols.push(values[j].iter().map(|&v| if v as usize == l { 1.0 } else { 0.0 }).collect());
                }
            }
        }
    }
    cols.push(ds.time.iter().map(|t| t.ln()).collect());
    cols.push(ds.event.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect());
    DMatrix::from_fn(n, cols.len(), |i, k| cols[k][i])
}

fn rows_of(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, k| x[(rows[i], k)])
}

/// `beta_hat + scale * L^{-T} z` where `L L^T = a`.
fn perturb<R: Rng + ?Sized>(
    rng: &mut R,
    a: DMatrix<f64>,
    beta_hat: &DVector<f64>,
    scale: f64,
) -> Option<DVector<f64>> {
    let chol = a.cholesky()?;
    let z = DVector::from_fn(beta_hat.len(), |_, _| std_normal(rng));
    let step = chol.l().transpose().solve_upper_triangular(&z)?;
    Some(beta_hat + step * scale)
}

/// Bayesian linear regression draw followed by predictive mean matching.
fn impute_pmm<R: Rng + ?Sized>(
    rng: &mut R,
    x: &DMatrix<f64>,
    y: &[f64],
    obs: &[usize],
    mis: &[usize],
    donors: usize,
) -> Option<Vec<f64>> {
    let p = x.ncols();
    if obs.len() <= p {
        return None;
    }
    let xo = rows_of(x, obs);
    let yo = DVector::from_iterator(obs.len(), obs.iter().map(|&i| y[i]));
    let mut xtx = xo.transpose() * &xo;
    for k in 0..p {
        xtx[(k, k)] += 1e-5 * xtx[(k, k)].max(1e-8);
    }
    let beta_hat = xtx.clone().cholesky()?.solve(&(xo.transpose() * &yo));
    let resid = &yo - &xo * &beta_hat;
    let df = (obs.len() - p) as f64;
    let chi2: f64 = rand_distr::Distribution::sample(&rand_distr::ChiSquared::new(df).ok()?, rng);
    let sigma = (resid.norm_squared() / chi2).sqrt();
    let beta = perturb(rng, xtx, &beta_hat, sigma)?;
    if !beta.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut pool: Vec<(f64, f64)> = obs
        .iter()
        .map(|&i| ((x.row(i) * &beta_hat)[(0, 0)], y[i]))
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = donors.max(1).min(pool.len());
    let mut out = Vec::with_capacity(mis.len());
    for &i in mis {
        let target = (x.row(i) * &beta)[(0, 0)];
        let pos = pool.partition_point(|d| d.0 < target);
        // Widen a window around `pos` to the k nearest predicted means.
        let (mut lo, mut hi) = (pos, pos);
        while hi - lo < k {
            let take_lo = if lo == 0 {
                false
            } else if hi == pool.len() {
                true
            } else {
                target - pool[lo - 1].0 <= pool[hi].0 - target
            };
            if take_lo {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let d = rng.random_range(lo..hi);
        out.push(pool[d].1);
    }
    Some(out)
}

/// IRLS fit of a ridge-stabilized logistic regression; returns the estimate
/// and the penalized information matrix.
fn fit_logistic(x: &DMatrix<f64>, y: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    for _ in 0..50 {
        let eta = x * &beta;
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut score = DVector::<f64>::zeros(p);
        for i in 0..x.nrows() {
            let pi = 1.0 / (1.0 + (-eta[i]).exp());
            let w = (pi * (1.0 - pi)).max(1e-10);
            let xi = x.row(i).transpose();
            info += &xi * xi.transpose() * w;
            score += xi * (y[i] - pi);
        }
        for k in 0..p {
            info[(k, k)] += 1e-4;
            score[k] -= 1e-4 * beta[k];
        }
        let step = info.clone().cholesky()?.solve(&score);
        beta += &step;
        if !beta.iter().all(|v| v.is_finite()) {
            return None;
        }
        if step.amax() < 1e-8 {
            return Some((beta, info));
        }
    }
    let eta = x * &beta;
    let mut info = DMatrix::<f64>::identity(p, p) * 1e-4;
    for i in 0..x.nrows() {
        let pi = 1.0 / (1.0 + (-eta[i]).exp());
        let xi = x.row(i).transpose();
        info += &xi * xi.transpose() * (pi * (1.0 - pi)).max(1e-10);
    }
    Some((beta, info))
}

/// Draws `P(y = 1)` for the missing rows under a posterior-perturbed
/// logistic fit.
fn logistic_probs<R: Rng + ?Sized>(
    rng: &mut R,
    x: &DMatrix<f64>,
    y01: &[f64],
    obs: &[usize],
    mis: &[usize],
) -> Option<Vec<f64>> {
    let yo: Vec<f64> = obs.iter().map(|&i| y01[i]).collect();
    if yo.iter().all(|&v| v == yo[0]) {
        return Some(vec![yo[0]; mis.len()]);
    }
    let (beta_hat, info) = fit_logistic(&rows_of(x, obs), &yo)?;
    let beta = perturb(rng, info, &beta_hat, 1.0)?;
    Some(
        mis.iter()
            .map(|&i| 1.0 / (1.0 + (-(x.row(i) * &beta)[(0, 0)]).exp()))
            .collect(),
    )
}

fn marginal_draw<R: Rng + ?Sized>(rng: &mut R, observed: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|_| *observed.choose(rng).expect("nonempty")).collect()
}

/// Completes every masked covariate cell. Continuous columns use predictive
/// mean matching, 0/1 columns logistic regression and categorical columns
/// one-vs-rest logistic fits; each model conditions on the other covariates,
/// log time and the event flag. The returned dataset has an empty mask.
pub fn chained_impute<R: Rng + ?Sized>(ds: &SurvivalDataset, cfg: &ImputeConfig, rng: &mut R) -> Result<SurvivalDataset> {
    if !ds.has_missing() {
        return Ok(ds.clone());
    }
    let n = ds.n_rows();
    let p = ds.n_covariates();
    let mut values: Vec<Vec<f64>> = ds.covariates.iter().map(|c| c.values.clone()).collect();
    let mut plans = Vec::new();
    for j in 0..p {
        let mis: Vec<usize> = (0..n).filter(|&i| ds.mask.get(i, j)).collect();
        if mis.is_empty() {
            continue;
        }
        let obs: Vec<usize> = (0..n).filter(|&i| !ds.mask.get(i, j)).collect();
        if obs.is_empty() {
            return Err(RiaftError::Config(format!(
                "column `{}` has no observed values to impute from",
                ds.covariates[j].name
            )));
        }
        let observed: Vec<f64> = obs.iter().map(|&i| values[j][i]).collect();
        let init = marginal_draw(rng, &observed, mis.len());
        for (&i, v) in mis.iter().zip(init) {
            values[j][i] = v;
        }
        plans.push((j, method_for(ds, j), obs, mis, observed));
    }

    for _ in 0..cfg.cycles.max(1) {
        for (j, method, obs, mis, observed) in &plans {
            let j = *j;
            let x = design(ds, &values, j);
            let drawn = match *method {
                Method::Pmm => impute_pmm(rng, &x, &values[j], obs, mis, cfg.donors),
                Method::Logistic => logistic_probs(rng, &x, &values[j], obs, mis)
                    .map(|pr| pr.iter().map(|&q| if rng.random::<f64>() < q { 1.0 } else { 0.0 }).collect()),
                Method::Multinomial(levels) => {
                    let mut probs = vec![vec![0.0; levels]; mis.len()];
                    let mut ok = true;
                    for l in 0..levels {
                        let y01: Vec<f64> = values[j].iter().map(|&v| if v as usize == l { 1.0 } else { 0.0 }).collect();
                        match logistic_probs(rng, &x, &y01, obs, mis) {
                            Some(pr) => {
                                for (row, q) in probs.iter_mut().zip(pr) {
                                    row[l] = q;
                                }
                            }
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    ok.then(|| {
                        probs
                            .iter()
                            .map(|row| {
                                let s: f64 = row.iter().sum();
                                if s <= 0.0 {
                                    return observed[rng.random_range(0..observed.len())];
                                }
                                let mut u = rng.random::<f64>() * s;
                                for (l, &q) in row.iter().enumerate() {
                                    if u < q {
                                        return l as f64;
                                    }
                                    u -= q;
                                }
                                (levels - 1) as f64
                            })
                            .collect()
                    })
                }
            };
            let drawn = drawn.unwrap_or_else(|| {
                log::warn!(
                    "imputation model for `{}` is degenerate; drawing from observed values",
                    ds.covariates[j].name
                );
                marginal_draw(rng, observed, mis.len())
            });
            for (&i, v) in mis.iter().zip(drawn) {
                values[j][i] = v;
            }
        }
    }

    let covs = ds
        .covariates
        .iter()
        .zip(values)
        .map(|(c, v)| crate::data::Covariate {
            name: c.name.clone(),
            kind: c.kind.clone(),
            values: v,
        })
        .collect();
    ds.with_covariates(covs)
}
