//! Covariates, treatment assignment and Weibull survival times for the two
//! benchmark designs.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::censoring::solve_censoring_rate;
use crate::data::{ColumnKind, Covariate, SurvivalDataset};
use crate::error::{Result, RiaftError};
use crate::stats::{rng_from_seed, sample_normal, std_normal, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpMode {
    Heterogeneity,
    Varselect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hazard {
    #[serde(rename = "PH", alias = "ph")]
    Ph,
    #[serde(rename = "nPH", alias = "nph")]
    Nph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub n_k: usize,
    pub mode: DgpMode,
    pub setting: Setting,
    pub hazard: Hazard,
    /// Weibull rate per arm; empty picks the design default.
    pub lambda: Vec<f64>,
    pub censoring: f64,
    /// Sd of the cluster intercept in the assignment model.
    pub tau_sd: f64,
    /// Sd of the cluster intercept in the outcome model.
    pub b_sd: f64,
    /// Remove all covariate signal: identical arms in heterogeneity mode,
    /// `q = b` in variable-selection mode.
    pub null_signal: bool,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            k: 10,
            n_k: 200,
            mode: DgpMode::Heterogeneity,
            setting: Setting::A,
            hazard: Hazard::Ph,
            lambda: Vec::new(),
            censoring: 0.5,
            tau_sd: 1.0,
            b_sd: 4.0,
            null_signal: false,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn heterogeneity(setting: Setting, hazard: Hazard) -> Self {
        DgpConfig {
            setting,
            hazard,
            ..Default::default()
        }
    }

    pub fn varselect(hazard: Hazard) -> Self {
        DgpConfig {
            mode: DgpMode::Varselect,
            hazard,
            ..Default::default()
        }
    }

    pub fn n_rows(&self) -> usize {
        self.k * self.n_k
    }

    pub fn n_arms(&self) -> usize {
        match self.mode {
            DgpMode::Heterogeneity => 3,
            DgpMode::Varselect => 1,
        }
    }

    pub fn n_covariates(&self) -> usize {
        match self.mode {
            DgpMode::Heterogeneity => 7,
            DgpMode::Varselect => 28,
        }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        if !self.lambda.is_empty() {
            return self.lambda.clone();
        }
        match self.mode {
            DgpMode::Heterogeneity => vec![5000.0, 800.0, 1200.0],
            DgpMode::Varselect => vec![3000.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_k == 0 {
            return Err(RiaftError::Config("K and n_k must be at least 1".into()));
        }
        let lam = self.lambdas();
        if lam.len() != self.n_arms() {
            return Err(RiaftError::Config(format!(
                "expected {} rate parameters, got {}",
                self.n_arms(),
                lam.len()
            )));
        }
        if lam.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(RiaftError::Config("rate parameters must be positive".into()));
        }
        if !(self.censoring > 0.0 && self.censoring < 1.0) {
            return Err(RiaftError::Config(format!(
                "censoring target must lie in (0, 1), got {}",
                self.censoring
            )));
        }
        if !(self.tau_sd >= 0.0 && self.b_sd >= 0.0) {
            return Err(RiaftError::Config("intercept sds must be nonnegative".into()));
        }
        Ok(())
    }

    /// Useful (signal-carrying) covariate indices, 0-based, for the
    /// variable-selection design.
    pub fn useful_covariates(&self) -> Vec<usize> {
        match (self.mode, self.null_signal) {
            (DgpMode::Varselect, false) => (0..8).collect(),
            (DgpMode::Varselect, true) => Vec::new(),
            (DgpMode::Heterogeneity, _) => (0..7).collect(),
        }
    }
}

fn bern<R: Rng + ?Sized>(rng: &mut R, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Draws the raw covariate rows. Heterogeneity categorical columns take the
/// values 1, 2, 3.
pub fn gen_design<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Vec<Vec<f64>> {
    let n = cfg.n_rows();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let row = match cfg.mode {
            DgpMode::Heterogeneity => {
                let mut r: Vec<f64> = (0..5).map(|_| std_normal(rng)).collect();
                for _ in 0..2 {
                    let u: f64 = rng.random();
                    r.push(if u < 0.3 {
                        1.0
                    } else if u < 0.6 {
                        2.0
                    } else {
                        3.0
                    });
                }
                r
            }
            DgpMode::Varselect => {
                let x1 = bern(rng, 0.5);
                let x2 = bern(rng, 0.5);
                let x3 = std_normal(rng);
                let x4 = std_normal(rng);
                let x5 = sample_normal(rng, 0.3 * x2 - 0.2 * x3, 1.0);
                let x6 = sample_normal(rng, -0.4 * x3 + 0.4 * x4 + 0.3 * x3 * x4, 1.0);
                let x7 = sample_normal(rng, 0.1 * x4 * (x5 - 2.0).powi(2) - 0.1 * x6 * x6, 1.0);
                let x8 = sample_normal(
                    rng,
                    -0.3 * x5 * x5 + 0.5 * x6 + 0.3 * x7 + 0.2 * x6 * x7,
                    1.0,
                );
                let mut r = vec![x1, x2, x3, x4, x5, x6, x7, x8];
                r.extend((0..10).map(|_| std_normal(rng)));
                r.extend((0..10).map(|_| bern(rng, 0.5)));
                r
            }
        };
        rows.push(row);
    }
    rows
}

fn is_categorical(cfg: &DgpConfig, j: usize) -> bool {
    cfg.mode == DgpMode::Heterogeneity && j >= 5
}

/// Packs raw rows into dataset columns.
pub fn design_to_covariates(cfg: &DgpConfig, rows: &[Vec<f64>]) -> Vec<Covariate> {
    (0..cfg.n_covariates())
        .map(|j| {
            if is_categorical(cfg, j) {
                Covariate {
                    name: format!("x{}", j + 1),
                    kind: ColumnKind::Categorical {
                        levels: vec!["1".into(), "2".into(), "3".into()],
                    },
                    values: rows.iter().map(|r| r[j] - 1.0).collect(),
                }
            } else {
                Covariate {
                    name: format!("x{}", j + 1),
                    kind: ColumnKind::Continuous,
                    values: rows.iter().map(|r| r[j]).collect(),
                }
            }
        })
        .collect()
}

/// Inverse of [`design_to_covariates`]: the raw rows the generating formulas
/// operate on.
pub fn covariates_to_design(cfg: &DgpConfig, covs: &[Covariate]) -> Result<Vec<Vec<f64>>> {
    if covs.len() != cfg.n_covariates() {
        return Err(RiaftError::Dimension(format!(
            "expected {} covariates, got {}",
            cfg.n_covariates(),
            covs.len()
        )));
    }
    let n = covs.first().map_or(0, |c| c.values.len());
    Ok((0..n)
        .map(|i| {
            covs.iter()
                .enumerate()
                .map(|(j, c)| c.values[i] + if is_categorical(cfg, j) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect())
}

pub fn gen_covariates<R: Rng + ?Sized>(cfg: &DgpConfig, rng: &mut R) -> Vec<Covariate> {
    design_to_covariates(cfg, &gen_design(cfg, rng))
}

/// Row `i` belongs to cluster `i / n_k`.
pub fn cluster_labels(cfg: &DgpConfig) -> Vec<usize> {
    (0..cfg.n_rows()).map(|i| i / cfg.n_k).collect()
}

/// Log-odds of arms 1 and 2 against arm 3, without the cluster intercept.
pub fn assignment_logits(x: &[f64]) -> [f64; 2] {
    let (x1, x2, x3, x4, x5, x6, x7) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
    let x2s = x2 * x2;
    [
        1.5 + 0.1 * x1 + 0.1 * x2 + 0.1 * x3 + 0.5 * x4 + 0.4 * x5 + 0.2 * x6 + 0.3 * x7
            + 0.4 * x2s
            + 0.4 * x2s * x5,
        0.7 + 0.1 * x1 + 0.3 * x2 + 0.2 * x3 + 0.2 * x4 + 0.1 * x5 + 0.4 * x6 + 0.5 * x7
            - 0.3 * x2 * x4
            + 0.7 * x2s * x4,
    ]
}

pub fn softmax3(l1: f64, l2: f64) -> [f64; 3] {
    let m = l1.max(l2).max(0.0);
    let e = [(l1 - m).exp(), (l2 - m).exp(), (-m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// 0-based arm per row.
    pub arms: Vec<usize>,
    /// True generalized propensity scores per row.
    pub gps: Vec<[f64; 3]>,
    /// Cluster intercepts of the assignment model.
    pub tau: Vec<f64>,
}

/// Draws arms from the random-intercept multinomial logistic model.
pub fn assign_treatment<R: Rng + ?Sized>(
    design: &[Vec<f64>],
    cluster: &[usize],
    cfg: &DgpConfig,
    rng: &mut R,
) -> Result<Assignment> {
    if cfg.mode != DgpMode::Heterogeneity {
        return Err(RiaftError::Config("treatment assignment needs heterogeneity mode".into()));
    }
    let tau: Vec<f64> = (0..cfg.k).map(|_| sample_normal(rng, 0.0, cfg.tau_sd)).collect();
    let mut arms = Vec::with_capacity(design.len());
    let mut gps = Vec::with_capacity(design.len());
    for (x, &c) in design.iter().zip(cluster) {
        let [l1, l2] = assignment_logits(x);
        let p = softmax3(l1 + tau[c], l2 + tau[c]);
        let u: f64 = rng.random();
        arms.push(if u < p[0] {
            0
        } else if u < p[0] + p[1] {
            1
        } else {
            2
        });
        gps.push(p);
    }
    Ok(Assignment { arms, gps, tau })
}

/// `q_a(x, b)` for 0-based arm `a`.
pub fn q_function(cfg: &DgpConfig, x: &[f64], arm: usize, b: f64) -> f64 {
    let s = |v: f64| (PI * v).sin();
    match cfg.mode {
        DgpMode::Varselect => {
            if cfg.null_signal {
                return b;
            }
            let (x1, x2, x3, x4, x5, x6, x7, x8) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
            1.8 * x1 + 0.5 * x2 + 1.1 * x3 - 0.4 * x5.exp() + 0.4 * (x6 - 1.5).powi(2)
                + 0.1 * (x7 - 0.1).powi(3)
                - 5.0 * (0.1 * PI * x4 * x8).sin()
                - 0.4 * x5 * x7
                + b
        }
        DgpMode::Heterogeneity => {
            let arm = if cfg.null_signal { 0 } else { arm };
            let (x1, x2, x3, x4, x5, x6, x7) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
            match (cfg.setting, arm) {
                (Setting::A, 0) | (Setting::B, 0) => {
                    let c7 = if cfg.setting == Setting::A { 0.4 } else { 0.3 };
                    0.1 * x1 + 0.3 * x2 + s(x3) + 0.6 * x4 + 0.5 * x5 + 1.2 * x6 + c7 * x7
                        + 0.3 * x2 * x2
                        + 0.5 * x4 * x5
                        + b
                        - 1.0
                }
                (Setting::A, 1) | (Setting::B, 1) => {
                    let c7 = if cfg.setting == Setting::A { 0.2 } else { 0.1 };
                    0.4 * x1 + 1.2 * s(x2) + 0.4 * x3 + 0.3 * x4 + 1.0 * x5 + 0.8 * x6 + c7 * x7
                        + 0.7 * x1 * x1
                        + 0.4 * x1 * x4
                        + b
                }
                (Setting::A, _) => {
                    0.4 * x1 + 0.9 * x2 + 0.4 * x3 + 0.9 * x4 + 0.4 * x5 + 0.4 * x6 + 0.3 * x7 + b - 2.0
                }
                (Setting::B, _) => {
                    0.4 * s(x1) + 0.9 * x2 + 0.9 * x3 + 0.4 * x4 + 0.4 * x5 + 0.9 * x6 + 0.3 * x7
                        + 0.4 * x4 * x4
                        - 0.3 * x2 * x3
                        + b
                        - 3.0
                }
                (Setting::C, 0) => {
                    0.1 * x1 + 0.3 * x2 + s(x3) + 0.6 * x4 + 0.5 * x5 + 1.2 * x6
                        + 0.3 * x2 * x2
                        + 0.5 * x4 * x5
                        + b
                        - 1.0
                }
                (Setting::C, 1) => {
                    0.4 * x1 + 1.2 * s(x3) + 0.4 * x4 + 0.3 * x5 + 1.0 * x6 + 0.8 * x7
                        + 0.7 * x1 * x1
                        + 0.4 * x1 * x4
                        + b
                }
                (Setting::C, _) => {
                    0.4 * s(x2) + 0.9 * x3 + 0.9 * x4 + 0.4 * x5 + 0.4 * x6 + 0.9 * x7
                        + 0.4 * x4 * x4
                        - 0.3 * x2 * x3
                        + b
                        - 3.0
                }
            }
        }
    }
}

/// `log(lambda_a) + q_a(x, b)`.
pub fn log_rate(cfg: &DgpConfig, x: &[f64], arm: usize, b: f64) -> f64 {
    let lam = cfg.lambdas();
    let a = if cfg.null_signal { 0 } else { arm };
    lam[a].ln() + q_function(cfg, x, arm, b)
}

/// Weibull shape for one row.
pub fn shape(cfg: &DgpConfig, x: &[f64]) -> f64 {
    match cfg.hazard {
        Hazard::Ph => 2.0,
        Hazard::Nph => (0.7 + 0.5 * x[0]).exp(),
    }
}

/// Inverse-transform draw `{-log U / exp(log_rate)}^(1/eta)`.
pub fn weibull_time(u: f64, log_rate: f64, eta: f64) -> f64 {
    (((-u.ln()).ln() - log_rate) / eta).exp()
}

/// `E[log T(a) | x, b]`.
pub fn expected_log_time(cfg: &DgpConfig, x: &[f64], arm: usize, b: f64) -> f64 {
    (-EULER_GAMMA - log_rate(cfg, x, arm, b)) / shape(cfg, x)
}

/// Survival function of [`weibull_time`] draws,
/// `S(t) = exp(-exp(log_rate) t^eta)`.
pub fn weibull_survival(t: f64, log_rate: f64, eta: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    (-(log_rate + eta * t.ln()).exp()).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTimes {
    /// Uncensored time under the assigned arm.
    pub observed: Vec<f64>,
    /// `counterfactual[a][i]`, sharing one uniform per row across arms.
    pub counterfactual: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

/// Draws counterfactual Weibull times for every arm and picks the observed
/// one. `b` holds one intercept per cluster.
pub fn gen_survival_times<R: Rng + ?Sized>(
    design: &[Vec<f64>],
    arms: Option<&[usize]>,
    cluster: &[usize],
    b: &[f64],
    cfg: &DgpConfig,
    rng: &mut R,
) -> SurvivalTimes {
    let j = cfg.n_arms();
    let n = design.len();
    let mut cf = vec![Vec::with_capacity(n); j];
    let mut eta = Vec::with_capacity(n);
    for (x, &c) in design.iter().zip(cluster) {
        let u: f64 = 1.0 - rng.random::<f64>();
        let e = shape(cfg, x);
        eta.push(e);
        for (a, col) in cf.iter_mut().enumerate() {
            col.push(weibull_time(u, log_rate(cfg, x, a, b[c]), e));
        }
    }
    let observed = (0..n)
        .map(|i| cf[arms.map_or(0, |a| a[i])][i])
        .collect();
    SurvivalTimes {
        observed,
        counterfactual: cf,
        eta,
    }
}

/// Everything the generator knows that the analyst does not.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub design: Vec<Vec<f64>>,
    /// Outcome-model intercept per cluster.
    pub b: Vec<f64>,
    pub assignment: Option<Assignment>,
    pub times: SurvivalTimes,
    pub censoring_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub config: DgpConfig,
    pub dataset: SurvivalDataset,
    pub truth: Truth,
}

/// Generates one full replicate from `cfg.seed`.
pub fn simulate(cfg: &DgpConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let design = gen_design(cfg, &mut rng);
    let cluster = cluster_labels(cfg);
    let assignment = match cfg.mode {
        DgpMode::Heterogeneity => Some(assign_treatment(&design, &cluster, cfg, &mut rng)?),
        DgpMode::Varselect => None,
    };
    let b: Vec<f64> = (0..cfg.k).map(|_| sample_normal(&mut rng, 0.0, cfg.b_sd)).collect();
    let times = gen_survival_times(
        &design,
        assignment.as_ref().map(|a| a.arms.as_slice()),
        &cluster,
        &b,
        cfg,
        &mut rng,
    );
    let cens = solve_censoring_rate(&times.observed, cfg.censoring, &mut rng)?;
    let mut dataset = SurvivalDataset::new(
        cens.time,
        cens.event,
        cluster,
        assignment.as_ref().map(|a| a.arms.clone()),
        design_to_covariates(cfg, &design),
    )?;
    if assignment.is_some() {
        dataset.n_arms = 3;
    }
    Ok(SimulatedData {
        config: cfg.clone(),
        dataset,
        truth: Truth {
            design,
            b,
            assignment,
            times,
            censoring_rate: cens.rate,
        },
    })
}
