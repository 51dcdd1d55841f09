//! Replicated simulation experiments: generate, optionally ampute and
//! impute, fit, estimate or select, and score against the generator truth.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::amputation::{ampute, AmputationPlan};
use super::dgp::{simulate, DgpConfig, DgpMode, SimulatedData};
use super::impute::ImputeConfig;
use super::metrics::{
    default_gps_boxes, metric_bias_rmse_by_gps, metric_concordance, metric_pehe, metric_selection, GpsBox,
    SelectionMetrics, SubclassError,
};
use super::oracle::{true_effect, EffectScale};
use crate::effects::{estimate_ate, estimate_iste, functional_draws, functional_effect, Functional, InterceptMode};
use crate::error::{Result, RiaftError};
use crate::sampler::{run_chain, ChainConfig};
use crate::select::{bootstrap_selections, select_variables, SelectionConfig};
use crate::stats::{mean, quantile_sorted, rng_from_seed, stream_seed, variance};

const STREAM_DGP: u64 = 11;
const STREAM_CHAIN: u64 = 12;
const STREAM_AMPUTE: u64 = 13;
const STREAM_SELECT: u64 = 14;
const STREAM_COMPLETE_CASE: u64 = 15;

/// A benchmark scenario; JSON keys mirror the generator config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub dgp: DgpConfig,
    pub replicates: usize,
    pub seed: u64,
    pub chain: ChainConfig,
    /// Arm pairs (0-based); empty means every pair.
    pub pairs: Vec<(usize, usize)>,
    /// Time for survival-probability effects; `None` uses the median of all
    /// counterfactual event times of the replicate.
    pub survival_t: Option<f64>,
    /// Horizon for RMST effects; `None` skips that scale.
    pub rmst_t: Option<f64>,
    pub gps_boxes: Option<Vec<GpsBox>>,
    pub selection: SelectionConfig,
    /// Ampute covariates before selection.
    pub amputation: Option<AmputationPlan>,
    pub impute: ImputeConfig,
    /// Bootstrap-imputed datasets per replicate when amputating.
    pub bootstrap: usize,
    pub pi_grid: Vec<f64>,
    /// Also run selection on the complete cases of amputated data.
    pub complete_case: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            dgp: DgpConfig::default(),
            replicates: 1,
            seed: 0,
            chain: ChainConfig::default(),
            pairs: Vec::new(),
            survival_t: None,
            rmst_t: None,
            gps_boxes: None,
            selection: SelectionConfig::default(),
            amputation: None,
            impute: ImputeConfig::default(),
            bootstrap: 100,
            pi_grid: (1..10).map(|k| k as f64 / 10.0).collect(),
            complete_case: true,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.replicates == 0 {
            return Err(RiaftError::Config("at least one replicate required".into()));
        }
        match self.dgp.mode {
            DgpMode::Heterogeneity => self.chain.validate()?,
            DgpMode::Varselect => {
                self.selection.validate()?;
                if self.amputation.is_some() && self.bootstrap == 0 {
                    return Err(RiaftError::Config("bootstrap count must be at least 1".into()));
                }
                if self.pi_grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                    return Err(RiaftError::Config("pi values must lie in (0, 1)".into()));
                }
            }
        }
        let j = self.dgp.n_arms();
        if self.pairs.iter().any(|&(a, b)| a >= j || b >= j) {
            return Err(RiaftError::Config(format!("arm pairs must lie in 1..={j}")));
        }
        Ok(())
    }

    fn arm_pairs(&self) -> Vec<(usize, usize)> {
        if !self.pairs.is_empty() {
            return self.pairs.clone();
        }
        let j = self.dgp.n_arms();
        (0..j).flat_map(|a| (a + 1..j).map(move |b| (a, b))).collect()
    }

    /// Generator config of replicate `r`.
    pub fn replicate_dgp(&self, r: usize) -> DgpConfig {
        DgpConfig {
            seed: stream_seed(self.seed, STREAM_DGP, r as u64),
            ..self.dgp.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    /// 0-based arms.
    pub pair: (usize, usize),
    pub pehe_log: f64,
    /// PEHE when every individual gets the estimated average effect.
    pub pehe_ate_only: f64,
    pub pehe_surv: f64,
    pub pehe_rmst: Option<f64>,
    pub ate_est: f64,
    pub ate_true: f64,
    pub gps: Vec<SubclassError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub censoring: f64,
    pub survival_t: f64,
    pub concordance: f64,
    pub pairs: Vec<PairMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub method: String,
    pub pi: Option<f64>,
    pub selected: Vec<usize>,
    pub metrics: SelectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarselectReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub censoring: f64,
    /// Per-covariate achieved missingness after amputation.
    pub missingness: Option<Vec<(String, f64)>>,
    pub outcomes: Vec<SelectionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

/// Mean and sample sd over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len();
        MeanSd {
            mean: if n > 0 { mean(v) } else { f64::NAN },
            sd: if n > 1 { (variance(v) * n as f64 / (n - 1) as f64).sqrt() } else { 0.0 },
            n,
        }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ({:.3})", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: (usize, usize),
    pub pehe_log: MeanSd,
    pub pehe_ate_only: MeanSd,
    pub pehe_surv: MeanSd,
    pub pehe_rmst: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassSummary {
    pub pair: (usize, usize),
    pub subclass: usize,
    /// Replicates in which the subclass was occupied.
    pub replicates: usize,
    pub mean_n: f64,
    pub bias: f64,
    pub rmse: f64,
    pub absolute: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub method: String,
    pub pi: Option<f64>,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
    pub type_i: MeanSd,
    /// Selection rate of each covariate over replicates.
    pub variable_rate: Vec<f64>,
}

/// Aggregated results of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: ScenarioConfig,
    pub completed: usize,
    pub failures: Vec<ReplicateFailure>,
    pub heterogeneity: Vec<HeterogeneityReplicate>,
    pub varselect: Vec<VarselectReplicate>,
    pub pair_summary: Vec<PairSummary>,
    pub concordance: Option<MeanSd>,
    pub subclass_summary: Vec<SubclassSummary>,
    pub selection_summary: Vec<SelectionSummary>,
    pub covariate_names: Vec<String>,
    /// Wall-clock seconds per replicate; not part of any table.
    #[serde(skip)]
    pub runtimes: Vec<f64>,
}

fn heterogeneity_replicate(cfg: &ScenarioConfig, r: usize, sim: &SimulatedData) -> Result<HeterogeneityReplicate> {
    let ds = &sim.dataset;
    let truth = &sim.truth;
    let chain = ChainConfig {
        seed: stream_seed(cfg.seed, STREAM_CHAIN, r as u64),
        keep_f: true,
        keep_counterfactual: true,
        ..cfg.chain.clone()
    };
    let draws = run_chain(ds, &chain)?;
    let t = match cfg.survival_t {
        Some(t) => t,
        None => {
            let mut all: Vec<f64> = truth.times.counterfactual.iter().flatten().copied().collect();
            all.sort_by(|a, b| a.total_cmp(b));
            quantile_sorted(&all, 0.5)
        }
    };
    let gps = &truth.assignment.as_ref().expect("heterogeneity replicate has an assignment").gps;
    let boxes = cfg.gps_boxes.clone().unwrap_or_else(default_gps_boxes);
    let mut pairs = Vec::new();
    for pair in cfg.arm_pairs() {
        let iste = estimate_iste(&draws, pair)?;
        let est = iste.means();
        let zeta = true_effect(&truth.design, &ds.cluster, &truth.b, &sim.config, pair, EffectScale::LogTime)?;
        let ate = estimate_ate(&iste).summary.mean;
        let surv_est = functional_effect(&draws, &ds.cluster, pair, Functional::SurvivalProb(t), InterceptMode::InCluster)?;
        let surv_true = true_effect(&truth.design, &ds.cluster, &truth.b, &sim.config, pair, EffectScale::SurvivalProb(t))?;
        let pehe_rmst = match cfg.rmst_t {
            Some(h) => {
                let e = functional_effect(&draws, &ds.cluster, pair, Functional::Rmst(h), InterceptMode::InCluster)?;
                let tr = true_effect(&truth.design, &ds.cluster, &truth.b, &sim.config, pair, EffectScale::Rmst(h))?;
                Some(metric_pehe(&e.means(), &tr)?)
            }
            None => None,
        };
        pairs.push(PairMetrics {
            pair,
            pehe_log: metric_pehe(&est, &zeta)?,
            pehe_ate_only: metric_pehe(&vec![ate; est.len()], &zeta)?,
            pehe_surv: metric_pehe(&surv_est.means(), &surv_true)?,
            pehe_rmst,
            ate_est: ate,
            ate_true: mean(&zeta),
            gps: metric_bias_rmse_by_gps(&est, &zeta, gps, &boxes)?,
        });
    }
    let f = draws.f_draws()?;
    let s = functional_draws(&draws, &f, &ds.cluster, Functional::SurvivalProb(t), InterceptMode::InCluster)?;
    let n = ds.n_rows();
    let pred: Vec<f64> = (0..n).map(|i| s.iter().map(|d| d[i]).sum::<f64>() / s.len() as f64).collect();
    let censoring = ds.event.iter().filter(|&&e| !e).count() as f64 / n as f64;
    Ok(HeterogeneityReplicate {
        replicate: r,
        seed: sim.config.seed,
        censoring,
        survival_t: t,
        concordance: metric_concordance(&pred, &ds.time, &ds.event)?,
        pairs,
    })
}

fn varselect_replicate(cfg: &ScenarioConfig, r: usize, sim: &SimulatedData) -> Result<VarselectReplicate> {
    let ds = &sim.dataset;
    let useful = sim.config.useful_covariates();
    let l = ds.n_covariates();
    let n = ds.n_rows();
    let censoring = ds.event.iter().filter(|&&e| !e).count() as f64 / n as f64;
    let select_seed = stream_seed(cfg.seed, STREAM_SELECT, r as u64);
    let score = |method: &str, pi: Option<f64>, selected: Vec<usize>| SelectionOutcome {
        method: method.into(),
        pi,
        metrics: metric_selection(&selected, &useful, l),
        selected,
    };
    let mut outcomes = Vec::new();
    let missingness = match &cfg.amputation {
        None => {
            let res = select_variables(ds, &cfg.selection, select_seed)?;
            outcomes.push(score("riaft", None, res.selected_indices()));
            None
        }
        Some(plan) => {
            let mut rng = rng_from_seed(stream_seed(cfg.seed, STREAM_AMPUTE, r as u64));
            let amputed = ampute(ds, plan, &mut rng)?;
            let boot = bootstrap_selections(&amputed, cfg.bootstrap, &cfg.impute, &cfg.selection, select_seed)?;
            for &pi in &cfg.pi_grid {
                outcomes.push(score("riaft_bootstrap", Some(pi), boot.select(pi).selected_indices()));
            }
            if cfg.complete_case {
                let rows: Vec<usize> = (0..n).filter(|&i| !amputed.mask.row_incomplete(i)).collect();
                let cc = amputed.select_rows(&rows)?;
                let res = select_variables(&cc, &cfg.selection, stream_seed(cfg.seed, STREAM_COMPLETE_CASE, r as u64))?;
                outcomes.push(score("complete_case", None, res.selected_indices()));
            }
            Some(amputed.validate().column_missingness)
        }
    };
    Ok(VarselectReplicate {
        replicate: r,
        seed: sim.config.seed,
        censoring,
        missingness,
        outcomes,
    })
}

enum Replicate {
    Het(HeterogeneityReplicate),
    Vs(VarselectReplicate),
}

fn summarize_pairs(reps: &[HeterogeneityReplicate]) -> Vec<PairSummary> {
    let Some(first) = reps.first() else { return Vec::new() };
    (0..first.pairs.len())
        .map(|p| {
            let col = |f: fn(&PairMetrics) -> f64| MeanSd::of(&reps.iter().map(|r| f(&r.pairs[p])).collect::<Vec<_>>());
            let rmst: Vec<f64> = reps.iter().filter_map(|r| r.pairs[p].pehe_rmst).collect();
            PairSummary {
                pair: first.pairs[p].pair,
                pehe_log: col(|m| m.pehe_log),
                pehe_ate_only: col(|m| m.pehe_ate_only),
                pehe_surv: col(|m| m.pehe_surv),
                pehe_rmst: (!rmst.is_empty()).then(|| MeanSd::of(&rmst)),
            }
        })
        .collect()
}

fn summarize_subclasses(reps: &[HeterogeneityReplicate]) -> Vec<SubclassSummary> {
    let Some(first) = reps.first() else { return Vec::new() };
    let mut out = Vec::new();
    for p in 0..first.pairs.len() {
        let mut by_class: std::collections::BTreeMap<usize, Vec<&SubclassError>> = Default::default();
        for r in reps {
            for e in &r.pairs[p].gps {
                by_class.entry(e.subclass).or_default().push(e);
            }
        }
        for (subclass, es) in by_class {
            let k = es.len() as f64;
            let me = es.iter().map(|e| e.mean_est).sum::<f64>() / k;
            let mt = es.iter().map(|e| e.mean_truth).sum::<f64>() / k;
            let absolute = mt.abs() < 1e-8;
            out.push(SubclassSummary {
                pair: first.pairs[p].pair,
                subclass,
                replicates: es.len(),
                mean_n: es.iter().map(|e| e.n as f64).sum::<f64>() / k,
                bias: if absolute { me - mt } else { (me - mt) / mt.abs() },
                rmse: (es.iter().map(|e| e.sq_error).sum::<f64>() / k).sqrt(),
                absolute,
            });
        }
    }
    out
}

fn summarize_selection(reps: &[VarselectReplicate], l: usize) -> Vec<SelectionSummary> {
    let Some(first) = reps.first() else { return Vec::new() };
    (0..first.outcomes.len())
        .map(|k| {
            let outs: Vec<&SelectionOutcome> = reps.iter().map(|r| &r.outcomes[k]).collect();
            let opt = |f: fn(&SelectionMetrics) -> Option<f64>| {
                MeanSd::of(&outs.iter().filter_map(|o| f(&o.metrics)).collect::<Vec<_>>())
            };
            let mut rate = vec![0.0; l];
            for o in &outs {
                for &j in &o.selected {
                    rate[j] += 1.0 / outs.len() as f64;
                }
            }
            SelectionSummary {
                method: first.outcomes[k].method.clone(),
                pi: first.outcomes[k].pi,
                precision: opt(|m| m.precision),
                recall: opt(|m| m.recall),
                f1: MeanSd::of(&outs.iter().map(|o| o.metrics.f1).collect::<Vec<_>>()),
                type_i: opt(|m| m.type_i),
                variable_rate: rate,
            }
        })
        .collect()
}

/// Runs `cfg.replicates` seeded replicates in parallel. Failed replicates
/// are logged and counted; the aggregate covers the completed ones.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let results: Vec<(usize, Result<Replicate>, f64)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let out = simulate(&cfg.replicate_dgp(r)).and_then(|sim| match cfg.dgp.mode {
                DgpMode::Heterogeneity => heterogeneity_replicate(cfg, r, &sim).map(Replicate::Het),
                DgpMode::Varselect => varselect_replicate(cfg, r, &sim).map(Replicate::Vs),
            });
            log::info!("{}: replicate {} of {} done", cfg.name, r + 1, cfg.replicates);
            (r, out, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut report = MetricsReport {
        scenario: cfg.clone(),
        completed: 0,
        failures: Vec::new(),
        heterogeneity: Vec::new(),
        varselect: Vec::new(),
        pair_summary: Vec::new(),
        concordance: None,
        subclass_summary: Vec::new(),
        selection_summary: Vec::new(),
        covariate_names: Vec::new(),
        runtimes: Vec::new(),
    };
    for (r, out, secs) in results {
        report.runtimes.push(secs);
        match out {
            Ok(Replicate::Het(h)) => report.heterogeneity.push(h),
            Ok(Replicate::Vs(v)) => report.varselect.push(v),
            Err(e) => {
                log::warn!("{}: replicate {} failed: {e}", cfg.name, r + 1);
                report.failures.push(ReplicateFailure {
                    replicate: r,
                    error: e.to_string(),
                });
            }
        }
    }
    report.completed = report.heterogeneity.len() + report.varselect.len();
    if report.completed == 0 {
        return Err(RiaftError::Invariant(format!("all {} replicates failed", cfg.replicates)));
    }
    let l = cfg.dgp.n_covariates();
    report.covariate_names = (1..=l).map(|j| format!("x{j}")).collect();
    report.pair_summary = summarize_pairs(&report.heterogeneity);
    report.subclass_summary = summarize_subclasses(&report.heterogeneity);
    if !report.heterogeneity.is_empty() {
        report.concordance = Some(MeanSd::of(
            &report.heterogeneity.iter().map(|h| h.concordance).collect::<Vec<_>>(),
        ));
    }
    report.selection_summary = summarize_selection(&report.varselect, l);
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl MetricsReport {
    /// The best `pi` of a method by mean F1 (first on ties).
    pub fn best_pi(&self, method: &str) -> Option<&SelectionSummary> {
        self.selection_summary
            .iter()
            .filter(|s| s.method == method)
            .fold(None, |best: Option<&SelectionSummary>, s| match best {
                Some(b) if b.f1.mean >= s.f1.mean => Some(b),
                _ => Some(s),
            })
    }

    /// Writes the metric tables (CSV) and per-replicate details (JSON) into
    /// `dir`; returns the written paths.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if !self.pair_summary.is_empty() {
            let path = dir.join("pehe.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([
                "pair",
                "pehe_log_mean",
                "pehe_log_sd",
                "pehe_ate_only_mean",
                "pehe_ate_only_sd",
                "pehe_surv_mean",
                "pehe_surv_sd",
                "pehe_rmst_mean",
                "pehe_rmst_sd",
                "replicates",
            ])?;
            for s in &self.pair_summary {
                w.write_record([
                    format!("{}-{}", s.pair.0 + 1, s.pair.1 + 1),
                    s.pehe_log.mean.to_string(),
                    s.pehe_log.sd.to_string(),
                    s.pehe_ate_only.mean.to_string(),
                    s.pehe_ate_only.sd.to_string(),
                    s.pehe_surv.mean.to_string(),
                    s.pehe_surv.sd.to_string(),
                    fmt_opt(s.pehe_rmst.map(|m| m.mean)),
                    fmt_opt(s.pehe_rmst.map(|m| m.sd)),
                    s.pehe_log.n.to_string(),
                ])?;
            }
            w.flush()?;
            written.push(path);

            let path = dir.join("gps_subclasses.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["pair", "subclass", "replicates", "mean_n", "bias", "bias_kind", "rmse"])?;
            for s in &self.subclass_summary {
                w.write_record([
                    format!("{}-{}", s.pair.0 + 1, s.pair.1 + 1),
                    s.subclass.to_string(),
                    s.replicates.to_string(),
                    s.mean_n.to_string(),
                    s.bias.to_string(),
                    if s.absolute { "absolute" } else { "relative" }.to_string(),
                    s.rmse.to_string(),
                ])?;
            }
            w.flush()?;
            written.push(path);
        }
        if !self.selection_summary.is_empty() {
            let path = dir.join("selection.csv");
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec![
                "method".to_string(),
                "pi".into(),
                "precision_mean".into(),
                "precision_sd".into(),
                "recall_mean".into(),
                "recall_sd".into(),
                "f1_mean".into(),
                "f1_sd".into(),
                "type_i_mean".into(),
                "type_i_sd".into(),
            ];
            header.extend(self.covariate_names.iter().map(|n| format!("rate_{n}")));
            w.write_record(&header)?;
            for s in &self.selection_summary {
                let mut row = vec![
                    s.method.clone(),
                    fmt_opt(s.pi),
                    s.precision.mean.to_string(),
                    s.precision.sd.to_string(),
                    s.recall.mean.to_string(),
                    s.recall.sd.to_string(),
                    s.f1.mean.to_string(),
                    s.f1.sd.to_string(),
                    s.type_i.mean.to_string(),
                    s.type_i.sd.to_string(),
                ];
                row.extend(s.variable_rate.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
            written.push(path);
        }
        let path = dir.join("replicates.json");
        serde_json::to_writer_pretty(std::fs::File::create(&path)?, self)?;
        written.push(path);
        Ok(written)
    }
}
