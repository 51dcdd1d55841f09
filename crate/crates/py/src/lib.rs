use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use riaft_core::bart::Predictors;
use riaft_core::data::{read_dataset, write_dataset, SurvivalDataset};
use riaft_core::effects::{
    estimate_ate, estimate_iste, extract_rules, feature_matrix, fit_the_fit, predict_rmst, predict_survival_prob,
    FitTheFitConfig, InterceptMode, RuleConfig, RuleReport,
};
use riaft_core::sampler::{predict_posterior, run_chain, ChainConfig, ExpansionMode, PosteriorDraws};
use riaft_core::select::{aggregate_bootstrap_select, select_variables as core_select, SelectionConfig};
use riaft_core::sim::{
    self, metric_concordance, metric_pehe, metric_selection, true_iste_oracle, AmputationPlan, DgpConfig, DgpMode,
    Hazard, ImputeConfig, ScenarioConfig, Setting,
};
use riaft_core::stats::{rng_from_seed, Summary};
use riaft_core::RiaftError;

create_exception!(riaft, RiaftException, PyException);

fn err(e: RiaftError) -> PyErr {
    RiaftException::new_err(e.to_string())
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn arm_index(arm: usize, n_arms: usize) -> PyResult<usize> {
    if arm == 0 || arm > n_arms {
        return Err(PyValueError::new_err(format!("arm {arm} outside 1..={n_arms}")));
    }
    Ok(arm - 1)
}

/// Clustered right-censored survival data. Clusters and arms are 1-based
/// on the Python side, as on disk.
#[pyclass(name = "Dataset", module = "riaft")]
pub struct PyDataset {
    inner: SurvivalDataset,
}

#[pymethods]
impl PyDataset {
    /// Reads a CSV with columns y, delta, cluster, optional a, then covariates.
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: read_dataset(&path).map_err(err)?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&path, &self.inner).map_err(err)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.n_clusters
    }

    #[getter]
    fn n_arms(&self) -> usize {
        self.inner.n_arms
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names()
    }

    #[getter]
    fn time(&self) -> Vec<f64> {
        self.inner.time.clone()
    }

    #[getter]
    fn event(&self) -> Vec<bool> {
        self.inner.event.clone()
    }

    #[getter]
    fn cluster(&self) -> Vec<usize> {
        self.inner.cluster.iter().map(|k| k + 1).collect()
    }

    #[getter]
    fn treatment(&self) -> Option<Vec<usize>> {
        self.inner.treatment.as_ref().map(|a| a.iter().map(|v| v + 1).collect())
    }

    /// Covariate column by name; missing cells are NaN.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .covariates
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no covariate `{name}`")))
    }

    fn has_missing(&self) -> bool {
        self.inner.has_missing()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, clusters={}, arms={}, covariates={})",
            self.inner.n_rows(),
            self.inner.n_clusters,
            self.inner.n_arms,
            self.inner.n_covariates()
        )
    }
}

/// Posterior draws of one fit.
#[pyclass(name = "Posterior", module = "riaft")]
pub struct PyPosterior {
    inner: PosteriorDraws,
    cluster: Vec<usize>,
}

fn summary_tuple(s: Summary) -> (f64, f64, f64) {
    (s.mean, s.lower, s.upper)
}

#[pymethods]
impl PyPosterior {
    /// Loads a draw file; `dataset` supplies the training cluster labels.
    #[staticmethod]
    fn load(path: PathBuf, dataset: &PyDataset) -> PyResult<Self> {
        let inner = PosteriorDraws::load(&path).map_err(err)?;
        if inner.header.n_rows != dataset.inner.n_rows() {
            return Err(PyValueError::new_err("dataset does not match the fitted rows"));
        }
        Ok(PyPosterior {
            inner,
            cluster: dataset.inner.cluster.clone(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn n_draws(&self) -> usize {
        self.inner.n_draws()
    }

    #[getter]
    fn mu_aft(&self) -> f64 {
        self.inner.mu_aft()
    }

    #[getter]
    fn predictor_names(&self) -> Vec<String> {
        self.inner.header.predictor_names.clone()
    }

    /// Posterior mean of f (log-time scale) per training row.
    fn mean_f(&self) -> PyResult<Vec<f64>> {
        self.inner.posterior_mean_f().map_err(err)
    }

    /// Posterior mean intercept per cluster.
    fn mean_b(&self) -> Vec<f64> {
        self.inner.posterior_mean_b()
    }

    fn sigma2(&self) -> Vec<f64> {
        self.inner.draws.iter().map(|d| d.sigma2).collect()
    }

    fn vip(&self) -> PyResult<BTreeMap<String, f64>> {
        let v = riaft_core::select::average_vip(&self.inner).map_err(err)?;
        Ok(self.inner.header.predictor_names.iter().cloned().zip(v).collect())
    }

    /// Individual effects `(means, lowers, uppers)` of arm `a` versus `b`.
    fn iste(&self, a: usize, b: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.inner.header.n_arms;
        let est = estimate_iste(&self.inner, (arm_index(a, n)?, arm_index(b, n)?)).map_err(err)?;
        let s: Vec<Summary> = (0..est.n_rows())
            .map(|i| Summary::from_draws(&est.draws.iter().map(|d| d[i]).collect::<Vec<_>>()))
            .collect();
        Ok((
            s.iter().map(|x| x.mean).collect(),
            s.iter().map(|x| x.lower).collect(),
            s.iter().map(|x| x.upper).collect(),
        ))
    }

    /// Average effect `(mean, lower, upper)` of arm `a` versus `b`.
    fn ate(&self, a: usize, b: usize) -> PyResult<(f64, f64, f64)> {
        let n = self.inner.header.n_arms;
        let est = estimate_iste(&self.inner, (arm_index(a, n)?, arm_index(b, n)?)).map_err(err)?;
        Ok(summary_tuple(estimate_ate(&est).summary))
    }

    #[pyo3(signature = (row, arm, t, integrated = false, seed = 0))]
    fn survival_prob(&self, row: usize, arm: usize, t: f64, integrated: bool, seed: u64) -> PyResult<(f64, f64, f64)> {
        let mode = if integrated { InterceptMode::Integrated { seed } } else { InterceptMode::InCluster };
        let arm = arm_index(arm, self.inner.header.n_arms)?;
        let (_, s) = predict_survival_prob(&self.inner, &self.cluster, row, arm, t, mode).map_err(err)?;
        Ok(summary_tuple(s))
    }

    #[pyo3(signature = (row, arm, t_star, integrated = false, seed = 0))]
    fn rmst(&self, row: usize, arm: usize, t_star: f64, integrated: bool, seed: u64) -> PyResult<(f64, f64, f64)> {
        let mode = if integrated { InterceptMode::Integrated { seed } } else { InterceptMode::InCluster };
        let arm = arm_index(arm, self.inner.header.n_arms)?;
        let (_, s) = predict_rmst(&self.inner, &self.cluster, row, arm, t_star, mode).map_err(err)?;
        Ok(summary_tuple(s))
    }

    /// Posterior mean of f for new rows (needs a fit with `keep_forests`).
    #[pyo3(signature = (dataset, arm = None))]
    fn predict(&self, dataset: &PyDataset, arm: Option<usize>) -> PyResult<Vec<f64>> {
        let arm = arm.map(|a| arm_index(a, self.inner.header.n_arms)).transpose()?;
        let x = Predictors::from_dataset(&dataset.inner, self.inner.header.treatment_col.is_some()).map_err(err)?;
        let f = predict_posterior(&self.inner, &x, arm).map_err(err)?;
        let n = f.len() as f64;
        Ok((0..dataset.inner.n_rows()).map(|i| f.iter().map(|d| d[i]).sum::<f64>() / n).collect())
    }

    /// Fit-the-fit subgroups for arm `a` versus `b`, as a dict.
    #[pyo3(signature = (dataset, a, b, threshold = 0.01, trees = 200, depth = 3, min_leaf = 20, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn subgroups<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        a: usize,
        b: usize,
        threshold: f64,
        trees: usize,
        depth: usize,
        min_leaf: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let n = self.inner.header.n_arms;
        let pair = (arm_index(a, n)?, arm_index(b, n)?);
        let est = estimate_iste(&self.inner, pair).map_err(err)?;
        let covs = &dataset.inner.covariates;
        let x = feature_matrix(covs).map_err(err)?;
        let mut cfg = FitTheFitConfig {
            threshold,
            ..Default::default()
        };
        cfg.forest.trees = trees;
        cfg.forest.seed = seed;
        let fit = fit_the_fit(&est.means(), &x, &cfg).map_err(err)?;
        let rules = match &fit.forest {
            Some(rf) => extract_rules(rf, covs, &est, &RuleConfig { depth, min_leaf }).map_err(err)?,
            None => Vec::new(),
        };
        let names = fit.selected.iter().map(|&j| covs[j].name.clone()).collect();
        json_to_py(py, &RuleReport::new(pair, names, fit.r2_path, &rules))
    }

    fn __repr__(&self) -> String {
        format!("Posterior(draws={}, rows={})", self.inner.n_draws(), self.inner.header.n_rows)
    }
}

/// Simulates one dataset. Returns `(dataset, truth)` where `truth` holds the
/// cluster intercepts and, for the heterogeneity design, the true GPS and
/// log-time individual effects keyed by 1-based arm pairs.
#[pyfunction]
#[pyo3(signature = (mode = "heterogeneity", setting = "a", hazard = "PH", clusters = 10, cluster_size = 200,
    censoring = 0.5, null_signal = false, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    mode: &str,
    setting: &str,
    hazard: &str,
    clusters: usize,
    cluster_size: usize,
    censoring: f64,
    null_signal: bool,
    seed: u64,
) -> PyResult<(PyDataset, Bound<'py, PyAny>)> {
    let cfg = DgpConfig {
        k: clusters,
        n_k: cluster_size,
        mode: match mode {
            "heterogeneity" => DgpMode::Heterogeneity,
            "varselect" => DgpMode::Varselect,
            _ => return Err(PyValueError::new_err(format!("unknown mode `{mode}`"))),
        },
        setting: match setting.to_ascii_lowercase().as_str() {
            "a" => Setting::A,
            "b" => Setting::B,
            "c" => Setting::C,
            _ => return Err(PyValueError::new_err(format!("unknown setting `{setting}`"))),
        },
        hazard: match hazard.to_ascii_lowercase().as_str() {
            "ph" => Hazard::Ph,
            "nph" => Hazard::Nph,
            _ => return Err(PyValueError::new_err(format!("unknown hazard `{hazard}`"))),
        },
        censoring,
        null_signal,
        seed,
        ..Default::default()
    };
    let s = py.detach(|| sim::simulate(&cfg)).map_err(err)?;
    let t = &s.truth;
    let mut truth = serde_json::Map::new();
    truth.insert("b".into(), serde_json::json!(t.b));
    let censored = s.dataset.event.iter().filter(|&&e| !e).count() as f64 / s.dataset.n_rows() as f64;
    truth.insert("censored_fraction".into(), serde_json::json!(censored));
    truth.insert("censoring_exp_rate".into(), serde_json::json!(t.censoring_rate));
    truth.insert(
        "useful".into(),
        serde_json::json!(cfg.useful_covariates().iter().map(|&j| format!("x{}", j + 1)).collect::<Vec<_>>()),
    );
    if let Some(asg) = &t.assignment {
        truth.insert("gps".into(), serde_json::json!(asg.gps));
        let mut iste = serde_json::Map::new();
        for pair in [(0, 1), (0, 2), (1, 2)] {
            let z = true_iste_oracle(&t.design, &s.dataset.cluster, &t.b, &cfg, pair).map_err(err)?;
            iste.insert(format!("{},{}", pair.0 + 1, pair.1 + 1), serde_json::json!(z));
        }
        truth.insert("iste".into(), serde_json::Value::Object(iste));
        truth.insert("counterfactual_times".into(), serde_json::json!(t.times.counterfactual));
    }
    let truth = json_to_py(py, &truth)?;
    Ok((PyDataset { inner: s.dataset }, truth))
}

/// Runs the sampler.
#[pyfunction]
#[pyo3(signature = (dataset, draws = 4500, burn_in = 1000, trees = 200, seed = 0, chains = 1, thin = 1,
    keep_forests = false, expansion = "per_cluster"))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    dataset: &PyDataset,
    draws: usize,
    burn_in: usize,
    trees: usize,
    seed: u64,
    chains: usize,
    thin: usize,
    keep_forests: bool,
    expansion: &str,
) -> PyResult<PyPosterior> {
    let cfg = ChainConfig {
        draws,
        burn_in,
        m: trees,
        seed,
        chains,
        thin,
        keep_forests,
        expansion: match expansion {
            "per_cluster" => ExpansionMode::PerCluster,
            "global" => ExpansionMode::Global,
            _ => return Err(PyValueError::new_err(format!("unknown expansion `{expansion}`"))),
        },
        ..Default::default()
    };
    let ds = &dataset.inner;
    let inner = py.detach(|| run_chain(ds, &cfg)).map_err(err)?;
    Ok(PyPosterior {
        inner,
        cluster: ds.cluster.clone(),
    })
}

/// Permutation-null variable selection. With `bootstrap > 0` the data are
/// bootstrapped and imputed first and covariates kept when chosen in at
/// least `pi * bootstrap` replicates. Returns one dict per covariate.
#[pyfunction]
#[pyo3(signature = (dataset, permutations = 100, alpha = 0.05, draws = 4500, burn_in = 1000, trees = 20,
    null_draws = 1500, null_burn_in = 500, bootstrap = 0, pi = 0.5, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn select_variables<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    permutations: usize,
    alpha: f64,
    draws: usize,
    burn_in: usize,
    trees: usize,
    null_draws: usize,
    null_burn_in: usize,
    bootstrap: usize,
    pi: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SelectionConfig {
        permutations,
        alpha,
        ..Default::default()
    };
    cfg.chain.draws = draws;
    cfg.chain.burn_in = burn_in;
    cfg.chain.m = trees;
    cfg.null_chain.draws = null_draws;
    cfg.null_chain.burn_in = null_burn_in;
    cfg.null_chain.m = trees;
    let ds = &dataset.inner;
    let res = py
        .detach(|| {
            cfg.validate()?;
            if bootstrap > 0 {
                aggregate_bootstrap_select(ds, bootstrap, pi, &ImputeConfig::default(), &cfg, seed)
            } else {
                core_select(ds, &cfg, seed)
            }
        })
        .map_err(err)?;
    let rows: Vec<serde_json::Value> = (0..res.names.len())
        .map(|j| {
            serde_json::json!({
                "covariate": res.names[j],
                "vip": res.vip[j],
                "threshold": res.threshold[j],
                "selected": res.selected[j],
                "boot_count": res.boot_count.as_ref().map(|c| c[j]),
            })
        })
        .collect();
    json_to_py(py, &rows)
}

/// Imposes missing values with the default multivariate amputation plan.
#[pyfunction]
#[pyo3(signature = (dataset, missingness = 0.4, seed = 0))]
fn ampute(dataset: &PyDataset, missingness: f64, seed: u64) -> PyResult<PyDataset> {
    let plan = AmputationPlan {
        missingness,
        ..Default::default()
    };
    let inner = sim::ampute(&dataset.inner, &plan, &mut rng_from_seed(seed)).map_err(err)?;
    Ok(PyDataset { inner })
}

/// Single chained-equations imputation.
#[pyfunction]
#[pyo3(signature = (dataset, cycles = 10, donors = 5, seed = 0))]
fn impute(dataset: &PyDataset, cycles: usize, donors: usize, seed: u64) -> PyResult<PyDataset> {
    let cfg = ImputeConfig { cycles, donors };
    let inner = sim::chained_impute(&dataset.inner, &cfg, &mut rng_from_seed(seed)).map_err(err)?;
    Ok(PyDataset { inner })
}

/// Runs a benchmark scenario given as a JSON string; returns the report.
#[pyfunction]
fn run_benchmark<'py>(py: Python<'py>, scenario_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ScenarioConfig = serde_json::from_str(scenario_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.detach(|| sim::run_experiment(&cfg)).map_err(err)?;
    json_to_py(py, &report)
}

#[pyfunction]
fn pehe(estimate: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metric_pehe(&estimate, &truth).map_err(err)
}

/// Harrell-type concordance of predicted survival probabilities.
#[pyfunction]
fn concordance(predicted: Vec<f64>, time: Vec<f64>, event: Vec<bool>) -> PyResult<f64> {
    metric_concordance(&predicted, &time, &event).map_err(err)
}

/// Precision, recall, F1 and Type-I error for 0-based covariate indices.
#[pyfunction]
fn selection_metrics<'py>(
    py: Python<'py>,
    selected: Vec<usize>,
    useful: Vec<usize>,
    n_total: usize,
) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &metric_selection(&selected, &useful, n_total))
}

#[pymodule]
fn riaft(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RiaftError", m.py().get_type::<RiaftException>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPosterior>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(select_variables, m)?)?;
    m.add_function(wrap_pyfunction!(ampute, m)?)?;
    m.add_function(wrap_pyfunction!(impute, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(pehe, m)?)?;
    m.add_function(wrap_pyfunction!(concordance, m)?)?;
    m.add_function(wrap_pyfunction!(selection_metrics, m)?)?;
    Ok(())
}
