use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use riaft_core::bart::Predictors;
use riaft_core::data::{codebook_path, read_dataset, write_dataset, SurvivalDataset};
use riaft_core::effects::{
    estimate_ate, extract_rules, feature_matrix, fit_the_fit, functional_draws, write_ate_csv, write_iste_csv,
    Functional, InterceptMode, IsteEstimate, RuleReport,
};
use riaft_core::sampler::{predict_posterior, run_chain, ChainConfig, ExpansionMode, PosteriorDraws};
use riaft_core::select::{aggregate_bootstrap_select, average_vip, select_variables};
use riaft_core::sim::{self, run_experiment, true_iste_oracle, DgpMode, Hazard, Setting, SimulatedData};
use riaft_core::stats::{rng_from_seed, Summary};
use serde_json::json;

use crate::config::{all_pairs, RunConfig};
use crate::manifest::Run;
use crate::{
    AmputeArgs, BenchmarkArgs, ChainArgs, Common, ExpansionArg, FitArgs, HazardArg, ImputeArgs, IsteArgs, ModeArg,
    PredictArgs, ScaleArgs, SelectArgs, SettingArg, SimulateArgs, SubgroupArgs,
};

fn seed_of(c: &Common, cfg: &RunConfig) -> u64 {
    c.seed.or(cfg.seed).unwrap_or(0)
}

fn jobs() -> usize {
    rayon::current_num_threads()
}

fn apply_chain(chain: &mut ChainConfig, a: &ChainArgs) {
    if let Some(v) = a.draws {
        chain.draws = v;
    }
    if let Some(v) = a.burn_in {
        chain.burn_in = v;
    }
    if let Some(v) = a.thin {
        chain.thin = v;
    }
    if let Some(v) = a.trees {
        chain.m = v;
    }
    if let Some(v) = a.chains {
        chain.chains = v;
    }
    if let Some(v) = a.expansion {
        chain.expansion = match v {
            ExpansionArg::PerCluster => ExpansionMode::PerCluster,
            ExpansionArg::Global => ExpansionMode::Global,
        };
    }
    if let Some(v) = a.progress {
        chain.progress_every = v;
    }
}

fn load_data(run: &mut Run, path: &Path) -> Result<SurvivalDataset> {
    let ds = read_dataset(&run.input(path)).with_context(|| format!("reading {}", path.display()))?;
    let cb = codebook_path(path);
    if cb.exists() {
        run.input(&cb);
    }
    Ok(ds)
}

fn load_draws(run: &mut Run, path: &Path) -> Result<PosteriorDraws> {
    PosteriorDraws::load(&run.input(path)).with_context(|| format!("reading draws {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    )))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_data(run: &mut Run, name: &str, ds: &SurvivalDataset) -> Result<()> {
    let path = run.output(name);
    write_dataset(&path, ds)?;
    run.record(codebook_path(&path));
    Ok(())
}

pub fn simulate(c: &Common, cfg: RunConfig, a: SimulateArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut d = cfg.dgp;
    if let Some(m) = a.mode {
        d.mode = match m {
            ModeArg::Heterogeneity => DgpMode::Heterogeneity,
            ModeArg::Varselect => DgpMode::Varselect,
        };
    }
    if let Some(s) = a.setting {
        d.setting = match s {
            SettingArg::A => Setting::A,
            SettingArg::B => Setting::B,
            SettingArg::C => Setting::C,
        };
    }
    if let Some(h) = a.hazard {
        d.hazard = match h {
            HazardArg::Ph => Hazard::Ph,
            HazardArg::Nph => Hazard::Nph,
        };
    }
    if let Some(v) = a.clusters {
        d.k = v;
    }
    if let Some(v) = a.cluster_size {
        d.n_k = v;
    }
    if let Some(v) = a.censoring {
        d.censoring = v;
    }
    d.null_signal |= a.null_signal;
    d.seed = seed;
    let sim = sim::simulate(&d)?;
    let censored = sim.dataset.event.iter().filter(|&&e| !e).count() as f64 / sim.dataset.n_rows() as f64;
    log::info!("simulated {} rows, {:.3} censored", sim.dataset.n_rows(), censored);
    let mut run = Run::new("simulate", &c.out_dir)?;
    write_data(&mut run, "data.csv", &sim.dataset)?;
    if !a.no_oracle {
        write_truth_csv(&run.output("truth.csv"), &sim)?;
        let useful: Vec<String> = d
            .useful_covariates()
            .iter()
            .map(|&j| sim.dataset.covariates[j].name.clone())
            .collect();
        let summary = json!({
            "censored_fraction": censored,
            "censoring_exp_rate": sim.truth.censoring_rate,
            "b": sim.truth.b,
            "tau": sim.truth.assignment.as_ref().map(|x| &x.tau),
            "useful": useful,
        });
        write_json(&run.output("truth.json"), &summary)?;
    }
    run.finish(seed, jobs(), &json!({ "dgp": d }))?;
    Ok(())
}

fn write_truth_csv(path: &Path, sim: &SimulatedData) -> Result<()> {
    let t = &sim.truth;
    let cluster = &sim.dataset.cluster;
    let mut w = csv_writer(path)?;
    match &t.assignment {
        Some(asg) => {
            let pairs = all_pairs(3);
            let iste = pairs
                .iter()
                .map(|&p| true_iste_oracle(&t.design, cluster, &t.b, &sim.config, p))
                .collect::<riaft_core::Result<Vec<_>>>()?;
            let mut header: Vec<String> = ["row", "cluster", "arm", "b", "eta", "gps_1", "gps_2", "gps_3"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            header.extend((1..=3).map(|j| format!("t_{j}")));
            header.extend(pairs.iter().map(|p| format!("iste_{}_{}", p.0 + 1, p.1 + 1)));
            w.write_record(&header)?;
            for i in 0..cluster.len() {
                let mut rec = vec![
                    (i + 1).to_string(),
                    (cluster[i] + 1).to_string(),
                    (asg.arms[i] + 1).to_string(),
                    t.b[cluster[i]].to_string(),
                    t.times.eta[i].to_string(),
                ];
                rec.extend(asg.gps[i].iter().map(|g| g.to_string()));
                rec.extend(t.times.counterfactual.iter().map(|cf| cf[i].to_string()));
                rec.extend(iste.iter().map(|z| z[i].to_string()));
                w.write_record(&rec)?;
            }
        }
        None => {
            w.write_record(["row", "cluster", "b", "eta", "t"])?;
            for i in 0..cluster.len() {
                w.write_record([
                    (i + 1).to_string(),
                    (cluster[i] + 1).to_string(),
                    t.b[cluster[i]].to_string(),
                    t.times.eta[i].to_string(),
                    t.times.observed[i].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit(c: &Common, cfg: RunConfig, a: FitArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("fit", &c.out_dir)?;
    let ds = load_data(&mut run, &a.data)?;
    let mut chain = cfg.chain;
    apply_chain(&mut chain, &a.chain);
    chain.seed = seed;
    chain.keep_forests |= a.keep_forests;
    let draws = run_chain(&ds, &chain)?;
    draws.save(&run.output("draws.jsonl"))?;

    let vip = average_vip(&draws)?;
    let mut w = csv_writer(&run.output("vip.csv"))?;
    w.write_record(["predictor", "vip"])?;
    for (name, v) in draws.header.predictor_names.iter().zip(&vip) {
        w.write_record([name.clone(), v.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(&run.output("intercepts.csv"))?;
    w.write_record(["cluster", "mean", "lower", "upper"])?;
    for k in 0..draws.header.n_clusters {
        let b: Vec<f64> = draws.draws.iter().map(|d| d.b[k]).collect();
        let s = Summary::from_draws(&b);
        w.write_record([(k + 1).to_string(), s.mean.to_string(), s.lower.to_string(), s.upper.to_string()])?;
    }
    w.flush()?;
    run.finish(seed, jobs(), &json!({ "chain": chain }))?;
    Ok(())
}

fn functional_of(s: &ScaleArgs) -> Result<Option<Functional>> {
    Ok(match (s.survival_t, s.rmst) {
        (Some(_), Some(_)) => bail!("choose one of --survival-t and --rmst"),
        (Some(t), None) => Some(Functional::SurvivalProb(t)),
        (None, Some(t)) => Some(Functional::Rmst(t)),
        (None, None) => None,
    })
}

fn intercept_mode(s: &ScaleArgs, seed: u64) -> InterceptMode {
    if s.integrated {
        InterceptMode::Integrated { seed }
    } else {
        InterceptMode::InCluster
    }
}

fn scale_json(s: &ScaleArgs) -> serde_json::Value {
    json!({ "survival_t": s.survival_t, "rmst": s.rmst, "integrated": s.integrated })
}

fn as_refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|x| x.as_slice()).collect()
}

fn summarize_rows(values: &[Vec<f64>], n: usize) -> Vec<Summary> {
    (0..n)
        .map(|i| Summary::from_draws(&values.iter().map(|d| d[i]).collect::<Vec<_>>()))
        .collect()
}

pub fn predict(c: &Common, cfg: RunConfig, a: PredictArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("predict", &c.out_dir)?;
    let draws = load_draws(&mut run, &a.draws)?;
    let ds = load_data(&mut run, &a.data)?;
    let arm = match a.arm {
        Some(0) => bail!("arms are 1-based"),
        other => other.map(|v| v - 1),
    };
    let x = Predictors::from_dataset(&ds, draws.header.treatment_col.is_some())?;
    let f = predict_posterior(&draws, &x, arm)?;
    let mode = intercept_mode(&a.scale, seed);
    let values = match functional_of(&a.scale)? {
        Some(fun) => functional_draws(&draws, &as_refs(&f), &ds.cluster, fun, mode)?,
        None => match mode {
            InterceptMode::InCluster => {
                if ds.cluster.iter().any(|&k| k >= draws.header.n_clusters) {
                    bail!("cluster label outside the fitted clusters; use --integrated");
                }
                f.iter()
                    .zip(&draws.draws)
                    .map(|(fd, d)| fd.iter().zip(&ds.cluster).map(|(v, &k)| v + d.b[k]).collect())
                    .collect()
            }
            // the intercept has mean zero over new clusters
            InterceptMode::Integrated { .. } => f,
        },
    };
    let mut w = csv_writer(&run.output("predictions.csv"))?;
    w.write_record(["row", "cluster", "mean", "lower", "upper"])?;
    for (i, s) in summarize_rows(&values, ds.n_rows()).iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            (ds.cluster[i] + 1).to_string(),
            s.mean.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
        ])?;
    }
    w.flush()?;
    let config = json!({ "arm": a.arm, "scale": scale_json(&a.scale) });
    run.finish(seed, jobs(), &config)?;
    Ok(())
}

/// Per-draw values for every row of `ds` under `arm`, on the requested scale.
fn arm_values(
    draws: &PosteriorDraws,
    ds: &SurvivalDataset,
    arm: usize,
    out_of_sample: bool,
    functional: Option<Functional>,
    mode: InterceptMode,
) -> Result<Vec<Vec<f64>>> {
    let f: Vec<Vec<f64>> = if out_of_sample {
        let x = Predictors::from_dataset(ds, true)?;
        predict_posterior(draws, &x, Some(arm))?
    } else {
        if ds.n_rows() != draws.header.n_rows {
            bail!(
                "data has {} rows but the fit had {}; pass --out-of-sample for new data",
                ds.n_rows(),
                draws.header.n_rows
            );
        }
        draws.arm_draws(arm)?.iter().map(|v| v.to_vec()).collect()
    };
    Ok(match functional {
        Some(fun) => functional_draws(draws, &as_refs(&f), &ds.cluster, fun, mode)?,
        None => f,
    })
}

fn resolve_pairs(draws: &PosteriorDraws, pairs: Vec<(usize, usize)>) -> Result<Vec<(usize, usize)>> {
    let n = draws.header.n_arms;
    if draws.header.treatment_col.is_none() {
        bail!("the model was fitted without a treatment column");
    }
    let pairs = if pairs.is_empty() { all_pairs(n) } else { pairs };
    if let Some(p) = pairs.iter().find(|p| p.0 >= n || p.1 >= n) {
        bail!("arm pair {},{} outside 1..={n}", p.0 + 1, p.1 + 1);
    }
    Ok(pairs)
}

fn effect_estimate(
    draws: &PosteriorDraws,
    ds: &SurvivalDataset,
    pair: (usize, usize),
    out_of_sample: bool,
    functional: Option<Functional>,
    mode: InterceptMode,
) -> Result<IsteEstimate> {
    let a = arm_values(draws, ds, pair.0, out_of_sample, functional, mode)?;
    let b = arm_values(draws, ds, pair.1, out_of_sample, functional, mode)?;
    let diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    Ok(IsteEstimate::from_draws(pair, diff)?)
}

pub fn iste(c: &Common, cfg: RunConfig, a: IsteArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("iste", &c.out_dir)?;
    let draws = load_draws(&mut run, &a.draws)?;
    let ds = load_data(&mut run, &a.data)?;
    let pairs = resolve_pairs(&draws, a.pairs)?;
    let functional = functional_of(&a.scale)?;
    let mode = intercept_mode(&a.scale, seed);
    let mut ates = Vec::new();
    for &pair in &pairs {
        let est = effect_estimate(&draws, &ds, pair, a.out_of_sample, functional, mode)?;
        let path = run.output(&format!("iste_{}_{}.csv", pair.0 + 1, pair.1 + 1));
        write_iste_csv(BufWriter::new(File::create(&path)?), &est, &ds.cluster)?;
        ates.push(estimate_ate(&est));
    }
    let path = run.output("ate.csv");
    write_ate_csv(BufWriter::new(File::create(&path)?), &ates)?;
    let config = json!({
        "pairs": pairs.iter().map(|p| (p.0 + 1, p.1 + 1)).collect::<Vec<_>>(),
        "out_of_sample": a.out_of_sample,
        "scale": scale_json(&a.scale),
    });
    run.finish(seed, jobs(), &config)?;
    Ok(())
}

pub fn subgroups(c: &Common, cfg: RunConfig, a: SubgroupArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("subgroups", &c.out_dir)?;
    let draws = load_draws(&mut run, &a.draws)?;
    let ds = load_data(&mut run, &a.data)?;
    let pairs = resolve_pairs(&draws, a.pairs)?;
    let mut ftf = cfg.fit_the_fit;
    if let Some(v) = a.threshold {
        ftf.threshold = v;
    }
    if let Some(v) = a.forest_trees {
        ftf.forest.trees = v;
    }
    ftf.forest.seed = seed;
    let mut rules_cfg = cfg.rules;
    if let Some(v) = a.depth {
        rules_cfg.depth = v;
    }
    if let Some(v) = a.min_leaf {
        rules_cfg.min_leaf = v;
    }
    let x = feature_matrix(&ds.covariates).context("subgroup discovery needs complete covariates")?;
    for &pair in &pairs {
        let est = effect_estimate(&draws, &ds, pair, a.out_of_sample, None, InterceptMode::InCluster)?;
        let fit = fit_the_fit(&est.means(), &x, &ftf)?;
        let rules = match &fit.forest {
            Some(rf) => extract_rules(rf, &ds.covariates, &est, &rules_cfg)?,
            None => Vec::new(),
        };
        let names = fit.selected.iter().map(|&j| ds.covariates[j].name.clone()).collect();
        let report = RuleReport::new(pair, names, fit.r2_path.clone(), &rules);
        write_json(&run.output(&format!("subgroups_{}_{}.json", pair.0 + 1, pair.1 + 1)), &report)?;
    }
    let config = json!({
        "pairs": pairs.iter().map(|p| (p.0 + 1, p.1 + 1)).collect::<Vec<_>>(),
        "out_of_sample": a.out_of_sample,
        "fit_the_fit": ftf,
        "rules": rules_cfg,
    });
    run.finish(seed, jobs(), &config)?;
    Ok(())
}

pub fn select(c: &Common, cfg: RunConfig, a: SelectArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("select", &c.out_dir)?;
    let ds = load_data(&mut run, &a.data)?;
    let mut sel = cfg.selection.clone();
    apply_chain(&mut sel.chain, &a.chain);
    if let Some(v) = a.permutations {
        sel.permutations = v;
    }
    if let Some(v) = a.alpha {
        sel.alpha = v;
    }
    if let Some(v) = a.null_draws {
        sel.null_chain.draws = v;
    }
    if let Some(v) = a.null_burn_in {
        sel.null_chain.burn_in = v;
    }
    if let Some(v) = a.null_trees {
        sel.null_chain.m = v;
    }
    sel.validate()?;
    let b = a.bootstrap.unwrap_or(cfg.bootstrap);
    let pi = a.pi.unwrap_or(cfg.pi);
    let res = if b > 0 {
        RunConfig { pi, ..cfg.clone() }.check_pi()?;
        aggregate_bootstrap_select(&ds, b, pi, &cfg.impute, &sel, seed)?
    } else {
        if ds.has_missing() {
            bail!("covariates have missing values; pass --bootstrap B to impute before selecting");
        }
        select_variables(&ds, &sel, seed)?
    };
    let path = run.output("selection.csv");
    res.write_csv(BufWriter::new(File::create(&path)?))?;
    log::info!("selected: {}", res.selected_names().join(", "));
    let config = json!({ "selection": sel, "bootstrap": b, "pi": pi, "impute": cfg.impute });
    run.finish(seed, jobs(), &config)?;
    Ok(())
}

pub fn ampute(c: &Common, cfg: RunConfig, a: AmputeArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("ampute", &c.out_dir)?;
    let ds = load_data(&mut run, &a.data)?;
    let mut plan = cfg.amputation;
    if let Some(v) = a.missingness {
        plan.missingness = v;
    }
    let out = sim::ampute(&ds, &plan, &mut rng_from_seed(seed))?;
    write_data(&mut run, "amputed.csv", &out)?;
    let n = out.n_rows() as f64;
    let mut w = csv_writer(&run.output("missingness.csv"))?;
    w.write_record(["covariate", "missing", "proportion"])?;
    for (j, cov) in out.covariates.iter().enumerate() {
        let m = out.mask.column_count(j);
        w.write_record([cov.name.clone(), m.to_string(), (m as f64 / n).to_string()])?;
    }
    let rows = (0..out.n_rows()).filter(|&i| out.mask.row_incomplete(i)).count();
    w.write_record(["any".to_string(), rows.to_string(), (rows as f64 / n).to_string()])?;
    w.flush()?;
    run.finish(seed, jobs(), &json!({ "amputation": plan }))?;
    Ok(())
}

pub fn impute(c: &Common, cfg: RunConfig, a: ImputeArgs) -> Result<()> {
    let seed = seed_of(c, &cfg);
    let mut run = Run::new("impute", &c.out_dir)?;
    let ds = load_data(&mut run, &a.data)?;
    let mut imp = cfg.impute;
    if let Some(v) = a.cycles {
        imp.cycles = v;
    }
    if let Some(v) = a.donors {
        imp.donors = v;
    }
    let out = sim::chained_impute(&ds, &imp, &mut rng_from_seed(seed))?;
    write_data(&mut run, "imputed.csv", &out)?;
    run.finish(seed, jobs(), &json!({ "impute": imp }))?;
    Ok(())
}

pub fn benchmark(c: &Common, cfg: RunConfig, a: BenchmarkArgs) -> Result<()> {
    let seed = c
        .seed
        .or(cfg.seed)
        .ok_or_else(|| anyhow!("benchmark needs a master seed (--seed or `seed` in the config)"))?;
    let mut sc = cfg.scenario;
    sc.seed = seed;
    if let Some(v) = a.replicates {
        sc.replicates = v;
    }
    if let Some(v) = a.name {
        sc.name = v;
    }
    if let Some(v) = a.bootstrap {
        sc.bootstrap = v;
    }
    apply_chain(&mut sc.chain, &a.chain);
    let mut run = Run::new("benchmark", &c.out_dir)?;
    let report = run_experiment(&sc)?;
    if !report.failures.is_empty() {
        log::warn!("{} of {} replicates failed", report.failures.len(), sc.replicates);
    }
    for p in report.write_tables(&run.out_dir)? {
        run.record(p);
    }
    run.replicate_runtimes = Some(report.runtimes.clone());
    run.finish(seed, jobs(), &json!({ "scenario": sc }))?;
    Ok(())
}
