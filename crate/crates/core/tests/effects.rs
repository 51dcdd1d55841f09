mod common;

use common::{cont, short_chain, toy};
use rand::Rng;
use riaft_core::data::{ColumnKind, Covariate};
use riaft_core::effects::*;
use riaft_core::sampler::{run_chain, ChainConfig};
use riaft_core::sim::{run_experiment, DgpConfig, ScenarioConfig};
use riaft_core::stats::{norm_sf, rng_from_seed, sample_normal};

fn fitted(arms: usize, keep_forests: bool) -> (common::Toy, riaft_core::sampler::PosteriorDraws) {
    let t = toy(90, 3, 3, arms, 0.5, 21);
    let d = run_chain(&t.ds, &ChainConfig { keep_forests, ..short_chain(3) }).unwrap();
    (t, d)
}

#[test]
fn iste_is_antisymmetric_and_consistent_with_ate() {
    let (_, d) = fitted(3, false);
    let ab = estimate_iste(&d, (0, 2)).unwrap();
    let ba = estimate_iste(&d, (2, 0)).unwrap();
    for (x, y) in ab.draws.iter().zip(&ba.draws) {
        for (p, q) in x.iter().zip(y) {
            assert_eq!(*p, -*q);
        }
    }
    let ate = estimate_ate(&ab);
    let mean_of_means = ab.means().iter().sum::<f64>() / ab.n_rows() as f64;
    assert!((ate.summary.mean - mean_of_means).abs() < 1e-12);
    assert_eq!(estimate_ate(&ba).summary.mean, -ate.summary.mean);
    for s in &ab.summary {
        assert!(s.lower <= s.mean && s.mean <= s.upper);
    }
}

#[test]
fn same_arm_gives_zero_effects() {
    let (_, d) = fitted(3, false);
    let z = estimate_iste(&d, (1, 1)).unwrap();
    assert!(z.draws.iter().flatten().all(|&v| v == 0.0));
    let ate = estimate_ate(&z);
    assert_eq!((ate.summary.lower, ate.summary.upper), (0.0, 0.0));
}

#[test]
fn stored_and_forest_effects_agree() {
    let (t, d) = fitted(2, true);
    let a = estimate_iste(&d, (0, 1)).unwrap();
    let b = estimate_iste_new(&d, &t.ds, (0, 1)).unwrap();
    for (x, y) in a.draws.iter().zip(&b.draws) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() < 1e-9);
        }
    }
    let (_, no_forests) = fitted(2, false);
    assert!(estimate_iste_new(&no_forests, &t.ds, (0, 1)).is_err());
}

#[test]
fn arm_out_of_range_is_rejected() {
    let (_, d) = fitted(2, false);
    assert!(estimate_iste(&d, (0, 2)).is_err());
}

#[test]
fn constant_effect_has_zero_width_ate() {
    let draws = vec![vec![0.7; 25]; 40];
    let ate = estimate_ate(&IsteEstimate::from_draws((0, 1), draws).unwrap());
    assert!((ate.summary.mean - 0.7).abs() < 1e-12);
    assert_eq!(ate.summary.lower, ate.summary.upper);
}

#[test]
fn survival_at_the_median_is_one_half() {
    for (f, b, s) in [(0.0, 0.0, 1.0), (2.5, -1.0, 0.3), (-3.0, 0.7, 2.0)] {
        let t = (f + b as f64).exp();
        assert!((survival_prob(t, f, b, s) - 0.5).abs() < 1e-15);
    }
    assert_eq!(survival_prob(0.0, 1.0, 0.0, 1.0), 1.0);
    assert!(survival_prob(1e-300, 1.0, 0.0, 1.0) > 1.0 - 1e-12);
}

#[test]
fn survival_matches_simulated_log_normal_times() {
    let (f, b, sigma) = (0.3, -0.2, 0.8);
    let mut rng = rng_from_seed(31);
    let mut times: Vec<f64> = (0..100_000).map(|_| sample_normal(&mut rng, f + b, sigma).exp()).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    let mut worst: f64 = 0.0;
    for k in 1..200 {
        let t = 0.02 * k as f64;
        let emp = 1.0 - times.partition_point(|&x| x <= t) as f64 / times.len() as f64;
        worst = worst.max((emp - survival_prob(t, f, b, sigma)).abs());
    }
    assert!(worst < 0.01, "{worst}");
}

#[test]
fn rmst_matches_a_riemann_sum() {
    let n = 1_000_000;
    let h = 1.0 / n as f64;
    let riemann: f64 = (0..n).map(|k| norm_sf(((k as f64 + 0.5) * h).ln())).sum::<f64>() * h;
    let quad = rmst(1.0, 0.0, 0.0, 1.0).unwrap();
    assert!((quad - riemann).abs() < 1e-5, "{quad} vs {riemann}");
}

#[test]
fn rmst_limits_and_monotonicity() {
    assert!((rmst(3.0, 50.0, 0.0, 1.0).unwrap() - 3.0).abs() < 1e-6);
    let mut prev = 0.0;
    for k in 1..30 {
        let r = rmst(0.25 * k as f64, 0.2, 0.1, 0.7).unwrap();
        assert!(r >= prev - 1e-9);
        prev = r;
    }
    // the full mean of a log-normal is exp(mu + sigma^2 / 2)
    let full = rmst(400.0, 0.2, 0.1, 0.7).unwrap();
    assert!((full - (0.3f64 + 0.245).exp()).abs() < 1e-4, "{full}");
    assert!(rmst(0.0, 0.0, 0.0, 1.0).is_err());
}

#[test]
fn functional_effects_from_draws() {
    let (t, d) = fitted(2, false);
    let (v, s) = predict_survival_prob(&d, &t.ds.cluster, 4, 1, 2.0, InterceptMode::InCluster).unwrap();
    assert_eq!(v.len(), d.n_draws());
    assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(s.lower <= s.mean && s.mean <= s.upper);
    let (r, _) = predict_rmst(&d, &t.ds.cluster, 4, 1, 2.0, InterceptMode::InCluster).unwrap();
    assert!(r.iter().all(|&x| (0.0..=2.0).contains(&x)));
    let mode = InterceptMode::Integrated { seed: 5 };
    let (a, _) = predict_survival_prob(&d, &t.ds.cluster, 4, 1, 2.0, mode).unwrap();
    let (b, _) = predict_survival_prob(&d, &t.ds.cluster, 4, 1, 2.0, mode).unwrap();
    assert_eq!(a, b);
    let e = functional_effect(&d, &t.ds.cluster, (0, 1), Functional::SurvivalProb(2.0), InterceptMode::InCluster).unwrap();
    assert!(e.draws.iter().flatten().all(|x| x.abs() <= 1.0));
    assert!(functional_effect(&d, &t.ds.cluster, (0, 1), Functional::Rmst(-1.0), InterceptMode::InCluster).is_err());
}

#[test]
fn pooling_imputation_runs() {
    let single = IsteEstimate::from_draws((0, 1), vec![vec![1.0, 2.0]; 10]).unwrap();
    assert_eq!(pool_iste(std::slice::from_ref(&single)).unwrap(), single);
    let other = IsteEstimate::from_draws((0, 1), vec![vec![3.0, 4.0]; 10]).unwrap();
    let pooled = pool_iste(&[single.clone(), other]).unwrap();
    assert_eq!(pooled.means(), vec![2.0, 3.0]);

    let mut rng = rng_from_seed(41);
    let runs: Vec<IsteEstimate> = (0..4)
        .map(|m| {
            let draws = (0..400).map(|_| vec![sample_normal(&mut rng, m as f64 * 0.5, 0.2)]).collect();
            IsteEstimate::from_draws((0, 1), draws).unwrap()
        })
        .collect();
    let width = |e: &IsteEstimate| e.summary[0].upper - e.summary[0].lower;
    let avg = runs.iter().map(width).sum::<f64>() / runs.len() as f64;
    assert!(width(&pool_iste(&runs).unwrap()) >= avg);

    let misaligned = IsteEstimate::from_draws((0, 1), vec![vec![1.0]; 3]).unwrap();
    assert!(pool_iste(&[single, misaligned]).is_err());

    let (_, d) = fitted(2, false);
    let p = pool_imputations(&[d.clone(), d.clone()]).unwrap();
    assert_eq!(p.n_draws(), 2 * d.n_draws());
}

fn noise_covariates(n: usize, l: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..l).map(|_| (0..n).map(|_| sample_normal(rng, 0.0, 1.0)).collect()).collect()
}

#[test]
fn fit_the_fit_finds_the_single_driver() {
    let mut hits = 0;
    for seed in 0..10 {
        let mut rng = rng_from_seed(100 + seed);
        let x = noise_covariates(300, 10, &mut rng);
        let zeta: Vec<f64> = x[2].iter().map(|&v| 1.5 * (2.0 * v).tanh() + sample_normal(&mut rng, 0.0, 0.3)).collect();
        let cfg = FitTheFitConfig {
            forest: ForestConfig { seed, ..Default::default() },
            ..Default::default()
        };
        let res = fit_the_fit(&zeta, &x, &cfg).unwrap();
        hits += (res.selected.first() == Some(&2)) as usize;
        assert!(res.r2_path.windows(2).all(|w| w[1] - w[0] >= cfg.threshold));
    }
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn fit_the_fit_threshold_semantics() {
    let mut rng = rng_from_seed(7);
    let x = noise_covariates(200, 4, &mut rng);
    let zeta: Vec<f64> = (0..200).map(|i| x[0][i] + x[1][i] * x[3][i]).collect();
    let one = fit_the_fit(
        &zeta,
        &x,
        &FitTheFitConfig {
            threshold: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(one.selected.len(), 1);
    assert!(one.forest.is_some());
    let none = fit_the_fit(&[0.4; 200], &x, &FitTheFitConfig::default()).unwrap();
    assert!(none.selected.is_empty() && none.forest.is_none());
}

#[test]
fn rules_recover_a_step() {
    // no data between 0.45 and 0.55, so every bagged tree cuts inside the
    // gap and the forest predicts exactly two levels
    let x1: Vec<f64> = (0..200)
        .map(|i| (i as f64 + 0.5) / 200.0)
        .filter(|v| !(0.45..0.55).contains(v))
        .collect();
    let n = x1.len();
    let zeta: Vec<f64> = x1.iter().map(|&v| if v <= 0.5 { -1.0 } else { 2.0 }).collect();
    let covs = vec![cont("x1", x1)];
    let rf = RandomForestModel::fit(&feature_matrix(&covs).unwrap(), &zeta, &[0], &ForestConfig::default());
    let iste = IsteEstimate::from_draws((0, 1), vec![zeta.clone(); 20]).unwrap();
    let rules = extract_rules(&rf, &covs, &iste, &RuleConfig::default()).unwrap();
    assert_eq!(rules.len(), 2, "{:?}", rules.iter().map(|r| r.describe()).collect::<Vec<_>>());
    let cut = rules[0].conditions[0].upper.unwrap();
    assert!((0.45..=0.55).contains(&cut), "{cut}");
    assert!((rules[0].effect + 1.0).abs() < 1e-12 && (rules[1].effect - 2.0).abs() < 1e-12);
    assert_eq!(rules.iter().map(|r| r.n).sum::<usize>(), n);
}

fn case_study(seed: u64) -> (Vec<Covariate>, IsteEstimate) {
    let n = 500;
    let mut rng = rng_from_seed(seed);
    let os: Vec<f64> = (0..n).map(|_| sample_normal(&mut rng, 96.0, 2.0)).collect();
    let wbc: Vec<f64> = (0..n).map(|_| sample_normal(&mut rng, 9.0, 3.0)).collect();
    let mut covs = vec![cont("x_os", os.clone()), cont("x_wbc", wbc.clone())];
    for j in 0..7 {
        covs.push(cont(&format!("noise{j}"), (0..n).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect()));
    }
    covs.push(Covariate {
        name: "sex".into(),
        kind: ColumnKind::Categorical {
            levels: vec!["f".into(), "m".into()],
        },
        values: (0..n).map(|_| rng.random_range(0..2) as f64).collect(),
    });
    let zeta: Vec<f64> = (0..n).map(|i| if os[i] < 95.5 && wbc[i] < 11.4 { 0.8 } else { 0.0 }).collect();
    let draws = (0..100)
        .map(|_| zeta.iter().map(|&z| z + sample_normal(&mut rng, 0.0, 0.3)).collect())
        .collect();
    (covs, IsteEstimate::from_draws((0, 1), draws).unwrap())
}

#[test]
fn rules_recover_the_case_study_pattern() {
    let mut hits = 0;
    for seed in 0..10 {
        let (covs, iste) = case_study(200 + seed);
        let x = feature_matrix(&covs).unwrap();
        let cfg = FitTheFitConfig {
            forest: ForestConfig { seed, ..Default::default() },
            ..Default::default()
        };
        let fit = fit_the_fit(&iste.means(), &x, &cfg).unwrap();
        let rules = extract_rules(fit.forest.as_ref().unwrap(), &covs, &iste, &RuleConfig::default()).unwrap();
        hits += (rules[0].conditions.first().map(|c| c.variable.as_str()) == Some("x_os")) as usize;

        // disjoint and exhaustive
        let mut seen = vec![0; iste.n_rows()];
        for r in &rules {
            assert!(r.n >= 1 && r.lower <= r.upper);
            for &i in &r.members {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn categorical_conditions_list_levels() {
    let n = 300;
    let mut rng = rng_from_seed(3);
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
    let zeta: Vec<f64> = g.iter().map(|&v| if v == 1.0 { 1.0 } else { 0.0 }).collect();
    let covs = vec![Covariate {
        name: "site".into(),
        kind: ColumnKind::Categorical {
            levels: vec!["a".into(), "b".into(), "c".into()],
        },
        values: g,
    }];
    let rf = RandomForestModel::fit(&feature_matrix(&covs).unwrap(), &zeta, &[0], &ForestConfig::default());
    let iste = IsteEstimate::from_draws((0, 1), vec![zeta; 5]).unwrap();
    let rules = extract_rules(&rf, &covs, &iste, &RuleConfig::default()).unwrap();
    let b_rule = rules.iter().find(|r| r.effect > 0.5).unwrap();
    assert_eq!(b_rule.conditions[0].levels.as_deref(), Some(&["b".to_string()][..]));
    let report = RuleReport::new((0, 1), vec!["site".into()], vec![1.0], &rules);
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("site in {b}"), "{json}");
}

#[test]
fn effect_csv_lists_every_row() {
    let iste = IsteEstimate::from_draws((0, 1), vec![vec![0.5, -0.5, 0.0]; 4]).unwrap();
    let mut buf = Vec::new();
    write_iste_csv(&mut buf, &iste, &[0, 0, 1]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("row,cluster,mean,lower,upper"));
}

fn het_scenario(n_k: usize, replicates: usize, null_signal: bool, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        dgp: DgpConfig {
            k: 5,
            n_k,
            null_signal,
            ..Default::default()
        },
        replicates,
        seed,
        chain: ChainConfig {
            draws: 1500,
            burn_in: 500,
            keep_f: true,
            ..Default::default()
        },
        pairs: vec![(0, 1)],
        ..Default::default()
    }
}

#[test]
fn pehe_falls_with_sample_size() {
    let small = run_experiment(&het_scenario(50, 5, false, 1)).unwrap();
    let large = run_experiment(&het_scenario(200, 5, false, 1)).unwrap();
    let (a, b) = (small.pair_summary[0].pehe_log.mean, large.pair_summary[0].pehe_log.mean);
    assert!(b < a, "n=250: {a}, n=1000: {b}");
}

#[test]
fn null_effect_interval_covers_zero() {
    let cfg = het_scenario(200, 20, true, 2);
    let mut covered = 0;
    for r in 0..cfg.replicates {
        let sim = riaft_core::sim::simulate(&cfg.replicate_dgp(r)).unwrap();
        let d = run_chain(
            &sim.dataset,
            &ChainConfig {
                seed: r as u64,
                ..cfg.chain.clone()
            },
        )
        .unwrap();
        let ate = estimate_ate(&estimate_iste(&d, (0, 1)).unwrap());
        covered += (ate.summary.lower <= 0.0 && 0.0 <= ate.summary.upper) as usize;
    }
    assert!(covered >= 18, "{covered}/20");
}
