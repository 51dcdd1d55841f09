mod common;

use common::{cont, short_chain, toy};
use riaft_core::data::{permute_outcomes, SurvivalDataset};
use riaft_core::sampler::{run_chain, ChainConfig};
use riaft_core::select::*;
use riaft_core::sim::{simulate, DgpConfig, Hazard, ImputeConfig};
use riaft_core::stats::{pearson, rng_from_seed, sample_normal};

fn names(l: usize) -> Vec<String> {
    (1..=l).map(|j| format!("x{j}")).collect()
}

fn quick_selection(permutations: usize) -> SelectionConfig {
    SelectionConfig {
        chain: ChainConfig {
            draws: 600,
            burn_in: 200,
            m: 20,
            ..Default::default()
        },
        null_chain: ChainConfig {
            draws: 400,
            burn_in: 150,
            m: 20,
            ..Default::default()
        },
        permutations,
        ..Default::default()
    }
}

#[test]
fn vip_average_of_draws() {
    let t = toy(50, 2, 2, 0, 0.5, 1);
    let mut d = run_chain(&t.ds, &short_chain(1)).unwrap();
    d.draws.truncate(2);
    d.draws[0].vip = vec![1.0, 0.0];
    d.draws[1].vip = vec![0.0, 1.0];
    assert_eq!(average_vip(&d).unwrap(), vec![0.5, 0.5]);
    d.draws[1].vip = vec![1.0, 0.0];
    assert_eq!(average_vip(&d).unwrap(), vec![1.0, 0.0]);
    d.draws.clear();
    assert!(average_vip(&d).is_err());
}

#[test]
fn strong_predictor_vip_trace_settles() {
    let sim = simulate(&DgpConfig {
        k: 5,
        n_k: 100,
        seed: 2,
        ..DgpConfig::varselect(Hazard::Ph)
    })
    .unwrap();
    let d = run_chain(
        &sim.dataset,
        &ChainConfig {
            draws: 2500,
            burn_in: 500,
            seed: 3,
            keep_f: false,
            ..Default::default()
        },
    )
    .unwrap();
    let vip = average_vip(&d).unwrap();
    let top = (0..vip.len()).max_by(|&a, &b| vip[a].total_cmp(&vip[b])).unwrap();
    assert!(top < 8, "top covariate x{} is noise", top + 1);
    let trace: Vec<f64> = d.draws.iter().map(|x| x.vip[top]).collect();
    let tail = &trace[trace.len() - 1000..];
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    let sd = (tail.iter().map(|v| (v - m).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    assert!(sd < 0.05, "sd {sd}");
}

#[test]
fn permutation_breaks_the_outcome_link() {
    let single = toy(1, 1, 1, 0, 0.0, 3).ds;
    assert_eq!(permute_outcomes(&single, 9), single);
    let t = toy(2000, 10, 2, 0, 0.0, 4);
    let p = permute_outcomes(&t.ds, 5);
    let mut a: Vec<(u64, bool)> = t.ds.time.iter().zip(&t.ds.event).map(|(x, &e)| (x.to_bits(), e)).collect();
    let mut b: Vec<(u64, bool)> = p.time.iter().zip(&p.event).map(|(x, &e)| (x.to_bits(), e)).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    assert_eq!(p.covariates, t.ds.covariates);
    assert_eq!(p.cluster, t.ds.cluster);
    let log_y: Vec<f64> = p.time.iter().map(|v| v.ln()).collect();
    assert!(pearson(&t.ds.covariates[0].values, &log_y).abs() < 0.05);
}

#[test]
fn null_matrix_shape_and_determinism() {
    let t = toy(80, 4, 3, 0, 0.5, 5);
    let cfg = quick_selection(2);
    let one = build_null(&t.ds, 1, &cfg, 7).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert_eq!(one.rows[0].len(), 3);
    let a = build_null(&t.ds, 2, &cfg, 7).unwrap();
    let b = build_null(&t.ds, 2, &cfg, 7).unwrap();
    assert_eq!(a, b);
    for r in &a.rows {
        let s: f64 = r.iter().sum();
        assert!((s - 1.0).abs() < 1e-9 || s == 0.0);
    }
    assert!(build_null(&t.ds, 0, &cfg, 7).is_err());
}

fn pure_noise(n: usize, l: usize, seed: u64) -> SurvivalDataset {
    let mut rng = rng_from_seed(seed);
    let covs = (0..l)
        .map(|j| cont(&format!("x{}", j + 1), (0..n).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect()))
        .collect();
    let time = (0..n).map(|_| sample_normal(&mut rng, 1.0, 1.0).exp()).collect();
    let event = (0..n).map(|i| i % 4 != 0).collect();
    SurvivalDataset::new(time, event, (0..n).map(|i| i % 5).collect(), None, covs).unwrap()
}

#[test]
fn noise_null_is_exchangeable() {
    let ds = pure_noise(500, 10, 6);
    let cfg = SelectionConfig {
        null_chain: ChainConfig {
            draws: 1500,
            burn_in: 500,
            m: 20,
            ..Default::default()
        },
        ..Default::default()
    };
    let null = build_null(&ds, 8, &cfg, 8).unwrap();
    for l in 0..10 {
        let col = null.column(l);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        assert!((m - 0.1).abs() < 0.05, "column {l}: {m}");
    }
}

fn null_of(rows: Vec<Vec<f64>>) -> PermutationNull {
    PermutationNull { rows }
}

#[test]
fn threshold_is_strict() {
    // 20 rows whose 0.95 quantile (higher rule) is 0.08
    let mut rows: Vec<Vec<f64>> = (0..19).map(|k| vec![0.001 * k as f64]).collect();
    rows.push(vec![0.08]);
    let null = null_of(rows);
    let sel = local_threshold_select(&names(1), &[0.10], &null, 0.05).unwrap();
    assert_eq!(sel.threshold, vec![0.08]);
    assert_eq!(sel.selected, vec![true]);
    let tie = local_threshold_select(&names(1), &[0.08], &null, 0.05).unwrap();
    assert_eq!(tie.selected, vec![false]);
    assert!(local_threshold_select(&names(2), &[0.1, 0.2], &null, 0.05).is_err());
}

#[test]
fn quantile_rule_is_the_higher_order_statistic() {
    let rows: Vec<Vec<f64>> = (1..=100).map(|k| vec![k as f64]).collect();
    let sel = local_threshold_select(&names(1), &[95.5], &null_of(rows), 0.05).unwrap();
    // ceil(0.95 * 99) = 95 -> the 96th value
    assert_eq!(sel.threshold, vec![96.0]);
    assert_eq!(sel.selected, vec![false]);
}

#[test]
fn bootstrap_counts_against_pi() {
    let rep = |sel: bool| SelectionResult {
        names: names(1),
        vip: vec![0.2],
        threshold: vec![0.1],
        selected: vec![sel],
        boot_count: None,
        boot_b: None,
        pi: None,
    };
    let replicates: Vec<SelectionResult> = (0..100).map(|b| rep(b < 60)).collect();
    let boot = BootstrapSelection {
        names: names(1),
        replicates,
        counts: vec![60],
    };
    assert_eq!(boot.select(0.5).selected, vec![true]);
    assert_eq!(boot.select(0.6).selected, vec![true]);
    assert_eq!(boot.select(0.7).selected, vec![false]);
    assert_eq!(boot.select(0.5).boot_count, Some(vec![60]));
}

#[test]
fn single_bootstrap_matches_its_replicate() {
    let mut t = toy(100, 4, 3, 0, 0.5, 9);
    for i in (0..100).step_by(7) {
        t.ds.set_cell(i, 2, None);
    }
    let cfg = quick_selection(5);
    let boot = bootstrap_selections(&t.ds, 1, &ImputeConfig::default(), &cfg, 11).unwrap();
    let agg = boot.select(0.5);
    assert_eq!(agg.selected, boot.replicates[0].selected);
    let again = aggregate_bootstrap_select(&t.ds, 1, 0.5, &ImputeConfig::default(), &cfg, 11).unwrap();
    assert_eq!(again, agg);
    assert!(aggregate_bootstrap_select(&t.ds, 1, 1.0, &ImputeConfig::default(), &cfg, 11).is_err());
    assert!(aggregate_bootstrap_select(&t.ds, 0, 0.5, &ImputeConfig::default(), &cfg, 11).is_err());
}

#[test]
fn report_lists_every_covariate() {
    let t = toy(100, 4, 6, 0, 0.5, 10);
    let res = select_variables(&t.ds, &quick_selection(5), 12).unwrap();
    let mut buf = Vec::new();
    res.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("covariate,vip,threshold,selected,boot_count"));
    assert!(res.selected[0], "the strong predictor x1 is selected");
}

#[test]
fn strong_predictor_survives_column_reordering() {
    let t = toy(200, 4, 5, 0, 0.5, 13);
    let mut rev = t.ds.clone();
    rev.covariates.reverse();
    let cfg = quick_selection(20);
    let a = select_variables(&t.ds, &cfg, 14).unwrap();
    let b = select_variables(&rev, &cfg, 14).unwrap();
    assert!(a.selected_names().contains(&"x1".to_string()));
    assert!(b.selected_names().contains(&"x1".to_string()));
}
