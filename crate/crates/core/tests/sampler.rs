mod common;

use common::{short_chain, toy};
use riaft_core::bart::Predictors;
use riaft_core::sampler::{predict_posterior, run_chain, ChainConfig, ExpansionMode, PosteriorDraws};
use riaft_core::stats::pearson;

#[test]
fn default_budget_keeps_3500_draws() {
    let cfg = ChainConfig::default();
    assert_eq!(cfg.kept(), 3500);
    let two = ChainConfig { chains: 2, ..short_chain(0) };
    let d = run_chain(&toy(40, 2, 2, 0, 0.5, 1).ds, &two).unwrap();
    assert_eq!(d.n_draws(), 2 * two.kept());
    assert!(d.draws[..two.kept()].iter().all(|x| x.chain == 0));
    assert!(d.draws[two.kept()..].iter().all(|x| x.chain == 1));
}

#[test]
fn same_seed_same_draws() {
    let t = toy(80, 4, 3, 2, 1.0, 2);
    let cfg = ChainConfig { chains: 2, ..short_chain(9) };
    let a = run_chain(&t.ds, &cfg).unwrap();
    let b = run_chain(&t.ds, &cfg).unwrap();
    assert_eq!(a, b);
    let c = run_chain(&t.ds, &ChainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn recovers_a_linear_mean_function() {
    let t = toy(300, 5, 3, 0, 1.0, 3);
    let cfg = ChainConfig {
        draws: 1200,
        burn_in: 400,
        m: 50,
        seed: 4,
        ..Default::default()
    };
    let d = run_chain(&t.ds, &cfg).unwrap();
    let f = d.posterior_mean_f().unwrap();
    let r = pearson(&f, &t.f_true);
    assert!(r > 0.95, "corr {r}");
    let b = d.posterior_mean_b();
    let rb = pearson(&b, &t.b_true);
    assert!(rb > 0.8, "intercept corr {rb}");
}

#[test]
fn null_cluster_effects_shrink_to_zero() {
    let t = toy(300, 10, 2, 0, 0.0, 100);
    // the common level of b trades off against the forest and mixes
    // slowly, so this needs the full default budget
    let b = run_chain(&t.ds, &ChainConfig::default()).unwrap().posterior_mean_b();
    assert!(b.iter().all(|v| v.abs() < 0.2), "{b:?}");

    // a single expansion term lets the shared level wander further; the
    // contrasts between clusters stay pinned
    let cfg = ChainConfig {
        expansion: ExpansionMode::Global,
        ..Default::default()
    };
    let b = run_chain(&t.ds, &cfg).unwrap().posterior_mean_b();
    let m = b.iter().sum::<f64>() / b.len() as f64;
    assert!(b.iter().all(|v| (v - m).abs() < 0.2), "{b:?}");
}

#[test]
fn forests_reproduce_stored_predictions() {
    let t = toy(60, 3, 2, 3, 0.5, 7);
    let cfg = ChainConfig {
        keep_forests: true,
        ..short_chain(8)
    };
    let d = run_chain(&t.ds, &cfg).unwrap();
    let x = Predictors::from_dataset(&t.ds, true).unwrap();
    let f = predict_posterior(&d, &x, None).unwrap();
    for (p, s) in f.iter().zip(d.f_draws().unwrap()) {
        for (a, b) in p.iter().zip(s) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
    for arm in 0..3 {
        let fa = predict_posterior(&d, &x, Some(arm)).unwrap();
        for (p, s) in fa.iter().zip(d.arm_draws(arm).unwrap()) {
            for (a, b) in p.iter().zip(s) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn draw_files_round_trip() {
    let t = toy(30, 2, 2, 2, 0.5, 9);
    let d = run_chain(&t.ds, &ChainConfig { keep_forests: true, ..short_chain(1) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.jsonl");
    d.save(&path).unwrap();
    let back = PosteriorDraws::load(&path).unwrap();
    assert_eq!(back.header, d.header);
    assert_eq!(back.n_draws(), d.n_draws());
    for (a, b) in back.draws.iter().zip(&d.draws) {
        assert_eq!(a.b, b.b);
        assert_eq!(a.vip, b.vip);
        assert_eq!(a.f, b.f);
    }
}

#[test]
fn vip_rows_are_proportions() {
    let t = toy(100, 4, 4, 2, 1.0, 11);
    let d = run_chain(&t.ds, &short_chain(2)).unwrap();
    for v in d.vip_rows() {
        let s: f64 = v.iter().sum();
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!((s - 1.0).abs() < 1e-12 || s == 0.0, "{s}");
    }
}

#[test]
fn invalid_budget_is_rejected() {
    let t = toy(30, 2, 2, 0, 0.5, 12);
    let bad = ChainConfig {
        draws: 100,
        burn_in: 100,
        ..Default::default()
    };
    assert!(run_chain(&t.ds, &bad).is_err());
}
