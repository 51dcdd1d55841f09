mod common;

use proptest::prelude::*;
use riaft_core::data::{bootstrap_resample, permute_outcomes};
use riaft_core::effects::*;
use riaft_core::select::{local_threshold_select, BootstrapSelection, PermutationNull, SelectionResult};
use riaft_core::sim::*;
use riaft_core::stats::{quantile_higher, rng_from_seed, sample_trunc_normal, Summary};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn gps_triples_sum_to_one(l1 in -30.0..30.0f64, l2 in -30.0..30.0f64) {
        let p = softmax3(l1, l2);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gps_subclasses_cover_the_simplex(g1 in 0.0..1.0f64, frac in 0.0..1.0f64) {
        let g2 = (1.0 - g1) * frac;
        prop_assume!(g1 > 0.0 && g2 > 0.0);
        prop_assert!(gps_subclass(&default_gps_boxes(), g1, g2).is_some());
    }

    #[test]
    fn pehe_is_zero_on_truth_and_sign_symmetric(
        truth in prop::collection::vec(-5.0..5.0f64, 1..50),
        err in prop::collection::vec(-2.0..2.0f64, 50),
    ) {
        prop_assert_eq!(metric_pehe(&truth, &truth).unwrap(), 0.0);
        let up: Vec<f64> = truth.iter().zip(&err).map(|(t, e)| t + e).collect();
        let down: Vec<f64> = truth.iter().zip(&err).map(|(t, e)| t - e).collect();
        let a = metric_pehe(&up, &truth).unwrap();
        let b = metric_pehe(&down, &truth).unwrap();
        prop_assert!(a >= 0.0 && (a - b).abs() < 1e-12);
    }

    #[test]
    fn selection_metrics_are_proportions(sel in prop::collection::btree_set(0usize..28, 0..28)) {
        let selected: Vec<usize> = sel.into_iter().collect();
        let useful: Vec<usize> = (0..8).collect();
        let m = metric_selection(&selected, &useful, 28);
        for v in [m.precision, m.recall, Some(m.f1), m.type_i].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(m.tp + m.fn_, 8);
    }

    #[test]
    fn concordance_is_a_proportion(
        rows in prop::collection::vec((0.0..1.0f64, 0.01..10.0f64, any::<bool>()), 2..60),
    ) {
        let pred: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let time: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mut event: Vec<bool> = rows.iter().map(|r| r.2).collect();
        event[0] = true;
        if let Ok(c) = metric_concordance(&pred, &time, &event) {
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn survival_is_a_nonincreasing_probability(
        f in -5.0..5.0f64, b in -3.0..3.0f64, sigma in 0.05..3.0f64,
        mut ts in prop::collection::vec(0.0..200.0f64, 2..30),
    ) {
        ts.sort_by(|a, b| a.total_cmp(b));
        let s: Vec<f64> = ts.iter().map(|&t| survival_prob(t, f, b, sigma)).collect();
        prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn summaries_bracket_the_mean(draws in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        let s = Summary::from_draws(&draws);
        prop_assert!(s.lower <= s.mean + 1e-12 && s.mean <= s.upper + 1e-12);
    }

    #[test]
    fn iste_pair_swap_negates(draws in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 5), 1..20)) {
        let a = IsteEstimate::from_draws((0, 1), draws.clone()).unwrap();
        let neg: Vec<Vec<f64>> = draws.iter().map(|d| d.iter().map(|v| -v).collect()).collect();
        let b = IsteEstimate::from_draws((1, 0), neg).unwrap();
        prop_assert_eq!(estimate_ate(&a).summary.mean, -estimate_ate(&b).summary.mean);
        let means = a.means();
        let ate = estimate_ate(&a).summary.mean;
        prop_assert!((means.iter().sum::<f64>() / means.len() as f64 - ate).abs() < 1e-12);
    }

    #[test]
    fn higher_quantile_is_an_order_statistic(v in prop::collection::vec(-100.0..100.0f64, 1..200), p in 0.0..1.0f64) {
        let q = quantile_higher(&v, p).unwrap();
        let mut s = v.clone();
        s.sort_by(|a, b| a.total_cmp(b));
        let k = (p * (s.len() - 1) as f64).ceil() as usize;
        prop_assert_eq!(q, s[k]);
    }

    #[test]
    fn truncated_draws_respect_the_bound(mu in -5.0..5.0f64, sigma in 0.1..3.0f64, a in -50.0..12.0f64, seed in any::<u64>()) {
        let lower = mu + a * sigma;
        let mut rng = rng_from_seed(seed);
        for _ in 0..20 {
            prop_assert!(sample_trunc_normal(&mut rng, mu, sigma, lower) >= lower);
        }
    }

    #[test]
    fn pi_sweep_is_monotone(counts in prop::collection::vec(0usize..=20, 1..12), p1 in 0.01..0.99f64, p2 in 0.01..0.99f64) {
        let l = counts.len();
        let names: Vec<String> = (0..l).map(|j| format!("x{j}")).collect();
        let rep = SelectionResult {
            names: names.clone(),
            vip: vec![0.0; l],
            threshold: vec![0.0; l],
            selected: vec![false; l],
            boot_count: None,
            boot_b: None,
            pi: None,
        };
        let boot = BootstrapSelection { names, replicates: vec![rep; 20], counts };
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let a = boot.select(lo).selected;
        let b = boot.select(hi).selected;
        prop_assert!(a.iter().zip(&b).all(|(x, y)| *x || !*y));
    }

    #[test]
    fn threshold_selection_follows_column_permutation(
        rows in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 6), 20..40),
        vip in prop::collection::vec(0.0..1.0f64, 6),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let names: Vec<String> = (0..6).map(|j| format!("x{j}")).collect();
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng_from_seed(seed));
        let base = local_threshold_select(&names, &vip, &PermutationNull { rows: rows.clone() }, 0.05).unwrap();
        let p_names: Vec<String> = perm.iter().map(|&j| names[j].clone()).collect();
        let p_vip: Vec<f64> = perm.iter().map(|&j| vip[j]).collect();
        let p_rows: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        let moved = local_threshold_select(&p_names, &p_vip, &PermutationNull { rows: p_rows }, 0.05).unwrap();
        let mut a = base.selected_names();
        let mut b = moved.selected_names();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn amputation_leaves_outcomes_alone(seed in any::<u64>()) {
        let sim = simulate(&DgpConfig { k: 4, n_k: 50, seed, ..DgpConfig::varselect(Hazard::Ph) }).unwrap();
        let out = ampute(&sim.dataset, &AmputationPlan::default(), &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(&out.time, &sim.dataset.time);
        prop_assert_eq!(&out.event, &sim.dataset.event);
        prop_assert_eq!(&out.cluster, &sim.dataset.cluster);
        prop_assert_eq!(&out.treatment, &sim.dataset.treatment);
        // observed cells are untouched
        for (c_out, c_in) in out.covariates.iter().zip(&sim.dataset.covariates) {
            for (a, b) in c_out.values.iter().zip(&c_in.values) {
                prop_assert!(a.is_nan() || a == b);
            }
        }
    }

    #[test]
    fn imputation_is_idempotent_on_complete_data(seed in any::<u64>()) {
        let sim = simulate(&DgpConfig { k: 3, n_k: 30, seed, ..Default::default() }).unwrap();
        let out = chained_impute(&sim.dataset, &ImputeConfig::default(), &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(out, sim.dataset);
    }

    #[test]
    fn counterfactual_consistency(seed in any::<u64>()) {
        let sim = simulate(&DgpConfig { k: 3, n_k: 40, seed, ..Default::default() }).unwrap();
        let arms = &sim.truth.assignment.as_ref().unwrap().arms;
        for (i, &a) in arms.iter().enumerate() {
            prop_assert_eq!(sim.truth.times.observed[i], sim.truth.times.counterfactual[a][i]);
        }
    }

    #[test]
    fn resampling_keeps_rows_intact(seed in any::<u64>()) {
        let t = common::toy(60, 4, 2, 2, 0.5, seed);
        let p = permute_outcomes(&t.ds, seed);
        prop_assert_eq!(&p.covariates, &t.ds.covariates);
        let b = bootstrap_resample(&t.ds, seed).unwrap();
        prop_assert_eq!(b.n_rows(), t.ds.n_rows());
        for i in 0..b.n_rows() {
            let j = t.ds.time.iter().position(|&x| x == b.time[i]).unwrap();
            prop_assert_eq!(b.event[i], t.ds.event[j]);
            prop_assert_eq!(b.covariates[0].values[i], t.ds.covariates[0].values[j]);
        }
    }

    #[test]
    fn rules_partition_the_sample(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let covs: Vec<_> = (0..3)
            .map(|j| common::cont(&format!("x{j}"), (0..120).map(|_| riaft_core::stats::sample_normal(&mut rng, 0.0, 1.0)).collect()))
            .collect();
        let zeta: Vec<f64> = (0..120).map(|i| covs[0].values[i].max(0.0) + 0.3 * covs[1].values[i]).collect();
        let x = feature_matrix(&covs).unwrap();
        let rf = RandomForestModel::fit(&x, &zeta, &[0, 1, 2], &ForestConfig { trees: 20, seed, ..Default::default() });
        let iste = IsteEstimate::from_draws((0, 1), vec![zeta; 3]).unwrap();
        let rules = extract_rules(&rf, &covs, &iste, &RuleConfig::default()).unwrap();
        let mut seen = [0u8; 120];
        for r in &rules {
            prop_assert!(r.n >= 1);
            for &i in &r.members {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}
