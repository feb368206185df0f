//! Property tests for the invariants of every module.

use fairkit::dataset::{generate_biased_loans, label_rate_ratio, split, standardize, GenConfig};
use fairkit::explain::{local_surrogate, shapley_exact, shapley_with};
use fairkit::metrics::{
    accuracy, average_odds_difference, confusion_by_group, disparate_impact, equal_opportunity_difference, fpr_gap,
    report_from_predictions, roc_auc,
};
use fairkit::models::{fit_logistic_traced, LogisticParams, ModelParams, TreeNode};
use fairkit::monitor::{check_report, ingest_report, monitor_new, MonitorThresholds};
use fairkit::neuralnet::{apply_update, grad_check, init_net, loss_and_grads, Activation, Loss, NetSpec};
use fairkit::preprocess::{counterfactual_consistency, flip_sensitive, reweigh};
use fairkit::report::{compare_reports, render_report, Comparison, ReportFormat, TaggedReport};
use fairkit::{fit, Dataset, FairnessReport, Matrix, Metric, Model, ModelKind, TrainConfig};
use proptest::prelude::*;

fn loans(n: usize, seed: u64) -> Dataset {
    generate_biased_loans(&GenConfig { n, seed, ..GenConfig::default() }).unwrap()
}

fn std_loans(n: usize, seed: u64) -> (Dataset, Dataset) {
    let p = split(&loans(n, seed), 0.8, seed).unwrap();
    standardize(&p.train, &p.test).unwrap()
}

/// Binary triples (pred, label, sensitive).
fn triples(max: usize) -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
    prop::collection::vec((0..2u8, 0..2u8, 0..2u8), 1..max)
}

fn unzip3(t: &[(u8, u8, u8)]) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    (t.iter().map(|v| v.0).collect(), t.iter().map(|v| v.1).collect(), t.iter().map(|v| v.2).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // dataset

    #[test]
    fn generator_is_pure(seed in 0u64..1000, n in 1usize..300) {
        let cfg = GenConfig { n, seed, ..GenConfig::default() };
        prop_assert_eq!(generate_biased_loans(&cfg).unwrap(), generate_biased_loans(&cfg).unwrap());
    }

    #[test]
    fn standardize_round_trips(seed in 0u64..1000, n in 4usize..200) {
        let ds = loans(n, seed);
        let p = split(&ds, 0.5, seed).unwrap();
        let (tr, _) = standardize(&p.train, &p.test).unwrap();
        let back = tr.raw_features().unwrap();
        for (a, b) in back.as_slice().iter().zip(p.train.features.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn split_is_a_partition(seed in 0u64..1000, n in 2usize..300, ratio in 0.05f64..0.95) {
        let ds = loans(n, seed);
        let Ok(p) = split(&ds, ratio, seed) else { return Ok(()); };
        prop_assert_eq!(p.train.n() + p.test.n(), n);
        let mut rows: Vec<Vec<u64>> = p.train.features.iter_rows().chain(p.test.features.iter_rows())
            .map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        let mut orig: Vec<Vec<u64>> = ds.features.iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        rows.sort();
        orig.sort();
        prop_assert_eq!(rows, orig);
    }

    // metrics

    #[test]
    fn swapping_groups_inverts_di_and_negates_gaps(t in triples(120)) {
        let (p, y, s) = unzip3(&t);
        let g = confusion_by_group(&p, &y, &s).unwrap();
        let h = confusion_by_group(&p, &y, &s.iter().map(|v| 1 - v).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(h, g.swapped());
        if let (Ok(a), Ok(b)) = (disparate_impact(&g), disparate_impact(&h)) {
            if a > 0.0 {
                prop_assert!((b - 1.0 / a).abs() <= 1e-12 * b.max(1.0));
            }
        }
        if let (Ok(a), Ok(b)) = (equal_opportunity_difference(&g), equal_opportunity_difference(&h)) {
            prop_assert_eq!(a, -b);
        }
        if let (Ok(a), Ok(b)) = (average_odds_difference(&g), average_odds_difference(&h)) {
            prop_assert_eq!(a, -b);
        }
    }

    #[test]
    fn aod_is_mean_of_gaps(t in triples(120)) {
        let (p, y, s) = unzip3(&t);
        let g = confusion_by_group(&p, &y, &s).unwrap();
        if let Ok(aod) = average_odds_difference(&g) {
            let e = equal_opportunity_difference(&g).unwrap();
            let f = fpr_gap(&g).unwrap();
            prop_assert_eq!(aod, 0.5 * (e + f));
        }
    }

    #[test]
    fn auc_label_flip_and_brute_force(
        data in prop::collection::vec((0u8..30, 0..2u8), 2..200)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 30.0).collect();
        let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let auc = roc_auc(&scores, &labels).unwrap();
        let flipped: Vec<u8> = labels.iter().map(|v| 1 - v).collect();
        prop_assert!((auc - (1.0 - roc_auc(&scores, &flipped).unwrap())).abs() <= 1e-12);
        let (mut credit, mut pairs) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    credit += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((auc - credit / pairs).abs() <= 1e-12);
    }

    #[test]
    fn metrics_ignore_joint_permutation(t in triples(80), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm = t.clone();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (p, y, s) = unzip3(&t);
        let (q, z, r) = unzip3(&perm);
        prop_assert_eq!(confusion_by_group(&p, &y, &s).unwrap(), confusion_by_group(&q, &z, &r).unwrap());
        prop_assert_eq!(accuracy(&p, &y).unwrap(), accuracy(&q, &z).unwrap());
    }

    // preprocess

    #[test]
    fn reweigh_reproduces_independence(t in prop::collection::vec((0..2u8, 0..2u8), 4..200)) {
        let s: Vec<u8> = t.iter().map(|v| v.0).collect();
        let y: Vec<u8> = t.iter().map(|v| v.1).collect();
        let n = t.len();
        let x = Matrix::from_vec(n, 1, s.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let ds = Dataset::new(x, vec!["gender".into()], y.clone(), s.clone()).unwrap();
        let Ok(w) = reweigh(&ds) else { return Ok(()); };
        for a in 0..2u8 {
            for l in 0..2u8 {
                let idx: Vec<usize> = (0..n).filter(|&i| s[i] == a && y[i] == l).collect();
                let mean_w = idx.iter().map(|&i| w.weights[i]).sum::<f64>() / idx.len() as f64;
                let freq = idx.len() as f64 / n as f64;
                let pa = s.iter().filter(|&&v| v == a).count() as f64 / n as f64;
                let py = y.iter().filter(|&&v| v == l).count() as f64 / n as f64;
                prop_assert!((mean_w * freq - pa * py).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn flip_is_an_involution(seed in 0u64..1000, n in 1usize..200) {
        let ds = loans(n, seed);
        prop_assert_eq!(flip_sensitive(&flip_sensitive(&ds).unwrap()).unwrap(), ds);
    }

    // monitor

    #[test]
    fn monitor_window_and_alerts(batches in prop::collection::vec(triples(40), 1..25), window in 1usize..8) {
        let t = MonitorThresholds { window, ..Default::default() };
        let mut st = monitor_new(t.clone()).unwrap();
        for (i, b) in batches.iter().enumerate() {
            let (p, y, s) = unzip3(b);
            let scores: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
            let r = report_from_predictions(&p, &scores, &y, &s, "m", "b").unwrap();
            let before = st.clone();
            let id = format!("b{i}");
            let next = ingest_report(&st, r.clone(), &id);
            prop_assert_eq!(&before, &st);
            prop_assert!(next.history.len() <= window);
            let fresh: Vec<_> = next.alerts_for(&id).cloned().collect();
            prop_assert_eq!(&fresh, &check_report(&r, &t, &id));
            for a in &fresh {
                prop_assert!(r.get(a.metric).is_some());
            }
            prop_assert!(next.alerts.iter().all(|a| next.history.iter().any(|h| h.batch_id == a.batch_id)));
            st = next;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // models

    #[test]
    fn weight_scale_invariance(seed in 0u64..500, scale in 0.01f64..100.0) {
        let (tr, te) = std_loans(200, seed);
        let cfg = TrainConfig { epochs: 100, ..TrainConfig::default() };
        let w: Vec<f64> = (0..tr.n()).map(|i| 0.5 + (i % 4) as f64 * 0.5).collect();
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        for kind in ModelKind::ALL {
            let a = fit(kind, &tr, Some(&w), &cfg).unwrap().predict_proba_ds(&te).unwrap();
            let b = fit(kind, &tr, Some(&ws), &cfg).unwrap().predict_proba_ds(&te).unwrap();
            for (x, y) in a.iter().zip(&b) {
                // Rounding in the weight normalization gets amplified by the
                // iterative Platt fit, so this is not bit-exact.
                prop_assert!((x - y).abs() < 1e-6, "{kind}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn fit_is_deterministic(seed in 0u64..500) {
        let (tr, _) = std_loans(150, seed);
        let cfg = TrainConfig { epochs: 60, seed, ..TrainConfig::default() };
        for kind in ModelKind::ALL {
            prop_assert_eq!(fit(kind, &tr, None, &cfg).unwrap(), fit(kind, &tr, None, &cfg).unwrap());
        }
    }

    #[test]
    fn logistic_loss_never_increases(seed in 0u64..500, lr in 0.01f64..0.5) {
        let (tr, _) = std_loans(200, seed);
        let cfg = TrainConfig { learning_rate: lr, epochs: 300, ..TrainConfig::default() };
        let (_, trace) = fit_logistic_traced(&tr, None, &cfg).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn tree_respects_depth_and_leaf_size(seed in 0u64..500, depth in 1usize..7, leaf in 1usize..20) {
        let (tr, _) = std_loans(250, seed);
        let cfg = TrainConfig { max_depth: depth, min_samples_leaf: leaf, ..TrainConfig::default() };
        let m = fit(ModelKind::Tree, &tr, None, &cfg).unwrap();
        let ModelParams::Tree(t) = &m.params else { unreachable!() };
        prop_assert!(t.depth() <= depth);
        for node in &t.nodes {
            if let TreeNode::Leaf { n_samples, .. } = node {
                prop_assert!(*n_samples >= leaf.min(tr.n()));
            }
        }
    }

    #[test]
    fn platt_is_monotone_in_margin(seed in 0u64..500) {
        let (tr, _) = std_loans(200, seed);
        let m = fit(ModelKind::Svc, &tr, None, &TrainConfig { epochs: 200, ..TrainConfig::default() }).unwrap();
        let ModelParams::Svc(s) = &m.params else { unreachable!() };
        let mut prev = 0.0;
        for k in -40..=40 {
            let p = s.platt(f64::from(k) / 8.0);
            prop_assert!(p >= prev);
            prev = p;
        }
    }

    // neuralnet

    #[test]
    fn backprop_matches_finite_differences(
        seed in 0u64..1000,
        hidden in 1usize..6,
        d in 1usize..4,
        out_sigmoid in any::<bool>()
    ) {
        let spec = NetSpec::new(
            vec![d, hidden, 1],
            vec![Activation::Relu, if out_sigmoid { Activation::Sigmoid } else { Activation::Identity }],
            seed,
        );
        let net = init_net(&spec).unwrap();
        let x = Matrix::from_vec(6, d, (0..6 * d).map(|i| ((i as f64 + seed as f64) * 0.37).sin() * 1.3).collect()).unwrap();
        let t = Matrix::from_vec(6, 1, (0..6).map(|i| f64::from(i % 2 == 0)).collect()).unwrap();
        let loss = if out_sigmoid { Loss::Bce } else { Loss::Mse };
        let err = grad_check(&net, &x, &t, loss, 1e-5).unwrap();
        prop_assert!(err <= 1e-4, "{err}");
        let (_, g) = loss_and_grads(&net, &x, &t, loss, None).unwrap();
        let before = net.clone();
        let _ = apply_update(&net, &g, 0.1).unwrap();
        prop_assert_eq!(before, net);
    }

    // explain

    #[test]
    fn shapley_axioms_hold(seed in 0u64..500, row in 0usize..40) {
        let (tr, te) = std_loans(200, seed);
        let bg = tr.select(&(0..30).collect::<Vec<_>>());
        for kind in [ModelKind::Logistic, ModelKind::Tree, ModelKind::NaiveBayes] {
            let m = fit(kind, &tr, None, &TrainConfig { epochs: 100, ..TrainConfig::default() }).unwrap();
            let x = te.features.row(row % te.n());
            let a = shapley_exact(&m, x, &bg).unwrap();
            prop_assert!((a.base_value + a.contributions.iter().sum::<f64>() - a.instance_output).abs() <= 1e-9);
        }
        // Null player: a model that ignores column 0 assigns it nothing.
        let f = |z: &Matrix| Ok(z.iter_rows().map(|r| (r[1] - 0.3 * r[2]).tanh()).collect());
        let a = shapley_with(f, te.features.row(row % te.n()), &bg.features, &bg.feature_names).unwrap();
        prop_assert!(a.contributions[0].abs() <= 1e-9);
    }

    #[test]
    fn surrogate_fits_linear_models(seed in 0u64..500, w in prop::collection::vec(-2.0f64..2.0, 3)) {
        // A linear "probability" via an identity-output net.
        let (tr, te) = std_loans(200, seed);
        let mut net = init_net(&NetSpec::new(vec![3, 1], vec![Activation::Identity], seed)).unwrap();
        for (c, v) in w.iter().enumerate() {
            net.weights[0].set(0, c, *v);
        }
        let m = Model::new(ModelParams::Mlp(net), tr.feature_names.clone());
        let width = 5.0 * 1.0_f64.max(3.0f64.sqrt());
        let e = local_surrogate(&m, te.features.row(0), &tr, 200, width, seed).unwrap();
        prop_assert!(e.local_fit_r2 >= 0.9, "{}", e.local_fit_r2);
    }

    #[test]
    fn consistency_monotone_in_eps(seed in 0u64..500, mut eps in prop::collection::vec(0.0f64..1.0, 2..6)) {
        let (tr, te) = std_loans(200, seed);
        let m = fit(ModelKind::Logistic, &tr, None, &TrainConfig::default()).unwrap();
        eps.sort_by(f64::total_cmp);
        let vals: Vec<f64> = eps.iter().map(|&e| counterfactual_consistency(&m, &te, e).unwrap()).collect();
        for v in vals.windows(2) {
            prop_assert!(v[0] <= v[1]);
        }
    }

    // report

    #[test]
    fn report_round_trip_and_row_counts(
        values in prop::collection::vec((0.0f64..1.0, prop::option::of(0.0f64..3.0), -1.0f64..1.0), 1..12)
    ) {
        let reports: Vec<TaggedReport> = values.iter().enumerate().map(|(i, (acc, di, eod))| TaggedReport {
            strategy: if i == 0 { "baseline".into() } else { format!("s{}", i % 3) },
            model: format!("m{i}"),
            report: FairnessReport {
                model_tag: format!("m{i}"),
                dataset_tag: "x".into(),
                accuracy: *acc,
                roc_auc: None,
                disparate_impact: *di,
                equal_opportunity_difference: Some(*eod),
                average_odds_difference: Some(eod / 2.0),
                group_stats: Default::default(),
                undefined: if di.is_none() { vec![Metric::DisparateImpact, Metric::RocAuc] } else { vec![Metric::RocAuc] },
            },
        }).collect();
        let c = compare_reports(&reports, "baseline").unwrap();
        let js = render_report(&c, ReportFormat::Json).unwrap();
        prop_assert_eq!(Comparison::from_json(&js).unwrap(), c.clone());
        let md = render_report(&c, ReportFormat::Markdown).unwrap();
        prop_assert_eq!(md.lines().count() - 2, reports.len());
        let csv = render_report(&c, ReportFormat::Csv).unwrap();
        let pairs: std::collections::BTreeSet<(String, String)> = csv.lines().skip(1)
            .map(|l| { let f: Vec<&str> = l.split(',').collect(); (f[0].to_string(), f[1].to_string()) })
            .collect();
        prop_assert_eq!(pairs.len(), reports.len());
    }
}

#[test]
fn approval_ratio_monotone_in_bias() {
    for seed in [1u64, 2, 3] {
        let mut last = f64::INFINITY;
        for bias in [0.0, 0.5, 1.0, 2.0, 4.0, 6.0] {
            let ds = generate_biased_loans(&GenConfig {
                n: 20000,
                bias_strength: bias,
                seed,
                ..GenConfig::default()
            })
            .unwrap();
            let r = label_rate_ratio(&ds).unwrap();
            assert!(r <= last, "seed {seed}: ratio {r} at bias {bias} above {last}");
            last = r;
        }
    }
}

#[test]
fn logistic_probabilities_unaffected_by_unused_fields() {
    let m = Model::new(
        ModelParams::Logistic(LogisticParams {
            weights: vec![0.0, 1.0, -1.0],
            intercept: 0.2,
        }),
        vec!["gender".into(), "years_experience".into(), "salary".into()],
    );
    let (_, te) = std_loans(100, 5);
    assert_eq!(counterfactual_consistency(&m, &te, 0.0).unwrap(), 1.0);
}
