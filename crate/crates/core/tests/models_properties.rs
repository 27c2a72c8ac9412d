use glassflow_core::models::{
    accuracy, fit_logreg, fit_logreg_with_history, fit_tree, gen_synthetic, retrain_with_relabels, Dataset,
    LogRegParams, Model, Predictor, Relabel, TreeParams,
};
use proptest::prelude::*;

fn tree_params(depth: Option<usize>, seed: u64) -> TreeParams {
    TreeParams {
        max_depth: depth,
        min_samples_leaf: 1,
        seed,
        leaf_smoothing: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn probabilities_sum_to_one_and_fits_are_deterministic(seed in 0u64..1000, depth in 1usize..7) {
        let data = gen_synthetic(150, seed).unwrap();
        let a = fit_tree(&data, &tree_params(Some(depth), seed)).unwrap();
        let b = fit_tree(&data, &tree_params(Some(depth), seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let lp = LogRegParams { epochs: 50, seed, ..Default::default() };
        let l1 = fit_logreg(&data, &lp).unwrap();
        let l2 = fit_logreg(&data, &lp).unwrap();
        prop_assert_eq!(&l1, &l2);
        for row in data.rows().iter().take(30) {
            for s in [a.predict_proba(row).unwrap(), l1.predict_proba(row).unwrap()] {
                prop_assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(s.probs().iter().all(|p| (0.0..=1.0).contains(p)));
            }
            prop_assert_eq!(a.predict_proba(row).unwrap(), b.predict_proba(row).unwrap());
        }
    }

    #[test]
    fn tree_training_accuracy_grows_with_depth(seed in 0u64..1000) {
        let data = gen_synthetic(200, seed).unwrap();
        let mut last = 0.0;
        for depth in 1..=8 {
            let t = Model::Cart(fit_tree(&data, &tree_params(Some(depth), seed)).unwrap());
            let acc = accuracy(&t, &data).unwrap();
            prop_assert!(acc + 1e-12 >= last, "depth {depth}: {acc} < {last}");
            last = acc;
        }
    }

    #[test]
    fn logreg_loss_never_increases(seed in 0u64..1000) {
        let data = gen_synthetic(200, seed).unwrap();
        let params = LogRegParams { learning_rate: 0.01, epochs: 100, l2: 0.0, seed };
        let (_, history) = fit_logreg_with_history(&data, &params).unwrap();
        for w in history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn empty_relabels_keep_parameters(seed in 0u64..1000) {
        let data = gen_synthetic(120, seed).unwrap();
        let model = Model::Cart(fit_tree(&data, &tree_params(Some(4), seed)).unwrap());
        let r = retrain_with_relabels(&model, &data, &[]).unwrap();
        prop_assert_eq!(r.model, model);
        prop_assert_eq!(r.data, data);
    }
}

/// Relabelled rows are predicted with their new label by an unbounded tree.
#[test]
fn relabelled_rows_take_their_new_labels() {
    for rep in 0..10u64 {
        let data: Dataset = gen_synthetic(300, 100 + rep).unwrap();
        let model = Model::Cart(fit_tree(&data, &tree_params(None, rep)).unwrap());
        let rows: Vec<usize> = (0..5).map(|k| (k * 53 + rep as usize * 7) % data.len()).collect();
        let relabels: Vec<Relabel> = rows
            .iter()
            .map(|&i| Relabel {
                row_index: i,
                new_label: if data.label(i) == "disease" { "no_disease".into() } else { "disease".into() },
                author: "tester".into(),
            })
            .collect();
        let r = retrain_with_relabels(&model, &data, &relabels).unwrap();
        for rl in &relabels {
            let p = r.model.predict_proba(&data.rows()[rl.row_index]).unwrap();
            assert_eq!(p.top_label(), rl.new_label, "rep {rep}, row {}", rl.row_index);
        }
        assert_eq!(r.records.len(), 5);
    }
}
