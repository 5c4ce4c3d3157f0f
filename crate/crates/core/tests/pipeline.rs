mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewalign::alignment::profile_all;
use viewalign::backbone::RecConfig;
use viewalign::data::InteractionDataset;
use viewalign::experiment::{
    ablate_fusion, ablate_views, prepare_features, sweep, view_importance, AblationProtocol, RunSpec, SweepGrid,
};
use viewalign::store::ViewEmbeddingSet;

const NAMES: [&str; 5] = ["global", "title", "brand", "category", "description"];

fn store_for(ds: &InteractionDataset, d: usize, seed: u64) -> ViewEmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ds.n_items();
    let text = (0..n * NAMES.len() * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let image = (0..n * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let names = NAMES.iter().map(|s| s.to_string()).collect();
    ViewEmbeddingSet::new("t", names, ds.item_ids().to_vec(), d, text, image).unwrap()
}

fn quick_spec() -> RunSpec {
    RunSpec {
        ks: vec![5, 10],
        deterministic: true,
        rec: RecConfig {
            dim: 8,
            knn_k: 3,
            lr: 0.01,
            epochs_max: 2,
            batch_size: 128,
            seed: 1,
            ..RecConfig::default()
        },
        ..RunSpec::default()
    }
}

fn report_variants(path: &std::path::Path) -> (serde_json::Value, BTreeSet<String>, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    let rows: Vec<serde_json::Value> = lines.map(|l| serde_json::from_str(l).unwrap()).collect();
    let variants = rows.iter().map(|r| r["variant"].as_str().unwrap().to_string()).collect();
    (header, variants, rows.len())
}

#[test]
fn leave_one_out_runs_one_variant_per_view_plus_full() {
    let ds = common::random_dataset(20, 30, (6, 1, 1), 1);
    let store = store_for(&ds, 4, 1);
    let pristine = store.clone();
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec {
        out: Some(dir.path().to_path_buf()),
        ..quick_spec()
    };
    let outs = ablate_views(&ds, &store, &spec, AblationProtocol::LeaveOneOut).unwrap();
    assert_eq!(outs.len(), 6);
    assert_eq!(outs[0].label, "full");
    assert_eq!(outs[0].view_names.len(), 5);
    for (o, name) in outs[1..].iter().zip(NAMES) {
        assert_eq!(o.label, format!("-{name}"));
        assert_eq!(o.view_names.len(), 4);
        assert!(!o.view_names.iter().any(|v| v == name));
    }
    assert_eq!(store, pristine);

    let (header, variants, n_rows) = report_variants(&dir.path().join("report.jsonl"));
    assert_eq!(variants.len(), 6);
    assert_eq!(n_rows, 12);
    assert!(header["config"].get("out").is_none());
    assert!(header["dataset"]["n_users"].is_u64());
}

#[test]
fn only_global_sa_is_the_global_view() {
    let ds = common::random_dataset(10, 20, (5, 1, 1), 2);
    let store = store_for(&ds, 4, 2);
    let spec = RunSpec {
        views: Some(vec![0]),
        ..quick_spec()
    };
    let (set, profiles, features) = prepare_features(&ds, &store, &spec).unwrap();
    assert_eq!(set.view_names(), ["global"]);
    assert!(profiles.iter().all(|p| p.scores == vec![1.0]));
    let global: Vec<f64> = (0..ds.n_items())
        .flat_map(|i| store.text(i, 0).iter().map(|&x| x as f64))
        .collect();
    assert_eq!(features.text.data, global);

    let outs = ablate_views(&ds, &store, &quick_spec(), AblationProtocol::OnlyGlobal).unwrap();
    assert_eq!(outs.len(), 2);
    assert_eq!(outs[1].label, "only-global");
    assert_eq!(outs[1].text_dim, 4);
}

#[test]
fn fusion_ablation_echoes_text_dims() {
    let ds = common::random_dataset(15, 25, (6, 1, 1), 3);
    let store = store_for(&ds, 4, 3);
    let outs = ablate_fusion(&ds, &store, &quick_spec()).unwrap();
    let dims: Vec<(String, usize)> = outs.iter().map(|o| (o.label.clone(), o.text_dim)).collect();
    assert_eq!(
        dims,
        [("sum", 4), ("concat", 20), ("mlp", 4), ("sa", 4)].map(|(l, d)| (l.to_string(), d))
    );
}

#[test]
fn sweeps_produce_one_row_per_grid_value() {
    let ds = common::random_dataset(15, 25, (6, 1, 1), 4);
    let store = store_for(&ds, 4, 4);
    let pristine = store.clone();
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec {
        out: Some(dir.path().to_path_buf()),
        ..quick_spec()
    };
    let taus = vec![0.05, 0.1, 0.2, 0.5, 0.7];
    let outs = sweep(&ds, &store, &spec, &SweepGrid::Tau(taus.clone())).unwrap();
    assert_eq!(outs.len(), 5);
    let (_, variants, _) = report_variants(&dir.path().join("report.jsonl"));
    assert_eq!(variants.len(), 5);
    for (o, t) in outs.iter().zip(&taus) {
        assert!(o.profiles.iter().all(|p| p.tau == *t));
        for (p, q) in o.profiles.iter().zip(&outs[0].profiles) {
            assert_eq!(p.argmax(), q.argmax());
        }
    }
    assert_eq!(store, pristine);

    let dims = sweep(&ds, &store, &quick_spec(), &SweepGrid::Dim(vec![2, 4, 8, 16])).unwrap();
    assert_eq!(dims.len(), 4);
    let widths: Vec<usize> = dims.iter().map(|o| o.train.model.params[0].value.cols).collect();
    assert_eq!(widths, [2, 4, 8, 16]);
}

#[test]
fn invalid_grids_fail_before_training() {
    let ds = common::random_dataset(5, 12, (3, 1, 1), 5);
    let store = store_for(&ds, 2, 5);
    for grid in [SweepGrid::Tau(vec![0.1, -0.5]), SweepGrid::Tau(vec![]), SweepGrid::Dim(vec![0])] {
        let err = sweep(&ds, &store, &quick_spec(), &grid).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn importance_counts_are_a_partition(seed in 0u64..1000, n_items in 12usize..40, tau in 0.05f64..1.0) {
        let ds = common::random_dataset(3, n_items, (2, 1, 1), seed);
        let store = store_for(&ds, 3, seed);
        let profiles = profile_all(&store, tau).unwrap();
        let names: Vec<String> = NAMES.iter().map(|s| s.to_string()).collect();
        let table = view_importance(&profiles, &names).unwrap();
        let c = names.len();
        let n = ds.n_items();
        for v in 0..c {
            prop_assert_eq!(table.counts[v].iter().sum::<usize>(), n);
        }
        for r in 0..c {
            prop_assert_eq!((0..c).map(|v| table.counts[v][r]).sum::<usize>(), n);
        }
        prop_assert_eq!(table.importance_sum.iter().sum::<usize>(), n * c * (c - 1) / 2);
        let rank0 = profiles.iter().filter(|p| p.argmax() == 0).count();
        prop_assert_eq!(table.counts[0][0], rank0);
    }
}
