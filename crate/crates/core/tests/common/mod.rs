#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewalign::data::{write_split_manifest, InteractionDataset, Split, SplitRecord};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_viewalign"))
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Random dataset with disjoint per-user train/val/test sets of the given sizes.
pub fn random_dataset(n_users: usize, n_items: usize, sizes: (usize, usize, usize), seed: u64) -> InteractionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for u in 0..n_users {
        let mut items: Vec<usize> = (0..n_items).collect();
        items.shuffle(&mut rng);
        let (tr, va, te) = sizes;
        let tr = rng.gen_range(1..=tr);
        for (p, &i) in items.iter().take(tr + va + te).enumerate() {
            let split = if p < tr {
                Split::Train
            } else if p < tr + va {
                Split::Val
            } else {
                Split::Test
            };
            records.push(SplitRecord {
                user_id: format!("u{u:04}"),
                item_id: format!("i{i:04}"),
                split,
            });
        }
    }
    // Every item must appear at least once.
    for i in 0..n_items {
        records.push(SplitRecord {
            user_id: "u9999".into(),
            item_id: format!("i{i:04}"),
            split: Split::Train,
        });
    }
    InteractionDataset::from_split_records(&records).unwrap()
}

/// Split manifest with exactly `n_users` users, `n_items` items and `n_inter` interactions.
pub fn write_count_manifest(path: &Path, n_users: usize, n_items: usize, n_inter: usize) {
    assert!(n_users >= n_items && n_inter >= n_users);
    let mut out = String::with_capacity(n_inter * 60);
    for t in 0..n_inter {
        let (u, round) = (t % n_users, t / n_users);
        let i = (u + round * 1000) % n_items;
        out.push_str(&format!(
            "{{\"user_id\":\"u{u}\",\"item_id\":\"i{i}\",\"split\":\"train\"}}\n"
        ));
    }
    std::fs::write(path, out).unwrap();
}

pub fn write_dataset(ds: &InteractionDataset, path: &Path) {
    write_split_manifest(ds, path).unwrap();
}
