//! Interaction data: loading, k-core filtering, per-user splitting and item metadata.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const DEFAULT_K_CORE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::param(format!("unknown split {other:?}"))),
        }
    }
}

/// One raw implicit-feedback event.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: Option<f64>,
}

/// Users and items densely re-indexed (sorted external id order) with
/// pairwise-disjoint per-user train/val/test positive sets.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    train: Vec<Vec<usize>>,
    val: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
}

/// Record of the split manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub user_id: String,
    pub item_id: String,
    pub split: Split,
}

impl InteractionDataset {
    /// Builds a dataset from explicit per-user split assignments, validating every invariant.
    pub fn from_split_records(records: &[SplitRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut user_ids: Vec<String> = records.iter().map(|r| r.user_id.clone()).collect();
        let mut item_ids: Vec<String> = records.iter().map(|r| r.item_id.clone()).collect();
        user_ids.sort();
        user_ids.dedup();
        item_ids.sort();
        item_ids.dedup();
        let user_index = index_of(&user_ids);
        let item_index = index_of(&item_ids);
        let m = user_ids.len();
        let mut sets = [vec![Vec::new(); m], vec![Vec::new(); m], vec![Vec::new(); m]];
        for r in records {
            let u = user_index[&r.user_id];
            let i = item_index[&r.item_id];
            sets[r.split as usize][u].push(i);
        }
        let [train, val, test] = sets;
        let ds = Self {
            user_ids,
            item_ids,
            user_index,
            item_index,
            train,
            val,
            test,
        };
        ds.finish()
    }

    fn finish(mut self) -> Result<Self> {
        for sets in [&mut self.train, &mut self.val, &mut self.test] {
            for s in sets.iter_mut() {
                s.sort_unstable();
            }
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks index bounds, per-user disjointness and non-empty train sets.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_items();
        for u in 0..self.n_users() {
            let mut seen = HashSet::new();
            for split in [Split::Train, Split::Val, Split::Test] {
                for &i in self.positives(split, u) {
                    if i >= n {
                        return Err(Error::Format(format!("item index {i} out of range")));
                    }
                    if !seen.insert(i) {
                        return Err(Error::Format(format!(
                            "user {:?} has item {:?} in more than one split",
                            self.user_ids[u], self.item_ids[i]
                        )));
                    }
                }
            }
            if self.train[u].is_empty() {
                return Err(Error::Format(format!(
                    "user {:?} has no train positives",
                    self.user_ids[u]
                )));
            }
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// Sorted item indices of one user's positives in a split.
    pub fn positives(&self, split: Split, user: usize) -> &[usize] {
        let sets = match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        };
        &sets[user]
    }

    pub fn split_size(&self, split: Split) -> usize {
        (0..self.n_users()).map(|u| self.positives(split, u).len()).sum()
    }

    pub fn n_interactions(&self) -> usize {
        [Split::Train, Split::Val, Split::Test]
            .iter()
            .map(|&s| self.split_size(s))
            .sum()
    }

    /// Train interaction count per item.
    pub fn item_train_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_items()];
        for items in &self.train {
            for &i in items {
                deg[i] += 1;
            }
        }
        deg
    }

    /// Manifest records ordered by user index, then split, then item index.
    pub fn split_records(&self) -> Vec<SplitRecord> {
        let mut out = Vec::with_capacity(self.n_interactions());
        for u in 0..self.n_users() {
            for split in [Split::Train, Split::Val, Split::Test] {
                for &i in self.positives(split, u) {
                    out.push(SplitRecord {
                        user_id: self.user_ids[u].clone(),
                        item_id: self.item_ids[i].clone(),
                        split,
                    });
                }
            }
        }
        out
    }
}

fn index_of(ids: &[String]) -> HashMap<String, usize> {
    ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect()
}

/// Number of (train, val, test) positives for a user with `n` interactions.
///
/// Val and test each take `floor(n / 10)`; users with fewer than three
/// interactions keep everything in train.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    if n < 3 {
        return (n, 0, 0);
    }
    let held = n / 10;
    (n - 2 * held, held, held)
}

/// Parses the `user<TAB>item[<TAB>timestamp]` interaction format.
pub fn read_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err("expected user_id<TAB>item_id[<TAB>timestamp]"));
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(parse_err("empty user or item id"));
        }
        let timestamp = match fields.get(2).map(|t| t.trim()) {
            None | Some("") => None,
            Some(t) => Some(
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err("timestamp is not a number"))?,
            ),
        };
        out.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            timestamp,
        });
    }
    Ok(out)
}

pub fn load_interactions(path: &Path, k_core: usize, seed: u64) -> Result<InteractionDataset> {
    let raw = read_interactions(path)?;
    build_dataset(raw, k_core, seed)
}

/// Deduplicates, k-core filters, re-indexes and splits raw interactions.
pub fn build_dataset(raw: Vec<Interaction>, k_core: usize, seed: u64) -> Result<InteractionDataset> {
    if k_core == 0 {
        return Err(Error::param("k_core must be >= 1"));
    }
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // Keep the earliest timestamp of repeated (user, item) pairs.
    let mut pairs: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
    for it in raw {
        let entry = pairs.entry((it.user, it.item)).or_insert(it.timestamp);
        *entry = match (*entry, it.timestamp) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    let mut edges: Vec<(String, String, Option<f64>)> =
        pairs.into_iter().map(|((u, i), t)| (u, i, t)).collect();
    kcore_filter(&mut edges, k_core);
    if edges.is_empty() {
        return Err(Error::EmptyAfterKcore { k_core });
    }

    let mut user_ids: Vec<String> = edges.iter().map(|e| e.0.clone()).collect();
    let mut item_ids: Vec<String> = edges.iter().map(|e| e.1.clone()).collect();
    user_ids.sort();
    user_ids.dedup();
    item_ids.sort();
    item_ids.dedup();
    let user_index = index_of(&user_ids);
    let item_index = index_of(&item_ids);

    let m = user_ids.len();
    let mut per_user: Vec<Vec<(Option<f64>, usize)>> = vec![Vec::new(); m];
    for (u, i, t) in &edges {
        per_user[user_index[u]].push((*t, item_index[i]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(m);
    let mut val = Vec::with_capacity(m);
    let mut test = Vec::with_capacity(m);
    for mut items in per_user {
        // Untimed events sort after timed ones; item index breaks ties.
        items.sort_by(|a, b| match (a.0, b.0) {
            (Some(x), Some(y)) => x.total_cmp(&y).then(a.1.cmp(&b.1)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.1.cmp(&b.1),
        });
        let mut order: Vec<usize> = items.into_iter().map(|(_, i)| i).collect();
        order.shuffle(&mut rng);
        let (_, n_val, n_test) = split_counts(order.len());
        val.push(order[..n_val].to_vec());
        test.push(order[n_val..n_val + n_test].to_vec());
        train.push(order[n_val + n_test..].to_vec());
    }

    InteractionDataset {
        user_ids,
        item_ids,
        user_index,
        item_index,
        train,
        val,
        test,
    }
    .finish()
}

/// Iteratively drops users and items with fewer than `k` interactions until a fixpoint.
fn kcore_filter(edges: &mut Vec<(String, String, Option<f64>)>, k: usize) {
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (u, i, _) in edges.iter() {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let keep: Vec<bool> = edges
            .iter()
            .map(|(u, i, _)| user_deg[u.as_str()] >= k && item_deg[i.as_str()] >= k)
            .collect();
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut flags = keep.into_iter();
        edges.retain(|_| flags.next().unwrap_or(false));
    }
}

pub fn read_split_manifest(path: &Path) -> Result<InteractionDataset> {
    let records: Vec<SplitRecord> = jsonl::read_records(path)?;
    InteractionDataset::from_split_records(&records)
}

pub fn write_split_manifest(ds: &InteractionDataset, path: &Path) -> Result<()> {
    jsonl::write_records(path, &ds.split_records())
}

/// Table-style dataset summary. Density is kept as an exact ratio of integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: u64,
    pub n_items: u64,
    pub n_interactions: u64,
}

impl DatasetStats {
    pub fn from_counts(n_users: u64, n_items: u64, n_interactions: u64) -> Result<Self> {
        let cells = n_users
            .checked_mul(n_items)
            .ok_or_else(|| Error::param("user x item count overflows"))?;
        if cells == 0 || n_interactions == 0 {
            return Err(Error::EmptyDataset);
        }
        if n_interactions > cells {
            return Err(Error::Format(format!(
                "{n_interactions} interactions exceed {n_users} x {n_items} cells"
            )));
        }
        Ok(Self {
            n_users,
            n_items,
            n_interactions,
        })
    }

    /// Density as the exact ratio `(interactions, users * items)`.
    pub fn density_ratio(&self) -> (u64, u64) {
        (self.n_interactions, self.n_users * self.n_items)
    }

    pub fn density(&self) -> f64 {
        let (num, den) = self.density_ratio();
        num as f64 / den as f64
    }

    /// Density as a percentage rounded half-up to `decimals` places, using integer arithmetic.
    pub fn density_percent(&self, decimals: u32) -> String {
        let (num, den) = self.density_ratio();
        let scale = 100u128 * 10u128.pow(decimals);
        let scaled = (2 * num as u128 * scale + den as u128) / (2 * den as u128);
        let unit = 10u128.pow(decimals);
        if decimals == 0 {
            format!("{scaled}%")
        } else {
            format!(
                "{}.{:0width$}%",
                scaled / unit,
                scaled % unit,
                width = decimals as usize
            )
        }
    }
}

/// Counts over all three splits.
pub fn compute_stats(ds: &InteractionDataset) -> Result<DatasetStats> {
    DatasetStats::from_counts(
        ds.n_users() as u64,
        ds.n_items() as u64,
        ds.n_interactions() as u64,
    )
}

/// Default text fields, in view order.
pub const DEFAULT_SCHEMA: [&str; 4] = ["title", "brand", "categories", "description"];

#[derive(Debug, Clone, PartialEq)]
pub struct ItemMetadata {
    pub item_id: String,
    /// Schema fields in schema order, followed by unknown fields in key order.
    pub fields: Vec<(String, String)>,
    pub image_ref: Option<PathBuf>,
    /// Schema fields absent from the record (stored as empty strings).
    pub missing_fields: Vec<String>,
    /// Keys outside the schema, preserved in `fields`.
    pub unknown_fields: Vec<String>,
}

impl ItemMetadata {
    pub fn field(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

fn text_value(value: &serde_json::Value) -> Option<String> {
    use serde_json::Value;
    match value {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(text_value)
                .collect::<Vec<_>>()
                .join(", "),
        ),
        other => Some(other.to_string()),
    }
}

fn metadata_from_value(
    value: serde_json::Value,
    schema: &[&str],
) -> std::result::Result<ItemMetadata, String> {
    let serde_json::Value::Object(mut obj) = value else {
        return Err("record is not an object".into());
    };
    let item_id = match obj.remove("item_id") {
        Some(serde_json::Value::String(s)) if !s.is_empty() => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        _ => return Err("missing item_id".into()),
    };
    let image_ref = obj
        .remove("image_path")
        .and_then(|v| text_value(&v))
        .filter(|s| !s.is_empty())
        .map(PathBuf::from);
    let mut fields = Vec::with_capacity(schema.len());
    let mut missing_fields = Vec::new();
    for &name in schema {
        match obj.remove(name).as_ref().and_then(text_value) {
            Some(v) => fields.push((name.to_string(), v)),
            None => {
                missing_fields.push(name.to_string());
                fields.push((name.to_string(), String::new()));
            }
        }
    }
    let mut unknown_fields = Vec::new();
    for (key, v) in obj {
        unknown_fields.push(key.clone());
        fields.push((key, text_value(&v).unwrap_or_default()));
    }
    Ok(ItemMetadata {
        item_id,
        fields,
        image_ref,
        missing_fields,
        unknown_fields,
    })
}

/// Reads line-delimited metadata records. Duplicate item ids are an error.
pub fn load_metadata(path: &Path, schema: &[&str]) -> Result<Vec<ItemMetadata>> {
    let values: Vec<serde_json::Value> = jsonl::read_records(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(values.len());
    for (idx, value) in values.into_iter().enumerate() {
        let meta = metadata_from_value(value, schema).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        })?;
        if !seen.insert(meta.item_id.clone()) {
            return Err(Error::DuplicateItem(meta.item_id));
        }
        out.push(meta);
    }
    Ok(out)
}

/// Dataset items with no metadata record, in item index order.
pub fn missing_items(ds: &InteractionDataset, metadata: &[ItemMetadata]) -> Vec<String> {
    let have: HashSet<&str> = metadata.iter().map(|m| m.item_id.as_str()).collect();
    ds.item_ids()
        .iter()
        .filter(|id| !have.contains(id.as_str()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn inter(u: &str, i: &str) -> Interaction {
        Interaction {
            user: u.into(),
            item: i.into(),
            timestamp: None,
        }
    }

    #[test]
    fn parse_error_names_line() {
        let f = write_tmp("u1\ti1\t5\nu2 i2\n");
        match read_interactions(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("u1\ti1\tsoon\n");
        assert!(matches!(
            read_interactions(f.path()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_after_kcore() {
        let raw = vec![inter("a", "x"), inter("b", "y")];
        assert!(matches!(
            build_dataset(raw, 2, 0),
            Err(Error::EmptyAfterKcore { k_core: 2 })
        ));
    }

    #[test]
    fn single_cell_density_is_one() {
        let ds = build_dataset(vec![inter("a", "x")], 1, 0).unwrap();
        let stats = compute_stats(&ds).unwrap();
        assert_eq!(stats.density(), 1.0);
        assert_eq!(stats.density_percent(3), "100.000%");
    }

    #[test]
    fn table_densities() {
        let baby = DatasetStats::from_counts(19445, 7050, 160792).unwrap();
        assert_eq!(baby.density_percent(3), "0.117%");
        assert!((baby.density() - 0.00117).abs() < 5e-6);
        let sports = DatasetStats::from_counts(35598, 18357, 296337).unwrap();
        assert_eq!(sports.density_percent(3), "0.045%");
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(DatasetStats::from_counts(0, 0, 0).is_err());
        assert!(DatasetStats::from_counts(2, 2, 5).is_err());
    }

    #[test]
    fn four_by_three_split_counts() {
        let mut raw = Vec::new();
        for u in 0..4 {
            for i in 0..3 {
                raw.push(inter(&format!("u{u}"), &format!("i{i}")));
            }
        }
        let ds = build_dataset(raw, 1, 7).unwrap();
        for u in 0..4 {
            // floor(3/10) = 0 held out, so every positive stays in train.
            assert_eq!(ds.positives(Split::Train, u).len(), 3);
            assert!(ds.positives(Split::Val, u).len() <= 1);
            assert!(ds.positives(Split::Test, u).len() <= 1);
        }
        assert_eq!(split_counts(3), (3, 0, 0));
        assert_eq!(split_counts(2), (2, 0, 0));
        assert_eq!(split_counts(10), (8, 1, 1));
        assert_eq!(split_counts(25), (21, 2, 2));
    }

    #[test]
    fn split_is_seeded_and_deterministic() {
        let mut raw = Vec::new();
        for u in 0..6 {
            for i in 0..20 {
                if (u + i) % 3 != 0 {
                    raw.push(inter(&format!("u{u}"), &format!("i{i:02}")));
                }
            }
        }
        let a = build_dataset(raw.clone(), 1, 11).unwrap();
        let b = build_dataset(raw.clone(), 1, 11).unwrap();
        assert_eq!(a.split_records(), b.split_records());
        let c = build_dataset(raw, 1, 12).unwrap();
        assert_ne!(a.split_records(), c.split_records());
    }

    #[test]
    fn kcore_is_a_fixpoint() {
        // "c" and "d" fall below two items; dropping "d" leaves "z" without users.
        let raw = vec![
            inter("a", "x"),
            inter("a", "y"),
            inter("b", "x"),
            inter("b", "y"),
            inter("c", "x"),
            inter("d", "z"),
        ];
        let ds = build_dataset(raw, 2, 0).unwrap();
        assert_eq!(ds.user_ids(), ["a", "b"]);
        assert_eq!(ds.item_ids(), ["x", "y"]);
        let records = ds.split_records();
        let again = InteractionDataset::from_split_records(&records).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn manifest_round_trip() {
        let mut raw = Vec::new();
        for u in 0..5 {
            for i in 0..12 {
                raw.push(inter(&format!("u{u}"), &format!("i{i}")));
            }
        }
        let ds = build_dataset(raw, 1, 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_split_manifest(&ds, f.path()).unwrap();
        let back = read_split_manifest(f.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.split_size(Split::Val), 5);
    }

    #[test]
    fn overlapping_manifest_rejected() {
        let rec = |s| SplitRecord {
            user_id: "u".into(),
            item_id: "i".into(),
            split: s,
        };
        assert!(InteractionDataset::from_split_records(&[rec(Split::Train), rec(Split::Test)]).is_err());
    }

    #[test]
    fn metadata_fields_and_flags() {
        let f = write_tmp(concat!(
            r#"{"item_id":"a","title":"Stroller","brand":"Graco","categories":["Baby","Gear"],"description":"d","image_path":"a.jpg"}"#,
            "\n",
            r#"{"item_id":"b","title":"Bib","categories":"Baby, Feeding","description":"","color":"red"}"#,
            "\n"
        ));
        let metas = load_metadata(f.path(), &DEFAULT_SCHEMA).unwrap();
        assert_eq!(metas.len(), 2);
        assert_eq!(metas[0].fields.len(), 4);
        assert_eq!(metas[0].field("categories"), Some("Baby, Gear"));
        assert!(metas[0].missing_fields.is_empty());
        assert_eq!(metas[0].image_ref.as_deref(), Some(Path::new("a.jpg")));
        assert_eq!(metas[1].field("brand"), Some(""));
        assert_eq!(metas[1].missing_fields, ["brand"]);
        assert_eq!(metas[1].unknown_fields, ["color"]);
        assert_eq!(metas[1].field("color"), Some("red"));
        assert_eq!(metas[1].image_ref, None);
    }

    #[test]
    fn duplicate_metadata_id() {
        let f = write_tmp(concat!(
            r#"{"item_id":"a","title":"x"}"#,
            "\n",
            r#"{"item_id":"b","title":"y"}"#,
            "\n",
            r#"{"item_id":"a","title":"z"}"#,
            "\n"
        ));
        match load_metadata(f.path(), &DEFAULT_SCHEMA) {
            Err(Error::DuplicateItem(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_items_without_metadata() {
        let ds = build_dataset(vec![inter("u", "a"), inter("u", "b")], 1, 0).unwrap();
        let f = write_tmp("{\"item_id\":\"a\"}\n");
        let metas = load_metadata(f.path(), &DEFAULT_SCHEMA).unwrap();
        assert_eq!(missing_items(&ds, &metas), ["b"]);
    }
}
