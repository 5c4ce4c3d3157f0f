//! All-item top-K evaluation with observed-positive masking, and early stopping.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, Split};
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [10, 20, 50];
pub const EARLY_STOP_K: usize = 20;
pub const DEFAULT_PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub split: Split,
    /// Splits whose positives are removed from every ranking.
    pub mask: Vec<Split>,
}

impl EvalConfig {
    /// Default K list; train is always masked, and val too when evaluating test.
    pub fn for_split(split: Split) -> Self {
        let mask = match split {
            Split::Train => vec![],
            Split::Val => vec![Split::Train],
            Split::Test => vec![Split::Train, Split::Val],
        };
        Self {
            ks: DEFAULT_KS.to_vec(),
            split,
            mask,
        }
    }

    pub fn with_ks(mut self, ks: Vec<usize>) -> Self {
        self.ks = ks;
        self
    }

    pub fn validate(&self, n_items: usize) -> Result<()> {
        if self.ks.is_empty() {
            return Err(Error::param("empty K list"));
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("K values must be strictly ascending"));
        }
        if self.ks[0] == 0 || *self.ks.last().unwrap() > n_items {
            return Err(Error::param(format!("K values must lie in 1..={n_items}")));
        }
        if self.mask.contains(&self.split) {
            return Err(Error::param("cannot mask the split being evaluated"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_users: usize,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }
}

/// Anything that can score every item for a user.
pub trait ScoreProvider: Sync {
    fn n_items(&self) -> usize;
    fn scores(&self, user: usize) -> Result<Vec<f64>>;
}

/// Items sorted by descending score with masked items removed; ties by ascending index.
pub fn rank_items(scores: &[f64], masked: &[usize]) -> Vec<usize> {
    let mut is_masked = vec![false; scores.len()];
    for &i in masked {
        if i < scores.len() {
            is_masked[i] = true;
        }
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| !is_masked[i]).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn hits_in_top_k(ranking: &[usize], targets: &[usize], k: usize) -> Vec<usize> {
    let set: std::collections::HashSet<usize> = targets.iter().copied().collect();
    ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| set.contains(i))
        .map(|(p, _)| p + 1)
        .collect()
}

pub fn recall_at_k(ranking: &[usize], targets: &[usize], k: usize) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::param("recall over an empty target set"));
    }
    Ok(hits_in_top_k(ranking, targets, k).len() as f64 / targets.len() as f64)
}

/// Binary-relevance NDCG with the `1 / log2(p + 1)` discount, positions 1-based.
pub fn ndcg_at_k(ranking: &[usize], targets: &[usize], k: usize) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::param("ndcg over an empty target set"));
    }
    let discount = |p: usize| 1.0 / ((p + 1) as f64).log2();
    let dcg: f64 = hits_in_top_k(ranking, targets, k).into_iter().map(discount).sum();
    let idcg: f64 = (1..=k.min(targets.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// Macro-averaged metrics over users with at least one target in the split.
pub fn evaluate(
    provider: &dyn ScoreProvider,
    ds: &InteractionDataset,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate(ds.n_items())?;
    if provider.n_items() != ds.n_items() {
        return Err(Error::param("score provider and dataset disagree on item count"));
    }
    let users: Vec<usize> = (0..ds.n_users())
        .filter(|&u| !ds.positives(config.split, u).is_empty())
        .collect();
    if users.is_empty() {
        return Err(Error::NoEvaluableUsers(config.split.to_string()));
    }
    let per_user: Vec<(Vec<f64>, Vec<f64>)> = users
        .par_iter()
        .map(|&u| {
            let scores = provider.scores(u)?;
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::Numeric(format!("non-finite score for user {u}")));
            }
            let masked: Vec<usize> = config
                .mask
                .iter()
                .flat_map(|&s| ds.positives(s, u).iter().copied())
                .collect();
            let ranking = rank_items(&scores, &masked);
            let targets = ds.positives(config.split, u);
            let mut rec = Vec::with_capacity(config.ks.len());
            let mut nd = Vec::with_capacity(config.ks.len());
            for &k in &config.ks {
                rec.push(recall_at_k(&ranking, targets, k)?);
                nd.push(ndcg_at_k(&ranking, targets, k)?);
            }
            Ok((rec, nd))
        })
        .collect::<Result<_>>()?;
    let n = users.len() as f64;
    let mut recall = vec![0.0; config.ks.len()];
    let mut ndcg = vec![0.0; config.ks.len()];
    for (r, d) in &per_user {
        recall.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        ndcg.iter_mut().zip(d).for_each(|(a, b)| *a += b);
    }
    recall.iter_mut().for_each(|x| *x /= n);
    ndcg.iter_mut().for_each(|x| *x /= n);
    Ok(EvalReport {
        split: config.split,
        ks: config.ks.clone(),
        recall,
        ndcg,
        n_users: users.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Decides from a full metric history: stop once the last `patience` entries bring no
/// strict improvement over the running best. The best epoch is the earliest maximum.
pub fn early_stopper(history: &[f64], patience: usize) -> (StopDecision, Option<usize>) {
    let mut best: Option<usize> = None;
    for (e, &v) in history.iter().enumerate() {
        if best.is_none_or(|b| v > history[b]) {
            best = Some(e);
        }
    }
    let decision = match best {
        Some(b) if patience >= 1 && history.len() - 1 - b >= patience => StopDecision::Stop,
        _ => StopDecision::Continue,
    };
    (decision, best)
}

/// Incremental form of [`early_stopper`].
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    seen: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: None,
            seen: 0,
        }
    }

    /// Records the metric of the next epoch; returns whether it improved the best.
    pub fn observe(&mut self, value: f64) -> bool {
        let epoch = self.seen;
        self.seen += 1;
        if self.best.is_none_or(|(_, b)| value > b) {
            self.best = Some((epoch, value));
            true
        } else {
            false
        }
    }

    pub fn decision(&self) -> StopDecision {
        match self.best {
            Some((b, _)) if self.seen - 1 - b >= self.patience => StopDecision::Stop,
            _ => StopDecision::Continue,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Scores items by train interaction count.
pub struct PopularityScorer {
    counts: Vec<f64>,
}

impl PopularityScorer {
    pub fn new(ds: &InteractionDataset) -> Self {
        Self {
            counts: ds.item_train_degrees().into_iter().map(|c| c as f64).collect(),
        }
    }
}

impl ScoreProvider for PopularityScorer {
    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn scores(&self, _user: usize) -> Result<Vec<f64>> {
        Ok(self.counts.clone())
    }
}

/// Uniform random scores, reproducible per `(seed, user)`.
pub struct RandomScorer {
    n_items: usize,
    seed: u64,
}

impl RandomScorer {
    pub fn new(n_items: usize, seed: u64) -> Self {
        Self { n_items, seed }
    }
}

impl ScoreProvider for RandomScorer {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Ok((0..self.n_items).map(|_| rng.gen::<f64>()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub split: Split,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub n_users: usize,
}

impl EvalReport {
    pub fn records(&self) -> Vec<ReportRecord> {
        self.ks
            .iter()
            .enumerate()
            .map(|(p, &k)| ReportRecord {
                split: self.split,
                k,
                recall: self.recall[p],
                ndcg: self.ndcg[p],
                n_users: self.n_users,
            })
            .collect()
    }
}

/// Writes a `{"config": ...}` header line followed by one record per (split, K).
pub fn write_report(path: &Path, config_echo: &serde_json::Value, reports: &[EvalReport]) -> Result<()> {
    use std::io::Write;
    let mut out = serde_json::to_string(&serde_json::json!({ "config": config_echo })).expect("json");
    out.push('\n');
    for r in reports {
        for rec in r.records() {
            out.push_str(&serde_json::to_string(&rec).expect("json"));
            out.push('\n');
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
