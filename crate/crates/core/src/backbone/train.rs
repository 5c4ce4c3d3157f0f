use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ItemFeatures, RecConfig, RecModel};
use crate::data::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EarlyStopper, EvalConfig, StopDecision, EARLY_STOP_K};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall20: Option<f64>,
    pub val_ndcg20: Option<f64>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainOptions {
    /// Record wall-clock time per epoch; off for byte-reproducible logs.
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (or the last epoch without a val split).
    pub model: RecModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val: Option<f64>,
    pub epochs_run: usize,
}

/// One `(user, positive, negative)` triple per train positive, negatives drawn uniformly
/// from items outside the user's train set. Users that interacted with every item are skipped.
pub fn sample_triples(ds: &InteractionDataset, rng: &mut impl Rng) -> Vec<(usize, usize, usize)> {
    let n = ds.n_items();
    let mut out = Vec::with_capacity(ds.split_size(Split::Train));
    for u in 0..ds.n_users() {
        let pos = ds.positives(Split::Train, u);
        if pos.len() >= n {
            continue;
        }
        for &p in pos {
            let neg = loop {
                let j = rng.gen_range(0..n);
                if pos.binary_search(&j).is_err() {
                    break j;
                }
            };
            out.push((u, p, neg));
        }
    }
    out
}

/// Validation config used for early stopping; K shrinks to N on tiny catalogs.
pub fn early_stop_eval(n_items: usize) -> EvalConfig {
    EvalConfig::for_split(Split::Val).with_ks(vec![EARLY_STOP_K.min(n_items)])
}

pub fn train(
    ds: &InteractionDataset,
    features: ItemFeatures,
    config: &RecConfig,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    let mut model = RecModel::new(ds, features, config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));
    let has_val = ds.split_size(Split::Val) > 0;
    let eval_cfg = early_stop_eval(ds.n_items());
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best: Option<RecModel> = None;
    let mut log = Vec::new();
    let start = Instant::now();

    for epoch in 0..config.epochs_max {
        let mut triples = sample_triples(ds, &mut rng);
        triples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in triples.chunks(config.batch_size) {
            let (loss, grads) = model.loss_and_grad(batch);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss} at epoch {epoch}; the learning rate ({}) is likely too high",
                    config.lr
                )));
            }
            loss_sum += loss * batch.len() as f64;
            model.apply_gradients(&grads);
        }
        if !model.params_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        let loss = loss_sum / triples.len().max(1) as f64;

        let (val_recall20, val_ndcg20) = if has_val {
            let report = evaluate(&model.scorer(), ds, &eval_cfg)?;
            (Some(report.recall[0]), Some(report.ndcg[0]))
        } else {
            (None, None)
        };
        let elapsed_ms = if opts.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        log::debug!("epoch {epoch}: loss {loss:.6} val recall {val_recall20:?}");
        log.push(EpochLog {
            epoch,
            loss,
            val_recall20,
            val_ndcg20,
            elapsed_ms,
        });
        if let Some(r) = val_recall20 {
            if stopper.observe(r) {
                best = Some(model.clone());
            }
            if stopper.decision() == StopDecision::Stop {
                break;
            }
        }
    }
    let epochs_run = log.len();
    let (best_epoch, best_val) = match stopper.best() {
        Some((e, v)) => (Some(e), Some(v)),
        None => (None, None),
    };
    Ok(TrainOutcome {
        model: best.unwrap_or(model),
        log,
        best_epoch,
        best_val,
        epochs_run,
    })
}
