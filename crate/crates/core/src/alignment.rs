//! View/image agreement: temperature-scaled softmax over per-view cosine similarities.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Slot};
use crate::jsonl;
use crate::store::ViewEmbeddingSet;

pub const DEFAULT_TAU: f64 = 0.1;
pub const TAU_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 0.7];

/// Per-item distribution over views measuring each view's agreement with the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub item: usize,
    pub raw_sims: Vec<f64>,
    pub scores: Vec<f64>,
    pub tau: f64,
}

impl SimilarityProfile {
    /// Index of the highest score, lowest index among ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.scores)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Cosine similarity in f64, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// `softmax(logits / tau)` with max subtraction.
pub fn softmax_with_temperature(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param(format!("temperature must be > 0, got {tau}")));
    }
    if logits.is_empty() {
        return Err(Error::param("softmax over zero views"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Similarity profile of one item given its `C x D` view block and image vector.
pub fn view_similarity_scores<T: Copy + Into<f64>>(
    text_views: &[T],
    image: &[T],
    tau: f64,
) -> Result<SimilarityProfile> {
    let dim = image.len();
    if dim == 0 || text_views.is_empty() || !text_views.len().is_multiple_of(dim) {
        return Err(Error::param("view block is not a multiple of the image width"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param(format!("temperature must be > 0, got {tau}")));
    }
    let raw_sims = text_views
        .chunks_exact(dim)
        .map(|view| cosine_similarity(view, image))
        .collect::<Result<Vec<_>>>()?;
    let scores = softmax_with_temperature(&raw_sims, tau)?;
    Ok(SimilarityProfile {
        item: 0,
        raw_sims,
        scores,
        tau,
    })
}

/// One profile per item in item index order.
pub fn profile_all(set: &ViewEmbeddingSet, tau: f64) -> Result<Vec<SimilarityProfile>> {
    (0..set.n_items())
        .into_par_iter()
        .map(|item| {
            let views = set.text_views(item);
            let image = set.image(item);
            let mut p = view_similarity_scores(views, image, tau).map_err(|e| match e {
                Error::ZeroNorm => {
                    let slot = (0..set.n_views())
                        .find(|&v| set.text(item, v).iter().all(|&x| x == 0.0))
                        .map_or(Slot::Image, Slot::Text);
                    Error::DegenerateEmbedding { item, slot }
                }
                other => other,
            })?;
            p.item = item;
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub item_id: String,
    pub raw_sims: Vec<f64>,
    pub scores: Vec<f64>,
    pub tau: f64,
}

pub fn write_profiles(path: &Path, item_ids: &[String], profiles: &[SimilarityProfile]) -> Result<()> {
    let records: Vec<ProfileRecord> = profiles
        .iter()
        .map(|p| ProfileRecord {
            item_id: item_ids[p.item].clone(),
            raw_sims: p.raw_sims.clone(),
            scores: p.scores.clone(),
            tau: p.tau,
        })
        .collect();
    jsonl::write_records(path, &records)
}

/// Reads a profile dump; items are indexed in file order.
pub fn read_profiles(path: &Path) -> Result<(Vec<String>, Vec<SimilarityProfile>)> {
    let records: Vec<ProfileRecord> = jsonl::read_records(path)?;
    let ids = records.iter().map(|r| r.item_id.clone()).collect();
    let profiles = records
        .into_iter()
        .enumerate()
        .map(|(item, r)| SimilarityProfile {
            item,
            raw_sims: r.raw_sims,
            scores: r.scores,
            tau: r.tau,
        })
        .collect();
    Ok((ids, profiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::synth_store;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0f64, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 32.0 / (14.0f64 * 77.0).sqrt()).abs() < 1e-15);
        assert!((c - 0.974632).abs() < 1e-6);
        assert!(matches!(
            cosine_similarity(&[0.0f64, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn softmax_examples() {
        let p = view_similarity_scores(&[1.0f64, 0.0, 0.0, 1.0], &[1.0, 0.0], 0.1).unwrap();
        assert_eq!(p.raw_sims, vec![1.0, 0.0]);
        assert!((p.scores[0] - 0.9999546).abs() < 1e-7);
        assert!((p.scores[1] - 0.0000454).abs() < 1e-7);
        let single = view_similarity_scores(&[0.3f64, 0.4], &[1.0, 0.0], 0.7).unwrap();
        assert_eq!(single.scores, vec![1.0]);
        let same = view_similarity_scores(&[1.0f64, 2.0, 1.0, 2.0, 1.0, 2.0], &[0.5, 0.1], 0.2).unwrap();
        for s in &same.scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_temperature() {
        assert!(matches!(
            view_similarity_scores(&[1.0f64], &[1.0], 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(softmax_with_temperature(&[1.0], -1.0).is_err());
    }

    #[test]
    fn stable_at_low_temperature() {
        let s = softmax_with_temperature(&[1.0, -1.0, 0.999], 0.05).unwrap();
        assert!(s.iter().all(|x| x.is_finite() && *x > 0.0));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_all_empty_and_scaled() {
        let store = synth_store(6, 4, 5, 2, None).unwrap();
        let base = profile_all(&store, 0.1).unwrap();
        assert_eq!(base.len(), 6);
        let scaled_img: Vec<f32> = store.image_data().iter().map(|x| x * 3.7).collect();
        let scaled = ViewEmbeddingSet::new(
            "t",
            store.view_names().to_vec(),
            store.item_ids().to_vec(),
            5,
            store.text_data().to_vec(),
            scaled_img,
        )
        .unwrap();
        for (a, b) in base.iter().zip(profile_all(&scaled, 0.1).unwrap()) {
            for j in 0..4 {
                // Rescaling is exact up to the f32 rounding of the scaled payload.
                assert!((a.scores[j] - b.scores[j]).abs() < 1e-6);
            }
        }
        let empty = ViewEmbeddingSet::new("t", vec!["v".into()], vec![], 3, vec![], vec![]).unwrap();
        assert!(profile_all(&empty, 0.1).unwrap().is_empty());
    }

    #[test]
    fn profile_dump_round_trip() {
        let store = synth_store(3, 2, 4, 8, None).unwrap();
        let profiles = profile_all(&store, 0.2).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_profiles(f.path(), store.item_ids(), &profiles).unwrap();
        let (ids, back) = read_profiles(f.path()).unwrap();
        assert_eq!(ids, store.item_ids());
        assert_eq!(back, profiles);
    }

    proptest! {
        #[test]
        fn temperature_sharpens_max(sims in proptest::collection::vec(-1.0f64..1.0, 2..8)) {
            let best = argmax(&sims);
            prop_assume!(sims.iter().enumerate().all(|(j, &s)| j == best || s < sims[best] - 1e-6));
            let mut last = 0.0;
            for tau in [0.7, 0.5, 0.2, 0.1, 0.05] {
                let p = softmax_with_temperature(&sims, tau).unwrap();
                prop_assert_eq!(argmax(&p), best);
                prop_assert!(p[best] > last);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                last = p[best];
            }
        }
    }
}
