//! Fusion of per-view text embeddings into one item text representation.
//!
//! Images always pass through unchanged. SUM, Concat and MLP ignore the similarity
//! profile; SA weights each view by its profile score.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::SimilarityProfile;
use crate::error::{Error, Result};
use crate::store::{self, StoreManifest, ViewEmbeddingSet};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Sum,
    Concat,
    Mlp,
    Sa,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 4] = [
        FusionMethod::Sum,
        FusionMethod::Concat,
        FusionMethod::Mlp,
        FusionMethod::Sa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::Sum => "sum",
            FusionMethod::Concat => "concat",
            FusionMethod::Mlp => "mlp",
            FusionMethod::Sa => "sa",
        }
    }

    /// Width of the fused text vector.
    pub fn output_dim(self, n_views: usize, dim: usize) -> usize {
        match self {
            FusionMethod::Concat => n_views * dim,
            _ => dim,
        }
    }
}

impl std::fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown fusion method {s:?} (sum|concat|mlp|sa)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedItemRepresentation {
    pub item: usize,
    pub text: Vec<f64>,
    pub image: Vec<f32>,
    pub method: FusionMethod,
}

fn check_block(views: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || views.is_empty() || !views.len().is_multiple_of(dim) {
        return Err(Error::param(format!(
            "view block of length {} is not a positive multiple of {dim}",
            views.len()
        )));
    }
    Ok(views.len() / dim)
}

pub fn fuse_sum(views: &[f64], dim: usize) -> Result<Vec<f64>> {
    check_block(views, dim)?;
    let mut out = vec![0.0; dim];
    for view in views.chunks_exact(dim) {
        out.iter_mut().zip(view).for_each(|(o, v)| *o += v);
    }
    Ok(out)
}

pub fn fuse_concat(views: &[f64], dim: usize) -> Result<Vec<f64>> {
    check_block(views, dim)?;
    Ok(views.to_vec())
}

/// Similarity-weighted sum of the views.
pub fn fuse_sa(views: &[f64], dim: usize, scores: &[f64]) -> Result<Vec<f64>> {
    let c = check_block(views, dim)?;
    if scores.len() != c {
        return Err(Error::param(format!(
            "{} similarity scores for {c} views",
            scores.len()
        )));
    }
    let mut out = vec![0.0; dim];
    for (view, &s) in views.chunks_exact(dim).zip(scores) {
        out.iter_mut().zip(view).for_each(|(o, v)| *o += v * s);
    }
    Ok(out)
}

pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

/// One-layer MLP over the concatenated views: `leaky(concat * W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpFusionParams {
    pub n_views: usize,
    pub dim: usize,
    /// Row-major `(n_views * dim) x dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub alpha: f64,
}

/// Gradients of a scalar loss through [`MlpFusionParams::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

impl MlpFusionParams {
    pub fn zeros(n_views: usize, dim: usize) -> Self {
        Self {
            n_views,
            dim,
            weight: vec![0.0; n_views * dim * dim],
            bias: vec![0.0; dim],
            alpha: LEAKY_SLOPE,
        }
    }

    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(n_views: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let fan_in = n_views * dim;
        let bound = (6.0 / (fan_in + dim) as f64).sqrt();
        let weight = (0..fan_in * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            weight,
            ..Self::zeros(n_views, dim)
        }
    }

    pub fn in_dim(&self) -> usize {
        self.n_views * self.dim
    }

    fn check(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.in_dim()
            || self.weight.len() != self.in_dim() * self.dim
            || self.bias.len() != self.dim
        {
            return Err(Error::param(format!(
                "mlp fusion expects {} inputs with a {}x{} weight, got {} inputs",
                self.in_dim(),
                self.in_dim(),
                self.dim,
                input.len()
            )));
        }
        Ok(())
    }

    /// Pre-activation `concat * W + b`.
    pub fn pre_activation(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check(input)?;
        let mut z = self.bias.clone();
        for (x, row) in input.iter().zip(self.weight.chunks_exact(self.dim)) {
            if *x != 0.0 {
                z.iter_mut().zip(row).for_each(|(zz, w)| *zz += x * w);
            }
        }
        Ok(z)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .pre_activation(input)?
            .into_iter()
            .map(|z| leaky_relu(z, self.alpha))
            .collect())
    }

    /// Backpropagates `grad_out` given the pre-activation from the forward pass.
    pub fn backward(&self, input: &[f64], pre_activation: &[f64], grad_out: &[f64]) -> Result<MlpGrads> {
        self.check(input)?;
        if pre_activation.len() != self.dim || grad_out.len() != self.dim {
            return Err(Error::param("mlp backward shape mismatch"));
        }
        let gz: Vec<f64> = pre_activation
            .iter()
            .zip(grad_out)
            .map(|(&z, &g)| if z >= 0.0 { g } else { self.alpha * g })
            .collect();
        let mut weight = vec![0.0; self.weight.len()];
        let mut grad_in = vec![0.0; input.len()];
        for (r, (x, w_row)) in input.iter().zip(self.weight.chunks_exact(self.dim)).enumerate() {
            let g_row = &mut weight[r * self.dim..(r + 1) * self.dim];
            g_row.iter_mut().zip(&gz).for_each(|(gw, g)| *gw = x * g);
            grad_in[r] = w_row.iter().zip(&gz).map(|(w, g)| w * g).sum();
        }
        Ok(MlpGrads {
            weight,
            bias: gz,
            input: grad_in,
        })
    }
}

pub fn fuse_mlp(views: &[f64], params: &MlpFusionParams) -> Result<Vec<f64>> {
    params.forward(views)
}

pub(crate) fn upcast(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Fuses every item of a store. `mlp` needs `params`; `sa` needs `profiles`.
pub fn fuse_all(
    set: &ViewEmbeddingSet,
    profiles: Option<&[SimilarityProfile]>,
    method: FusionMethod,
    params: Option<&MlpFusionParams>,
) -> Result<Vec<FusedItemRepresentation>> {
    let dim = set.dim();
    if method == FusionMethod::Sa {
        match profiles {
            None => return Err(Error::param("sa fusion requires similarity profiles")),
            Some(p) if p.len() != set.n_items() => {
                return Err(Error::param(format!(
                    "{} profiles for {} items",
                    p.len(),
                    set.n_items()
                )))
            }
            _ => {}
        }
    }
    if method == FusionMethod::Mlp && params.is_none() {
        return Err(Error::param("mlp fusion requires parameters"));
    }
    (0..set.n_items())
        .into_par_iter()
        .map(|item| {
            let views = upcast(set.text_views(item));
            let text = match method {
                FusionMethod::Sum => fuse_sum(&views, dim)?,
                FusionMethod::Concat => fuse_concat(&views, dim)?,
                FusionMethod::Mlp => fuse_mlp(&views, params.expect("checked above"))?,
                FusionMethod::Sa => fuse_sa(&views, dim, &profiles.expect("checked above")[item].scores)?,
            };
            if text.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite fused text for item {item}")));
            }
            Ok(FusedItemRepresentation {
                item,
                text,
                image: set.image(item).to_vec(),
                method,
            })
        })
        .collect()
}

/// Appends each item's similarity scores to its fused text vector.
pub fn append_similarity(reps: &mut [FusedItemRepresentation], profiles: &[SimilarityProfile]) -> Result<()> {
    if reps.len() != profiles.len() {
        return Err(Error::param("one profile per fused item required"));
    }
    for (r, p) in reps.iter_mut().zip(profiles) {
        r.text.extend_from_slice(&p.scores);
    }
    Ok(())
}

/// Writes fused text in the embedding container with one view. Image rows are
/// zero-padded to the text width when narrower, and `image_dim` records the true width.
pub fn write_fused(
    path: &Path,
    reps: &[FusedItemRepresentation],
    item_ids: &[String],
    encoder_name: &str,
) -> Result<()> {
    let first = reps.first().ok_or_else(|| Error::param("nothing to write"))?;
    let dim = first.text.len();
    let image_dim = first.image.len();
    if image_dim > dim || item_ids.len() != reps.len() {
        return Err(Error::param("fused dump shape mismatch"));
    }
    let mut text = Vec::with_capacity(reps.len() * dim);
    let mut image = Vec::with_capacity(reps.len() * dim);
    for r in reps {
        if r.text.len() != dim || r.image.len() != image_dim {
            return Err(Error::param("fused representations differ in width"));
        }
        text.extend(r.text.iter().map(|&x| x as f32));
        image.extend_from_slice(&r.image);
        image.extend(std::iter::repeat_n(0.0f32, dim - image_dim));
    }
    let mut payload = Vec::with_capacity(4 * (text.len() + image.len()));
    for x in text.iter().chain(&image) {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    let manifest = StoreManifest {
        encoder_name: encoder_name.to_string(),
        view_names: vec![format!("fused-{}", first.method)],
        item_ids: item_ids.to_vec(),
        crc32: format!("{:08x}", crc32fast::hash(&payload)),
        method: Some(first.method.name().to_string()),
        image_dim: (image_dim != dim).then_some(image_dim),
    };
    store::write_container(path, 1, dim, &text, &image, &manifest)
}

pub fn read_fused(path: &Path) -> Result<(Vec<FusedItemRepresentation>, StoreManifest)> {
    let raw = store::read_container(path)?;
    let method: FusionMethod = raw
        .manifest
        .method
        .as_deref()
        .ok_or_else(|| Error::Format("manifest has no fusion method".into()))?
        .parse()?;
    if raw.n_views != 1 {
        return Err(Error::Format("fused dump must have exactly one view".into()));
    }
    let image_dim = raw.manifest.image_dim.unwrap_or(raw.dim);
    let reps = (0..raw.n_items)
        .map(|item| FusedItemRepresentation {
            item,
            text: upcast(&raw.text[item * raw.dim..(item + 1) * raw.dim]),
            image: raw.image[item * raw.dim..item * raw.dim + image_dim].to_vec(),
            method,
        })
        .collect();
    Ok((reps, raw.manifest))
}
