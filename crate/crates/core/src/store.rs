//! Binary container for per-item, per-view text embeddings and image embeddings.
//!
//! Layout (little-endian): magic `CEMB`, `u32` version, `u32` n_items, `u32` n_views,
//! `u32` dim, then `n_items * n_views * dim` f32 text values (item-major, then view),
//! then `n_items * dim` f32 image values. A JSON sidecar `<path>.manifest` carries the
//! encoder name, view names, item ids and the CRC-32 of the payload bytes.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Slot};
use crate::jsonl;

pub const MAGIC: [u8; 4] = *b"CEMB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub encoder_name: String,
    pub view_names: Vec<String>,
    pub item_ids: Vec<String>,
    /// Lowercase hex CRC-32 of the payload bytes.
    pub crc32: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Width of the meaningful prefix of each image row when it differs from `dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddingSet {
    n_items: usize,
    n_views: usize,
    dim: usize,
    text: Vec<f32>,
    image: Vec<f32>,
    manifest: StoreManifest,
}

impl ViewEmbeddingSet {
    /// Builds a validated set; the manifest checksum is filled in from the payload.
    pub fn new(
        encoder_name: impl Into<String>,
        view_names: Vec<String>,
        item_ids: Vec<String>,
        dim: usize,
        text: Vec<f32>,
        image: Vec<f32>,
    ) -> Result<Self> {
        let n_items = item_ids.len();
        let n_views = view_names.len();
        let mut set = Self {
            n_items,
            n_views,
            dim,
            text,
            image,
            manifest: StoreManifest {
                encoder_name: encoder_name.into(),
                view_names,
                item_ids,
                crc32: String::new(),
                method: None,
                image_dim: None,
            },
        };
        set.validate()?;
        set.manifest.crc32 = format!("{:08x}", set.checksum());
        Ok(set)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn view_names(&self) -> &[String] {
        &self.manifest.view_names
    }

    pub fn item_ids(&self) -> &[String] {
        &self.manifest.item_ids
    }

    pub fn text(&self, item: usize, view: usize) -> &[f32] {
        let start = (item * self.n_views + view) * self.dim;
        &self.text[start..start + self.dim]
    }

    /// All views of one item as a `n_views * dim` row-major block.
    pub fn text_views(&self, item: usize) -> &[f32] {
        let start = item * self.n_views * self.dim;
        &self.text[start..start + self.n_views * self.dim]
    }

    pub fn image(&self, item: usize) -> &[f32] {
        &self.image[item * self.dim..(item + 1) * self.dim]
    }

    pub fn text_data(&self) -> &[f32] {
        &self.text
    }

    pub fn image_data(&self) -> &[f32] {
        &self.image
    }

    /// Shape, finiteness and non-zero-norm checks.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if self.dim == 0 || self.n_views == 0 {
            return Err(Error::Format("n_views and dim must be >= 1".into()));
        }
        if m.item_ids.len() != self.n_items || m.view_names.len() != self.n_views {
            return Err(Error::Format(format!(
                "manifest lists {} items / {} views, header says {} / {}",
                m.item_ids.len(),
                m.view_names.len(),
                self.n_items,
                self.n_views
            )));
        }
        if self.text.len() != self.n_items * self.n_views * self.dim
            || self.image.len() != self.n_items * self.dim
        {
            return Err(Error::Format("payload length does not match dims".into()));
        }
        for item in 0..self.n_items {
            for view in 0..self.n_views {
                check_vector(self.text(item, view), item, Slot::Text(view))?;
            }
            check_vector(self.image(item), item, Slot::Image)?;
        }
        Ok(())
    }

    fn payload(&self) -> Vec<u8> {
        payload_bytes(&self.text, &self.image)
    }

    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.payload())
    }

    /// Keeps only the listed views, in the given order.
    pub fn select_views(&self, views: &[usize]) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::param("view mask removes every view"));
        }
        let mut seen = vec![false; self.n_views];
        for &v in views {
            if v >= self.n_views || std::mem::replace(&mut seen[v], true) {
                return Err(Error::param(format!("bad or repeated view index {v}")));
            }
        }
        let mut text = Vec::with_capacity(self.n_items * views.len() * self.dim);
        for item in 0..self.n_items {
            for &v in views {
                text.extend_from_slice(self.text(item, v));
            }
        }
        let names = views.iter().map(|&v| self.view_names()[v].clone()).collect();
        Self::new(
            self.manifest.encoder_name.clone(),
            names,
            self.manifest.item_ids.clone(),
            self.dim,
            text,
            self.image.clone(),
        )
    }

    /// Reorders items to follow `item_ids`; every id must be present.
    pub fn align_to(&self, item_ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = self
            .item_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut text = Vec::with_capacity(item_ids.len() * self.n_views * self.dim);
        let mut image = Vec::with_capacity(item_ids.len() * self.dim);
        for id in item_ids {
            let &src = index
                .get(id.as_str())
                .ok_or_else(|| Error::Format(format!("store has no embedding for item {id:?}")))?;
            text.extend_from_slice(self.text_views(src));
            image.extend_from_slice(self.image(src));
        }
        Self::new(
            self.manifest.encoder_name.clone(),
            self.manifest.view_names.clone(),
            item_ids.to_vec(),
            self.dim,
            text,
            image,
        )
    }

    /// Checks that the store lists exactly these item ids in this order.
    pub fn check_item_order(&self, item_ids: &[String]) -> Result<()> {
        if self.item_ids() != item_ids {
            return Err(Error::Format(
                "store item order does not match the dataset item indexing".into(),
            ));
        }
        Ok(())
    }
}

fn check_vector(v: &[f32], item: usize, slot: Slot) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { item, slot });
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateEmbedding { item, slot });
    }
    Ok(())
}

fn payload_bytes(text: &[f32], image: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * (text.len() + image.len()));
    for x in text.iter().chain(image) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes header, payload and sidecar manifest without zero-norm validation.
pub(crate) fn write_container(
    path: &Path,
    n_views: usize,
    dim: usize,
    text: &[f32],
    image: &[f32],
    manifest: &StoreManifest,
) -> Result<()> {
    let n_items = manifest.item_ids.len();
    let as_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * (text.len() + image.len()));
    bytes.extend_from_slice(&MAGIC);
    for v in [VERSION, as_u32(n_items)?, as_u32(n_views)?, as_u32(dim)?] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&payload_bytes(text, image));
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    jsonl::write_json(&manifest_path(path), manifest)
}

pub fn write_store(set: &ViewEmbeddingSet, path: &Path) -> Result<()> {
    set.validate()?;
    let mut manifest = set.manifest.clone();
    manifest.crc32 = format!("{:08x}", set.checksum());
    write_container(path, set.n_views, set.dim, &set.text, &set.image, &manifest)
}

pub(crate) struct RawContainer {
    pub n_items: usize,
    pub n_views: usize,
    pub dim: usize,
    pub text: Vec<f32>,
    pub image: Vec<f32>,
    pub manifest: StoreManifest,
}

/// Reads and checksums a container without the non-zero-norm rule.
pub(crate) fn read_container(path: &Path) -> Result<RawContainer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("magic mismatch: not an embedding store".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported store version {version}")));
    }
    let (n_items, n_views, dim) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let n_text = n_items * n_views * dim;
    let n_image = n_items * dim;
    let expected = HEADER_LEN + 4 * (n_text + n_image);
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "length mismatch: header implies {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let manifest: StoreManifest = jsonl::read_json(&manifest_path(path))?;
    let payload = &bytes[HEADER_LEN..];
    let actual = crc32fast::hash(payload);
    let recorded = u32::from_str_radix(&manifest.crc32, 16)
        .map_err(|_| Error::Format(format!("bad crc32 field {:?}", manifest.crc32)))?;
    if recorded != actual {
        return Err(Error::Checksum {
            expected: recorded,
            actual,
        });
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let image = floats[n_text..].to_vec();
    let mut text = floats;
    text.truncate(n_text);
    if manifest.item_ids.len() != n_items || manifest.view_names.len() != n_views {
        return Err(Error::Format("manifest does not match header dims".into()));
    }
    Ok(RawContainer {
        n_items,
        n_views,
        dim,
        text,
        image,
        manifest,
    })
}

pub fn read_store(path: &Path) -> Result<ViewEmbeddingSet> {
    let raw = read_container(path)?;
    let set = ViewEmbeddingSet {
        n_items: raw.n_items,
        n_views: raw.n_views,
        dim: raw.dim,
        text: raw.text,
        image: raw.image,
        manifest: raw.manifest,
    };
    set.validate()?;
    Ok(set)
}

/// Planted structure for synthetic stores.
///
/// Item `i` belongs to group `i % n_groups`. Its image is
/// `normalize(signal_weight * c_g + noise * B xi_i)` with orthonormal group directions `c_g`
/// and a shared `latent_dim`-dimensional basis `B`. The informative view is the image plus
/// `text_noise` of isotropic noise; all other views are independent random directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSignal {
    pub n_groups: usize,
    pub signal_weight: f64,
    pub noise: f64,
    pub latent_dim: usize,
    pub informative_view: usize,
    pub text_noise: f64,
}

impl GroupSignal {
    pub fn group_of(&self, item: usize) -> usize {
        item % self.n_groups.max(1)
    }
}

pub(crate) fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized_or_random(v: Vec<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let n = norm(&v);
    if n > 1e-12 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        random_unit(rng, v.len())
    }
}

/// Deterministic unit-norm synthetic store; see [`GroupSignal`] for the planted structure.
pub fn synth_store(
    n_items: usize,
    n_views: usize,
    dim: usize,
    seed: u64,
    structure: Option<&GroupSignal>,
) -> Result<ViewEmbeddingSet> {
    if n_views == 0 || dim == 0 {
        return Err(Error::param("synth_store needs n_views, dim >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = Vec::with_capacity(n_items * n_views * dim);
    let mut image = Vec::with_capacity(n_items * dim);

    let planted = structure.map(|s| {
        // Gram-Schmidt keeps group directions orthonormal while n_groups <= dim.
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(s.n_groups);
        for _ in 0..s.n_groups.max(1) {
            let mut v = random_unit(&mut rng, dim);
            for d in &dirs {
                let p: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(d).for_each(|(a, b)| *a -= p * b);
            }
            dirs.push(normalized_or_random(v, &mut rng));
        }
        let basis: Vec<Vec<f64>> = (0..s.latent_dim.max(1))
            .map(|_| random_unit(&mut rng, dim))
            .collect();
        (s, dirs, basis)
    });

    for item in 0..n_items {
        let img = match &planted {
            None => random_unit(&mut rng, dim),
            Some((s, dirs, basis)) => {
                let g = &dirs[s.group_of(item)];
                let scale = 1.0 / (basis.len() as f64).sqrt();
                let mut v: Vec<f64> = g.iter().map(|x| s.signal_weight * x).collect();
                for b in basis {
                    let xi: f64 = rng.sample::<f64, _>(StandardNormal) * scale * s.noise;
                    v.iter_mut().zip(b).for_each(|(a, bb)| *a += xi * bb);
                }
                normalized_or_random(v, &mut rng)
            }
        };
        for view in 0..n_views {
            let v = match &planted {
                Some((s, _, _)) if view == s.informative_view => {
                    let eta = random_unit(&mut rng, dim);
                    let v = img
                        .iter()
                        .zip(&eta)
                        .map(|(a, e)| a + s.text_noise * e)
                        .collect();
                    normalized_or_random(v, &mut rng)
                }
                _ => random_unit(&mut rng, dim),
            };
            text.extend(v.iter().map(|&x| x as f32));
        }
        image.extend(img.iter().map(|&x| x as f32));
    }
    let view_names = default_view_names(n_views);
    let item_ids = (0..n_items).map(|i| format!("item{i:05}")).collect();
    ViewEmbeddingSet::new("synthetic", view_names, item_ids, dim, text, image)
}

/// `title, brand, categories, description, global` when five views, otherwise `view0..`.
pub fn default_view_names(n_views: usize) -> Vec<String> {
    const STANDARD: [&str; 5] = ["title", "brand", "categories", "description", "global"];
    if n_views == STANDARD.len() {
        STANDARD.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n_views).map(|j| format!("view{j}")).collect()
    }
}
