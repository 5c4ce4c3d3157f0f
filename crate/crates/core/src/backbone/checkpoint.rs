//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `VACK`, `u32` version, `u32` config length + config JSON,
//! `u8` float width (4 or 8), `u64` epoch, `f64` best validation metric (NaN when absent),
//! `u64` optimizer step, `u32` tensor count, then per tensor `u32` name length, name,
//! `u32` rows, `u32` cols and the values. Tensors are the parameters followed by
//! `adam.m.*` and `adam.v.*` moments.

use std::path::Path;

use super::model::{Precision, RecConfig, RecModel};
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const MAGIC: [u8; 4] = *b"VACK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RecConfig,
    pub epoch: u64,
    pub best_val: Option<f64>,
    pub adam_step: u64,
    pub tensors: Vec<(String, Mat)>,
}

impl Checkpoint {
    pub fn from_model(model: &RecModel, epoch: u64, best_val: Option<f64>) -> Self {
        let mut tensors: Vec<(String, Mat)> =
            model.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        for (p, m) in model.params.iter().zip(&model.adam.m) {
            tensors.push((format!("adam.m.{}", p.name), m.clone()));
        }
        for (p, v) in model.params.iter().zip(&model.adam.v) {
            tensors.push((format!("adam.v.{}", p.name), v.clone()));
        }
        Self {
            config: model.config.clone(),
            epoch,
            best_val,
            adam_step: model.adam.step,
            tensors,
        }
    }

    /// Overwrites parameters and optimizer state of a freshly built model of the same shape.
    pub fn restore_into(&self, model: &mut RecModel) -> Result<()> {
        let find = |name: &str| {
            self.tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name:?}")))
        };
        for k in 0..model.params.len() {
            let name = model.params[k].name.clone();
            let (value, m, v) = (
                find(&name)?,
                find(&format!("adam.m.{name}"))?,
                find(&format!("adam.v.{name}"))?,
            );
            let target = &model.params[k].value;
            for t in [value, m, v] {
                if (t.rows, t.cols) != (target.rows, target.cols) {
                    return Err(Error::Format(format!("tensor {name:?} has the wrong shape")));
                }
            }
            model.params[k].value = value.clone();
            model.adam.m[k] = m.clone();
            model.adam.v[k] = v.clone();
        }
        model.adam.step = self.adam_step;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        let wide = self.config.precision == Precision::F64;
        out.push(if wide { 8 } else { 4 });
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.best_val.unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&self.adam_step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for &x in &t.data {
                if wide {
                    out.extend_from_slice(&x.to_le_bytes());
                } else {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (magic mismatch)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let config: RecConfig = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Format(format!("bad checkpoint config: {e}")))?;
        let width = r.take(1)?[0];
        if width != 4 && width != 8 {
            return Err(Error::Format(format!("bad float width {width}")));
        }
        let epoch = r.u64()?;
        let best = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let adam_step = r.u64()?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            let raw = r.take(rows * cols * width as usize)?;
            let data = if width == 8 {
                raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
            } else {
                raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
            };
            tensors.push((name, Mat::from_vec(rows, cols, data)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            config,
            epoch,
            best_val: (!best.is_nan()).then_some(best),
            adam_step,
            tensors,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
