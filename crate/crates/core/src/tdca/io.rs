//! Versioned binary model files.
//!
//! Layout: 8-byte magic, `u32` version, `u64` metadata length, JSON metadata, then per
//! sub-band the filter, eigenvalues and templates. Matrices are written as `u64` rows,
//! `u64` cols and column-major little-endian `f64` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{build_projectors, BandModel, ClassInfo, TdcaConfig, TdcaModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HDBCITDC";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TdcaConfig,
    sampling_rate: f64,
    window: usize,
    n_channels: usize,
    classes: Vec<ClassInfo>,
    training_blocks: Vec<usize>,
    n_bands: usize,
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_values(out: &mut Vec<u8>, vals: &[f64]) {
    put_u64(out, vals.len());
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    put_u64(out, m.nrows());
    put_u64(out, m.ncols());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptData("model file truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptData("bad length".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn values(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        self.f64s(n)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let (r, c) = (self.u64()?, self.u64()?);
        if (r, c) != (rows, cols) {
            return Err(Error::CorruptData(format!(
                "matrix shape {r}x{c}, expected {rows}x{cols}"
            )));
        }
        Ok(DMatrix::from_vec(r, c, self.f64s(r * c)?))
    }
}

impl TdcaModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&Meta {
            config: self.config.clone(),
            sampling_rate: self.sampling_rate,
            window: self.window,
            n_channels: self.n_channels,
            classes: self.classes.clone(),
            training_blocks: self.training_blocks.clone(),
            n_bands: self.bands.len(),
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        put_u64(&mut out, meta.len());
        out.extend_from_slice(&meta);
        for b in &self.bands {
            put_matrix(&mut out, &b.filter);
            put_values(&mut out, &b.eigenvalues);
            put_u64(&mut out, b.templates.len());
            for t in &b.templates {
                put_matrix(&mut out, t);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<TdcaModel> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptData("not a model file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Unsupported(format!("model format version {version}")));
        }
        let meta_len = r.u64()?;
        let meta: Meta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::CorruptData(format!("model metadata: {e}")))?;
        let dim = (meta.config.delay_order + 1) * meta.n_channels;
        let ns = meta.config.n_components;
        let mut bands = Vec::with_capacity(meta.n_bands);
        for _ in 0..meta.n_bands {
            let filter = r.matrix(dim, ns)?;
            let eigenvalues = r.values()?;
            let n_t = r.u64()?;
            if n_t != meta.classes.len() {
                return Err(Error::CorruptData("template count mismatch".into()));
            }
            let templates = (0..n_t)
                .map(|_| r.matrix(2 * meta.window, ns))
                .collect::<Result<Vec<_>>>()?;
            bands.push(BandModel {
                filter,
                eigenvalues,
                templates,
            });
        }
        if r.pos != buf.len() {
            return Err(Error::CorruptData("trailing bytes in model file".into()));
        }
        let (projectors, class_projector) =
            build_projectors(&meta.classes, meta.config.n_harmonics, meta.sampling_rate, meta.window)?;
        Ok(TdcaModel {
            config: meta.config,
            sampling_rate: meta.sampling_rate,
            window: meta.window,
            n_channels: meta.n_channels,
            classes: meta.classes,
            bands,
            training_blocks: meta.training_blocks,
            projectors,
            class_projector,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TdcaModel> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
