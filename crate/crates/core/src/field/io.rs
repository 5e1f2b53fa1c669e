//! `LAMPMDL1` model file.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"LAMPMDL1"  u32 version  u32 d  u32 layer_count
//! layer_count × (u32 rows  u32 cols)
//! u32 l_pos  u32 l_quat  u32 include_identity
//! u32 skip (0xFFFFFFFF for none)  6 × f32 bounds [min_xyz max_xyz]
//! per layer: rows·cols × f32 weights (row-major), rows × f32 biases
//! ```
//!
//! Layers are stored hidden first, then the μ head, then the κ head.

use std::fs;
use std::path::Path;

use super::encoding::{PositionBounds, PositionalEncodingSpec};
use super::model::{FieldModel, Linear};
use crate::binio::{PutLe, Reader};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"LAMPMDL1";
pub const MODEL_VERSION: u32 = 1;
const NO_SKIP: u32 = u32::MAX;
/// Caps allocation on hostile headers.
const MAX_LAYER_PARAMS: u64 = 1 << 28;

impl FieldModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let layers: Vec<&Linear> = self.layers().collect();
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.put_u32(MODEL_VERSION);
        out.put_u32(self.d as u32);
        out.put_u32(layers.len() as u32);
        for l in &layers {
            out.put_u32(l.rows as u32);
            out.put_u32(l.cols as u32);
        }
        out.put_u32(self.encoding.l_pos);
        out.put_u32(self.encoding.l_quat);
        out.put_u32(self.encoding.include_identity as u32);
        out.put_u32(self.skip.map_or(NO_SKIP, |s| s as u32));
        for v in self.bounds.min.iter().chain(&self.bounds.max) {
            out.put_f32(*v);
        }
        for l in &layers {
            for v in l.w.iter().chain(&l.b) {
                out.put_f32(*v);
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(buf, "model");
        rd.magic(MODEL_MAGIC)?;
        let version = rd.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model: unsupported version {version}"
            )));
        }
        let d = rd.u32()? as usize;
        let n_layers = rd.u32()? as usize;
        if n_layers < 2 {
            return Err(Error::Format(format!(
                "model: {n_layers} layers, need at least the two heads"
            )));
        }
        if (n_layers as u64) * 8 > rd.remaining() as u64 {
            return Err(Error::Format("model: layer table truncated".into()));
        }
        let mut shapes = Vec::with_capacity(n_layers);
        let mut total: u64 = 0;
        for _ in 0..n_layers {
            let (rows, cols) = (rd.u32()? as u64, rd.u32()? as u64);
            let n = rows * cols + rows;
            if n > MAX_LAYER_PARAMS {
                return Err(Error::Format(format!(
                    "model: layer {rows}x{cols} too large"
                )));
            }
            total += n;
            shapes.push((rows as usize, cols as usize));
        }
        let l_pos = rd.u32()?;
        let l_quat = rd.u32()?;
        let include_identity = match rd.u32()? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("model: include_identity flag {v}"))),
        };
        if l_pos > 32 || l_quat > 32 {
            return Err(Error::Format(
                "model: encoding band count out of range".into(),
            ));
        }
        let skip = match rd.u32()? {
            NO_SKIP => None,
            s => Some(s as usize),
        };
        let bv = rd.f32_vec(6)?;
        let bounds = PositionBounds {
            min: [bv[0], bv[1], bv[2]],
            max: [bv[3], bv[4], bv[5]],
        };
        if total * 4 != rd.remaining() as u64 {
            return Err(Error::Format(format!(
                "model: layer table implies {} weight bytes but {} follow",
                total * 4,
                rd.remaining()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (rows, cols) in shapes {
            let w = rd.f32_vec(rows * cols)?;
            let b = rd.f32_vec(rows)?;
            layers.push(Linear { rows, cols, w, b });
        }
        rd.finish()?;
        let kappa_head = layers.pop().unwrap();
        let mu_head = layers.pop().unwrap();
        if mu_head.rows != d {
            return Err(Error::Format(format!(
                "model: header d={d} but mu head has {} rows",
                mu_head.rows
            )));
        }
        let encoding = PositionalEncodingSpec {
            l_pos,
            l_quat,
            include_identity,
        };
        FieldModel::from_layers(encoding, bounds, skip, layers, mu_head, kappa_head).map_err(|e| {
            match e {
                Error::ModelCorrupt(m) => Error::ModelCorrupt(m),
                other => Error::ModelCorrupt(other.to_string()),
            }
        })
    }

    pub fn byte_len(&self) -> usize {
        let n = self.layers().count();
        8 + 4 * 3 + n * 8 + 4 * 4 + 6 * 4 + self.param_count() * 4
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FieldModel::from_bytes(&fs::read(path)?)
    }
}
