//! `(pose, embedding)` training pairs and their `LAMPDS1` binary file.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"LAMPDS1\0"  u32 version  u32 d  u64 count
//! count × ( 7 × f32 pose [t_x t_y t_z q_w q_x q_y q_z]   d × f32 embedding )
//! ```

use std::fs;
use std::path::Path;

use crate::binio::{PutLe, Reader};
use crate::error::{Error, Result};
use crate::geometry::{normalize, Pose, UnitEmbedding, UNIT_TOLERANCE};

pub const DATASET_MAGIC: &[u8; 8] = b"LAMPDS1\0";
pub const DATASET_VERSION: u32 = 1;

/// Stored unit vectors further than this from unit norm are rejected.
const LOAD_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub pose: Pose,
    pub z: UnitEmbedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(d: usize, records: Vec<Record>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "dataset dimension must be positive".into(),
            ));
        }
        if let Some(r) = records.iter().find(|r| r.z.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: r.z.dim(),
            });
        }
        Ok(Dataset { d, records })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.records.iter().map(|r| &r.pose)
    }

    pub fn byte_len(&self) -> usize {
        8 + 4 + 4 + 8 + self.records.len() * (7 + self.d) * 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(DATASET_MAGIC);
        out.put_u32(DATASET_VERSION);
        out.put_u32(self.d as u32);
        out.put_u64(self.records.len() as u64);
        for r in &self.records {
            for v in r.pose.to_array() {
                out.put_f32(v as f32);
            }
            for v in r.z.as_slice() {
                out.put_f32(*v as f32);
            }
        }
        out
    }

    /// Decodes a dataset file. Vectors already unit-norm to within `1e-6`
    /// are taken verbatim; small drift is renormalized; anything further off
    /// is a format error.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(buf, "dataset");
        rd.magic(DATASET_MAGIC)?;
        let version = rd.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "dataset: unsupported version {version}"
            )));
        }
        let d = rd.u32()? as usize;
        if d == 0 {
            return Err(Error::Format("dataset: zero embedding dimension".into()));
        }
        let count = rd.u64()?;
        let rec_bytes = (7 + d) as u64 * 4;
        if count.checked_mul(rec_bytes) != Some(rd.remaining() as u64) {
            return Err(Error::Format(format!(
                "dataset: header declares {count} records of {rec_bytes} bytes but {} bytes follow",
                rd.remaining()
            )));
        }
        let mut records = Vec::with_capacity(count as usize);
        for i in 0..count {
            let p = rd.f32_vec(7)?;
            let z = rd.f32_vec(d)?;
            let pose =
                decode_pose(&p).map_err(|e| Error::Format(format!("dataset record {i}: {e}")))?;
            let z =
                decode_unit(&z).map_err(|e| Error::Format(format!("dataset record {i}: {e}")))?;
            records.push(Record { pose, z });
        }
        rd.finish()?;
        Ok(Dataset { d, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::from_bytes(&fs::read(path)?)
    }
}

fn near_unit(v: &[f64]) -> Result<bool> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("non-finite value".into()));
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > LOAD_NORM_TOLERANCE {
        return Err(Error::Format(format!("vector norm {n} is not unit")));
    }
    Ok((n - 1.0).abs() <= UNIT_TOLERANCE)
}

pub(crate) fn decode_pose(p: &[f32]) -> Result<Pose> {
    let t = [p[0] as f64, p[1] as f64, p[2] as f64];
    let q = [p[3] as f64, p[4] as f64, p[5] as f64, p[6] as f64];
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite position".into()));
    }
    if near_unit(&q)? {
        Ok(Pose::from_parts_unchecked(t, q))
    } else {
        Pose::new(t, q)
    }
}

/// `r` exactly as it decodes after a round trip through the file encoding.
pub(crate) fn storage_exact(r: Record) -> Record {
    let p = r.pose.to_array().map(|v| v as f32);
    let z: Vec<f32> = r.z.as_slice().iter().map(|v| *v as f32).collect();
    match (decode_pose(&p), decode_unit(&z)) {
        (Ok(pose), Ok(z)) => Record { pose, z },
        _ => r,
    }
}

pub(crate) fn decode_unit(z: &[f32]) -> Result<UnitEmbedding> {
    let v: Vec<f64> = z.iter().map(|x| *x as f64).collect();
    if near_unit(&v)? {
        Ok(UnitEmbedding::from_unit_unchecked(v))
    } else {
        normalize(&v)
    }
}
