//! `LAMPQRY1` goal-embedding file written by text encoders.
//!
//! Layout, little-endian: `b"LAMPQRY1"  u32 d  d × f32`.

use std::fs;
use std::path::Path;

use crate::binio::{PutLe, Reader};
use crate::dataset::decode_unit;
use crate::error::{Error, Result};
use crate::geometry::UnitEmbedding;

pub const QUERY_MAGIC: &[u8; 8] = b"LAMPQRY1";

pub fn query_to_bytes(z: &UnitEmbedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * z.dim());
    out.extend_from_slice(QUERY_MAGIC);
    out.put_u32(z.dim() as u32);
    for v in z.as_slice() {
        out.put_f32(*v as f32);
    }
    out
}

pub fn query_from_bytes(buf: &[u8]) -> Result<UnitEmbedding> {
    let mut rd = Reader::new(buf, "query");
    rd.magic(QUERY_MAGIC)?;
    let d = rd.u32()? as usize;
    if d == 0 || d.checked_mul(4) != Some(rd.remaining()) {
        return Err(Error::Format(format!(
            "query: header d={d} but {} bytes follow",
            rd.remaining()
        )));
    }
    let z = decode_unit(&rd.f32_vec(d)?).map_err(|e| Error::Format(format!("query: {e}")))?;
    rd.finish()?;
    Ok(z)
}

pub fn save_query(z: &UnitEmbedding, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, query_to_bytes(z))?;
    Ok(())
}

pub fn load_query(path: impl AsRef<Path>) -> Result<UnitEmbedding> {
    query_from_bytes(&fs::read(path)?)
}
