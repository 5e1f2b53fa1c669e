//! Dense top-down grid of averaged embeddings and its `LAMPGRD1` file.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"LAMPGRD1"  u32 version  u32 d  u32 nx  u32 ny  f64 origin_x  f64 origin_y  f64 cell_size
//! nx·ny × ( u32 count   d × f32 embedding )      row-major in y, then x
//! ```
//!
//! The high bit of `count` marks a cell whose observations cancelled out;
//! empty and ambiguous cells store zero embeddings.

use std::fs;
use std::path::Path;

use crate::binio::{PutLe, Reader};
use crate::dataset::{decode_unit, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{dot, UnitEmbedding};

pub const GRID_MAGIC: &[u8; 8] = b"LAMPGRD1";
pub const GRID_VERSION: u32 = 1;

/// Upper bound on `nx · ny`.
pub const MAX_GRID_CELLS: usize = 1 << 26;

const AMBIGUOUS_BIT: u32 = 1 << 31;
const HEADER_LEN: usize = 8 + 4 * 4 + 3 * 8;

/// Mean norms below this fraction of the observation count count as cancelled.
const CANCEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub count: u32,
    pub ambiguous: bool,
    pub embedding: Option<UnitEmbedding>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMapBaseline {
    d: usize,
    origin: [f64; 2],
    cell_size: f64,
    nx: usize,
    ny: usize,
    cells: Vec<GridCell>,
}

pub(super) fn cell_count(span: f64, cell_size: f64) -> usize {
    ((span / cell_size).floor() as usize).saturating_add(1)
}

/// Averages every observation into the cell under its position; the grid
/// covers the bounding box of the dataset positions.
pub fn build_grid_baseline(dataset: &Dataset, cell_size: f64) -> Result<GridMapBaseline> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidArgument(
            "cell_size must be finite and > 0".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in dataset.poses() {
        let t = p.t();
        for i in 0..2 {
            lo[i] = lo[i].min(t[i]);
            hi[i] = hi[i].max(t[i]);
        }
    }
    let nx = cell_count(hi[0] - lo[0], cell_size);
    let ny = cell_count(hi[1] - lo[1], cell_size);
    if nx.checked_mul(ny).is_none_or(|n| n > MAX_GRID_CELLS) {
        return Err(Error::InvalidArgument(format!(
            "grid of {nx} x {ny} cells exceeds {MAX_GRID_CELLS}"
        )));
    }
    let d = dataset.d();
    let mut sums = vec![0.0; nx * ny * d];
    let mut counts = vec![0u32; nx * ny];
    for r in dataset.records() {
        let t = r.pose.t();
        let ix = (((t[0] - lo[0]) / cell_size).floor() as usize).min(nx - 1);
        let iy = (((t[1] - lo[1]) / cell_size).floor() as usize).min(ny - 1);
        let c = iy * nx + ix;
        counts[c] = counts[c].saturating_add(1).min(AMBIGUOUS_BIT - 1);
        for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(r.z.as_slice()) {
            *s += v;
        }
    }
    let cells = (0..nx * ny)
        .map(|c| {
            let count = counts[c];
            if count == 0 {
                return GridCell {
                    count,
                    ambiguous: false,
                    embedding: None,
                };
            }
            let s = &sums[c * d..(c + 1) * d];
            let n = dot(s, s).sqrt();
            if n <= CANCEL_TOLERANCE * count as f64 {
                return GridCell {
                    count,
                    ambiguous: true,
                    embedding: None,
                };
            }
            // round through f32 so the in-memory map equals its decoded file
            let z: Vec<f32> = s.iter().map(|v| (v / n) as f32).collect();
            GridCell {
                count,
                ambiguous: false,
                embedding: Some(decode_unit(&z).expect("unit mean")),
            }
        })
        .collect();
    Ok(GridMapBaseline {
        d,
        origin: lo,
        cell_size,
        nx,
        ny,
        cells,
    })
}

impl GridMapBaseline {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    /// Ground-plane center of cell `index`.
    pub fn cell_center(&self, index: usize) -> [f64; 2] {
        let (ix, iy) = (index % self.nx, index / self.nx);
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size,
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Indices of cells holding an embedding.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.embedding.is_some())
            .map(|(i, _)| i)
    }

    /// Occupied cell whose embedding best matches `z`; ties go to the lower index.
    pub fn best_cell(&self, z: &UnitEmbedding) -> Result<(usize, f64)> {
        if z.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: z.dim(),
            });
        }
        let mut best: Option<(usize, f64)> = None;
        for i in self.occupied() {
            let s = dot(
                self.cells[i].embedding.as_ref().unwrap().as_slice(),
                z.as_slice(),
            );
            if best.is_none_or(|b| s > b.1) {
                best = Some((i, s));
            }
        }
        best.ok_or(Error::Empty("grid has no occupied cell"))
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.cells.len() * (4 + 4 * self.d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(GRID_MAGIC);
        out.put_u32(GRID_VERSION);
        out.put_u32(self.d as u32);
        out.put_u32(self.nx as u32);
        out.put_u32(self.ny as u32);
        out.put_u64(self.origin[0].to_bits());
        out.put_u64(self.origin[1].to_bits());
        out.put_u64(self.cell_size.to_bits());
        for c in &self.cells {
            out.put_u32(c.count | if c.ambiguous { AMBIGUOUS_BIT } else { 0 });
            match &c.embedding {
                Some(z) => z.as_slice().iter().for_each(|v| out.put_f32(*v as f32)),
                None => (0..self.d).for_each(|_| out.put_f32(0.0)),
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(buf, "grid");
        rd.magic(GRID_MAGIC)?;
        let version = rd.u32()?;
        if version != GRID_VERSION {
            return Err(Error::Format(format!(
                "grid: unsupported version {version}"
            )));
        }
        let d = rd.u32()? as usize;
        let nx = rd.u32()? as usize;
        let ny = rd.u32()? as usize;
        let origin = [f64::from_bits(rd.u64()?), f64::from_bits(rd.u64()?)];
        let cell_size = f64::from_bits(rd.u64()?);
        if d == 0 || nx == 0 || ny == 0 {
            return Err(Error::Format("grid: zero dimension".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) || origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("grid: bad geometry".into()));
        }
        let n = nx
            .checked_mul(ny)
            .filter(|&n| n <= MAX_GRID_CELLS)
            .ok_or_else(|| Error::Format("grid: too many cells".into()))?;
        if n.checked_mul(4 + 4 * d) != Some(rd.remaining()) {
            return Err(Error::Format(format!(
                "grid: {n} cells of d={d} do not fill {} bytes",
                rd.remaining()
            )));
        }
        let mut cells = Vec::with_capacity(n);
        for i in 0..n {
            let raw = rd.u32()?;
            let v = rd.f32_vec(d)?;
            let count = raw & !AMBIGUOUS_BIT;
            let ambiguous = raw & AMBIGUOUS_BIT != 0;
            let embedding = if count == 0 || ambiguous {
                if v.iter().any(|x| *x != 0.0) {
                    return Err(Error::Format(format!(
                        "grid cell {i}: empty cell carries data"
                    )));
                }
                None
            } else {
                Some(decode_unit(&v).map_err(|e| Error::Format(format!("grid cell {i}: {e}")))?)
            };
            if ambiguous && count == 0 {
                return Err(Error::Format(format!(
                    "grid cell {i}: ambiguous without observations"
                )));
            }
            cells.push(GridCell {
                count,
                ambiguous,
                embedding,
            });
        }
        rd.finish()?;
        Ok(GridMapBaseline {
            d,
            origin,
            cell_size,
            nx,
            ny,
            cells,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        GridMapBaseline::from_bytes(&fs::read(path)?)
    }
}
