//! Graph nodes that each store one observed embedding, and the `LAMPNOD1` file.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"LAMPNOD1"  u32 version  u32 d  u32 n_nodes  u32 n_edges  f64 link_radius
//! n_nodes × ( u32 id   7 × f32 pose [t_x t_y t_z q_w q_x q_y q_z]   d × f32 embedding )
//! n_edges × ( u32 a   u32 b )
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::binio::{PutLe, Reader};
use crate::dataset::{decode_pose, decode_unit, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{dot, position_distance, quat_abs_dot, UnitEmbedding};
use crate::graph::{NodeId, TopoGraph};

pub const NODE_MAGIC: &[u8; 8] = b"LAMPNOD1";
pub const NODE_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 * 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMapBaseline {
    graph: TopoGraph,
    embeddings: Vec<UnitEmbedding>,
}

/// Attaches to every node the embedding of the nearest dataset pose.
///
/// Nearest means smallest position distance, then largest `|⟨q, q'⟩|`, then
/// lowest record index. Node poses are rounded through `f32` to match the file.
pub fn build_node_baseline(graph: &TopoGraph, dataset: &Dataset) -> Result<NodeMapBaseline> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if graph.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let recs = dataset.records();
    let embeddings: Vec<UnitEmbedding> = graph
        .poses()
        .par_iter()
        .map(|p| {
            let (t, q) = (p.t(), p.q());
            let mut best = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
            for (i, r) in recs.iter().enumerate() {
                let d = position_distance(&t, &r.pose.t());
                if d > best.0 {
                    continue;
                }
                let a = quat_abs_dot(&q, &r.pose.q());
                if d < best.0 || a > best.1 {
                    best = (d, a, i);
                }
            }
            let z: Vec<f32> = recs[best.2]
                .z
                .as_slice()
                .iter()
                .map(|v| *v as f32)
                .collect();
            decode_unit(&z)
        })
        .collect::<Result<_>>()?;
    let nodes = graph
        .ids()
        .iter()
        .zip(graph.poses())
        .map(|(&id, p)| (id, p.quantized()))
        .collect();
    let graph = TopoGraph::from_parts(nodes, &graph.edges(), graph.link_radius())?;
    Ok(NodeMapBaseline { graph, embeddings })
}

impl NodeMapBaseline {
    pub fn graph(&self) -> &TopoGraph {
        &self.graph
    }

    /// Stored embeddings, indexed like [`TopoGraph::ids`].
    pub fn embeddings(&self) -> &[UnitEmbedding] {
        &self.embeddings
    }

    pub fn d(&self) -> usize {
        self.embeddings[0].dim()
    }

    /// Node whose stored embedding best matches `z`; ties go to the lower id.
    pub fn best_node(&self, z: &UnitEmbedding) -> Result<(NodeId, f64)> {
        if z.dim() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                actual: z.dim(),
            });
        }
        let mut best = (self.graph.ids()[0], f64::NEG_INFINITY);
        for (&id, e) in self.graph.ids().iter().zip(&self.embeddings) {
            let s = dot(e.as_slice(), z.as_slice());
            if s > best.1 {
                best = (id, s);
            }
        }
        Ok(best)
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.graph.len() * (4 + 4 * (7 + self.d())) + self.graph.edge_count() * 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let edges = self.graph.edges();
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(NODE_MAGIC);
        out.put_u32(NODE_VERSION);
        out.put_u32(self.d() as u32);
        out.put_u32(self.graph.len() as u32);
        out.put_u32(edges.len() as u32);
        out.put_u64(self.graph.link_radius().to_bits());
        for ((&id, p), e) in self
            .graph
            .ids()
            .iter()
            .zip(self.graph.poses())
            .zip(&self.embeddings)
        {
            out.put_u32(id);
            p.to_array().iter().for_each(|v| out.put_f32(*v as f32));
            e.as_slice().iter().for_each(|v| out.put_f32(*v as f32));
        }
        for (a, b) in edges {
            out.put_u32(a);
            out.put_u32(b);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(buf, "node map");
        rd.magic(NODE_MAGIC)?;
        let version = rd.u32()?;
        if version != NODE_VERSION {
            return Err(Error::Format(format!(
                "node map: unsupported version {version}"
            )));
        }
        let d = rd.u32()? as usize;
        let n = rd.u32()? as usize;
        let m = rd.u32()? as usize;
        let link_radius = f64::from_bits(rd.u64()?);
        if d == 0 || n == 0 {
            return Err(Error::Format("node map: zero dimension or no nodes".into()));
        }
        let need = (n as u64) * (4 + 4 * (7 + d as u64)) + (m as u64) * 8;
        if need != rd.remaining() as u64 {
            return Err(Error::Format(format!(
                "node map: header needs {need} bytes but {} follow",
                rd.remaining()
            )));
        }
        let mut nodes = Vec::with_capacity(n);
        let mut embeddings = Vec::with_capacity(n);
        for i in 0..n {
            let id = rd.u32()?;
            let pose = decode_pose(&rd.f32_vec(7)?)
                .map_err(|e| Error::Format(format!("node {i}: {e}")))?;
            let z = decode_unit(&rd.f32_vec(d)?)
                .map_err(|e| Error::Format(format!("node {i}: {e}")))?;
            nodes.push((id, pose));
            embeddings.push((id, z));
        }
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            edges.push((rd.u32()?, rd.u32()?));
        }
        rd.finish()?;
        let graph = TopoGraph::from_parts(nodes, &edges, link_radius)
            .map_err(|e| Error::Format(format!("node map: {e}")))?;
        // from_parts sorts by id; keep embeddings aligned with it
        embeddings.sort_by_key(|e| e.0);
        Ok(NodeMapBaseline {
            graph,
            embeddings: embeddings.into_iter().map(|e| e.1).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        NodeMapBaseline::from_bytes(&fs::read(path)?)
    }
}
