//! Pose-only topological graph: construction, search, node scoring and pruning.

mod sample;
mod score;
mod search;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{position_distance, Pose};

pub use sample::{select_nodes, SamplingMethod};
pub(crate) use score::keep_count;
pub use score::{
    compute_scores, score_and_sample, select_top, semantic_sensitivity_score, uncertainty_score,
    view_coverage_score, NodeScoreRow, NodeScores, SampleConfig, ScoreWeights,
};
pub use search::{astar, astar_traced, shortest_distances, GraphPath};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: NodeId,
    t: [f64; 3],
    q: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    nodes: Vec<RawNode>,
    edges: Vec<[NodeId; 2]>,
    link_radius: f64,
}

/// Undirected graph over poses with Euclidean edge weights.
///
/// Nodes are kept sorted by id; `adj[i]` lists `(neighbor index, weight)`
/// sorted by neighbor id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct TopoGraph {
    ids: Vec<NodeId>,
    poses: Vec<Pose>,
    adj: Vec<Vec<(usize, f64)>>,
    link_radius: f64,
}

impl TryFrom<RawGraph> for TopoGraph {
    type Error = Error;

    fn try_from(r: RawGraph) -> Result<Self> {
        let nodes = r
            .nodes
            .into_iter()
            .map(|n| Ok((n.id, Pose::from_stored(n.t, n.q)?)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Format(format!("graph node: {e}")))?;
        let edges: Vec<(NodeId, NodeId)> = r.edges.into_iter().map(|[a, b]| (a, b)).collect();
        TopoGraph::from_parts(nodes, &edges, r.link_radius)
    }
}

impl From<TopoGraph> for RawGraph {
    fn from(g: TopoGraph) -> Self {
        let nodes = g
            .ids
            .iter()
            .zip(&g.poses)
            .map(|(&id, p)| RawNode {
                id,
                t: p.t(),
                q: p.q(),
            })
            .collect();
        RawGraph {
            nodes,
            edges: g.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            link_radius: g.link_radius,
        }
    }
}

impl TopoGraph {
    /// Validates and assembles a graph. Edges must join distinct, existing,
    /// non-coincident nodes; duplicates are rejected.
    pub fn from_parts(
        mut nodes: Vec<(NodeId, Pose)>,
        edges: &[(NodeId, NodeId)],
        link_radius: f64,
    ) -> Result<Self> {
        if !(link_radius > 0.0 && link_radius.is_finite()) {
            return Err(Error::InvalidArgument("link_radius must be > 0".into()));
        }
        nodes.sort_by_key(|n| n.0);
        if nodes.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate node id".into()));
        }
        let ids: Vec<NodeId> = nodes.iter().map(|n| n.0).collect();
        let poses: Vec<Pose> = nodes.into_iter().map(|n| n.1).collect();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        for &(a, b) in edges {
            let ia = *index.get(&a).ok_or(Error::UnknownNode(a))?;
            let ib = *index.get(&b).ok_or(Error::UnknownNode(b))?;
            if ia == ib {
                return Err(Error::InvalidArgument(format!("self-loop on node {a}")));
            }
            if adj[ia].iter().any(|&(n, _)| n == ib) {
                return Err(Error::InvalidArgument(format!("duplicate edge {a}-{b}")));
            }
            let w = position_distance(&poses[ia].t(), &poses[ib].t());
            if !(w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge {a}-{b} joins coincident poses"
                )));
            }
            adj[ia].push((ib, w));
            adj[ib].push((ia, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
        }
        Ok(TopoGraph {
            ids,
            poses,
            adj,
            link_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn link_radius(&self) -> f64 {
        self.link_radius
    }

    /// Node ids in ascending order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub(crate) fn index(&self, id: NodeId) -> Result<usize> {
        self.ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownNode(id))
    }

    pub fn pose(&self, id: NodeId) -> Result<&Pose> {
        Ok(&self.poses[self.index(id)?])
    }

    /// `(neighbor id, weight)` pairs sorted by neighbor id.
    pub fn neighbors(&self, id: NodeId) -> Result<Vec<(NodeId, f64)>> {
        Ok(self.adj[self.index(id)?]
            .iter()
            .map(|&(n, w)| (self.ids[n], w))
            .collect())
    }

    pub fn degree(&self, id: NodeId) -> Result<usize> {
        Ok(self.adj[self.index(id)?].len())
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, list) in self.adj.iter().enumerate() {
            for &(j, _) in list {
                if i < j {
                    out.push((self.ids[i], self.ids[j]));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Node whose position is nearest to `t`; ties go to the lower id.
    pub fn nearest_node(&self, t: [f64; 3]) -> Result<NodeId> {
        let mut best: Option<(f64, NodeId)> = None;
        for (id, p) in self.ids.iter().zip(&self.poses) {
            let d = position_distance(&p.t(), &t);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, *id));
            }
        }
        best.map(|b| b.1).ok_or(Error::Empty("graph"))
    }

    /// Connected component label per node index, labels in order of first appearance.
    pub(crate) fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.len()];
        let mut next = 0;
        for s in 0..self.len() {
            if label[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            label[s] = next;
            while let Some(v) = stack.pop() {
                for &(n, _) in &self.adj[v] {
                    if label[n] == usize::MAX {
                        label[n] = next;
                        stack.push(n);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Induced subgraph on `keep`, re-linked: original edges among kept nodes
    /// plus every kept pair within `link_radius`. If that leaves kept nodes of
    /// one original component disconnected, nodes along shortest original
    /// paths are re-added until they are mutually reachable.
    pub fn prune(&self, keep: &[NodeId]) -> Result<TopoGraph> {
        let mut kept = vec![false; self.len()];
        for &id in keep {
            kept[self.index(id)?] = true;
        }
        if kept.iter().all(|&k| k) {
            return Ok(self.clone());
        }
        let comp = self.components();
        loop {
            let sub = self.relinked(&kept)?;
            let sub_comp = sub.components();
            let sub_index: HashMap<NodeId, usize> =
                sub.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
            // first original component whose kept nodes are split
            let mut bridge = None;
            for c in 0..=comp.iter().copied().max().unwrap_or(0) {
                let members: Vec<usize> = (0..self.len())
                    .filter(|&i| kept[i] && comp[i] == c)
                    .collect();
                if let Some(&first) = members.first() {
                    let root = sub_comp[sub_index[&self.ids[first]]];
                    if members
                        .iter()
                        .any(|&i| sub_comp[sub_index[&self.ids[i]]] != root)
                    {
                        let source: Vec<bool> = (0..self.len())
                            .map(|i| {
                                kept[i] && comp[i] == c && sub_comp[sub_index[&self.ids[i]]] == root
                            })
                            .collect();
                        bridge = Some(source);
                        break;
                    }
                }
            }
            let Some(source) = bridge else { return Ok(sub) };
            let target: Vec<bool> = (0..self.len()).map(|i| kept[i] && !source[i]).collect();
            let path = search::multi_source_path(self, &source, &target).ok_or_else(|| {
                Error::InvalidArgument("graph repair found no bridging path".into())
            })?;
            for i in path {
                kept[i] = true;
            }
        }
    }

    fn relinked(&self, kept: &[bool]) -> Result<TopoGraph> {
        let nodes: Vec<(NodeId, Pose)> = (0..self.len())
            .filter(|&i| kept[i])
            .map(|i| (self.ids[i], self.poses[i]))
            .collect();
        let idx: Vec<usize> = (0..self.len()).filter(|&i| kept[i]).collect();
        let mut edges = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let original = self.adj[i].iter().any(|&(n, _)| n == j);
                let d = position_distance(&self.poses[i].t(), &self.poses[j].t());
                if original || (d <= self.link_radius && d > 0.0) {
                    edges.push((self.ids[i], self.ids[j]));
                }
            }
        }
        TopoGraph::from_parts(nodes, &edges, self.link_radius)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Length of the compact JSON encoding, used for memory accounting.
    pub fn serialized_len(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TopoGraph::from_json(&fs::read_to_string(path)?)
    }
}

/// Greedy spatial subsampling in input order: a pose becomes a node when it
/// is at least `min_separation` from every accepted node. Nodes within
/// `link_radius` of each other are joined.
pub fn build_graph<'a>(
    poses: impl IntoIterator<Item = &'a Pose>,
    min_separation: f64,
    link_radius: f64,
) -> Result<TopoGraph> {
    if !(min_separation >= 0.0) {
        return Err(Error::InvalidArgument("min_separation must be >= 0".into()));
    }
    let cell = min_separation.max(1e-9);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut accepted: Vec<Pose> = Vec::new();
    let mut any = false;
    for p in poses {
        any = true;
        let t = p.t();
        let key = ((t[0] / cell).floor() as i64, (t[1] / cell).floor() as i64);
        let mut ok = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(key.0 + dx, key.1 + dy)) {
                    for &j in list {
                        let d = position_distance(&accepted[j].t(), &t);
                        if d < min_separation || d == 0.0 {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if ok {
            buckets.entry(key).or_default().push(accepted.len());
            accepted.push(*p);
        }
    }
    if !any {
        return Err(Error::Empty("graph poses"));
    }
    let mut edges = Vec::new();
    for i in 0..accepted.len() {
        for j in i + 1..accepted.len() {
            if position_distance(&accepted[i].t(), &accepted[j].t()) <= link_radius {
                edges.push((i as NodeId, j as NodeId));
            }
        }
    }
    let nodes = accepted
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as NodeId, p))
        .collect();
    TopoGraph::from_parts(nodes, &edges, link_radius)
}
