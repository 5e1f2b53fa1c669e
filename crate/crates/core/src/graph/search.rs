use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{NodeId, TopoGraph};
use crate::error::Result;
use crate::geometry::position_distance;

/// A node sequence with its cumulative length at each node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPath {
    pub nodes: Vec<NodeId>,
    pub cumulative: Vec<f64>,
    pub length: f64,
}

/// Min-heap entry ordered by key, then by lower node index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    key: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path under edge weights, or `None` when `goal` is unreachable.
pub fn astar(graph: &TopoGraph, start: NodeId, goal: NodeId) -> Result<Option<GraphPath>> {
    astar_traced(graph, start, goal, |_, _| {})
}

/// [`astar`] that reports every expanded node with its heuristic value.
pub fn astar_traced(
    graph: &TopoGraph,
    start: NodeId,
    goal: NodeId,
    mut on_expand: impl FnMut(NodeId, f64),
) -> Result<Option<GraphPath>> {
    let s = graph.index(start)?;
    let g = graph.index(goal)?;
    let goal_t = graph.poses[g].t();
    let h = |i: usize| position_distance(&graph.poses[i].t(), &goal_t);
    let n = graph.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    cost[s] = 0.0;
    heap.push(Entry { key: h(s), node: s });
    while let Some(Entry { node, .. }) = heap.pop() {
        if closed[node] {
            continue;
        }
        closed[node] = true;
        on_expand(graph.ids[node], h(node));
        if node == g {
            return Ok(Some(reconstruct(graph, &parent, &cost, s, g)));
        }
        for &(m, w) in &graph.adj[node] {
            let c = cost[node] + w;
            if !closed[m] && c < cost[m] {
                cost[m] = c;
                parent[m] = node;
                heap.push(Entry {
                    key: c + h(m),
                    node: m,
                });
            }
        }
    }
    Ok(None)
}

fn reconstruct(graph: &TopoGraph, parent: &[usize], cost: &[f64], s: usize, g: usize) -> GraphPath {
    let mut idx = vec![g];
    while *idx.last().unwrap() != s {
        idx.push(parent[*idx.last().unwrap()]);
    }
    idx.reverse();
    GraphPath {
        nodes: idx.iter().map(|&i| graph.ids[i]).collect(),
        cumulative: idx.iter().map(|&i| cost[i]).collect(),
        length: cost[g],
    }
}

/// Dijkstra distances from `source` to every node, indexed like [`TopoGraph::ids`].
pub fn shortest_distances(graph: &TopoGraph, source: NodeId) -> Result<Vec<f64>> {
    let s = graph.index(source)?;
    let mut src = vec![false; graph.len()];
    src[s] = true;
    Ok(dijkstra(graph, &src).0)
}

fn dijkstra(graph: &TopoGraph, sources: &[bool]) -> (Vec<f64>, Vec<usize>) {
    let n = graph.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for (i, _) in sources.iter().enumerate().filter(|(_, &s)| s) {
        cost[i] = 0.0;
        heap.push(Entry { key: 0.0, node: i });
    }
    while let Some(Entry { node, .. }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(m, w) in &graph.adj[node] {
            let c = cost[node] + w;
            if c < cost[m] {
                cost[m] = c;
                parent[m] = node;
                heap.push(Entry { key: c, node: m });
            }
        }
    }
    (cost, parent)
}

/// Node indices strictly between the source set and the nearest target along
/// a shortest path, or `None` when no target is reachable.
pub(crate) fn multi_source_path(
    graph: &TopoGraph,
    sources: &[bool],
    targets: &[bool],
) -> Option<Vec<usize>> {
    let (cost, parent) = dijkstra(graph, sources);
    let t = (0..graph.len())
        .filter(|&i| targets[i] && cost[i].is_finite())
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)))?;
    let mut out = Vec::new();
    let mut v = parent[t];
    while v != usize::MAX && !sources[v] {
        out.push(v);
        v = parent[v];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    #[test]
    fn start_equals_goal() {
        let g = TopoGraph::from_parts(vec![(5, Pose::identity())], &[], 1.0).unwrap();
        let p = astar(&g, 5, 5).unwrap().unwrap();
        assert_eq!(p.nodes, vec![5]);
        assert_eq!(p.length, 0.0);
        assert!(astar(&g, 5, 6).is_err());
    }

    #[test]
    fn triangle_routes() {
        let nodes = vec![
            (0, Pose::from_yaw([0.0, 0.0, 0.0], 0.0)),
            (1, Pose::from_yaw([1.0, 0.0, 0.0], 0.0)),
            (2, Pose::from_yaw([1.0, 1.0, 0.0], 0.0)),
        ];
        let open = TopoGraph::from_parts(nodes.clone(), &[(0, 1), (1, 2)], 2.0).unwrap();
        let p = astar(&open, 0, 2).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert_eq!(p.length, 2.0);
        assert_eq!(p.cumulative, vec![0.0, 1.0, 2.0]);
        let closed = TopoGraph::from_parts(nodes, &[(0, 1), (1, 2), (0, 2)], 2.0).unwrap();
        let p = astar(&closed, 0, 2).unwrap().unwrap();
        assert_eq!(p.nodes, vec![0, 2]);
        assert_eq!(p.length, 2f64.sqrt());
    }

    #[test]
    fn disconnected_goal_is_none() {
        let nodes = vec![
            (0, Pose::identity()),
            (1, Pose::from_yaw([5.0, 0.0, 0.0], 0.0)),
        ];
        let g = TopoGraph::from_parts(nodes, &[], 1.0).unwrap();
        assert!(astar(&g, 0, 1).unwrap().is_none());
    }
}
