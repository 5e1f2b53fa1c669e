use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NodeId, TopoGraph};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{quat_abs_dot, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub view_coverage: f64,
    pub uncertainty: f64,
    pub sensitivity: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            view_coverage: 1.0,
            uncertainty: 1.0,
            sensitivity: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub weights: ScoreWeights,
    pub keep_fraction: f64,
    /// Min-max normalize each raw score before weighting.
    pub normalize: bool,
    /// Differentiate the field only along ground-plane position and yaw,
    /// the directions the training poses vary in.
    pub planar_sensitivity: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            weights: ScoreWeights::default(),
            keep_fraction: 0.3,
            normalize: true,
            planar_sensitivity: true,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "keep_fraction must lie in (0, 1]".into(),
            ));
        }
        let w = self.weights;
        if ![w.view_coverage, w.uncertainty, w.sensitivity]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "score weights must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeScoreRow {
    pub id: NodeId,
    pub s_vc: f64,
    pub s_u: f64,
    pub s_ss: f64,
    pub s_vc_norm: f64,
    pub s_u_norm: f64,
    pub s_ss_norm: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeScores {
    pub rows: Vec<NodeScoreRow>,
}

impl NodeScores {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,s_vc,s_u,s_ss,s_vc_norm,s_u_norm,s_ss_norm,total\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.id, r.s_vc, r.s_u, r.s_ss, r.s_vc_norm, r.s_u_norm, r.s_ss_norm, r.total
            );
        }
        out
    }
}

/// `1 − mean |⟨q_v, q_u⟩|` over the deduplicated two-hop neighborhood of `v`,
/// excluding `v`. An isolated node scores 0.
pub fn view_coverage_score(graph: &TopoGraph, v: NodeId) -> Result<f64> {
    let i = graph.index(v)?;
    let mut hood = BTreeSet::new();
    for &(n, _) in &graph.adj[i] {
        hood.insert(n);
        for &(m, _) in &graph.adj[n] {
            hood.insert(m);
        }
    }
    hood.remove(&i);
    if hood.is_empty() {
        return Ok(0.0);
    }
    let q = graph.poses[i].q();
    let mean = hood
        .iter()
        .map(|&u| quat_abs_dot(&q, &graph.poses[u].q()))
        .sum::<f64>()
        / hood.len() as f64;
    Ok(1.0 - mean)
}

/// Predicted concentration at `x`.
pub fn uncertainty_score(model: &FieldModel, x: &Pose) -> Result<f64> {
    Ok(model.forward(x)?.kappa)
}

/// Frobenius norm of the field Jacobian at `x`, over the full 7-D pose or,
/// with `planar`, over ground-plane position and yaw only.
pub fn semantic_sensitivity_score(model: &FieldModel, x: &Pose, planar: bool) -> Result<f64> {
    if planar {
        model.planar_jacobian_norm(x)
    } else {
        model.jacobian_norm(x)
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// All three scores per node, normalized (or not) and combined with the weights.
pub fn compute_scores(
    graph: &TopoGraph,
    model: &FieldModel,
    cfg: &SampleConfig,
) -> Result<NodeScores> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let raw: Vec<(f64, f64, f64)> = graph
        .ids
        .par_iter()
        .zip(graph.poses.par_iter())
        .map(|(&id, p)| {
            Ok((
                view_coverage_score(graph, id)?,
                uncertainty_score(model, p)?,
                semantic_sensitivity_score(model, p, cfg.planar_sensitivity)?,
            ))
        })
        .collect::<Result<_>>()?;
    let vc: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let u: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let ss: Vec<f64> = raw.iter().map(|r| r.2).collect();
    let (nvc, nu, nss) = if cfg.normalize {
        (min_max(&vc), min_max(&u), min_max(&ss))
    } else {
        (vc.clone(), u.clone(), ss.clone())
    };
    let w = cfg.weights;
    let rows = (0..graph.len())
        .map(|i| NodeScoreRow {
            id: graph.ids[i],
            s_vc: vc[i],
            s_u: u[i],
            s_ss: ss[i],
            s_vc_norm: nvc[i],
            s_u_norm: nu[i],
            s_ss_norm: nss[i],
            total: w.view_coverage * nvc[i] + w.uncertainty * nu[i] + w.sensitivity * nss[i],
        })
        .collect();
    Ok(NodeScores { rows })
}

/// `⌈keep_fraction · n⌉`, at least 1.
pub(crate) fn keep_count(keep_fraction: f64, n: usize) -> usize {
    ((keep_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Ids of the top `⌈keep_fraction · n⌉` rows by total; ties go to the lower id.
pub fn select_top(scores: &NodeScores, keep_fraction: f64) -> Vec<NodeId> {
    let mut rows: Vec<&NodeScoreRow> = scores.rows.iter().collect();
    rows.sort_by(|a, b| b.total.total_cmp(&a.total).then(a.id.cmp(&b.id)));
    let mut keep: Vec<NodeId> = rows
        .iter()
        .take(keep_count(keep_fraction, rows.len()))
        .map(|r| r.id)
        .collect();
    keep.sort_unstable();
    keep
}

/// Scores every node, keeps the best fraction and re-links the survivors
/// with connectivity repair.
pub fn score_and_sample(
    graph: &TopoGraph,
    model: &FieldModel,
    cfg: &SampleConfig,
) -> Result<(TopoGraph, NodeScores)> {
    let scores = compute_scores(graph, model, cfg)?;
    let keep = select_top(&scores, cfg.keep_fraction);
    Ok((graph.prune(&keep)?, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn yawed(x: f64, yaw: f64) -> Pose {
        Pose::from_yaw([x, 0.0, 0.0], yaw)
    }

    #[test]
    fn coverage_extremes() {
        let same: Vec<Pose> = (0..4).map(|i| yawed(i as f64, 0.3)).collect();
        let g = build_graph(&same, 0.5, 1.1).unwrap();
        assert!(view_coverage_score(&g, 1).unwrap().abs() < 1e-12);
        // yaw π rotates q = (1,0,0,0) into (0,0,0,1): orthogonal in 4-D
        let ortho = vec![
            yawed(0.0, 0.0),
            yawed(1.0, std::f64::consts::PI),
            yawed(2.0, std::f64::consts::PI),
        ];
        let g = build_graph(&ortho, 0.5, 1.1).unwrap();
        assert!((view_coverage_score(&g, 0).unwrap() - 1.0).abs() < 1e-12);
        let lone = build_graph(&[yawed(0.0, 0.0)], 0.5, 1.0).unwrap();
        assert_eq!(view_coverage_score(&lone, 0).unwrap(), 0.0);
    }

    #[test]
    fn coverage_on_path_graph_by_hand() {
        let yaws = [0.0, 0.4, 1.1, 1.9, 2.6];
        let poses: Vec<Pose> = yaws
            .iter()
            .enumerate()
            .map(|(i, &y)| yawed(i as f64, y))
            .collect();
        let g = build_graph(&poses, 0.5, 1.1).unwrap();
        // N₂(2) = {0, 1, 3, 4}; |⟨q_a, q_b⟩| = |cos((yaw_a − yaw_b)/2)| for planar poses
        let expect = 1.0
            - [0usize, 1, 3, 4]
                .iter()
                .map(|&u| ((yaws[2] - yaws[u]) / 2.0).cos().abs())
                .sum::<f64>()
                / 4.0;
        assert!((view_coverage_score(&g, 2).unwrap() - expect).abs() < 1e-12);
        // N₂(0) = {1, 2}
        let expect0 = 1.0
            - [1usize, 2]
                .iter()
                .map(|&u| ((yaws[0] - yaws[u]) / 2.0).cos().abs())
                .sum::<f64>()
                / 2.0;
        assert!((view_coverage_score(&g, 0).unwrap() - expect0).abs() < 1e-12);
    }

    #[test]
    fn weighted_total_arithmetic() {
        let w = ScoreWeights::default();
        assert_eq!(
            w.view_coverage * 1.0 + w.uncertainty * 0.5 + w.sensitivity * 1.0,
            2.0
        );
    }

    #[test]
    fn top_selection_ties_and_counts() {
        let rows = [3.0, 1.0, 3.0, 2.0, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &t)| NodeScoreRow {
                id: i as NodeId,
                s_vc: 0.0,
                s_u: 0.0,
                s_ss: 0.0,
                s_vc_norm: 0.0,
                s_u_norm: 0.0,
                s_ss_norm: 0.0,
                total: t,
            })
            .collect();
        let s = NodeScores { rows };
        assert_eq!(select_top(&s, 0.2), vec![0]);
        assert_eq!(select_top(&s, 0.4), vec![0, 2]);
        assert_eq!(select_top(&s, 0.6), vec![0, 2, 3]);
        assert_eq!(select_top(&s, 1.0).len(), 5);
        assert_eq!(keep_count(0.3, 10), 3);
        assert_eq!(keep_count(0.3, 200), 60);
        assert_eq!(keep_count(0.001, 10), 1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = NodeScores {
            rows: vec![NodeScoreRow {
                id: 7,
                s_vc: 0.1,
                s_u: 2.0,
                s_ss: 0.3,
                s_vc_norm: 1.0,
                s_u_norm: 0.5,
                s_ss_norm: 1.0,
                total: 2.0,
            }],
        };
        let csv = s.to_csv();
        assert!(csv.starts_with("id,s_vc,s_u,s_ss,"));
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("7,0.1,2,0.3,1,0.5,1,2"));
    }
}
