//! Query benchmark for the implicit map and the explicit grid and node
//! baselines: success rate, SPL, goal distance, memory and timing.

mod ablation;
mod grid;
mod nodes;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{cosine_sim, Pose, UnitEmbedding};
use crate::graph::{astar, build_graph, keep_count, NodeId, TopoGraph};
use crate::planner::{plan, similarity, PlanStatus, RefineConfig};
use crate::world::{goal_embedding, observe_noiseless, ObservationModel, WorldSpec};

pub use ablation::{node_selection_ablation, AblationRow, AblationTable};
pub use grid::{
    build_grid_baseline, GridCell, GridMapBaseline, GRID_MAGIC, GRID_VERSION, MAX_GRID_CELLS,
};
pub use nodes::{build_node_baseline, NodeMapBaseline, NODE_MAGIC, NODE_VERSION};

/// Headings tried at a grid cell center when ranking cells by ground truth.
const CELL_HEADINGS: usize = 8;

/// A language-goal query: reach a view of `object_id` from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub object_id: u32,
    pub start: Pose,
    pub goal: UnitEmbedding,
}

/// `n` queries cycling through a seeded permutation of the objects, each
/// from a uniform start pose at camera height.
pub fn gen_queries(
    world: &WorldSpec,
    obs: &ObservationModel,
    n: usize,
    seed: u64,
) -> Result<Vec<EvalQuery>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n_queries must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = world.objects().iter().map(|o| o.id).collect();
    ids.shuffle(&mut rng);
    let ext = world.extent();
    (0..n)
        .map(|i| {
            let object_id = ids[i % ids.len()];
            let x = rng.random_range(ext.min[0]..=ext.max[0]);
            let y = rng.random_range(ext.min[1]..=ext.max[1]);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Ok(EvalQuery {
                object_id,
                start: Pose::from_yaw([x, y, obs.camera_height], yaw).quantized(),
                goal: goal_embedding(world, object_id)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Coarse graph search plus refinement on the implicit map.
    Implicit,
    /// The implicit map's coarse goal node, without refinement.
    ImplicitCoarse,
    Grid,
    Node,
}

impl EvalMethod {
    pub const ALL: [EvalMethod; 4] = [
        EvalMethod::Implicit,
        EvalMethod::ImplicitCoarse,
        EvalMethod::Grid,
        EvalMethod::Node,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            EvalMethod::Implicit => "implicit",
            EvalMethod::ImplicitCoarse => "implicit_coarse",
            EvalMethod::Grid => "grid",
            EvalMethod::Node => "node",
        }
    }
}

impl fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EvalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMethod::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// A map a method navigates with.
#[derive(Debug, Clone, Copy)]
pub enum MapArtifact<'a> {
    Implicit {
        model: &'a FieldModel,
        graph: &'a TopoGraph,
    },
    Grid(&'a GridMapBaseline),
    Node(&'a NodeMapBaseline),
}

/// Serialized size: model file plus compact graph JSON, grid file, or node file.
pub fn memory_footprint(map: &MapArtifact) -> usize {
    match map {
        MapArtifact::Implicit { model, graph } => model.byte_len() + graph.serialized_len(),
        MapArtifact::Grid(g) => g.byte_len(),
        MapArtifact::Node(n) => n.byte_len(),
    }
}

/// Shared evaluation inputs.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub world: &'a WorldSpec,
    pub obs: &'a ObservationModel,
    /// Reference graph for the shortest-path length in SPL.
    pub nav: &'a TopoGraph,
    pub success_radius: f64,
    /// The chosen unit must rank within this fraction of all units by
    /// ground-truth similarity.
    pub top_fraction: f64,
    pub refine: RefineConfig,
    pub seed: u64,
}

impl EvalContext<'_> {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_radius > 0.0 && self.success_radius.is_finite()) {
            return Err(Error::InvalidArgument("success_radius must be > 0".into()));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "top_fraction must lie in (0, 1]".into(),
            ));
        }
        self.refine.validate()
    }
}

/// Default success radius: a fifth of the mean object spacing.
pub fn default_success_radius(world: &WorldSpec) -> f64 {
    0.2 * world.mean_object_spacing()
}

/// Outcome of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub query: usize,
    pub object_id: u32,
    pub easy: bool,
    /// Node id or grid cell index chosen as the coarse goal.
    pub unit: u64,
    /// 1-based rank of the chosen unit by ground-truth similarity.
    pub unit_rank: usize,
    pub unit_count: usize,
    pub unit_ok: bool,
    pub final_position: [f64; 3],
    /// Ground-plane distance from the final pose to the object center.
    pub final_distance: f64,
    pub executed_length: f64,
    pub shortest_length: f64,
    pub success: bool,
    pub spl: f64,
    /// Predicted similarity at the coarse pose and at the final pose
    /// (implicit methods only).
    pub sim_coarse: Option<f64>,
    pub sim_final: Option<f64>,
    pub reached: bool,
    pub seconds: f64,
}

/// One row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub memory_bytes: usize,
    pub n_queries: usize,
    pub mean_query_seconds: f64,
    pub sr: f64,
    pub spl: f64,
    pub gdist: Option<f64>,
    pub n_easy: usize,
    pub n_hard: usize,
    pub sr_easy: f64,
    pub sr_hard: f64,
    pub spl_easy: f64,
    pub spl_hard: f64,
    pub gdist_easy: Option<f64>,
    pub gdist_hard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub row: EvalRow,
    pub trials: Vec<Trial>,
}

fn planar_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn ground_truth(
    world: &WorldSpec,
    obs: &ObservationModel,
    pose: &Pose,
    goal: &UnitEmbedding,
) -> f64 {
    cosine_sim(&observe_noiseless(world, obs, pose), goal).unwrap_or(f64::NEG_INFINITY)
}

fn cell_ground_truth(
    world: &WorldSpec,
    obs: &ObservationModel,
    c: [f64; 2],
    goal: &UnitEmbedding,
) -> f64 {
    (0..CELL_HEADINGS)
        .map(|k| {
            let yaw = -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * k as f64 / CELL_HEADINGS as f64;
            ground_truth(
                world,
                obs,
                &Pose::from_yaw([c[0], c[1], obs.camera_height], yaw),
                goal,
            )
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `1 + #{units with strictly higher score}`.
fn rank_of(scores: &[f64], chosen: usize) -> usize {
    1 + scores.iter().filter(|&&s| s > scores[chosen]).count()
}

struct Coarse {
    unit: u64,
    unit_rank: usize,
    unit_count: usize,
    final_t: [f64; 3],
    executed: f64,
    sim_coarse: Option<f64>,
    sim_final: Option<f64>,
    reached: bool,
}

fn graph_units(
    ctx: &EvalContext,
    graph: &TopoGraph,
    q: &EvalQuery,
    chosen: NodeId,
) -> Result<(usize, usize)> {
    let gt: Vec<f64> = graph
        .poses()
        .iter()
        .map(|p| ground_truth(ctx.world, ctx.obs, p, &q.goal))
        .collect();
    let i = graph
        .ids()
        .binary_search(&chosen)
        .map_err(|_| Error::UnknownNode(chosen))?;
    Ok((rank_of(&gt, i), gt.len()))
}

fn run_query(
    method: EvalMethod,
    map: &MapArtifact,
    ctx: &EvalContext,
    index: usize,
    q: &EvalQuery,
) -> Result<Coarse> {
    match (method, map) {
        (
            EvalMethod::Implicit | EvalMethod::ImplicitCoarse,
            MapArtifact::Implicit { model, graph },
        ) => {
            let seed = ctx.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let r = plan(model, graph, &q.start, &q.goal, &ctx.refine, seed)?;
            let (unit_rank, unit_count) = graph_units(ctx, graph, q, r.coarse_goal_node)?;
            let reached = r.status != PlanStatus::NoPath;
            let sim_coarse = similarity(model, &r.x_c, &q.goal)?;
            let (final_pose, executed) = match (reached, method) {
                (false, _) => (r.x_g, 0.0),
                (true, EvalMethod::ImplicitCoarse) => {
                    (r.x_c, r.coarse_path.as_ref().map_or(0.0, |p| p.length))
                }
                (true, _) => (r.x_g, r.executed_length()),
            };
            Ok(Coarse {
                unit: r.coarse_goal_node as u64,
                unit_rank,
                unit_count,
                final_t: final_pose.t(),
                executed,
                sim_coarse: Some(sim_coarse),
                sim_final: Some(similarity(model, &final_pose, &q.goal)?),
                reached,
            })
        }
        (EvalMethod::Node, MapArtifact::Node(nb)) => {
            let graph = nb.graph();
            let start = graph.nearest_node(q.start.t())?;
            let (goal, _) = nb.best_node(&q.goal)?;
            let (unit_rank, unit_count) = graph_units(ctx, graph, q, goal)?;
            let path = astar(graph, start, goal)?;
            let (t, executed) = match &path {
                Some(p) => (graph.pose(goal)?.t(), p.length),
                None => (graph.pose(start)?.t(), 0.0),
            };
            Ok(Coarse {
                unit: goal as u64,
                unit_rank,
                unit_count,
                final_t: t,
                executed,
                sim_coarse: None,
                sim_final: None,
                reached: path.is_some(),
            })
        }
        (EvalMethod::Grid, MapArtifact::Grid(g)) => {
            let (cell, _) = g.best_cell(&q.goal)?;
            let occupied: Vec<usize> = g.occupied().collect();
            let gt: Vec<f64> = occupied
                .iter()
                .map(|&c| cell_ground_truth(ctx.world, ctx.obs, g.cell_center(c), &q.goal))
                .collect();
            let pos = occupied
                .binary_search(&cell)
                .expect("best cell is occupied");
            let c = g.cell_center(cell);
            let t = [c[0], c[1], ctx.obs.camera_height];
            Ok(Coarse {
                unit: cell as u64,
                unit_rank: rank_of(&gt, pos),
                unit_count: gt.len(),
                final_t: t,
                executed: planar_distance(q.start.t(), t),
                sim_coarse: None,
                sim_final: None,
                reached: true,
            })
        }
        _ => Err(Error::InvalidArgument(format!(
            "method {method} does not run on this map"
        ))),
    }
}

/// `success · ℓ / max(p, ℓ)`, with `ℓ = p = 0` scoring 1 on success.
pub fn spl_term(success: bool, shortest: f64, executed: f64) -> f64 {
    let denom = executed.max(shortest);
    match (success, denom > 0.0) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        (true, true) => shortest / denom,
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn summarize(method: EvalMethod, memory_bytes: usize, trials: &[Trial]) -> EvalRow {
    let group = |easy: Option<bool>| -> (usize, f64, f64, Option<f64>) {
        let ts: Vec<&Trial> = trials
            .iter()
            .filter(|t| easy.is_none_or(|e| t.easy == e))
            .collect();
        let n = ts.len();
        let sr = mean(ts.iter().map(|t| f64::from(u8::from(t.success)))).unwrap_or(0.0);
        let spl = mean(ts.iter().map(|t| t.spl)).unwrap_or(0.0);
        let gd = mean(ts.iter().filter(|t| t.success).map(|t| t.final_distance));
        (n, sr, spl, gd)
    };
    let (n, sr, spl, gdist) = group(None);
    let (n_easy, sr_easy, spl_easy, gdist_easy) = group(Some(true));
    let (n_hard, sr_hard, spl_hard, gdist_hard) = group(Some(false));
    EvalRow {
        method: method.tag().to_string(),
        memory_bytes,
        n_queries: n,
        mean_query_seconds: mean(trials.iter().map(|t| t.seconds)).unwrap_or(0.0),
        sr,
        spl,
        gdist,
        n_easy,
        n_hard,
        sr_easy,
        sr_hard,
        spl_easy,
        spl_hard,
        gdist_easy,
        gdist_hard,
    }
}

/// Runs every query with `method` on `map`.
///
/// A trial succeeds when its final pose lies within the success radius of
/// the object center on the ground plane and its coarse unit ranks within
/// the top fraction of units by noiseless similarity to the goal. SPL uses
/// the shortest `nav` path from the node nearest the start to the node
/// nearest the object, with `ℓ = p = 0` scoring 1.
pub fn evaluate(
    method: EvalMethod,
    map: &MapArtifact,
    ctx: &EvalContext,
    queries: &[EvalQuery],
) -> Result<EvalOutcome> {
    ctx.validate()?;
    if queries.is_empty() {
        return Err(Error::Empty("queries"));
    }
    let trials = queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let obj = ctx.world.object(q.object_id)?;
            let clock = Instant::now();
            let c = run_query(method, map, ctx, i, q)?;
            let seconds = clock.elapsed().as_secs_f64();
            let s = ctx.nav.nearest_node(q.start.t())?;
            let g = ctx.nav.nearest_node(obj.center)?;
            let shortest = match astar(ctx.nav, s, g)? {
                Some(p) => p.length,
                None => planar_distance(ctx.nav.pose(s)?.t(), ctx.nav.pose(g)?.t()),
            };
            let final_distance = planar_distance(c.final_t, obj.center);
            let unit_ok = c.unit_rank <= keep_count(ctx.top_fraction, c.unit_count);
            let success = c.reached && unit_ok && final_distance <= ctx.success_radius;
            let spl = spl_term(success, shortest, c.executed);
            Ok(Trial {
                query: i,
                object_id: q.object_id,
                easy: obj.is_easy(),
                unit: c.unit,
                unit_rank: c.unit_rank,
                unit_count: c.unit_count,
                unit_ok,
                final_position: c.final_t,
                final_distance,
                executed_length: c.executed,
                shortest_length: shortest,
                success,
                spl,
                sim_coarse: c.sim_coarse,
                sim_final: c.sim_final,
                reached: c.reached,
                seconds,
            })
        })
        .collect::<Result<Vec<Trial>>>()?;
    Ok(EvalOutcome {
        row: summarize(method, memory_footprint(map), &trials),
        trials,
    })
}

/// Run metadata stored with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    /// `[world, data, train, eval]`.
    pub seeds: [u64; 4],
    pub world_hash: String,
    pub success_radius: f64,
    pub top_fraction: f64,
    pub n_queries: usize,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub rows: Vec<EvalRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Comma-separated columns padded to a common width per column.
pub(crate) fn aligned_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        padded.join(", ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
    out
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Copy with every timing zeroed, for bitwise comparison across runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.rows
            .iter_mut()
            .for_each(|row| row.mean_query_seconds = 0.0);
        r
    }

    pub fn to_csv(&self) -> String {
        let header = [
            "method",
            "memory_bytes",
            "time_s",
            "sr",
            "spl",
            "gdist",
            "sr_easy",
            "sr_hard",
            "spl_easy",
            "spl_hard",
            "gdist_easy",
            "gdist_hard",
        ];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    r.memory_bytes.to_string(),
                    format!("{:.6}", r.mean_query_seconds),
                    format!("{:.4}", r.sr),
                    format!("{:.4}", r.spl),
                    fmt_opt(r.gdist),
                    format!("{:.4}", r.sr_easy),
                    format!("{:.4}", r.sr_hard),
                    format!("{:.4}", r.spl_easy),
                    format!("{:.4}", r.spl_hard),
                    fmt_opt(r.gdist_easy),
                    fmt_opt(r.gdist_hard),
                ]
            })
            .collect();
        aligned_csv(&header, &rows)
    }
}

/// Bytes of a node map over `graph` at embedding width `d`.
fn node_map_len(graph: &TopoGraph, d: usize) -> usize {
    8 + 4 * 4 + 8 + graph.len() * (4 + 4 * (7 + d)) + graph.edge_count() * 8
}

/// Node baseline whose file is as close as possible to `budget` bytes.
///
/// Bisects the node spacing; edges join nodes within `link_factor` times
/// the spacing.
pub fn fit_node_baseline(
    dataset: &Dataset,
    budget: usize,
    link_factor: f64,
) -> Result<NodeMapBaseline> {
    if !(link_factor > 1.0) {
        return Err(Error::InvalidArgument("link_factor must be > 1".into()));
    }
    let build = |sep: f64| build_graph(dataset.poses(), sep, link_factor * sep);
    let (mut lo, mut hi) = (1e-3, 1.0);
    while node_map_len(&build(hi)?, dataset.d()) > budget && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    let mut best = build(hi)?;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let g = build(mid)?;
        let len = node_map_len(&g, dataset.d());
        if len.abs_diff(budget) < node_map_len(&best, dataset.d()).abs_diff(budget) {
            best = g.clone();
        }
        if len > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    build_node_baseline(&best, dataset)
}

/// Grid baseline whose file is as close as possible to `budget` bytes.
pub fn fit_grid_baseline(dataset: &Dataset, budget: usize) -> Result<GridMapBaseline> {
    let probe = build_grid_baseline(dataset, 1e9)?;
    let per_cell = 4 + 4 * dataset.d();
    let header = probe.byte_len() - per_cell;
    let cells_wanted = (budget.saturating_sub(header) / per_cell).max(1);
    let span = dataset.poses().fold(
        [
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ],
        |b, p| {
            let t = p.t();
            [
                b[0].min(t[0]),
                b[1].max(t[0]),
                b[2].min(t[1]),
                b[3].max(t[1]),
            ]
        },
    );
    let area = ((span[1] - span[0]) * (span[3] - span[2])).max(1e-12);
    let guess = (area / cells_wanted as f64).sqrt();
    let mut best = probe;
    for k in -200..=200 {
        let size = guess * 1.005f64.powi(k);
        let len = header
            + per_cell
                * grid::cell_count(span[1] - span[0], size)
                * grid::cell_count(span[3] - span[2], size);
        if len.abs_diff(budget) < best.byte_len().abs_diff(budget) {
            best = build_grid_baseline(dataset, size)?;
        }
    }
    Ok(best)
}
