//! Coarse-to-fine goal reaching: argmax node, A* over the graph, then
//! candidate sampling and Adam refinement of the goal pose.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldModel, PositionBounds};
use crate::geometry::{dot, perturb_pose, position_distance, Pose, UnitEmbedding};
use crate::graph::{astar, GraphPath, NodeId, TopoGraph};
use crate::optim::{Adam, AdamConfig};

/// Fraction by which the model's position bounds are widened for clamping.
pub const BOUNDS_SLACK: f64 = 0.1;

/// Learning-rate factor applied, with a momentum reset, whenever a step
/// lowers the objective.
pub const DROP_DAMPING: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub n_candidates: usize,
    /// Candidate position spread, meters. The default is twice the
    /// reference graph's 4 m node separation.
    pub sigma_pos: f64,
    /// Candidate yaw spread, radians.
    pub sigma_yaw: f64,
    /// Distance penalty per [`PositionBounds::half_span`] of displacement.
    pub lambda_dist: f64,
    pub adam: AdamConfig,
    pub max_steps: usize,
    /// Stop once a step moves the pose vector less than this.
    pub tolerance: f64,
    /// Only move along ground-plane position and yaw.
    pub planar: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            n_candidates: 64,
            sigma_pos: 8.0,
            sigma_yaw: PI,
            lambda_dist: 5.0,
            adam: AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            max_steps: 500,
            tolerance: 1e-5,
            planar: true,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("refine config: {m}")));
        if self.n_candidates == 0 {
            return bad("n_candidates must be >= 1");
        }
        if !(self.sigma_pos >= 0.0 && self.sigma_yaw >= 0.0) {
            return bad("candidate spreads must be >= 0");
        }
        if !(self.lambda_dist >= 0.0) {
            return bad("lambda_dist must be >= 0");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1");
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.epsilon > 0.0)
            || !(0.0..1.0).contains(&self.adam.beta1)
            || !(0.0..1.0).contains(&self.adam.beta2)
        {
            return bad("Adam constants out of range");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Ok,
    NoPath,
    RefineDiverged,
}

/// Per-iterate record of the refinement; index 0 is the start `x_c`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefineTrace {
    pub similarity: Vec<f64>,
    pub objective: Vec<f64>,
    pub poses: Vec<[f64; 7]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub start_node: NodeId,
    pub coarse_goal_node: NodeId,
    pub coarse_goal_similarity: f64,
    pub coarse_path: Option<GraphPath>,
    pub x_c: Pose,
    pub x_best: Pose,
    pub x_g: Pose,
    pub trace: RefineTrace,
    pub status: PlanStatus,
}

impl PlanResult {
    /// Graph path length plus the straight-line refinement displacement.
    pub fn executed_length(&self) -> f64 {
        self.coarse_path.as_ref().map_or(0.0, |p| p.length)
            + position_distance(&self.x_c.t(), &self.x_g.t())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `μ(x)·z_goal`.
pub fn similarity(model: &FieldModel, x: &Pose, z_goal: &UnitEmbedding) -> Result<f64> {
    if z_goal.dim() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            actual: z_goal.dim(),
        });
    }
    Ok(dot(model.forward(x)?.mu.as_slice(), z_goal.as_slice()))
}

/// Node whose predicted embedding best matches the goal; ties go to the lower id.
pub fn coarse_goal(
    model: &FieldModel,
    graph: &TopoGraph,
    z_goal: &UnitEmbedding,
) -> Result<(NodeId, f64)> {
    if graph.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let sims: Vec<f64> = graph
        .poses()
        .par_iter()
        .map(|p| similarity(model, p, z_goal))
        .collect::<Result<_>>()?;
    let mut best = (graph.ids()[0], sims[0]);
    for (&id, &s) in graph.ids().iter().zip(&sims).skip(1) {
        if s > best.1 {
            best = (id, s);
        }
    }
    Ok(best)
}

/// A* from `start` to `goal`; `None` when they are disconnected.
pub fn plan_coarse(graph: &TopoGraph, start: NodeId, goal: NodeId) -> Result<Option<GraphPath>> {
    astar(graph, start, goal)
}

/// Best of `x_c` and `n_candidates` perturbations of it by predicted
/// similarity. `x_c` wins ties, so the result is never worse than `x_c`.
pub fn select_best_candidate(
    model: &FieldModel,
    x_c: &Pose,
    z_goal: &UnitEmbedding,
    cfg: &RefineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Pose, f64)> {
    cfg.validate()?;
    let bounds = model.bounds().inflated(BOUNDS_SLACK);
    let mut best = (*x_c, similarity(model, x_c, z_goal)?);
    for _ in 0..cfg.n_candidates {
        let p = perturb_pose(x_c, cfg.sigma_pos, cfg.sigma_yaw, rng);
        let p = p.with_position(bounds.clamp(p.t()));
        let s = similarity(model, &p, z_goal)?;
        if s > best.1 {
            best = (p, s);
        }
    }
    Ok(best)
}

/// `J(x) = sim(F(x), z_goal) − λ_dist · ‖t(x) − t(x_best)‖ / h` and its
/// gradient, where `h` is the half span of the model bounds.
fn objective_and_gradient(
    model: &FieldModel,
    x: &[f64; 7],
    best_t: [f64; 3],
    z_goal: &UnitEmbedding,
    lambda: f64,
) -> Result<(f64, f64, [f64; 7])> {
    let (sim, mut g) = model.similarity_and_gradient(x, z_goal)?;
    let h = model.bounds().half_span();
    let diff = [x[0] - best_t[0], x[1] - best_t[1], x[2] - best_t[2]];
    let d = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
    if d > 0.0 {
        for k in 0..3 {
            g[k] -= lambda * diff[k] / (d * h);
        }
    }
    Ok((sim - lambda * d / h, sim, g))
}

/// Evaluates the refinement objective at a pose.
pub fn refine_objective(
    model: &FieldModel,
    x: &Pose,
    x_best: &Pose,
    z_goal: &UnitEmbedding,
    lambda_dist: f64,
) -> Result<f64> {
    Ok(objective_and_gradient(model, &x.to_array(), x_best.t(), z_goal, lambda_dist)?.0)
}

/// Gradient ascent on `J` from `δx = 0` with Adam.
///
/// After each step the quaternion is renormalized and the position clamped
/// to the model bounds widened by [`BOUNDS_SLACK`]. A step that lowers the
/// objective triggers [`DROP_DAMPING`]. Returns the iterate with the highest
/// objective (earliest on ties), the trace and whether the objective stayed
/// finite.
pub fn refine(
    model: &FieldModel,
    x_c: &Pose,
    x_best: &Pose,
    z_goal: &UnitEmbedding,
    cfg: &RefineConfig,
) -> Result<(Pose, RefineTrace, PlanStatus)> {
    cfg.validate()?;
    let bounds: PositionBounds = model.bounds().inflated(BOUNDS_SLACK);
    let mask: [f64; 7] = if cfg.planar {
        [1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]
    } else {
        [1.0; 7]
    };
    let best_t = x_best.t();
    let mut adam = Adam::new(cfg.adam, 7);
    let mut x = x_c.to_array();
    let mut best = (f64::NEG_INFINITY, *x_c);
    let mut trace = RefineTrace::default();
    let mut converged = false;
    for step in 0..=cfg.max_steps {
        let eval = objective_and_gradient(model, &x, best_t, z_goal, cfg.lambda_dist);
        let (j, sim, g) = match eval {
            Ok(v) if v.0.is_finite() && v.2.iter().all(|g| g.is_finite()) => v,
            Ok(_) | Err(Error::ModelCorrupt(_)) => {
                return Ok((best.1, trace, PlanStatus::RefineDiverged))
            }
            Err(e) => return Err(e),
        };
        if trace.objective.last().is_some_and(|&prev| j < prev) {
            adam.damp(DROP_DAMPING);
        }
        trace.similarity.push(sim);
        trace.objective.push(j);
        trace.poses.push(x);
        if j > best.0 {
            best = (
                j,
                Pose::from_parts_unchecked([x[0], x[1], x[2]], [x[3], x[4], x[5], x[6]]),
            );
        }
        if converged || step == cfg.max_steps {
            break;
        }
        let mut descent: Vec<f64> = (0..7).map(|k| -g[k] * mask[k]).collect();
        // drop the radial quaternion component, which renormalization would undo
        let radial: f64 = (3..7).map(|k| descent[k] * x[k]).sum();
        for k in 3..7 {
            descent[k] -= radial * x[k] * mask[k];
        }
        let before = x;
        adam.step(&mut x, &descent);
        let qn = (x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[6] * x[6]).sqrt();
        if !(qn > 0.0 && qn.is_finite()) {
            return Ok((best.1, trace, PlanStatus::RefineDiverged));
        }
        for v in &mut x[3..] {
            *v /= qn;
        }
        let t = bounds.clamp([x[0], x[1], x[2]]);
        x[..3].copy_from_slice(&t);
        let moved = (0..7)
            .map(|k| (x[k] - before[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        converged = moved < cfg.tolerance;
    }
    Ok((best.1, trace, PlanStatus::Ok))
}

/// Full pipeline from an initial pose to a refined goal pose.
pub fn plan(
    model: &FieldModel,
    graph: &TopoGraph,
    x_init: &Pose,
    z_goal: &UnitEmbedding,
    cfg: &RefineConfig,
    seed: u64,
) -> Result<PlanResult> {
    cfg.validate()?;
    let start = graph.nearest_node(x_init.t())?;
    let (goal, goal_sim) = coarse_goal(model, graph, z_goal)?;
    let x_c = *graph.pose(goal)?;
    let Some(path) = plan_coarse(graph, start, goal)? else {
        return Ok(PlanResult {
            start_node: start,
            coarse_goal_node: goal,
            coarse_goal_similarity: goal_sim,
            coarse_path: None,
            x_c,
            x_best: x_c,
            x_g: *graph.pose(start)?,
            trace: RefineTrace::default(),
            status: PlanStatus::NoPath,
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x_best, _) = select_best_candidate(model, &x_c, z_goal, cfg, &mut rng)?;
    let (x_g, trace, status) = refine(model, &x_c, &x_best, z_goal, cfg)?;
    Ok(PlanResult {
        start_node: start,
        coarse_goal_node: goal,
        coarse_goal_similarity: goal_sim,
        coarse_path: Some(path),
        x_c,
        x_best,
        x_g,
        trace,
        status,
    })
}
