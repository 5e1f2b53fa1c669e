//! Oracles and the seeded reference pipeline shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

use std::f64::consts::PI;

use lamp_core::dataset::Dataset;
use lamp_core::field::{train, FieldArchitecture, FieldModel, PositionBounds, TrainConfig};
use lamp_core::geometry::{normalize, Pose, UnitEmbedding};
use lamp_core::graph::{astar_traced, build_graph, score_and_sample, SampleConfig, TopoGraph};
use lamp_core::vmf::{vmf_loss_raw, GammaPrior, KappaRange};
use lamp_core::world::{gen_dataset, gen_world, Extent, ObservationModel, WorldSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> UnitEmbedding {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&v).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = dot(a, a).sqrt().max(dot(b, b).sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub cases: usize,
    pub worst: f64,
}

/// Analytic `∂loss/∂μ` and `∂loss/∂κ` against central differences.
/// Returns the worst relative error of each over `per_d` cases per dimension.
pub fn vmf_gradient_check(dims: &[usize], per_d: usize, seed: u64) -> (GradCheck, GradCheck) {
    let mut r = rng(seed);
    let prior = GammaPrior::default();
    let range = KappaRange::default();
    let (mut mu_worst, mut k_worst, mut cases) = (0.0f64, 0.0f64, 0);
    for &d in dims {
        for _ in 0..per_d {
            let z = random_unit(&mut r, d);
            let scale: f64 = r.random_range(0.5..2.0);
            let mu: Vec<f64> = random_unit(&mut r, d)
                .as_slice()
                .iter()
                .map(|v| v * scale)
                .collect();
            let kappa = 10f64.powf(r.random_range(-1.5..3.0));
            let loss = |m: &[f64], k: f64| {
                vmf_loss_raw(z.as_slice(), m, k, &prior, range)
                    .unwrap()
                    .loss
            };
            let an = vmf_loss_raw(z.as_slice(), &mu, kappa, &prior, range).unwrap();
            let fd_mu: Vec<f64> = (0..d)
                .map(|i| {
                    let h = 1e-6;
                    let (mut p, mut m) = (mu.clone(), mu.clone());
                    p[i] += h;
                    m[i] -= h;
                    (loss(&p, kappa) - loss(&m, kappa)) / (p[i] - m[i])
                })
                .collect();
            let h = 1e-5 * kappa;
            let fd_k = (loss(&mu, kappa + h) - loss(&mu, kappa - h)) / (2.0 * h);
            mu_worst = mu_worst.max(vec_rel_err(&an.d_mu, &fd_mu));
            k_worst = k_worst.max(vec_rel_err(&[an.d_kappa], &[fd_k]));
            cases += 1;
        }
    }
    (
        GradCheck {
            cases,
            worst: mu_worst,
        },
        GradCheck {
            cases,
            worst: k_worst,
        },
    )
}

/// Small untrained field used by the gradient checks.
pub fn random_field(d: usize, seed: u64) -> FieldModel {
    let bounds = PositionBounds::new([-5.0, -5.0, 0.0], [5.0, 5.0, 3.0]).unwrap();
    FieldModel::new(&FieldArchitecture::desk(), bounds, d, seed).unwrap()
}

pub fn random_pose(r: &mut ChaCha8Rng) -> Pose {
    let q: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = [
        r.random_range(-4.5..4.5),
        r.random_range(-4.5..4.5),
        r.random_range(0.5..2.5),
    ];
    Pose::new(t, q.map(|v| v / n)).unwrap()
}

/// `∇_x (μ(x)·z)` against central differences over the raw 7-vector.
pub fn pose_gradient_check(dims: &[usize], per_d: usize, seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let (mut worst, mut cases) = (0.0f64, 0);
    for &d in dims {
        for c in 0..per_d {
            let model = random_field(d, seed ^ (d as u64 * 1000 + c as u64));
            let x = random_pose(&mut r).to_array();
            let z = random_unit(&mut r, d);
            let (_, g) = model.similarity_and_gradient(&x, &z).unwrap();
            let sim =
                |x: &[f64; 7]| dot(model.forward_array(x).unwrap().mu.as_slice(), z.as_slice());
            let fd: Vec<f64> = (0..7)
                .map(|k| {
                    let h = 1e-6;
                    let (mut p, mut m) = (x, x);
                    p[k] += h;
                    m[k] -= h;
                    (sim(&p) - sim(&m)) / (2.0 * h)
                })
                .collect();
            worst = worst.max(vec_rel_err(&g, &fd));
            cases += 1;
        }
    }
    GradCheck { cases, worst }
}

/// Connected graph of `n` random planar poses: a random spanning tree plus
/// links to the three nearest nodes.
pub fn random_connected_graph(n: usize, seed: u64) -> TopoGraph {
    let mut r = rng(seed);
    let poses: Vec<Pose> = (0..n)
        .map(|_| {
            Pose::from_yaw(
                [r.random_range(0.0..100.0), r.random_range(0.0..100.0), 1.5],
                r.random_range(-PI..PI),
            )
        })
        .collect();
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let j = r.random_range(0..i);
        edges.insert((j as u32, i as u32));
    }
    for i in 0..n {
        let mut by_dist: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_dist.sort_by(|&a, &b| dist(&poses[i], &poses[a]).total_cmp(&dist(&poses[i], &poses[b])));
        for &j in by_dist.iter().take(3) {
            edges.insert((i.min(j) as u32, i.max(j) as u32));
        }
    }
    let nodes = poses
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as u32, p))
        .collect();
    TopoGraph::from_parts(nodes, &edges.into_iter().collect::<Vec<_>>(), 10.0).unwrap()
}

fn dist(a: &Pose, b: &Pose) -> f64 {
    lamp_core::geometry::position_distance(&a.t(), &b.t())
}

/// Quadratic-time Dijkstra over node indices.
pub fn dijkstra_oracle(g: &TopoGraph, source: usize) -> Vec<f64> {
    let n = g.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    cost[source] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n)
            .filter(|&i| !done[i] && cost[i].is_finite())
            .min_by(|&a, &b| cost[a].total_cmp(&cost[b]))
        else {
            break;
        };
        done[u] = true;
        for (v, w) in g.neighbors(g.ids()[u]).unwrap() {
            let vi = g.ids().binary_search(&v).unwrap();
            if cost[u] + w < cost[vi] {
                cost[vi] = cost[u] + w;
            }
        }
    }
    cost
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SearchCheck {
    pub graphs: usize,
    pub queries: usize,
    pub mismatches: usize,
    pub inadmissible: usize,
    pub max_nodes: usize,
}

/// A* lengths against the Dijkstra oracle, with the heuristic checked on
/// every expanded node.
pub fn astar_vs_dijkstra(n_graphs: usize, seed: u64) -> SearchCheck {
    let mut r = rng(seed);
    let mut out = SearchCheck::default();
    for k in 0..n_graphs {
        let n = r.random_range(1..=500);
        let g = random_connected_graph(n, seed.wrapping_add(k as u64));
        out.graphs += 1;
        out.max_nodes = out.max_nodes.max(n);
        for _ in 0..3 {
            let (s, t) = (r.random_range(0..n), r.random_range(0..n));
            let from_goal = dijkstra_oracle(&g, t);
            let mut bad = 0;
            let path = astar_traced(&g, g.ids()[s], g.ids()[t], |v, h| {
                let i = g.ids().binary_search(&v).unwrap();
                if h > from_goal[i] {
                    bad += 1;
                }
            })
            .unwrap()
            .expect("graph is connected");
            out.inadmissible += bad;
            let oracle = dijkstra_oracle(&g, s)[t];
            if path.length != oracle {
                out.mismatches += 1;
            }
            out.queries += 1;
        }
    }
    out
}

/// Parameters of the seeded reference pipeline.
#[derive(Debug, Clone, Copy)]
pub struct RefConfig {
    pub side: f64,
    pub n_objects: usize,
    pub d: usize,
    pub n_pairs: usize,
    pub epochs: usize,
    pub min_separation: f64,
    pub link_radius: f64,
    pub keep_fraction: f64,
}

/// 100 m world, 20 objects, d = 32, 50k pairs.
pub const REFERENCE: RefConfig = RefConfig {
    side: 100.0,
    n_objects: 20,
    d: 32,
    n_pairs: 50_000,
    epochs: 20,
    min_separation: 4.0,
    link_radius: 9.0,
    keep_fraction: 0.3,
};

/// Cheap variant for integration tests.
pub const SMALL: RefConfig = RefConfig {
    side: 40.0,
    n_objects: 6,
    d: 16,
    n_pairs: 8_000,
    epochs: 6,
    min_separation: 3.0,
    link_radius: 6.75,
    keep_fraction: 0.3,
};

pub struct Reference {
    pub world: WorldSpec,
    pub obs: ObservationModel,
    pub data: Dataset,
    pub model: FieldModel,
    pub graph: TopoGraph,
    pub pruned: TopoGraph,
}

/// `[world, data, train]` seeds derived from one run seed.
pub fn stage_seeds(seed: u64) -> [u64; 3] {
    [seed, seed.wrapping_add(100), seed.wrapping_add(200)]
}

pub fn world_only(cfg: &RefConfig, seed: u64) -> (WorldSpec, ObservationModel, Dataset) {
    let [ws, ds, _] = stage_seeds(seed);
    let world = gen_world(
        ws,
        Extent::square(cfg.side).unwrap(),
        cfg.n_objects,
        cfg.d,
        0.5,
    )
    .unwrap();
    let obs = ObservationModel::default();
    let data = gen_dataset(&world, &obs, cfg.n_pairs, ds).unwrap();
    (world, obs, data)
}

pub fn build_reference(cfg: &RefConfig, seed: u64) -> Reference {
    let (world, obs, data) = world_only(cfg, seed);
    let bounds = PositionBounds::new([0.0, 0.0, 0.0], [cfg.side, cfg.side, 3.0]).unwrap();
    let mut model = FieldModel::new(
        &FieldArchitecture::desk(),
        bounds,
        cfg.d,
        stage_seeds(seed)[2],
    )
    .unwrap();
    train(
        &mut model,
        &data,
        &TrainConfig {
            epochs: cfg.epochs,
            seed: stage_seeds(seed)[2],
            ..Default::default()
        },
    )
    .unwrap();
    let graph = build_graph(data.poses(), cfg.min_separation, cfg.link_radius).unwrap();
    let sample = SampleConfig {
        keep_fraction: cfg.keep_fraction,
        ..Default::default()
    };
    let (pruned, _) = score_and_sample(&graph, &model, &sample).unwrap();
    Reference {
        world,
        obs,
        data,
        model,
        graph,
        pruned,
    }
}

/// Ground-plane distance.
pub fn planar(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Outcome of a batch of coarse-to-fine plans.
#[derive(Debug, Clone, Copy, Default)]
pub struct RefineBench {
    pub trials: usize,
    /// Plans whose predicted similarity at `x_G` beats the one at `x_c`.
    pub improved: usize,
    pub coarse_distance: f64,
    pub fine_distance: f64,
}

impl RefineBench {
    pub fn add(&mut self, improved: bool, coarse: f64, fine: f64) {
        self.trials += 1;
        self.improved += improved as usize;
        self.coarse_distance += coarse;
        self.fine_distance += fine;
    }

    pub fn improved_fraction(&self) -> f64 {
        self.improved as f64 / self.trials as f64
    }

    /// Relative drop of the mean goal distance from coarse to refined.
    pub fn distance_drop(&self) -> f64 {
        1.0 - self.fine_distance / self.coarse_distance
    }
}

/// Plans toward the only object of `n_worlds` seeded 30 m rooms from
/// `per_world` random starts each.
pub fn single_object_bench(n_worlds: u64, per_world: u64) -> RefineBench {
    use lamp_core::planner::{plan, similarity, RefineConfig};
    use lamp_core::world::goal_embedding;
    let side = 30.0;
    let mut out = RefineBench::default();
    for w in 0..n_worlds {
        let seed = 10 * w + 1;
        let world = gen_world(seed, Extent::square(side).unwrap(), 1, 16, 0.0).unwrap();
        let data = gen_dataset(&world, &ObservationModel::default(), 6_000, seed + 1).unwrap();
        let bounds = PositionBounds::new([0.0, 0.0, 0.0], [side, side, 3.0]).unwrap();
        let mut model = FieldModel::new(&FieldArchitecture::desk(), bounds, 16, seed + 2).unwrap();
        train(
            &mut model,
            &data,
            &TrainConfig {
                epochs: 8,
                seed: seed + 2,
                ..Default::default()
            },
        )
        .unwrap();
        let graph = build_graph(data.poses(), 4.0, 9.0).unwrap();
        let goal = goal_embedding(&world, 0).unwrap();
        let c = world.objects()[0].center;
        let mut r = rng(w);
        for k in 0..per_world {
            let x0 = Pose::from_yaw(
                [r.random_range(0.0..side), r.random_range(0.0..side), 1.5],
                0.0,
            );
            let res = plan(&model, &graph, &x0, &goal, &RefineConfig::default(), k).unwrap();
            let better = similarity(&model, &res.x_g, &goal).unwrap()
                > similarity(&model, &res.x_c, &goal).unwrap();
            out.add(better, planar(res.x_c.t(), c), planar(res.x_g.t(), c));
        }
    }
    out
}
