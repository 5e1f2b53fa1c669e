//! One method per subcommand. Each reads its inputs from the output
//! directory unless a path is given, and writes artifacts with sidecars.

use std::path::{Path, PathBuf};

use lamp_core::dataset::Dataset;
use lamp_core::eval::{
    default_success_radius, evaluate, fit_grid_baseline, fit_node_baseline, gen_queries,
    memory_footprint, node_selection_ablation, EvalContext, EvalMethod, EvalReport, MapArtifact,
    ReportMeta,
};
use lamp_core::field::{train, FieldModel, PositionBounds};
use lamp_core::geometry::Pose;
use lamp_core::graph::{build_graph, score_and_sample, TopoGraph};
use lamp_core::planner::plan;
use lamp_core::query::query_from_bytes;
use lamp_core::world::{gen_dataset_with, gen_world, goal_embedding, WorldSpec};

use crate::artifacts::{self as art, Inputs};
use crate::config::{write_resolved, RunConfig};
use crate::{CliError, InputPaths};

pub struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    allow_mismatch: bool,
}

fn utf8(bytes: Vec<u8>, path: &Path) -> Result<String, CliError> {
    String::from_utf8(bytes)
        .map_err(|_| lamp_core::Error::Format(format!("{} is not UTF-8", path.display())).into())
}

impl Ctx {
    /// Creates the output directory and writes the resolved config into it.
    pub fn new(cfg: RunConfig, allow_mismatch: bool) -> Result<Self, CliError> {
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out)?;
        write_resolved(&cfg, &out)?;
        Ok(Ctx {
            cfg,
            out,
            allow_mismatch,
        })
    }

    fn inputs(&self) -> Inputs<'_> {
        Inputs::new(&self.cfg, self.allow_mismatch)
    }

    fn target(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn source(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.target(name))
    }

    fn world(&self, io: &mut Inputs, p: &InputPaths) -> Result<WorldSpec, CliError> {
        let path = io.take(&self.source(&p.world, art::WORLD))?;
        Ok(WorldSpec::from_json(&utf8(art::read(&path)?, &path)?)?)
    }

    fn dataset(&self, io: &mut Inputs, p: &InputPaths) -> Result<Dataset, CliError> {
        let path = io.take(&self.source(&p.data, art::DATASET))?;
        Ok(Dataset::from_bytes(&art::read(&path)?)?)
    }

    fn model(&self, io: &mut Inputs, p: &InputPaths) -> Result<FieldModel, CliError> {
        let path = io.take(&self.source(&p.model, art::MODEL))?;
        Ok(FieldModel::from_bytes(&art::read(&path)?)?)
    }

    fn graph(
        &self,
        io: &mut Inputs,
        given: &Option<PathBuf>,
        name: &str,
    ) -> Result<TopoGraph, CliError> {
        let path = io.take(&self.source(given, name))?;
        Ok(TopoGraph::from_json(&utf8(art::read(&path)?, &path)?)?)
    }

    pub fn gen_world(&self) -> Result<Vec<PathBuf>, CliError> {
        let w = &self.cfg.world;
        let world = gen_world(
            self.cfg.seeds[0],
            w.extent,
            w.n_objects,
            w.d,
            w.hard_fraction,
        )?;
        let path = self.target(art::WORLD);
        self.inputs()
            .write("gen-world", &path, world.to_json()?.as_bytes())?;
        Ok(vec![path])
    }

    pub fn gen_data(&self, p: &InputPaths) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let world = self.world(&mut io, p)?;
        let d = &self.cfg.data;
        let data = gen_dataset_with(
            &world,
            &self.cfg.observation,
            &d.walk,
            d.n_samples,
            self.cfg.seeds[1],
        )?;
        let path = self.target(art::DATASET);
        io.write("gen-data", &path, &data.to_bytes())?;
        Ok(vec![path])
    }

    pub fn train(&self, p: &InputPaths) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let world = self.world(&mut io, p)?;
        let data = self.dataset(&mut io, p)?;
        let ext = world.extent();
        let bounds = PositionBounds::new(
            [ext.min[0], ext.min[1], 0.0],
            [ext.max[0], ext.max[1], self.cfg.model.height],
        )?;
        let mut model = FieldModel::new(
            &self.cfg.model.architecture.resolve(),
            bounds,
            data.d(),
            self.cfg.seeds[2],
        )?;
        let history = train(&mut model, &data, &self.cfg.training)?;
        let (model_path, history_path) = (self.target(art::MODEL), self.target(art::HISTORY));
        io.write("train", &model_path, &model.to_bytes())?;
        let json = serde_json::to_string_pretty(&history).map_err(lamp_core::Error::from)?;
        io.write("train", &history_path, json.as_bytes())?;
        Ok(vec![model_path, history_path])
    }

    pub fn build_graph(&self, p: &InputPaths) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let data = self.dataset(&mut io, p)?;
        let g = &self.cfg.graph;
        let graph = build_graph(data.poses(), g.min_separation, g.link_radius)?;
        let path = self.target(art::GRAPH);
        io.write("build-graph", &path, graph.to_json()?.as_bytes())?;
        Ok(vec![path])
    }

    pub fn score_graph(&self, p: &InputPaths) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let graph = self.graph(&mut io, &p.graph, art::GRAPH)?;
        let model = self.model(&mut io, p)?;
        let (pruned, scores) = score_and_sample(&graph, &model, &self.cfg.graph.sample)?;
        let (pruned_path, scores_path) = (self.target(art::PRUNED), self.target(art::SCORES));
        io.write("score-graph", &pruned_path, pruned.to_json()?.as_bytes())?;
        io.write("score-graph", &scores_path, scores.to_csv().as_bytes())?;
        Ok(vec![pruned_path, scores_path])
    }

    pub fn plan(
        &self,
        p: &InputPaths,
        start: &str,
        object: Option<u32>,
        query: Option<&Path>,
    ) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let model = self.model(&mut io, p)?;
        let graph = self.graph(&mut io, &p.pruned, art::PRUNED)?;
        let goal = match (object, query) {
            (Some(id), _) => goal_embedding(&self.world(&mut io, p)?, id)?,
            (None, Some(q)) => query_from_bytes(&art::read(q)?)?,
            (None, None) => return Err(CliError::Usage("plan needs --object or --query".into())),
        };
        let start = parse_start(start, self.cfg.observation.camera_height)?;
        let result = plan(
            &model,
            &graph,
            &start,
            &goal,
            &self.cfg.planner,
            self.cfg.seeds[3],
        )?;
        let path = self.target(art::PLAN);
        io.write("plan", &path, result.to_json()?.as_bytes())?;
        Ok(vec![path])
    }

    pub fn eval(&self, p: &InputPaths) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let world = self.world(&mut io, p)?;
        let data = self.dataset(&mut io, p)?;
        let model = self.model(&mut io, p)?;
        let graph = self.graph(&mut io, &p.graph, art::GRAPH)?;
        let pruned = self.graph(&mut io, &p.pruned, art::PRUNED)?;
        let ctx = self.context(&world, &graph, self.cfg.seeds[3]);
        let implicit = MapArtifact::Implicit {
            model: &model,
            graph: &pruned,
        };
        let budget = memory_footprint(&implicit);
        let grid = fit_grid_baseline(&data, budget)?;
        let nodes = fit_node_baseline(&data, budget, self.cfg.eval.link_factor)?;
        let queries = gen_queries(
            &world,
            &self.cfg.observation,
            self.cfg.eval.n_queries,
            self.cfg.seeds[3],
        )?;
        let rows = EvalMethod::ALL
            .iter()
            .map(|&m| {
                let map = match m {
                    EvalMethod::Grid => MapArtifact::Grid(&grid),
                    EvalMethod::Node => MapArtifact::Node(&nodes),
                    _ => implicit,
                };
                Ok(evaluate(m, &map, &ctx, &queries)?.row)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let meta = ReportMeta {
            seeds: self.cfg.seeds,
            world_hash: world.content_hash(),
            success_radius: ctx.success_radius,
            top_fraction: ctx.top_fraction,
            n_queries: queries.len(),
            config: serde_json::to_value(&self.cfg).map_err(lamp_core::Error::from)?,
        };
        let report = EvalReport { meta, rows };
        let (json_path, csv_path) = (self.target(art::REPORT), self.target(art::REPORT_CSV));
        // Timings go to the CSV only so the JSON report is reproducible.
        io.write(
            "eval",
            &json_path,
            report.without_timings().to_json()?.as_bytes(),
        )?;
        io.write("eval", &csv_path, report.to_csv().as_bytes())?;
        Ok(vec![json_path, csv_path])
    }

    pub fn ablate(&self, p: &InputPaths) -> Result<Vec<PathBuf>, CliError> {
        let mut io = self.inputs();
        let world = self.world(&mut io, p)?;
        let model = self.model(&mut io, p)?;
        let graph = self.graph(&mut io, &p.graph, art::GRAPH)?;
        let ctx = self.context(&world, &graph, self.cfg.seeds[3]);
        let a = &self.cfg.ablation;
        let mut sample = self.cfg.graph.sample;
        if let Some(k) = a.keep_fraction {
            sample.keep_fraction = k;
        }
        let table = node_selection_ablation(
            &graph,
            &model,
            &ctx,
            &sample,
            &a.methods,
            &a.seeds,
            a.n_queries,
        )?;
        let (json_path, csv_path) = (self.target(art::ABLATION), self.target(art::ABLATION_CSV));
        io.write("ablate", &json_path, table.to_json()?.as_bytes())?;
        io.write("ablate", &csv_path, table.to_csv().as_bytes())?;
        Ok(vec![json_path, csv_path])
    }

    fn context<'a>(
        &'a self,
        world: &'a WorldSpec,
        nav: &'a TopoGraph,
        seed: u64,
    ) -> EvalContext<'a> {
        EvalContext {
            world,
            obs: &self.cfg.observation,
            nav,
            success_radius: self
                .cfg
                .eval
                .success_radius
                .unwrap_or_else(|| default_success_radius(world)),
            top_fraction: self.cfg.eval.top_fraction,
            refine: self.cfg.planner,
            seed,
        }
    }
}

fn parse_start(s: &str, height: f64) -> Result<Pose, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--start {s:?}: {e}")))?;
    match v.as_slice() {
        [x, y, yaw] if v.iter().all(|c| c.is_finite()) => {
            Ok(Pose::from_yaw([*x, *y, height], *yaw))
        }
        _ => Err(CliError::Usage(format!(
            "--start {s:?}: expected finite x,y,yaw"
        ))),
    }
}
