//! Run configuration: defaults, file and `--set` layering, validation and
//! the config hash stamped on every artifact.

use std::path::{Path, PathBuf};

use lamp_core::field::{FieldArchitecture, TrainConfig};
use lamp_core::graph::{SampleConfig, SamplingMethod};
use lamp_core::planner::RefineConfig;
use lamp_core::world::{Extent, ObservationModel, WalkConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

/// Seed tuple `[world, data, train, eval]`.
pub type Seeds = [u64; 4];

/// Expands a single run seed the way the reference runs do.
pub fn stage_seeds(seed: u64) -> Seeds {
    [
        seed,
        seed.wrapping_add(100),
        seed.wrapping_add(200),
        seed.wrapping_add(300),
    ]
}

/// `7` expands to a full tuple; `1,101,201,301` is taken as given.
pub fn parse_seeds(s: &str) -> Result<Seeds, CliError> {
    let parts: Vec<u64> = s
        .split(',')
        .map(|p| p.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--seed {s:?}: {e}")))?;
    match parts.as_slice() {
        [one] => Ok(stage_seeds(*one)),
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        _ => Err(CliError::Config(format!(
            "--seed takes one value or four comma-separated values, got {}",
            parts.len()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub extent: Extent,
    pub n_objects: usize,
    pub d: usize,
    pub hard_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_samples: usize,
    #[serde(default)]
    pub walk: WalkConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Nerf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Architecture {
    Preset(Preset),
    Custom(FieldArchitecture),
}

impl Architecture {
    pub fn resolve(&self) -> FieldArchitecture {
        match self {
            Architecture::Preset(Preset::Desk) => FieldArchitecture::desk(),
            Architecture::Preset(Preset::Nerf) => FieldArchitecture::nerf(),
            Architecture::Custom(a) => a.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Upper bound of the camera height range the field is defined over.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub min_separation: f64,
    pub link_radius: f64,
    #[serde(default)]
    pub sample: SampleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_queries: usize,
    pub top_fraction: f64,
    /// Absent means 20% of the mean object spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_radius: Option<f64>,
    /// Node baseline link radius over its grid cell size.
    pub link_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    pub seeds: Vec<u64>,
    pub n_queries: usize,
    pub methods: Vec<SamplingMethod>,
    /// Absent means `graph.sample.keep_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub world: WorldSection,
    #[serde(default)]
    pub observation: ObservationModel,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainConfig,
    pub graph: GraphSection,
    #[serde(default)]
    pub planner: RefineConfig,
    pub eval: EvalSection,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    /// The 100 m reference pipeline with run seed 1.
    fn default() -> Self {
        let seeds = stage_seeds(1);
        RunConfig {
            seeds,
            out: None,
            world: WorldSection {
                extent: Extent {
                    min: [0.0, 0.0],
                    max: [100.0, 100.0],
                },
                n_objects: 20,
                d: 32,
                hard_fraction: 0.5,
            },
            observation: ObservationModel::default(),
            data: DataSection {
                n_samples: 50_000,
                walk: WalkConfig::default(),
            },
            model: ModelSection {
                architecture: Architecture::Preset(Preset::Desk),
                height: 3.0,
            },
            training: TrainConfig {
                epochs: 20,
                seed: seeds[2],
                ..Default::default()
            },
            graph: GraphSection {
                min_separation: 4.0,
                link_radius: 9.0,
                sample: SampleConfig::default(),
            },
            planner: RefineConfig {
                sigma_pos: 8.0,
                ..Default::default()
            },
            eval: EvalSection {
                n_queries: 40,
                top_fraction: 0.01,
                success_radius: None,
                link_factor: 2.25,
            },
            ablation: AblationSection {
                seeds: vec![1, 2, 3, 4, 5],
                n_queries: 40,
                methods: SamplingMethod::ALL.to_vec(),
                keep_fraction: None,
            },
        }
    }
}

/// Recursive merge: tables merge key by key, anything else replaces.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn lookup<'a>(t: &'a Table, dotted: &str) -> Option<&'a Value> {
    let mut parts = dotted.split('.');
    let mut cur = t.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

/// `a.b.c=value` as a nested table. The value is parsed as TOML and falls
/// back to a bare string.
fn parse_set(expr: &str) -> Result<Table, CliError> {
    let (key, raw) = expr
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {expr:?}: expected key=value")))?;
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut keys: Vec<&str> = key.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "--set {expr:?}: empty key segment"
        )));
    }
    let last = keys.pop().unwrap_or_default();
    let mut table = Table::new();
    table.insert(last.to_string(), value);
    for k in keys.into_iter().rev() {
        let mut outer = Table::new();
        outer.insert(k.to_string(), Value::Table(table));
        table = outer;
    }
    Ok(table)
}

/// Everything the user supplied on top of the defaults.
#[derive(Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seeds: Option<Seeds>,
    pub out: Option<PathBuf>,
    pub sets: Vec<String>,
}

impl RunConfig {
    pub fn load(ov: &Overrides) -> Result<Self, CliError> {
        let mut user = Table::new();
        if let Some(path) = &ov.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingFile {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let t: Table = toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut user, t);
        }
        for s in &ov.sets {
            merge(&mut user, parse_set(s)?);
        }
        let mut cfg = RunConfig::from_table(user)?;
        if let Some(seeds) = ov.seeds {
            cfg.seeds = seeds;
            cfg.training.seed = seeds[2];
        }
        if let Some(out) = &ov.out {
            cfg.out = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults overlaid with `user`, then the derived fields the user left out.
    pub fn from_table(user: Table) -> Result<Self, CliError> {
        let mut merged =
            Table::try_from(RunConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut merged, user.clone());
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        if lookup(&user, "planner.sigma_pos").is_none() {
            cfg.planner.sigma_pos = 2.0 * cfg.graph.min_separation;
        }
        if lookup(&user, "eval.link_factor").is_none() {
            cfg.eval.link_factor = cfg.graph.link_radius / cfg.graph.min_separation;
        }
        match lookup(&user, "training.seed") {
            None => cfg.training.seed = cfg.seeds[2],
            Some(_) if cfg.training.seed == cfg.seeds[2] => {}
            Some(_) => {
                return Err(CliError::Config(format!(
                    "training.seed {} disagrees with the train seed {}; set seeds instead",
                    cfg.training.seed, cfg.seeds[2]
                )))
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(s) = self.seeds.iter().find(|&&s| s > i64::MAX as u64) {
            return bad(format!("seed {s} exceeds {}", i64::MAX));
        }
        self.world.extent.validate()?;
        if self.world.n_objects == 0 || self.world.d < 2 {
            return bad("world: need n_objects >= 1 and d >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.world.hard_fraction) {
            return bad("world.hard_fraction must lie in [0, 1]".into());
        }
        self.observation.validate()?;
        self.data.walk.validate()?;
        if self.data.n_samples == 0 {
            return bad("data.n_samples must be >= 1".into());
        }
        if !(self.model.height > 0.0 && self.model.height.is_finite()) {
            return bad("model.height must be > 0".into());
        }
        self.training.validate()?;
        if !(self.graph.min_separation > 0.0 && self.graph.link_radius >= self.graph.min_separation)
        {
            return bad("graph: need 0 < min_separation <= link_radius".into());
        }
        self.graph.sample.validate()?;
        self.planner.validate()?;
        if self.eval.n_queries == 0
            || !(self.eval.top_fraction > 0.0 && self.eval.top_fraction <= 1.0)
        {
            return bad("eval: need n_queries >= 1 and top_fraction in (0, 1]".into());
        }
        if self
            .eval
            .success_radius
            .is_some_and(|r| !(r > 0.0 && r.is_finite()))
        {
            return bad("eval.success_radius must be > 0".into());
        }
        if !(self.eval.link_factor >= 1.0 && self.eval.link_factor.is_finite()) {
            return bad("eval.link_factor must be >= 1".into());
        }
        if self.ablation.seeds.is_empty()
            || self.ablation.methods.is_empty()
            || self.ablation.n_queries == 0
        {
            return bad("ablation: need seeds, methods and n_queries >= 1".into());
        }
        if self
            .ablation
            .keep_fraction
            .is_some_and(|k| !(k > 0.0 && k <= 1.0))
        {
            return bad("ablation.keep_fraction must lie in (0, 1]".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Output root: flag or config, then `LAMP_OUT`, then `lamp-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("LAMP_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("lamp-out"))
    }

    /// SHA-256 over the seed tuple and every section that shapes the map.
    /// Planner, eval and ablation settings are excluded so a map can be
    /// evaluated under different query settings.
    pub fn config_hash(&self) -> String {
        let keyed = serde_json::json!({
            "seeds": self.seeds,
            "world": self.world,
            "observation": self.observation,
            "data": self.data,
            "model": self.model,
            "training": self.training,
            "graph": self.graph,
        });
        hex::encode(Sha256::digest(keyed.to_string().as_bytes()))
    }
}

pub fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::write(dir.join("config.resolved.toml"), cfg.to_toml()?)?;
    Ok(())
}
