//! `lamp`: the implicit language map pipeline as one binary.
//!
//! Every subcommand prints one JSON line on stdout when it succeeds and one
//! JSON error line on stderr when it fails.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_seeds, Overrides};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lamp",
    version,
    about = "Implicit language map: build, plan and evaluate"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run config; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// One run seed, or `world,data,train,eval`.
    #[arg(long, global = true, value_name = "SEEDS")]
    seed: Option<String>,
    /// Output directory; defaults to the config, then $LAMP_OUT, then ./lamp-out.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `training.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Accept inputs whose sidecar names a different config hash.
    #[arg(long, global = true)]
    allow_config_mismatch: bool,
}

/// Input files; each defaults to its standard name in the output directory.
#[derive(Debug, Clone, Default, Args)]
pub struct InputPaths {
    #[arg(long, value_name = "PATH")]
    pub world: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Full navigation graph.
    #[arg(long, value_name = "PATH")]
    pub graph: Option<PathBuf>,
    /// Pruned graph the implicit map plans on.
    #[arg(long, value_name = "PATH")]
    pub pruned: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QuerySettings {
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    top_fraction: Option<f64>,
    #[arg(long)]
    success_radius: Option<f64>,
}

impl QuerySettings {
    fn push(&self, sets: &mut Vec<String>, section: &str) {
        if let Some(n) = self.n_queries {
            sets.push(format!("{section}.n_queries={n}"));
        }
        if let Some(f) = self.top_fraction {
            sets.push(format!("eval.top_fraction={f:?}"));
        }
        if let Some(r) = self.success_radius {
            sets.push(format!("eval.success_radius={r:?}"));
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a world of semantic objects.
    GenWorld,
    /// Record pose and embedding pairs along random walks.
    GenData {
        #[command(flatten)]
        inputs: InputPaths,
    },
    /// Fit the language field to the dataset.
    Train {
        #[command(flatten)]
        inputs: InputPaths,
    },
    /// Build the topological graph over the dataset poses.
    BuildGraph {
        #[command(flatten)]
        inputs: InputPaths,
    },
    /// Score graph nodes against the field and keep the top fraction.
    ScoreGraph {
        #[command(flatten)]
        inputs: InputPaths,
        #[arg(long)]
        keep_fraction: Option<f64>,
    },
    /// Plan from a start pose to a language goal.
    Plan {
        #[command(flatten)]
        inputs: InputPaths,
        /// Start as `x,y,yaw` at camera height.
        #[arg(long, value_name = "X,Y,YAW", allow_hyphen_values = true)]
        start: String,
        /// Goal object id in the world.
        #[arg(long, conflicts_with = "query", required_unless_present = "query")]
        object: Option<u32>,
        /// Goal embedding file.
        #[arg(long, value_name = "PATH")]
        query: Option<PathBuf>,
    },
    /// Benchmark the implicit map against grid and node baselines.
    Eval {
        #[command(flatten)]
        inputs: InputPaths,
        #[command(flatten)]
        settings: QuerySettings,
    },
    /// Compare node selection methods at a fixed keep fraction.
    Ablate {
        #[command(flatten)]
        inputs: InputPaths,
        #[command(flatten)]
        settings: QuerySettings,
        #[arg(long)]
        keep_fraction: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenWorld => "gen-world",
            Command::GenData { .. } => "gen-data",
            Command::Train { .. } => "train",
            Command::BuildGraph { .. } => "build-graph",
            Command::ScoreGraph { .. } => "score-graph",
            Command::Plan { .. } => "plan",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
        }
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut sets = cli.global.sets.clone();
    match &cli.command {
        Command::ScoreGraph {
            keep_fraction: Some(k),
            ..
        } => sets.push(format!("graph.sample.keep_fraction={k:?}")),
        Command::Eval { settings, .. } => settings.push(&mut sets, "eval"),
        Command::Ablate {
            settings,
            keep_fraction,
            ..
        } => {
            settings.push(&mut sets, "ablation");
            if let Some(k) = keep_fraction {
                sets.push(format!("ablation.keep_fraction={k:?}"));
            }
        }
        _ => {}
    }
    let ov = Overrides {
        config: cli.global.config.clone(),
        seeds: cli.global.seed.as_deref().map(parse_seeds).transpose()?,
        out: cli.global.out.clone(),
        sets,
    };
    let cfg = config::RunConfig::load(&ov)?;
    let ctx = commands::Ctx::new(cfg, cli.global.allow_config_mismatch)?;
    match cli.command {
        Command::GenWorld => ctx.gen_world(),
        Command::GenData { inputs } => ctx.gen_data(&inputs),
        Command::Train { inputs } => ctx.train(&inputs),
        Command::BuildGraph { inputs } => ctx.build_graph(&inputs),
        Command::ScoreGraph { inputs, .. } => ctx.score_graph(&inputs),
        Command::Plan {
            inputs,
            start,
            object,
            query,
        } => ctx.plan(&inputs, &start, object, query.as_deref()),
        Command::Eval { inputs, .. } => ctx.eval(&inputs),
        Command::Ablate { inputs, .. } => ctx.ablate(&inputs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            return fail(None, &CliError::Usage(first.to_string()));
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(outputs) => {
            let line = serde_json::json!({ "ok": true, "command": name, "outputs": outputs });
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(Some(name), &e),
    }
}

fn fail(command: Option<&str>, e: &CliError) -> ExitCode {
    let line = serde_json::json!({ "ok": false, "command": command, "kind": e.kind(), "message": e.to_string() });
    eprintln!("{line}");
    ExitCode::from(e.exit_code())
}
