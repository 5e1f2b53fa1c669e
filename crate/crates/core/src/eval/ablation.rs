use serde::{Deserialize, Serialize};

use super::{aligned_csv, evaluate, gen_queries, EvalContext, EvalMethod, MapArtifact};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::graph::{select_nodes, SampleConfig, SamplingMethod, TopoGraph};

/// Mean and sample standard deviation over seeds for one node selection method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub kept_nodes: Vec<usize>,
    pub sr: Vec<f64>,
    pub spl: Vec<f64>,
    /// Per-seed goal distance; `None` for a seed without successes.
    pub gdist: Vec<Option<f64>>,
    pub sr_mean: f64,
    pub sr_std: f64,
    pub spl_mean: f64,
    pub spl_std: f64,
    pub gdist_mean: Option<f64>,
    pub gdist_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub keep_fraction: f64,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((m, var.sqrt()))
}

/// Prunes `graph` with each method and evaluates the implicit planner on the
/// result. Every seed draws fresh queries and, for the random methods, a
/// fresh selection; `ctx.seed` is replaced by the seed.
pub fn node_selection_ablation(
    graph: &TopoGraph,
    model: &FieldModel,
    ctx: &EvalContext,
    sample: &SampleConfig,
    methods: &[SamplingMethod],
    seeds: &[u64],
    n_queries: usize,
) -> Result<AblationTable> {
    sample.validate()?;
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one method and one seed".into(),
        ));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        let mut kept_nodes = Vec::new();
        let mut sr = Vec::new();
        let mut spl = Vec::new();
        let mut gdist = Vec::new();
        for &seed in seeds {
            let keep = select_nodes(graph, m, sample, Some(model), seed)?;
            let pruned = graph.prune(&keep)?;
            let queries = gen_queries(ctx.world, ctx.obs, n_queries, seed)?;
            let run = EvalContext { seed, ..*ctx };
            let out = evaluate(
                EvalMethod::Implicit,
                &MapArtifact::Implicit {
                    model,
                    graph: &pruned,
                },
                &run,
                &queries,
            )?;
            kept_nodes.push(pruned.len());
            sr.push(out.row.sr);
            spl.push(out.row.spl);
            gdist.push(out.row.gdist);
        }
        let (sr_mean, sr_std) = mean_std(&sr).expect("seeds nonempty");
        let (spl_mean, spl_std) = mean_std(&spl).expect("seeds nonempty");
        let present: Vec<f64> = gdist.iter().flatten().copied().collect();
        let g = mean_std(&present);
        rows.push(AblationRow {
            method: m.tag().to_string(),
            kept_nodes,
            sr,
            spl,
            gdist,
            sr_mean,
            sr_std,
            spl_mean,
            spl_std,
            gdist_mean: g.map(|g| g.0),
            gdist_std: g.map(|g| g.1),
        });
    }
    Ok(AblationTable {
        keep_fraction: sample.keep_fraction,
        seeds: seeds.to_vec(),
        rows,
    })
}

impl AblationTable {
    pub fn row(&self, method: SamplingMethod) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.method == method.tag())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            _ => "-".to_string(),
        };
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    pm(Some(r.sr_mean), Some(r.sr_std)),
                    pm(Some(r.spl_mean), Some(r.spl_std)),
                    pm(r.gdist_mean, r.gdist_std),
                ]
            })
            .collect();
        aligned_csv(&["method", "sr", "spl", "gdist"], &rows)
    }
}
