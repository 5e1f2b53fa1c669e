use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::score::{compute_scores, keep_count, select_top, SampleConfig, ScoreWeights};
use super::{NodeId, TopoGraph};
use crate::error::{Error, Result};
use crate::field::FieldModel;

const RESTART_PROBABILITY: f64 = 0.15;
const BURN_PROBABILITY: f64 = 0.7;

/// Node selection strategies compared in the pruning ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingMethod {
    /// Uniformly random nodes.
    #[serde(rename = "RN")]
    RandomNode,
    /// Highest-degree nodes.
    #[serde(rename = "RDN")]
    RandomDegreeNode,
    /// Random walk with restart.
    #[serde(rename = "RW")]
    RandomWalk,
    /// Forest-fire spreading.
    #[serde(rename = "FF")]
    ForestFire,
    #[serde(rename = "ours_vc")]
    ScoreVc,
    #[serde(rename = "ours_vc_u")]
    ScoreVcU,
    #[serde(rename = "ours_vc_ss")]
    ScoreVcSs,
    #[serde(rename = "ours_full")]
    ScoreFull,
}

impl SamplingMethod {
    pub const ALL: [SamplingMethod; 8] = [
        SamplingMethod::RandomNode,
        SamplingMethod::RandomDegreeNode,
        SamplingMethod::RandomWalk,
        SamplingMethod::ForestFire,
        SamplingMethod::ScoreVc,
        SamplingMethod::ScoreVcU,
        SamplingMethod::ScoreVcSs,
        SamplingMethod::ScoreFull,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            SamplingMethod::RandomNode => "RN",
            SamplingMethod::RandomDegreeNode => "RDN",
            SamplingMethod::RandomWalk => "RW",
            SamplingMethod::ForestFire => "FF",
            SamplingMethod::ScoreVc => "ours_vc",
            SamplingMethod::ScoreVcU => "ours_vc_u",
            SamplingMethod::ScoreVcSs => "ours_vc_ss",
            SamplingMethod::ScoreFull => "ours_full",
        }
    }

    /// Score weights for the score-based variants, scaled from `full`.
    pub fn score_weights(&self, full: ScoreWeights) -> Option<ScoreWeights> {
        let pick = |u: bool, ss: bool| ScoreWeights {
            view_coverage: full.view_coverage,
            uncertainty: if u { full.uncertainty } else { 0.0 },
            sensitivity: if ss { full.sensitivity } else { 0.0 },
        };
        match self {
            SamplingMethod::ScoreVc => Some(pick(false, false)),
            SamplingMethod::ScoreVcU => Some(pick(true, false)),
            SamplingMethod::ScoreVcSs => Some(pick(false, true)),
            SamplingMethod::ScoreFull => Some(full),
            _ => None,
        }
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplingMethod::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Node ids retained by `method`, sorted ascending.
///
/// Score-based methods need `model` and use `cfg` for weights and
/// normalization; random methods draw from `seed`.
pub fn select_nodes(
    graph: &TopoGraph,
    method: SamplingMethod,
    cfg: &SampleConfig,
    model: Option<&FieldModel>,
    seed: u64,
) -> Result<Vec<NodeId>> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let k = keep_count(cfg.keep_fraction, graph.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = match method {
        SamplingMethod::RandomNode => {
            let mut all: Vec<usize> = (0..graph.len()).collect();
            all.shuffle(&mut rng);
            all.truncate(k);
            all
        }
        SamplingMethod::RandomDegreeNode => {
            let mut all: Vec<usize> = (0..graph.len()).collect();
            all.sort_by(|&a, &b| graph.adj[b].len().cmp(&graph.adj[a].len()).then(a.cmp(&b)));
            all.truncate(k);
            all
        }
        SamplingMethod::RandomWalk => random_walk(graph, k, &mut rng),
        SamplingMethod::ForestFire => forest_fire(graph, k, &mut rng),
        score => {
            let model = model
                .ok_or_else(|| Error::InvalidArgument(format!("{score} needs a field model")))?;
            let weights = score.score_weights(cfg.weights).expect("score variant");
            let scores = compute_scores(graph, model, &SampleConfig { weights, ..*cfg })?;
            return Ok(select_top(&scores, cfg.keep_fraction));
        }
    };
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| graph.ids[i]).collect())
}

fn random_unvisited(visited: &[bool], rng: &mut ChaCha8Rng) -> usize {
    let open: Vec<usize> = (0..visited.len()).filter(|&i| !visited[i]).collect();
    *open.choose(rng).expect("k <= n leaves an unvisited node")
}

fn random_walk(graph: &TopoGraph, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = graph.len();
    let mut visited = vec![false; n];
    let mut out = Vec::with_capacity(k);
    let mut start = random_unvisited(&visited, rng);
    let mut cur = start;
    let mut since_new = 0usize;
    while out.len() < k {
        if !visited[cur] {
            visited[cur] = true;
            out.push(cur);
            since_new = 0;
            continue;
        }
        since_new += 1;
        if since_new > 100 * n {
            start = random_unvisited(&visited, rng);
            cur = start;
            continue;
        }
        if rng.random_bool(RESTART_PROBABILITY) || graph.adj[cur].is_empty() {
            cur = start;
        } else {
            cur = graph.adj[cur].choose(rng).unwrap().0;
        }
    }
    out
}

fn forest_fire(graph: &TopoGraph, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut visited = vec![false; graph.len()];
    let mut out = Vec::with_capacity(k);
    let mut queue = std::collections::VecDeque::new();
    while out.len() < k {
        let Some(v) = queue.pop_front() else {
            let s = random_unvisited(&visited, rng);
            visited[s] = true;
            out.push(s);
            queue.push_back(s);
            continue;
        };
        let mut burn = 0;
        while rng.random_bool(BURN_PROBABILITY) {
            burn += 1;
        }
        let mut fresh: Vec<usize> = graph.adj[v]
            .iter()
            .map(|&(n, _)| n)
            .filter(|&n| !visited[n])
            .collect();
        fresh.shuffle(rng);
        for n in fresh.into_iter().take(burn) {
            if out.len() == k {
                break;
            }
            visited[n] = true;
            out.push(n);
            queue.push_back(n);
        }
    }
    out
}
