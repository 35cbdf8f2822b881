//! One-community-at-a-time extraction by tabu search.
//!
//! The objective for a node set S with complement Sᶜ is
//!
//! ```text
//! W(S) = |S||Sᶜ| · ( O(S)/|S|² − B(S)/(|S||Sᶜ|) )
//! O(S) = Σ_{i,j∈S} A_ij        (both orders, so twice the internal weight)
//! B(S) = Σ_{i∈S, j∈Sᶜ} A_ij
//! ```
//!
//! The search keeps, for every node, the summed weight into S, which makes
//! the effect of any single flip an O(1) computation.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgraph::SimilarityGraph;

pub const DEFAULT_MIN_RESIDUAL: usize = 30;
pub const DEFAULT_RESTARTS: usize = 20;

/// Tabu knobs. `None` fields take size-dependent defaults: tenure
/// `max(5, ⌈n/20⌉)`, stall limit `3n`, move cap `50n`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabuParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenure: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_moves: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedTabu {
    pub tenure: usize,
    pub stall_limit: usize,
    pub max_moves: usize,
}

impl TabuParams {
    pub fn resolve(&self, n: usize) -> ResolvedTabu {
        ResolvedTabu {
            tenure: self.tenure.unwrap_or_else(|| 5.max(n.div_ceil(20))),
            stall_limit: self.stall_limit.unwrap_or(3 * n).max(1),
            max_moves: self.max_moves.unwrap_or(50 * n).max(1),
        }
    }
}

/// Objective value of `s` (node indices) on `g`.
pub fn objective_w(g: &SimilarityGraph, s: &[usize]) -> Result<f64> {
    let n = g.size();
    let mut member = vec![false; n];
    for &v in s {
        if v >= n {
            return Err(Error::NodeOutOfRange { node: v, size: n });
        }
        member[v] = true;
    }
    let size = member.iter().filter(|&&m| m).count();
    if size == 0 || size == n {
        return Err(Error::TrivialSplit);
    }
    let (mut inner, mut boundary) = (0.0, 0.0);
    for i in (0..n).filter(|&i| member[i]) {
        for (j, &w) in g.row(i).iter().enumerate() {
            if member[j] {
                inner += w;
            } else {
                boundary += w;
            }
        }
    }
    Ok(objective_from_parts(inner, boundary, size, n - size))
}

#[inline]
fn objective_from_parts(inner: f64, boundary: f64, size: usize, rest: usize) -> f64 {
    let (s, c) = (size as f64, rest as f64);
    s * c * (inner / (s * s) - boundary / (s * c))
}

/// Mean weight over all ordered pairs of `nodes`, diagonal included in the
/// normalizer: `(1/|S|²) Σ_{i,j∈S} A_ij`.
pub fn density(g: &SimilarityGraph, nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let total: f64 = nodes
        .iter()
        .map(|&i| {
            let row = g.row(i);
            nodes.iter().map(|&j| row[j]).sum::<f64>()
        })
        .sum();
    total / (nodes.len() * nodes.len()) as f64
}

/// Membership string with incrementally maintained objective terms.
#[derive(Debug, Clone)]
pub struct IncrementalObjective<'g> {
    graph: &'g SimilarityGraph,
    member: Vec<bool>,
    size: usize,
    /// Σ_{j∈S} A_vj for every node v.
    into_set: Vec<f64>,
    row_total: Vec<f64>,
    inner: f64,
    boundary: f64,
}

impl<'g> IncrementalObjective<'g> {
    pub fn new(graph: &'g SimilarityGraph, member: Vec<bool>) -> Self {
        let n = graph.size();
        assert_eq!(member.len(), n);
        let row_total: Vec<f64> = (0..n).map(|i| graph.row(i).iter().sum()).collect();
        let into_set: Vec<f64> = (0..n)
            .map(|i| {
                graph
                    .row(i)
                    .iter()
                    .zip(&member)
                    .filter(|(_, &m)| m)
                    .map(|(w, _)| *w)
                    .sum()
            })
            .collect();
        let (mut inner, mut boundary) = (0.0, 0.0);
        for i in (0..n).filter(|&i| member[i]) {
            inner += into_set[i];
            boundary += row_total[i] - into_set[i];
        }
        let size = member.iter().filter(|&&m| m).count();
        IncrementalObjective {
            graph,
            member,
            size,
            into_set,
            row_total,
            inner,
            boundary,
        }
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Current objective; meaningless while the split is trivial.
    pub fn value(&self) -> f64 {
        objective_from_parts(self.inner, self.boundary, self.size, self.member.len() - self.size)
    }

    /// Objective after flipping `v`, or `None` if the flip empties S or Sᶜ.
    #[inline]
    pub fn value_after_flip(&self, v: usize) -> Option<f64> {
        let n = self.member.len();
        let (r, t) = (self.into_set[v], self.row_total[v]);
        let (inner, boundary, size) = if self.member[v] {
            (self.inner - 2.0 * r, self.boundary - t + 2.0 * r, self.size - 1)
        } else {
            (self.inner + 2.0 * r, self.boundary + t - 2.0 * r, self.size + 1)
        };
        (size > 0 && size < n).then(|| objective_from_parts(inner, boundary, size, n - size))
    }

    pub fn flip(&mut self, v: usize) {
        let (r, t) = (self.into_set[v], self.row_total[v]);
        let sign = if self.member[v] {
            self.inner -= 2.0 * r;
            self.boundary += 2.0 * r - t;
            self.size -= 1;
            -1.0
        } else {
            self.inner += 2.0 * r;
            self.boundary += t - 2.0 * r;
            self.size += 1;
            1.0
        };
        self.member[v] = !self.member[v];
        for (acc, w) in self.into_set.iter_mut().zip(self.graph.row(v)) {
            *acc += sign * w;
        }
    }
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 1e-12 * (1.0 + incumbent.abs())
}

fn random_split(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    loop {
        let member: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let size = member.iter().filter(|&&m| m).count();
        if size > 0 && size < n {
            return member;
        }
    }
}

/// One tabu run from a random split; returns the best membership seen.
fn tabu_run(g: &SimilarityGraph, rng: &mut ChaCha8Rng, params: ResolvedTabu) -> (Vec<bool>, f64) {
    let n = g.size();
    let mut state = IncrementalObjective::new(g, random_split(n, rng));
    let mut best_value = state.value();
    let mut best = state.members().to_vec();
    // leave at least one node free so the search never freezes completely
    let tenure = params.tenure.min(n - 1);
    let mut tabu_until = vec![0usize; n];
    let mut stall = 0;

    for step in 0..params.max_moves {
        let mut chosen: Option<(usize, f64)> = None;
        for v in 0..n {
            let Some(value) = state.value_after_flip(v) else {
                continue;
            };
            let admissible = tabu_until[v] <= step || improves(value, best_value);
            if admissible && chosen.is_none_or(|(_, b)| value > b) {
                chosen = Some((v, value));
            }
        }
        let Some((v, _)) = chosen else { break };
        state.flip(v);
        tabu_until[v] = step + 1 + tenure;

        let value = state.value();
        if improves(value, best_value) {
            best_value = value;
            best.copy_from_slice(state.members());
            stall = 0;
        } else {
            stall += 1;
            if stall >= params.stall_limit {
                break;
            }
        }
    }
    (best, best_value)
}

/// Best split found over `restarts` independent tabu runs. Restart `r` is
/// seeded with `seed + r`.
pub fn tabu_extract(
    g: &SimilarityGraph,
    restarts: usize,
    seed: u64,
    params: &TabuParams,
) -> Result<(Vec<usize>, f64)> {
    tabu_extract_on_stream(g, restarts, seed, 0, params)
}

/// As [`tabu_extract`], drawing randomness from ChaCha stream `stream` so
/// successive extractions on shrinking graphs use fresh streams.
pub fn tabu_extract_on_stream(
    g: &SimilarityGraph,
    restarts: usize,
    seed: u64,
    stream: u64,
    params: &TabuParams,
) -> Result<(Vec<usize>, f64)> {
    let n = g.size();
    if n < 2 {
        return Err(Error::TooSmall {
            what: "graph nodes for extraction",
            needed: 2,
            got: n,
        });
    }
    let resolved = params.resolve(n);
    let runs: Vec<(Vec<bool>, f64)> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
            rng.set_stream(stream);
            tabu_run(g, &mut rng, resolved)
        })
        .collect();

    let mut best: Option<(Vec<usize>, f64)> = None;
    for (member, _) in runs {
        let set: Vec<usize> = (0..n).filter(|&i| member[i]).collect();
        // report the exact value rather than the incrementally tracked one
        let value = objective_w(g, &set)?;
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((set, value));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One extracted community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    /// Extraction order within its partition, from 1.
    #[serde(rename = "community_index")]
    pub iteration: usize,
    /// Partition index; 0 for whole-graph runs.
    pub partition: usize,
    #[serde(rename = "objective")]
    pub objective_value: f64,
    #[serde(rename = "density")]
    pub internal_density: f64,
    #[serde(rename = "member_ids")]
    pub members: Vec<String>,
    /// `(partition, iteration)` of the communities fused into this one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<(usize, usize)>,
}

/// Parameters in force when a result was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSnapshot {
    pub tau: f64,
    pub seed: u64,
    pub restarts: usize,
    pub min_residual: usize,
    pub tabu: TabuParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub communities: Vec<Community>,
    #[serde(rename = "residual_ids")]
    pub residual: Vec<String>,
    pub config: ExtractionSnapshot,
}

impl ExtractionResult {
    /// Document id → group label (`C<i>` by position, `misc` for residual).
    pub fn labels(&self) -> HashMap<String, String> {
        let mut out = HashMap::new();
        for (i, c) in self.communities.iter().enumerate() {
            for m in &c.members {
                out.insert(m.clone(), format!("C{}", i + 1));
            }
        }
        for r in &self.residual {
            out.insert(r.clone(), MISC_LABEL.to_string());
        }
        out
    }
}

pub const MISC_LABEL: &str = "misc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub min_residual: usize,
    pub restarts: usize,
    pub tabu: TabuParams,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            min_residual: DEFAULT_MIN_RESIDUAL,
            restarts: DEFAULT_RESTARTS,
            tabu: TabuParams::default(),
        }
    }
}

/// Extracts communities until at most `min_residual` nodes remain.
pub fn extract_all(
    g: &SimilarityGraph,
    min_residual: usize,
    restarts: usize,
    seed: u64,
    params: &TabuParams,
) -> Result<ExtractionResult> {
    let cfg = ExtractionConfig {
        min_residual,
        restarts,
        tabu: *params,
    };
    extract_partition(g, &cfg, seed, 0)
}

/// [`extract_all`] tagged with a partition index.
pub fn extract_partition(
    g: &SimilarityGraph,
    cfg: &ExtractionConfig,
    seed: u64,
    partition: usize,
) -> Result<ExtractionResult> {
    let mut remaining: Vec<usize> = (0..g.size()).collect();
    let mut communities = Vec::new();
    while remaining.len() > cfg.min_residual && remaining.len() >= 2 {
        let sub = g.subgraph(&remaining)?;
        let iteration = communities.len() + 1;
        let (set, value) =
            tabu_extract_on_stream(&sub, cfg.restarts, seed, iteration as u64, &cfg.tabu)?;
        if set.is_empty() || set.len() == sub.size() {
            break;
        }
        let picked: Vec<usize> = set.iter().map(|&i| remaining[i]).collect();
        communities.push(Community {
            iteration,
            partition,
            objective_value: value,
            internal_density: density(&sub, &set),
            members: picked.iter().map(|&i| g.node_ids()[i].clone()).collect(),
            sources: Vec::new(),
        });
        let mut drop = vec![false; g.size()];
        for &i in &picked {
            drop[i] = true;
        }
        remaining.retain(|&i| !drop[i]);
    }
    Ok(ExtractionResult {
        communities,
        residual: remaining.iter().map(|&i| g.node_ids()[i].clone()).collect(),
        config: ExtractionSnapshot {
            tau: g.tau(),
            seed,
            restarts: cfg.restarts,
            min_residual: cfg.min_residual,
            tabu: cfg.tabu,
            merge_ratio: None,
            chunk_size: None,
        },
    })
}
