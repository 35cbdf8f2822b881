//! Divide and conquer: random chunking, per-chunk extraction, and fusion of
//! communities from different chunks whose cross density is close to both
//! of their internal densities.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{
    density, extract_partition, objective_w, Community, ExtractionConfig, ExtractionResult,
};
use crate::simgraph::SimilarityGraph;

pub const DEFAULT_MERGE_RATIO: f64 = 0.85;

/// Assignment of documents to chunks. Partition `p` (1-based) holds
/// `partitions[p - 1]`, in original id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub chunk_size: usize,
    pub seed: u64,
    pub partitions: Vec<Vec<String>>,
}

impl PartitionPlan {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn assignment(&self, id: &str) -> Option<usize> {
        self.partitions
            .iter()
            .position(|p| p.iter().any(|x| x == id))
            .map(|i| i + 1)
    }
}

/// Shuffles `ids` by `seed` and cuts consecutive chunks of `chunk_size`; a
/// trailing chunk shorter than half the chunk size joins its predecessor.
pub fn random_partition(ids: &[String], chunk_size: usize, seed: u64) -> PartitionPlan {
    let chunk_size = chunk_size.max(2);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chunks: Vec<Vec<usize>> = order.chunks(chunk_size).map(<[usize]>::to_vec).collect();
    if chunks.len() >= 2 && 2 * chunks.last().map_or(0, Vec::len) < chunk_size {
        let tail = chunks.pop().unwrap_or_default();
        chunks.last_mut().expect("predecessor").extend(tail);
    }
    let partitions = chunks
        .into_iter()
        .map(|mut c| {
            c.sort_unstable();
            c.into_iter().map(|i| ids[i].clone()).collect()
        })
        .collect();
    PartitionPlan {
        chunk_size,
        seed,
        partitions,
    }
}

fn index_of(g: &SimilarityGraph) -> HashMap<&str, usize> {
    g.node_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect()
}

fn resolve(index: &HashMap<&str, usize>, members: &[String]) -> Result<Vec<usize>> {
    members
        .iter()
        .map(|m| {
            index
                .get(m.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownId(m.clone()))
        })
        .collect()
}

/// `(1/|S|²) Σ_{i,j∈S} A_ij` on the full graph.
pub fn community_density(g_full: &SimilarityGraph, s: &Community) -> Result<f64> {
    let nodes = resolve(&index_of(g_full), &s.members)?;
    Ok(density(g_full, &nodes))
}

/// `(1/(|S₁||S₂|)) Σ_{i∈S₁, j∈S₂} A_ij`.
pub fn cross_density(g_full: &SimilarityGraph, s1: &Community, s2: &Community) -> Result<f64> {
    let index = index_of(g_full);
    let a = resolve(&index, &s1.members)?;
    let b = resolve(&index, &s2.members)?;
    let set: HashSet<usize> = a.iter().copied().collect();
    if b.iter().any(|v| set.contains(v)) {
        return Err(Error::OverlappingCommunities);
    }
    Ok(cross_density_nodes(g_full, &a, &b))
}

fn cross_density_nodes(g: &SimilarityGraph, a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let total: f64 = a
        .iter()
        .map(|&i| {
            let row = g.row(i);
            b.iter().map(|&j| row[j]).sum::<f64>()
        })
        .sum();
    total / (a.len() * b.len()) as f64
}

/// Outcome of testing one cross-partition pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDecision {
    /// `(partition, iteration)` of each community.
    pub pair: ((usize, usize), (usize, usize)),
    pub d_a: f64,
    pub d_b: f64,
    pub d_cross: f64,
    pub merged: bool,
    pub ratio_threshold: f64,
}

impl MergeDecision {
    pub fn new(
        pair: ((usize, usize), (usize, usize)),
        d_a: f64,
        d_b: f64,
        d_cross: f64,
        ratio_threshold: f64,
    ) -> Self {
        MergeDecision {
            pair,
            d_a,
            d_b,
            d_cross,
            merged: d_cross > ratio_threshold * d_a && d_cross > ratio_threshold * d_b,
            ratio_threshold,
        }
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// The smaller index always becomes the root, so the final classes do
    /// not depend on union order.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Fused communities plus every pairwise decision taken.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub result: ExtractionResult,
    pub decisions: Vec<MergeDecision>,
}

/// Tests every pair of communities from different partitions against the
/// density rule with ratio `rho`, fuses merged pairs transitively, and
/// pools all residuals.
///
/// Fused communities get their density and objective recomputed on
/// `g_full`; unfused ones keep their extraction-time objective.
pub fn merge_communities(
    g_full: &SimilarityGraph,
    results: &[ExtractionResult],
    rho: f64,
) -> Result<MergeOutcome> {
    let index = index_of(g_full);
    let mut owner: Vec<usize> = Vec::new();
    let mut comms: Vec<&Community> = Vec::new();
    for (r, res) in results.iter().enumerate() {
        for c in &res.communities {
            owner.push(r);
            comms.push(c);
        }
    }
    let nodes: Vec<Vec<usize>> = comms
        .iter()
        .map(|c| resolve(&index, &c.members))
        .collect::<Result<_>>()?;

    let mut seen = vec![false; g_full.size()];
    let residual_nodes = results
        .iter()
        .map(|r| resolve(&index, &r.residual))
        .collect::<Result<Vec<_>>>()?;
    for &v in nodes.iter().chain(&residual_nodes).flatten() {
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::OverlappingCommunities);
        }
    }

    let densities: Vec<f64> = nodes.par_iter().map(|s| density(g_full, s)).collect();
    let pairs: Vec<(usize, usize)> = (0..comms.len())
        .flat_map(|a| (a + 1..comms.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| owner[a] != owner[b])
        .collect();
    let decisions: Vec<MergeDecision> = pairs
        .par_iter()
        .map(|&(a, b)| {
            MergeDecision::new(
                (
                    (comms[a].partition, comms[a].iteration),
                    (comms[b].partition, comms[b].iteration),
                ),
                densities[a],
                densities[b],
                cross_density_nodes(g_full, &nodes[a], &nodes[b]),
                rho,
            )
        })
        .collect();

    let mut sets = DisjointSets::new(comms.len());
    for (d, &(a, b)) in decisions.iter().zip(&pairs) {
        if d.merged {
            sets.union(a, b);
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut class_of: HashMap<usize, usize> = HashMap::new();
    for c in 0..comms.len() {
        let root = sets.find(c);
        let slot = *class_of.entry(root).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[slot].push(c);
    }

    let fused_any = classes.iter().any(|c| c.len() > 1);
    let mut communities = Vec::with_capacity(classes.len());
    for (pos, class) in classes.iter().enumerate() {
        let mut members: Vec<usize> = class.iter().flat_map(|&c| nodes[c].iter().copied()).collect();
        members.sort_unstable();
        let first = comms[class[0]];
        let (objective_value, sources) = if class.len() > 1 {
            let objective = if members.len() < g_full.size() {
                objective_w(g_full, &members)?
            } else {
                first.objective_value
            };
            let sources = class
                .iter()
                .map(|&c| (comms[c].partition, comms[c].iteration))
                .collect();
            (objective, sources)
        } else {
            (first.objective_value, first.sources.clone())
        };
        communities.push(Community {
            iteration: if results.len() > 1 || fused_any {
                pos + 1
            } else {
                first.iteration
            },
            partition: if class.len() > 1 { 0 } else { first.partition },
            objective_value,
            internal_density: density(g_full, &members),
            members: members.iter().map(|&i| g_full.node_ids()[i].clone()).collect(),
            sources,
        });
    }

    let mut residual: Vec<usize> = residual_nodes.into_iter().flatten().collect();
    residual.sort_unstable();
    let mut config = results
        .first()
        .map(|r| r.config.clone())
        .unwrap_or_else(|| crate::extraction::ExtractionSnapshot {
            tau: g_full.tau(),
            seed: 0,
            restarts: 0,
            min_residual: 0,
            tabu: Default::default(),
            merge_ratio: None,
            chunk_size: None,
        });
    config.merge_ratio = Some(rho);
    Ok(MergeOutcome {
        result: ExtractionResult {
            communities,
            residual: residual.iter().map(|&i| g_full.node_ids()[i].clone()).collect(),
            config,
        },
        decisions,
    })
}

/// `commA,commB,dA,dB,dCross,merged` with communities named `S<a>_<p>`.
pub fn write_merge_report(path: &Path, decisions: &[MergeDecision]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["commA", "commB", "dA", "dB", "dCross", "merged"])?;
    for d in decisions {
        let ((pa, aa), (pb, ab)) = d.pair;
        w.write_record([
            format!("S{aa}_{pa}"),
            format!("S{ab}_{pb}"),
            d.d_a.to_string(),
            d.d_b.to_string(),
            d.d_cross.to_string(),
            d.merged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Partitions `g_full`, extracts every partition in parallel (partition `p`
/// seeded with `seed + 1000·p`) and fuses the results.
pub fn partitioned_extraction(
    g_full: &SimilarityGraph,
    chunk_size: usize,
    cfg: &ExtractionConfig,
    rho: f64,
    seed: u64,
) -> Result<(PartitionPlan, Vec<ExtractionResult>, MergeOutcome)> {
    let plan = random_partition(g_full.node_ids(), chunk_size, seed);
    let results = extract_plan(g_full, &plan, cfg, seed)?;
    let mut merged = merge_communities(g_full, &results, rho)?;
    merged.result.config.seed = seed;
    merged.result.config.chunk_size = Some(chunk_size);
    Ok((plan, results, merged))
}

/// Runs extraction on each partition of `plan`.
pub fn extract_plan(
    g_full: &SimilarityGraph,
    plan: &PartitionPlan,
    cfg: &ExtractionConfig,
    seed: u64,
) -> Result<Vec<ExtractionResult>> {
    let index = index_of(g_full);
    plan.partitions
        .par_iter()
        .enumerate()
        .map(|(i, ids)| {
            let p = i + 1;
            let nodes = resolve(&index, ids)?;
            let sub = g_full.subgraph(&nodes)?;
            let part_seed = seed.wrapping_add(1000 * p as u64);
            let mut res = extract_partition(&sub, cfg, part_seed, p)?;
            res.config.chunk_size = Some(plan.chunk_size);
            Ok(res)
        })
        .collect()
}
