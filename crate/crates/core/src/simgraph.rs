//! Document similarity network: Pearson correlation of embedding rows,
//! cut at a threshold.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest stored magnitude; keeps every weight strictly inside (-1, 1).
pub const MAX_WEIGHT: f64 = 1.0 - 1e-12;

/// Dense symmetric weighted adjacency with zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    node_ids: Vec<String>,
    weights: Vec<f64>,
    tau: f64,
    edge_count: usize,
}

impl SimilarityGraph {
    /// Wraps a full N×N matrix. The matrix must be symmetric with a zero
    /// diagonal and entries inside (-1, 1).
    pub fn from_dense(node_ids: Vec<String>, dense: &DMatrix<f64>, tau: f64) -> Result<Self> {
        let n = node_ids.len();
        if dense.shape() != (n, n) {
            return Err(Error::TooSmall {
                what: "matrix rows matching node ids",
                needed: n,
                got: dense.nrows(),
            });
        }
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let w = dense[(i, j)];
                let bad = (i == j && w != 0.0) || w.abs() >= 1.0 || w != dense[(j, i)] || w.is_nan();
                if bad {
                    return Err(Error::Artifact {
                        path: "<adjacency>".into(),
                        message: format!("entry ({i}, {j}) = {w} breaks symmetry, zero diagonal or range"),
                    });
                }
                weights[i * n + j] = w;
            }
        }
        Ok(Self::from_parts(node_ids, weights, tau))
    }

    fn from_parts(node_ids: Vec<String>, weights: Vec<f64>, tau: f64) -> Self {
        let n = node_ids.len();
        let edge_count = (0..n)
            .map(|i| weights[i * n + i + 1..(i + 1) * n].iter().filter(|w| **w != 0.0).count())
            .sum();
        SimilarityGraph {
            node_ids,
            weights,
            tau,
            edge_count,
        }
    }

    pub fn size(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of nonzero unordered off-diagonal pairs.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.weights[i * n..(i + 1) * n]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_row_slice(n, n, &self.weights)
    }

    /// Zeroes every entry below `tau`. `tau = 0` keeps negative weights.
    pub fn threshold(&self, tau: f64) -> SimilarityGraph {
        let weights = self
            .weights
            .iter()
            .map(|&w| if tau > 0.0 && w < tau { 0.0 } else { w })
            .collect();
        Self::from_parts(self.node_ids.clone(), weights, tau)
    }

    /// Induced subgraph on `nodes`, kept in original node order.
    pub fn subgraph(&self, nodes: &[usize]) -> Result<SimilarityGraph> {
        let n = self.size();
        if nodes.is_empty() {
            return Err(Error::TooSmall {
                what: "subgraph nodes",
                needed: 1,
                got: 0,
            });
        }
        if let Some(&bad) = nodes.iter().find(|&&v| v >= n) {
            return Err(Error::NodeOutOfRange { node: bad, size: n });
        }
        let mut keep = nodes.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let s = keep.len();
        let mut weights = Vec::with_capacity(s * s);
        for &i in &keep {
            let row = self.row(i);
            weights.extend(keep.iter().map(|&j| row[j]));
        }
        let ids = keep.iter().map(|&i| self.node_ids[i].clone()).collect();
        Ok(Self::from_parts(ids, weights, self.tau))
    }

    /// Upper-triangle edge list `i,j,weight` plus a JSON sidecar.
    pub fn write(&self, edges: &Path, sidecar: &Path, meta: &GraphMeta) -> Result<()> {
        let mut w = csv::Writer::from_path(edges)?;
        w.write_record(["i", "j", "weight"])?;
        let n = self.size();
        for i in 0..n {
            for j in i + 1..n {
                let x = self.weight(i, j);
                if x != 0.0 {
                    w.write_record([i.to_string(), j.to_string(), x.to_string()])?;
                }
            }
        }
        w.flush()?;
        let side = GraphSidecar {
            node_ids: self.node_ids.clone(),
            tau: self.tau,
            k: meta.k,
            seed: meta.seed,
            edge_count: self.edge_count,
        };
        fs::write(sidecar, serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn read(edges: &Path, sidecar: &Path) -> Result<(SimilarityGraph, GraphMeta)> {
        let side: GraphSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
        let n = side.node_ids.len();
        let mut weights = vec![0.0; n * n];
        let mut r = csv::Reader::from_path(edges)?;
        let bad = |message: String| Error::Artifact {
            path: edges.to_path_buf(),
            message,
        };
        for row in r.records() {
            let row = row?;
            let i: usize = row[0].parse().map_err(|e| bad(format!("{e}")))?;
            let j: usize = row[1].parse().map_err(|e| bad(format!("{e}")))?;
            let w: f64 = row[2].parse().map_err(|e| bad(format!("{e}")))?;
            if i >= n || j >= n || i == j {
                return Err(bad(format!("edge ({i}, {j}) out of range")));
            }
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
        let meta = GraphMeta {
            k: side.k,
            seed: side.seed,
        };
        Ok((Self::from_parts(side.node_ids, weights, side.tau), meta))
    }
}

/// Provenance recorded next to an exported graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub k: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphSidecar {
    node_ids: Vec<String>,
    tau: f64,
    k: usize,
    seed: u64,
    edge_count: usize,
}

/// Centers and scales a row to unit norm; `None` for zero variance.
fn standardize(row: &[f64]) -> Option<Vec<f64>> {
    let k = row.len() as f64;
    let mean = row.iter().sum::<f64>() / k;
    let centered: Vec<f64> = row.iter().map(|x| x - mean).collect();
    let norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
    // relative cut-off: a constant row can leave rounding residue
    let scale = row.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if norm <= 1e-12 * scale.max(f64::MIN_POSITIVE) || norm == 0.0 {
        return None;
    }
    Some(centered.into_iter().map(|x| x / norm).collect())
}

/// Pearson correlation of two coordinate sequences.
pub fn pearson_rows(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(Error::TooSmall {
            what: "coordinates per row",
            needed: 2,
            got: u.len().min(v.len()),
        });
    }
    let a = standardize(u).ok_or_else(|| Error::ZeroVariance("first row".into()))?;
    let b = standardize(v).ok_or_else(|| Error::ZeroVariance("second row".into()))?;
    Ok(dot(&a, &b).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full correlation network between embedding rows, entries below `tau`
/// zeroed (`tau = 0` keeps negative correlations), diagonal zero.
pub fn build_graph(embeddings: &DMatrix<f64>, ids: &[String], tau: f64) -> Result<SimilarityGraph> {
    let n = embeddings.nrows();
    if n < 2 || ids.len() != n {
        return Err(Error::TooSmall {
            what: "documents with ids",
            needed: 2.max(n),
            got: ids.len().min(n),
        });
    }
    if embeddings.ncols() < 2 {
        return Err(Error::TooSmall {
            what: "embedding dimensions",
            needed: 2,
            got: embeddings.ncols(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = embeddings.row(i).iter().copied().collect();
            standardize(&row).ok_or_else(|| Error::ZeroVariance(ids[i].clone()))
        })
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (0..n).map(move |j| {
                if i == j {
                    return 0.0;
                }
                // same operand order for (i, j) and (j, i) keeps A symmetric
                let c = if i < j {
                    dot(&rows[i], &rows[j])
                } else {
                    dot(&rows[j], &rows[i])
                };
                let c = c.clamp(-MAX_WEIGHT, MAX_WEIGHT);
                if tau > 0.0 && c < tau {
                    0.0
                } else {
                    c
                }
            })
        })
        .collect();
    Ok(SimilarityGraph::from_parts(ids.to_vec(), weights, tau))
}
