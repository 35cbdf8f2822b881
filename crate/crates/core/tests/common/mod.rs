//! Test-side oracles, written independently of the library code paths.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textnet::simgraph::SimilarityGraph;
use textnet::vectorize::TermDocMatrix;

/// Dense SVD by one-sided (Hestenes) Jacobi rotations.
pub struct JacobiSvd {
    /// Descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors, one per entry of `sigma`, each of length n.
    pub v: Vec<Vec<f64>>,
}

pub fn jacobi_svd(a: &[Vec<f64>], m: usize, n: usize) -> JacobiSvd {
    // columns of A
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&u[p], &u[p]);
                let beta = dot(&u[q], &u[q]);
                let gamma = dot(&u[p], &u[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut u, &mut v] {
                    for i in 0..cols[p].len() {
                        let (x, y) = (cols[p][i], cols[q][i]);
                        cols[p][i] = c * x - s * y;
                        cols[q][i] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (dot(&u[j], &u[j]).sqrt(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    JacobiSvd {
        sigma: order.iter().map(|&(s, _)| s).collect(),
        v: order.iter().map(|&(_, j)| v[j].clone()).collect(),
    }
}

pub fn dense_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Random sparse matrix with roughly `density` nonzeros in (0, 1].
pub fn random_sparse(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> DMatrix<f64> {
    let mut x = DMatrix::from_fn(m, n, |_, _| {
        if rng.random_bool(density) {
            rng.random_range(0.01..1.0)
        } else {
            0.0
        }
    });
    // at least one nonzero per column keeps the matrix nonzero
    for j in 0..n {
        if x.column(j).iter().all(|&v| v == 0.0) {
            let i = rng.random_range(0..m);
            x[(i, j)] = rng.random_range(0.01..1.0);
        }
    }
    x
}

pub fn tdm(x: &DMatrix<f64>) -> TermDocMatrix {
    TermDocMatrix::from_dense(x)
}

/// The extraction objective straight from its definition, on a dense
/// weight table.
pub fn objective_direct(a: &[Vec<f64>], in_s: &[bool]) -> f64 {
    let n = a.len();
    let s = in_s.iter().filter(|&&b| b).count() as f64;
    let sc = n as f64 - s;
    let mut o = 0.0;
    let mut b = 0.0;
    for i in 0..n {
        for j in 0..n {
            if in_s[i] && in_s[j] {
                o += a[i][j];
            } else if in_s[i] && !in_s[j] {
                b += a[i][j];
            }
        }
    }
    s * sc * (o / (s * s) - b / (s * sc))
}

/// Maximum of the objective over all nonempty proper subsets.
pub fn exhaustive_max(a: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = a.len();
    assert!(n <= 20);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for mask in 1u32..(1u32 << n) - 1 {
        let in_s: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let w = objective_direct(a, &in_s);
        if w > best.0 {
            best = (w, (0..n).filter(|&i| in_s[i]).collect());
        }
    }
    best
}

/// Random symmetric weight table with zero diagonal; each pair present with
/// probability `p` and weight uniform in `[lo, hi)`.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, p: f64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let w = rng.random_range(lo..hi);
                a[i][j] = w;
                a[j][i] = w;
            }
        }
    }
    a
}

pub fn graph_from_table(a: &[Vec<f64>]) -> SimilarityGraph {
    let n = a.len();
    let d = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    SimilarityGraph::from_dense((0..n).map(|i| format!("v{i}")).collect(), &d, 0.0).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
