//! Rank-k truncated SVD of the term-document matrix.
//!
//! Uses a randomized range finder (Gaussian sketch with oversampling) followed
//! by subspace iteration until the top-k Ritz triples converge. For a fixed
//! seed the result is bitwise deterministic.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorize::TermDocMatrix;

pub const OVERSAMPLING: usize = 10;
pub const POWER_ITERATIONS: usize = 2;
pub const TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 300;

/// Truncated SVD `X ≈ T_k Σ_k D_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaFactors {
    pub k: usize,
    /// Descending, strictly positive.
    pub singular_values: Vec<f64>,
    /// m×k, orthonormal columns.
    pub term_factors: DMatrix<f64>,
    /// n×k, orthonormal columns.
    pub doc_factors: DMatrix<f64>,
    /// Numerical rank observed among the computed triples (a lower bound
    /// when every computed value is nonzero).
    pub full_rank_hint: usize,
}

impl LsaFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            self.singular_values.clone(),
        ));
        &self.term_factors * sigma * self.doc_factors.transpose()
    }

    /// Keeps the leading `k` triples.
    pub fn truncate(&self, k: usize) -> Result<LsaFactors> {
        if k == 0 || k > self.k {
            return Err(Error::RankOutOfRange { k, max: self.k });
        }
        Ok(LsaFactors {
            k,
            singular_values: self.singular_values[..k].to_vec(),
            term_factors: self.term_factors.columns(0, k).into_owned(),
            doc_factors: self.doc_factors.columns(0, k).into_owned(),
            full_rank_hint: self.full_rank_hint,
        })
    }
}

/// Top-k singular triples of `x`, sign-fixed so the largest-magnitude entry
/// of each term-factor column is positive.
pub fn truncated_svd(x: &TermDocMatrix, k: usize, seed: u64) -> Result<LsaFactors> {
    let max = x.n_terms().min(x.n_docs());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    if x.nnz() == 0 {
        return Err(Error::ZeroMatrix);
    }
    let raw = randomized_svd(x, k, seed)?;
    if raw.full_rank_hint < k {
        return Err(Error::RankOutOfRange {
            k,
            max: raw.full_rank_hint,
        });
    }
    Ok(raw)
}

/// Like [`truncated_svd`] but tolerates trailing zero singular values; the
/// returned `k` is clamped to the numerical rank.
pub fn truncated_svd_clamped(x: &TermDocMatrix, k: usize, seed: u64) -> Result<LsaFactors> {
    let max = x.n_terms().min(x.n_docs());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    if x.nnz() == 0 {
        return Err(Error::ZeroMatrix);
    }
    let raw = randomized_svd(x, k, seed)?;
    let keep = raw.full_rank_hint.min(k);
    raw.truncate(keep)
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

fn randomized_svd(x: &TermDocMatrix, k: usize, seed: u64) -> Result<LsaFactors> {
    let (m, n) = (x.n_terms(), x.n_docs());
    // oversampling grows with k: subspace iteration converges at rate
    // σ_{l+1}/σ_k, which stalls on the flat tails of tf-idf spectra
    let l = (k + OVERSAMPLING.max(k)).min(m.min(n));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(x.mul_dense(&omega));
    for _ in 0..POWER_ITERATIONS {
        q = subspace_step(x, &q);
    }

    let scale = x.frobenius_sq().sqrt();
    let mut last_residual = f64::INFINITY;
    for iteration in 0..=MAX_ITERATIONS {
        // B = Qᵀ X, held transposed as n×l
        let bt = x.tr_mul_dense(&q);
        let svd = bt.transpose().svd(true, true);
        let ub = svd.u.expect("requested U");
        let vbt = svd.v_t.expect("requested Vᵀ");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let order = &order[..k];

        let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let mut u = DMatrix::zeros(m, k);
        let mut v = DMatrix::zeros(n, k);
        for (c, &i) in order.iter().enumerate() {
            u.set_column(c, &(&q * ub.column(i)));
            v.set_column(c, &vbt.row(i).transpose());
        }

        let sigma_max = values[0].max(f64::MIN_POSITIVE);
        let rank_tol = (m.max(n) as f64) * f64::EPSILON * sigma_max.max(scale);
        let rank = values.iter().take_while(|&&s| s > rank_tol).count();

        // only the numerically nonzero triples have meaningful residuals
        let xv = x.mul_dense(&v.columns(0, rank.max(1)).into_owned());
        let residual = (0..rank)
            .map(|c| (xv.column(c) - u.column(c) * values[c]).norm())
            .fold(0.0f64, f64::max)
            / sigma_max;
        last_residual = residual;

        if residual <= TOLERANCE {
            canonicalize_signs(&mut u, &mut v);
            return Ok(LsaFactors {
                k,
                singular_values: values,
                term_factors: u,
                doc_factors: v,
                full_rank_hint: rank,
            });
        }
        if iteration < MAX_ITERATIONS {
            q = subspace_step(x, &q);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: last_residual,
    })
}

fn subspace_step(x: &TermDocMatrix, q: &DMatrix<f64>) -> DMatrix<f64> {
    let z = orthonormal_basis(x.tr_mul_dense(q));
    orthonormal_basis(x.mul_dense(&z))
}

fn canonicalize_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for c in 0..u.ncols() {
        let mut best = 0;
        for r in 1..u.nrows() {
            if u[(r, c)].abs() > u[(best, c)].abs() {
                best = r;
            }
        }
        if u[(best, c)] < 0.0 {
            u.column_mut(c).neg_mut();
            v.column_mut(c).neg_mut();
        }
    }
}

/// Smallest k whose leading squared singular values reach `energy_fraction`
/// of the total, clamped to `[1, cap]`.
pub fn choose_rank(singular_value_decay: &[f64], energy_fraction: f64, cap: usize) -> usize {
    let total = singular_value_decay.iter().map(|s| s * s).sum();
    choose_rank_with_total(singular_value_decay, total, energy_fraction, cap)
}

/// As [`choose_rank`], with the total energy supplied separately (e.g. the
/// squared Frobenius norm when only leading values were computed). Returns
/// the list length if the fraction is never reached.
pub fn choose_rank_with_total(
    singular_value_decay: &[f64],
    total_energy: f64,
    energy_fraction: f64,
    cap: usize,
) -> usize {
    let cap = cap.max(1);
    if singular_value_decay.is_empty() || total_energy <= 0.0 {
        return 1;
    }
    let target = energy_fraction * total_energy;
    let mut cumulative = 0.0;
    for (i, s) in singular_value_decay.iter().enumerate() {
        cumulative += s * s;
        // relative slack absorbs rounding in the cumulative sum
        if cumulative >= target * (1.0 - 1e-12) {
            return (i + 1).min(cap);
        }
    }
    singular_value_decay.len().min(cap)
}

/// Document embeddings: the rows of `D_k`, in matrix column order.
pub fn doc_embeddings(factors: &LsaFactors) -> DMatrix<f64> {
    factors.doc_factors.clone()
}

/// How the embedding rank is picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub energy_fraction: f64,
    pub cap: usize,
    /// Fixed rank; bypasses the energy rule.
    pub rank: Option<usize>,
}

impl Default for RankSelection {
    fn default() -> Self {
        RankSelection {
            energy_fraction: 0.80,
            cap: 300,
            rank: None,
        }
    }
}

/// Factors `x` at the rank chosen by `selection`, never below 2 when the
/// matrix allows it (Pearson correlation needs two coordinates).
pub fn factor_with_selection(
    x: &TermDocMatrix,
    selection: &RankSelection,
    seed: u64,
) -> Result<LsaFactors> {
    let max = x.n_terms().min(x.n_docs());
    if let Some(k) = selection.rank {
        return truncated_svd(x, k, seed);
    }
    let total = x.frobenius_sq();
    let mut probe = selection.cap.min(max).min(32).max(1);
    loop {
        let factors = truncated_svd_clamped(x, probe, seed)?;
        let computed_all = factors.k < probe || probe == max;
        let k = choose_rank_with_total(
            &factors.singular_values,
            total,
            selection.energy_fraction,
            selection.cap,
        );
        let reached = {
            let e: f64 = factors.singular_values[..k].iter().map(|s| s * s).sum();
            e >= selection.energy_fraction * total * (1.0 - 1e-12)
        };
        if reached || computed_all || probe >= selection.cap.min(max) {
            let k = k.max(2).min(factors.k);
            return factors.truncate(k);
        }
        probe = (probe * 2).min(selection.cap.min(max));
    }
}

/// `id,0,1,...,k-1` header, one row per document.
pub fn write_embeddings_csv(path: &Path, ids: &[String], rows: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..rows.ncols()).map(|c| c.to_string()));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..rows.ncols()).map(|c| rows[(i, c)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let k = r.headers()?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for row in r.records() {
        let row = row?;
        ids.push(row[0].to_string());
        for c in 1..=k {
            values.push(row[c].parse::<f64>().map_err(|e| Error::Artifact {
                path: path.to_path_buf(),
                message: format!("bad value: {e}"),
            })?);
        }
    }
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), k, &values)))
}

pub fn write_singular_values_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "sigma"])?;
    for (i, s) in values.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
