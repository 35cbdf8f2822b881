//! Sparse tf-idf term-document matrix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::corpus::{display_forms, Document};
use crate::error::{Error, Result};

/// Stems in column-ordinal order (alphabetical) with display forms and
/// document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    stems: Vec<String>,
    display: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(entries: Vec<(String, String, usize)>) -> Self {
        let mut stems = Vec::with_capacity(entries.len());
        let mut display = Vec::with_capacity(entries.len());
        let mut doc_freq = Vec::with_capacity(entries.len());
        for (stem, disp, df) in entries {
            stems.push(stem);
            display.push(disp);
            doc_freq.push(df);
        }
        let index = stems.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocabulary {
            stems,
            display,
            doc_freq,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn ordinal(&self, stem: &str) -> Option<usize> {
        self.index.get(stem).copied()
    }

    pub fn stem(&self, ordinal: usize) -> &str {
        &self.stems[ordinal]
    }

    pub fn display(&self, ordinal: usize) -> &str {
        &self.display[ordinal]
    }

    pub fn doc_freq(&self, ordinal: usize) -> usize {
        self.doc_freq[ordinal]
    }
}

/// Column-major sparse m×n matrix: `columns[d]` holds `(term, weight)` pairs
/// for document `d`, sorted by term, strictly positive weights only.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDocMatrix {
    pub vocabulary: Vocabulary,
    pub doc_ids: Vec<String>,
    columns: Vec<Vec<(usize, f64)>>,
}

impl TermDocMatrix {
    /// Assembles a matrix from explicit columns. Zero weights are dropped;
    /// negative weights and out-of-range term ordinals are rejected.
    pub fn from_columns(
        vocabulary: Vocabulary,
        doc_ids: Vec<String>,
        mut columns: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if columns.len() != doc_ids.len() {
            return Err(Error::TooSmall {
                what: "matrix columns",
                needed: doc_ids.len(),
                got: columns.len(),
            });
        }
        let m = vocabulary.len();
        for col in &mut columns {
            col.retain(|&(_, w)| w != 0.0);
            col.sort_by_key(|&(t, _)| t);
            if let Some(&(t, w)) = col.iter().find(|&&(t, w)| t >= m || !(w > 0.0)) {
                return Err(Error::Artifact {
                    path: "<matrix>".into(),
                    message: format!("invalid entry ({t}, {w}) for {m} terms"),
                });
            }
        }
        Ok(TermDocMatrix {
            vocabulary,
            doc_ids,
            columns,
        })
    }

    /// A matrix whose vocabulary is just `t0..t{m-1}`, for numerical work.
    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let (m, n) = dense.shape();
        let vocabulary = Vocabulary::new(
            (0..m)
                .map(|t| (format!("t{t}"), format!("t{t}"), 1))
                .collect(),
        );
        let columns = (0..n)
            .map(|d| {
                (0..m)
                    .filter(|&t| dense[(t, d)] != 0.0)
                    .map(|t| (t, dense[(t, d)]))
                    .collect()
            })
            .collect();
        TermDocMatrix {
            vocabulary,
            doc_ids: (0..n).map(|d| format!("d{d}")).collect(),
            columns,
        }
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn column(&self, doc: usize) -> &[(usize, f64)] {
        &self.columns[doc]
    }

    pub fn get(&self, term: usize, doc: usize) -> f64 {
        let col = &self.columns[doc];
        col.binary_search_by_key(&term, |&(t, _)| t)
            .map(|i| col[i].1)
            .unwrap_or(0.0)
    }

    /// Weight for a stem in the document with the given id; 0 if either is absent.
    pub fn weight(&self, stem: &str, doc_id: &str) -> f64 {
        match (
            self.vocabulary.ordinal(stem),
            self.doc_ids.iter().position(|d| d == doc_id),
        ) {
            (Some(t), Some(d)) => self.get(t, d),
            _ => 0.0,
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.columns.iter().flatten().map(|&(_, w)| w * w).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_terms(), self.n_docs());
        for (d, col) in self.columns.iter().enumerate() {
            for &(t, w) in col {
                out[(t, d)] = w;
            }
        }
        out
    }

    /// X · V for a dense n×l matrix V.
    pub fn mul_dense(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(v.nrows(), self.n_docs());
        let l = v.ncols();
        let mut out = DMatrix::zeros(self.n_terms(), l);
        for (d, col) in self.columns.iter().enumerate() {
            for c in 0..l {
                let vd = v[(d, c)];
                if vd == 0.0 {
                    continue;
                }
                for &(t, w) in col {
                    out[(t, c)] += w * vd;
                }
            }
        }
        out
    }

    /// Xᵀ · U for a dense m×l matrix U.
    pub fn tr_mul_dense(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(u.nrows(), self.n_terms());
        let l = u.ncols();
        let rows: Vec<Vec<f64>> = self
            .columns
            .par_iter()
            .map(|col| {
                (0..l)
                    .map(|c| col.iter().map(|&(t, w)| w * u[(t, c)]).sum())
                    .collect()
            })
            .collect();
        DMatrix::from_fn(self.n_docs(), l, |d, c| rows[d][c])
    }

    /// MatrixMarket coordinate format, 1-based, document-major order.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n_terms(), self.n_docs(), self.nnz());
        for (d, col) in self.columns.iter().enumerate() {
            for &(t, w) in col {
                let _ = writeln!(s, "{} {} {}", t + 1, d + 1, w);
            }
        }
        s
    }

    /// Parses entries written by [`to_matrix_market`](Self::to_matrix_market).
    pub fn parse_matrix_market(
        text: &str,
        vocabulary: Vocabulary,
        doc_ids: Vec<String>,
    ) -> Result<Self> {
        let bad = |message: String| Error::Artifact {
            path: "<matrix market>".into(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing size line".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|x| x.parse().map_err(|e| bad(format!("{e}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != vocabulary.len() || dims[1] != doc_ids.len() {
            return Err(bad(format!("size line {header:?} disagrees with index files")));
        }
        let mut columns = vec![Vec::new(); dims[1]];
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("bad entry {line:?}")));
            }
            let t: usize = f[0].parse().map_err(|e| bad(format!("{e}")))?;
            let d: usize = f[1].parse().map_err(|e| bad(format!("{e}")))?;
            let w: f64 = f[2].parse().map_err(|e| bad(format!("{e}")))?;
            if t == 0 || d == 0 || d > dims[1] {
                return Err(bad(format!("index out of range in {line:?}")));
            }
            columns[d - 1].push((t - 1, w));
        }
        Self::from_columns(vocabulary, doc_ids, columns)
    }

    /// Dense terms × documents view with 3-decimal weights.
    pub fn write_dense_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["term".to_string()];
        header.extend(self.doc_ids.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.n_terms() {
            let mut row = vec![self.vocabulary.display(t).to_string()];
            row.extend((0..self.n_docs()).map(|d| format!("{:.3}", self.get(t, d))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `ordinal,stem,display,df`
    pub fn write_vocabulary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ordinal", "stem", "display", "df"])?;
        for t in 0..self.n_terms() {
            w.write_record([
                t.to_string(),
                self.vocabulary.stem(t).to_string(),
                self.vocabulary.display(t).to_string(),
                self.vocabulary.doc_freq(t).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_vocabulary_csv(path: &Path) -> Result<Vocabulary> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for row in r.records() {
            let row = row?;
            let df = row[3].parse().map_err(|e| Error::Artifact {
                path: path.to_path_buf(),
                message: format!("bad df: {e}"),
            })?;
            entries.push((row[1].to_string(), row[2].to_string(), df));
        }
        Ok(Vocabulary::new(entries))
    }

    pub fn write(&self, matrix: &Path, vocabulary: &Path) -> Result<()> {
        fs::write(matrix, self.to_matrix_market())?;
        self.write_vocabulary_csv(vocabulary)
    }
}

fn token_counts(doc: &Document) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in &doc.tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Raw count of `term` over the document's token count.
pub fn term_frequency(term: &str, doc: &Document) -> Result<f64> {
    if doc.tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let count = doc.tokens.iter().filter(|t| *t == term).count();
    Ok(count as f64 / doc.tokens.len() as f64)
}

/// log2(N / df).
pub fn inverse_document_frequency(term: &str, corpus: &[Document]) -> Result<f64> {
    let df = corpus
        .iter()
        .filter(|d| d.tokens.iter().any(|t| t == term))
        .count();
    if df == 0 {
        return Err(Error::TermNotInCorpus(term.to_string()));
    }
    Ok((corpus.len() as f64 / df as f64).log2())
}

pub fn build_tfidf_matrix(corpus: &[Document]) -> Result<TermDocMatrix> {
    build_tfidf_matrix_with(corpus, 1)
}

/// Builds the tf-idf matrix keeping stems that occur in at least `min_df`
/// documents. Term frequencies are always normalized by the full token count.
pub fn build_tfidf_matrix_with(corpus: &[Document], min_df: usize) -> Result<TermDocMatrix> {
    let empty: Vec<String> = corpus
        .iter()
        .filter(|d| d.tokens.is_empty())
        .map(|d| d.id.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyDocuments(empty));
    }

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let forms = display_forms(corpus);
    let vocabulary = Vocabulary::new(
        df.iter()
            .filter(|&(_, &c)| c >= min_df.max(1))
            .map(|(&stem, &c)| {
                let disp = forms.get(stem).cloned().unwrap_or_else(|| stem.to_string());
                (stem.to_string(), disp, c)
            })
            .collect(),
    );

    let n = corpus.len() as f64;
    let columns = corpus
        .par_iter()
        .map(|doc| {
            let len = doc.tokens.len() as f64;
            let mut col: Vec<(usize, f64)> = token_counts(doc)
                .into_iter()
                .filter_map(|(t, c)| {
                    let ord = vocabulary.ordinal(t)?;
                    let idf = (n / vocabulary.doc_freq(ord) as f64).log2();
                    let w = c as f64 / len * idf;
                    (w > 0.0).then_some((ord, w))
                })
                .collect();
            col.sort_by_key(|&(t, _)| t);
            col
        })
        .collect();

    Ok(TermDocMatrix {
        vocabulary,
        doc_ids: corpus.iter().map(|d| d.id.clone()).collect(),
        columns,
    })
}
