//! Community extraction on document-similarity networks.
//!
//! The pipeline turns a free-text corpus into a weighted network and pulls
//! tightly-knit document groups out of it one at a time:
//!
//! 1. [`corpus`]: loading and normalizing narratives (dates, doses and times
//!    collapsed to placeholder words, Porter stemming).
//! 2. [`vectorize`]: length-normalized tf with base-2 idf, stored sparse and
//!    document-major.
//! 3. [`lsa`]: truncated SVD of the term-document matrix; document
//!    embeddings are the rows of the right singular factor.
//! 4. [`simgraph`]: Pearson correlation between embedding rows, cut at a
//!    threshold, gives the adjacency matrix.
//! 5. [`extraction`]: tabu search over membership strings maximizes the
//!    extraction objective; each extracted set is removed and the search
//!    repeats until a small residual remains.
//! 6. [`merge`]: random chunking for large corpora, with communities from
//!    different chunks fused when their cross density is close to both
//!    internal densities.
//! 7. [`evaluate`]: group correlation matrices, heterophily fractions and
//!    NMI, plus a planted-block generator for verification.
//!
//! [`pipeline`] wires the stages together with on-disk artifacts and a
//! manifest so that every stage can be rerun or resumed.

pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod extraction;
pub mod lsa;
pub mod merge;
pub mod pipeline;
pub mod simgraph;
pub mod stem;
pub mod synth;
pub mod vectorize;

pub use error::{Error, Result};
