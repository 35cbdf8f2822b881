//! Staged pipeline with on-disk artifacts.
//!
//! Every stage reads its inputs from the output directory, writes its
//! artifacts there and records input, config and output hashes in
//! `manifest.json`. A stage whose inputs and config hash are unchanged, and
//! whose outputs are intact, is skipped.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    default_stopwords, load_corpus, load_stopwords, CorpusFormat, Document, PatternSet,
    Preprocessor, SpellingDictionary,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    group_correlation, heterophily_fraction, nmi_with, write_heterophily_csv, write_nmi_csv,
    Labeling, NmiNormalization, NmiRow,
};
use crate::extraction::{ExtractionConfig, ExtractionResult, TabuParams, MISC_LABEL};
use crate::lsa::{
    factor_with_selection, read_embeddings_csv, write_embeddings_csv, write_singular_values_csv,
    RankSelection,
};
use crate::merge::{extract_plan, merge_communities, random_partition, write_merge_report, PartitionPlan};
use crate::simgraph::{build_graph, GraphMeta, SimilarityGraph};
use crate::vectorize::{build_tfidf_matrix_with, TermDocMatrix};

pub const MANIFEST_SCHEMA_VERSION: &str = "1.0.0";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const DOCUMENTS: &str = "documents.jsonl";
pub const TFIDF: &str = "tfidf.mtx";
pub const VOCABULARY: &str = "vocabulary.csv";
pub const DOC_INDEX: &str = "doc_index.csv";
pub const TFIDF_DENSE: &str = "tfidf_dense.csv";
pub const EMBEDDINGS: &str = "embeddings.csv";
pub const SINGULAR_VALUES: &str = "singular_values.csv";
pub const GRAPH_EDGES: &str = "graph_edges.csv";
pub const GRAPH_META: &str = "graph.json";
pub const PARTITION_PLAN: &str = "partition_plan.json";
pub const EXTRACTION: &str = "extraction.json";
pub const COMMUNITIES: &str = "communities.json";
pub const MERGE_REPORT: &str = "merge_report.csv";
pub const GCM: &str = "gcm.csv";
pub const HETEROPHILY: &str = "heterophily.csv";
pub const GCM_TAGS: &str = "gcm_tags.csv";
pub const HETEROPHILY_TAGS: &str = "heterophily_tags.csv";
pub const NMI: &str = "nmi.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Vectorize,
    Embed,
    Graph,
    Extract,
    Merge,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Vectorize,
        Stage::Embed,
        Stage::Graph,
        Stage::Extract,
        Stage::Merge,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Vectorize => "vectorize",
            Stage::Embed => "embed",
            Stage::Graph => "graph",
            Stage::Extract => "extract",
            Stage::Merge => "merge",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Upstream artifacts and the stage that produces each.
    fn inputs(self) -> &'static [(Stage, &'static str)] {
        match self {
            Stage::Ingest => &[],
            Stage::Vectorize => &[(Stage::Ingest, DOCUMENTS)],
            Stage::Embed => &[
                (Stage::Vectorize, TFIDF),
                (Stage::Vectorize, VOCABULARY),
                (Stage::Vectorize, DOC_INDEX),
            ],
            Stage::Graph => &[(Stage::Embed, EMBEDDINGS)],
            Stage::Extract => &[(Stage::Graph, GRAPH_EDGES), (Stage::Graph, GRAPH_META)],
            Stage::Merge => &[
                (Stage::Graph, GRAPH_EDGES),
                (Stage::Graph, GRAPH_META),
                (Stage::Extract, EXTRACTION),
            ],
            Stage::Evaluate => &[
                (Stage::Ingest, DOCUMENTS),
                (Stage::Embed, EMBEDDINGS),
                (Stage::Graph, GRAPH_EDGES),
                (Stage::Graph, GRAPH_META),
                (Stage::Merge, COMMUNITIES),
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config("stage", format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorizeSection {
    pub min_df: usize,
    /// Dense CSV view is written only when terms × documents is at most this.
    pub dense_csv_max_cells: usize,
}

impl Default for VectorizeSection {
    fn default() -> Self {
        VectorizeSection {
            min_df: 1,
            dense_csv_max_cells: 250_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSection {
    pub energy_fraction: f64,
    pub rank_cap: usize,
    pub rank: Option<usize>,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let r = RankSelection::default();
        EmbedSection {
            energy_fraction: r.energy_fraction,
            rank_cap: r.cap,
            rank: r.rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub tau: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection { tau: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub chunk_size: usize,
    pub min_residual: usize,
    pub restarts: usize,
    pub tenure: Option<usize>,
    pub stall_limit: Option<usize>,
    pub max_moves: Option<usize>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let e = ExtractionConfig::default();
        ExtractSection {
            chunk_size: 200,
            min_residual: e.min_residual,
            restarts: e.restarts,
            tenure: None,
            stall_limit: None,
            max_moves: None,
        }
    }
}

impl ExtractSection {
    pub fn extraction_config(&self) -> ExtractionConfig {
        ExtractionConfig {
            min_residual: self.min_residual,
            restarts: self.restarts,
            tabu: TabuParams {
                tenure: self.tenure,
                stall_limit: self.stall_limit,
                max_moves: self.max_moves,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeSection {
    pub rho: f64,
}

impl Default for MergeSection {
    fn default() -> Self {
        MergeSection {
            rho: crate::merge::DEFAULT_MERGE_RATIO,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Extra partition-and-extract runs, each compared with the main run by
    /// NMI.
    pub stability_runs: usize,
    pub nmi_normalization: NmiNormalization,
}

/// Parameter grid for `sweep`; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub tau: Vec<f64>,
    pub chunk_size: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub patterns: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub vectorize: VectorizeSection,
    #[serde(default)]
    pub embed: EmbedSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub merge: MergeSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    42
}

/// Splits `key=value`, parsing the value as a TOML literal and falling back
/// to a bare string.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(spec, "empty key"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path.join("."), format!("`{p}` is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl PipelineConfig {
    /// A config with every default and the given corpus path.
    pub fn new(corpus: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            corpus: corpus.into(),
            dictionary: None,
            stopwords: None,
            patterns: None,
            output_dir: output_dir.into(),
            seed: default_seed(),
            vectorize: Default::default(),
            embed: Default::default(),
            graph: Default::default(),
            extract: Default::default(),
            merge: Default::default(),
            evaluate: Default::default(),
            sweep: Default::default(),
        }
    }

    /// Parses TOML text, applies `key=value` overrides and resolves relative
    /// paths against `base_dir`.
    pub fn parse(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, overrides, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_dir);
        for p in [&mut self.dictionary, &mut self.stopwords, &mut self.patterns]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Field-level checks, including existence of referenced input files.
    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if !(0.0..1.0).contains(&g.tau) {
            return Err(Error::config("graph.tau", format!("{} outside [0,1)", g.tau)));
        }
        if !(self.merge.rho > 0.0 && self.merge.rho <= 1.0) {
            return Err(Error::config("merge.rho", format!("{} outside (0,1]", self.merge.rho)));
        }
        if self.extract.chunk_size < 2 {
            return Err(Error::config("extract.chunk_size", "must be at least 2"));
        }
        if self.extract.restarts == 0 {
            return Err(Error::config("extract.restarts", "must be at least 1"));
        }
        let e = &self.embed;
        if !(e.energy_fraction > 0.0 && e.energy_fraction <= 1.0) {
            return Err(Error::config("embed.energy_fraction", "must lie in (0,1]"));
        }
        if e.rank_cap == 0 {
            return Err(Error::config("embed.rank_cap", "must be positive"));
        }
        if e.rank == Some(0) {
            return Err(Error::config("embed.rank", "must be positive"));
        }
        if self.sweep.tau.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(Error::config("sweep.tau", "values must lie in [0,1)"));
        }
        if self.sweep.chunk_size.iter().any(|&c| c < 2) {
            return Err(Error::config("sweep.chunk_size", "values must be at least 2"));
        }
        let files = [
            ("corpus", Some(&self.corpus)),
            ("dictionary", self.dictionary.as_ref()),
            ("stopwords", self.stopwords.as_ref()),
            ("patterns", self.patterns.as_ref()),
        ];
        for (field, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn rank_selection(&self) -> RankSelection {
        RankSelection {
            energy_fraction: self.embed.energy_fraction,
            cap: self.embed.rank_cap,
            rank: self.embed.rank,
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    /// Config subset a stage depends on, serialized for hashing.
    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        use serde_json::json;
        match stage {
            Stage::Ingest => json!({}),
            Stage::Vectorize => json!(self.vectorize),
            Stage::Embed => json!({ "embed": self.embed, "seed": self.seed }),
            Stage::Graph => json!(self.graph),
            Stage::Extract => json!({ "extract": self.extract, "seed": self.seed }),
            Stage::Merge => json!(self.merge),
            Stage::Evaluate => json!({
                "evaluate": self.evaluate,
                "extract": self.extract,
                "merge": self.merge,
                "seed": self.seed,
            }),
        }
    }

    /// External files read by ingest, keyed by role.
    fn external_inputs(&self) -> Vec<(&'static str, &Path)> {
        let mut v = vec![("corpus", self.corpus.as_path())];
        if let Some(p) = &self.dictionary {
            v.push(("dictionary", p));
        }
        if let Some(p) = &self.stopwords {
            v.push(("stopwords", p));
        }
        if let Some(p) = &self.patterns {
            v.push(("patterns", p));
        }
        v
    }
}

/// One stage's provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_ms: u64,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION.to_string(),
            stages: BTreeMap::new(),
        }
    }
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// What a stage call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// `false` when the manifest showed the stage up to date.
    pub ran: bool,
    pub wall_time_ms: u64,
}

/// Runs one stage, or skips it when the manifest shows it up to date.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageOutcome> {
    run_stage_inner(stage, cfg).map_err(|e| match e {
        e @ (Error::MissingArtifact { .. } | Error::Config { .. }) => e,
        e => Error::Stage {
            stage: stage.name().to_string(),
            source: Box::new(e),
        },
    })
}

fn run_stage_inner(stage: Stage, cfg: &PipelineConfig) -> Result<StageOutcome> {
    let dir = &cfg.output_dir;
    let mut inputs = BTreeMap::new();
    for (producer, name) in stage.inputs() {
        let path = cfg.artifact(name);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                stage: producer.name().to_string(),
                artifact: path,
            });
        }
        inputs.insert(name.to_string(), hash_file(&path)?);
    }
    if stage == Stage::Ingest {
        for (role, path) in cfg.external_inputs() {
            inputs.insert(role.to_string(), hash_file(path)?);
        }
    }
    let config_hash = sha256_hex(cfg.stage_config(stage).to_string().as_bytes());

    fs::create_dir_all(dir)?;
    let mut manifest = Manifest::load(dir)?;
    if let Some(prev) = manifest.stages.get(stage.name()) {
        if prev.inputs == inputs && prev.config_hash == config_hash && outputs_intact(dir, &prev.outputs)? {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome {
                stage,
                ran: false,
                wall_time_ms: 0,
            });
        }
    }

    let start = Instant::now();
    let written = match stage {
        Stage::Ingest => ingest(cfg)?,
        Stage::Vectorize => vectorize(cfg)?,
        Stage::Embed => embed(cfg)?,
        Stage::Graph => graph(cfg)?,
        Stage::Extract => extract(cfg)?,
        Stage::Merge => merge(cfg)?,
        Stage::Evaluate => evaluate(cfg)?,
    };
    let wall_time_ms = start.elapsed().as_millis() as u64;
    let mut outputs = BTreeMap::new();
    for name in written {
        outputs.insert(name.clone(), hash_file(&dir.join(&name))?);
    }
    manifest.stages.insert(
        stage.name().to_string(),
        StageRecord {
            inputs,
            config_hash,
            seed: cfg.seed,
            wall_time_ms,
            outputs,
        },
    );
    manifest.save(dir)?;
    log::info!("{stage}: done in {wall_time_ms} ms");
    Ok(StageOutcome {
        stage,
        ran: true,
        wall_time_ms,
    })
}

fn outputs_intact(dir: &Path, outputs: &BTreeMap<String, String>) -> Result<bool> {
    for (name, hash) in outputs {
        let path = dir.join(name);
        if !path.is_file() || &hash_file(&path)? != hash {
            return Ok(false);
        }
    }
    Ok(true)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Artifact {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn preprocessor(cfg: &PipelineConfig) -> Result<Preprocessor> {
    let dictionary = match &cfg.dictionary {
        Some(p) => SpellingDictionary::from_csv(p)?,
        None => SpellingDictionary::default(),
    };
    let patterns = match &cfg.patterns {
        Some(p) => PatternSet::from_file(p)?,
        None => PatternSet::default(),
    };
    let stopwords = match &cfg.stopwords {
        Some(p) => load_stopwords(p)?,
        None => default_stopwords(),
    };
    Ok(Preprocessor {
        dictionary,
        patterns,
        stopwords,
    })
}

fn ingest(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let mut docs = load_corpus(&cfg.corpus, CorpusFormat::from_path(&cfg.corpus))?;
    preprocessor(cfg)?.process_all(&mut docs);
    let mut out = Vec::new();
    for d in &docs {
        serde_json::to_writer(&mut out, d)?;
        out.push(b'\n');
    }
    fs::File::create(cfg.artifact(DOCUMENTS))?.write_all(&out)?;
    Ok(vec![DOCUMENTS.to_string()])
}

fn vectorize(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let docs = read_documents(&cfg.artifact(DOCUMENTS))?;
    let x = build_tfidf_matrix_with(&docs, cfg.vectorize.min_df)?;
    x.write(&cfg.artifact(TFIDF), &cfg.artifact(VOCABULARY))?;
    let mut w = csv::Writer::from_path(cfg.artifact(DOC_INDEX))?;
    w.write_record(["index", "id"])?;
    for (i, id) in x.doc_ids.iter().enumerate() {
        w.write_record([i.to_string(), id.clone()])?;
    }
    w.flush()?;
    let mut written = vec![TFIDF.to_string(), VOCABULARY.to_string(), DOC_INDEX.to_string()];
    let dense = cfg.artifact(TFIDF_DENSE);
    if x.n_terms() * x.n_docs() <= cfg.vectorize.dense_csv_max_cells {
        x.write_dense_csv(&dense)?;
        written.push(TFIDF_DENSE.to_string());
    } else if dense.exists() {
        fs::remove_file(dense)?;
    }
    Ok(written)
}

fn read_doc_index(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records().map(|row| Ok(row?[1].to_string())).collect()
}

pub fn read_tfidf(cfg: &PipelineConfig) -> Result<TermDocMatrix> {
    let vocab = TermDocMatrix::read_vocabulary_csv(&cfg.artifact(VOCABULARY))?;
    let ids = read_doc_index(&cfg.artifact(DOC_INDEX))?;
    TermDocMatrix::parse_matrix_market(&fs::read_to_string(cfg.artifact(TFIDF))?, vocab, ids)
}

fn embed(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let x = read_tfidf(cfg)?;
    let factors = factor_with_selection(&x, &cfg.rank_selection(), cfg.seed)?;
    write_embeddings_csv(&cfg.artifact(EMBEDDINGS), &x.doc_ids, &factors.doc_factors)?;
    write_singular_values_csv(&cfg.artifact(SINGULAR_VALUES), &factors.singular_values)?;
    Ok(vec![EMBEDDINGS.to_string(), SINGULAR_VALUES.to_string()])
}

fn graph(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let (ids, emb) = read_embeddings_csv(&cfg.artifact(EMBEDDINGS))?;
    let g = build_graph(&emb, &ids, cfg.graph.tau)?;
    let meta = GraphMeta {
        k: emb.ncols(),
        seed: cfg.seed,
    };
    g.write(&cfg.artifact(GRAPH_EDGES), &cfg.artifact(GRAPH_META), &meta)?;
    Ok(vec![GRAPH_EDGES.to_string(), GRAPH_META.to_string()])
}

fn read_graph(cfg: &PipelineConfig) -> Result<SimilarityGraph> {
    Ok(SimilarityGraph::read(&cfg.artifact(GRAPH_EDGES), &cfg.artifact(GRAPH_META))?.0)
}

/// Per-partition extraction results, in partition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResults {
    pub partitions: Vec<ExtractionResult>,
}

fn extract(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let g = read_graph(cfg)?;
    let plan = random_partition(g.node_ids(), cfg.extract.chunk_size, cfg.seed);
    let results = extract_plan(&g, &plan, &cfg.extract.extraction_config(), cfg.seed)?;
    write_json(&cfg.artifact(PARTITION_PLAN), &plan)?;
    write_json(&cfg.artifact(EXTRACTION), &PartitionResults { partitions: results })?;
    Ok(vec![PARTITION_PLAN.to_string(), EXTRACTION.to_string()])
}

fn merge(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let g = read_graph(cfg)?;
    let parts: PartitionResults = read_json(&cfg.artifact(EXTRACTION))?;
    let mut out = merge_communities(&g, &parts.partitions, cfg.merge.rho)?;
    out.result.config.seed = cfg.seed;
    out.result.config.chunk_size = Some(cfg.extract.chunk_size);
    write_json(&cfg.artifact(COMMUNITIES), &out.result)?;
    write_merge_report(&cfg.artifact(MERGE_REPORT), &out.decisions)?;
    Ok(vec![COMMUNITIES.to_string(), MERGE_REPORT.to_string()])
}

pub fn read_communities(cfg: &PipelineConfig) -> Result<ExtractionResult> {
    read_json(&cfg.artifact(COMMUNITIES))
}

/// First tag of every document, or `None` if any document is untagged.
fn tag_labels(docs: &[Document]) -> Option<Labeling> {
    docs.iter()
        .map(|d| {
            let tag = d.tags.as_ref()?.first()?;
            Some((d.id.clone(), tag.clone()))
        })
        .collect()
}

/// Full partition-extract-merge run on `g` with master seed `seed`.
fn partitioned_run(g: &SimilarityGraph, cfg: &PipelineConfig, seed: u64) -> Result<ExtractionResult> {
    let plan: PartitionPlan = random_partition(g.node_ids(), cfg.extract.chunk_size, seed);
    let results = extract_plan(g, &plan, &cfg.extract.extraction_config(), seed)?;
    Ok(merge_communities(g, &results, cfg.merge.rho)?.result)
}

fn evaluate(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let docs = read_documents(&cfg.artifact(DOCUMENTS))?;
    let (ids, emb) = read_embeddings_csv(&cfg.artifact(EMBEDDINGS))?;
    let corr = build_graph(&emb, &ids, 0.0)?;
    let result = read_communities(cfg)?;
    let labels = result.labels();
    let mut written = Vec::new();

    let mut write_group_reports = |labeling: &Labeling, gcm_name: &str, het_name: &str| -> Result<()> {
        let gcm = group_correlation(&corr, labeling)?;
        gcm.write_csv(&cfg.artifact(gcm_name))?;
        written.push(gcm_name.to_string());
        let claimed = gcm.without(MISC_LABEL);
        let het = if claimed.len() >= 2 {
            heterophily_fraction(&claimed)?
        } else {
            Vec::new()
        };
        write_heterophily_csv(&cfg.artifact(het_name), &het)?;
        written.push(het_name.to_string());
        Ok(())
    };
    write_group_reports(&labels, GCM, HETEROPHILY)?;
    let tags = tag_labels(&docs);
    if let Some(tags) = &tags {
        write_group_reports(tags, GCM_TAGS, HETEROPHILY_TAGS)?;
    }

    let norm = cfg.evaluate.nmi_normalization;
    let mut rows = Vec::new();
    if let Some(tags) = &tags {
        rows.push(NmiRow {
            run_a: "extraction".into(),
            run_b: "tags".into(),
            nmi: nmi_with(&labels, tags, norm)?,
        });
    }
    if cfg.evaluate.stability_runs > 0 {
        let g = read_graph(cfg)?;
        let name = |s: u64| format!("seed{s}");
        let mut runs = vec![(name(cfg.seed), labels.clone())];
        for i in 1..=cfg.evaluate.stability_runs as u64 {
            let seed = cfg.seed.wrapping_add(i);
            runs.push((name(seed), partitioned_run(&g, cfg, seed)?.labels()));
        }
        for a in 0..runs.len() {
            for b in a + 1..runs.len() {
                rows.push(NmiRow {
                    run_a: runs[a].0.clone(),
                    run_b: runs[b].0.clone(),
                    nmi: nmi_with(&runs[a].1, &runs[b].1, norm)?,
                });
            }
        }
    }
    write_nmi_csv(&cfg.artifact(NMI), &rows)?;
    written.push(NMI.to_string());
    Ok(written)
}

/// Headline numbers of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub documents: usize,
    pub vocabulary: usize,
    pub rank: usize,
    pub nodes: usize,
    pub edges: usize,
    pub partitions: usize,
    pub communities: usize,
    pub residual: usize,
    pub timings_ms: Vec<(String, u64)>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "documents    {}", self.documents)?;
        writeln!(f, "vocabulary   {}", self.vocabulary)?;
        writeln!(f, "rank k       {}", self.rank)?;
        writeln!(f, "nodes N      {}", self.nodes)?;
        writeln!(f, "edges M      {}", self.edges)?;
        writeln!(f, "partitions   {}", self.partitions)?;
        writeln!(f, "communities  {}", self.communities)?;
        writeln!(f, "residual     {}", self.residual)?;
        for (stage, ms) in &self.timings_ms {
            writeln!(f, "  {stage:<10} {ms} ms")?;
        }
        Ok(())
    }
}

/// Summary assembled from the artifacts currently on disk.
pub fn summarize(cfg: &PipelineConfig, outcomes: &[StageOutcome]) -> Result<RunSummary> {
    let x = read_tfidf(cfg)?;
    let (g, meta) = SimilarityGraph::read(&cfg.artifact(GRAPH_EDGES), &cfg.artifact(GRAPH_META))?;
    let plan: PartitionPlan = read_json(&cfg.artifact(PARTITION_PLAN))?;
    let result = read_communities(cfg)?;
    Ok(RunSummary {
        documents: x.n_docs(),
        vocabulary: x.n_terms(),
        rank: meta.k,
        nodes: g.size(),
        edges: g.edge_count(),
        partitions: plan.len(),
        communities: result.communities.len(),
        residual: result.residual.len(),
        timings_ms: outcomes
            .iter()
            .map(|o| (o.stage.name().to_string(), o.wall_time_ms))
            .collect(),
    })
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunSummary> {
    let outcomes = Stage::ALL
        .into_iter()
        .map(|s| run_stage(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    summarize(cfg, &outcomes)
}

/// Output directory name for one grid point.
pub fn sweep_label(tau: f64, chunk_size: usize) -> String {
    format!("tau{tau}_c{chunk_size}")
}

/// Runs the full pipeline once per `(τ, c)` combination, each in its own
/// subdirectory of `output_dir/sweep`.
pub fn sweep(cfg: &PipelineConfig) -> Result<Vec<(String, RunSummary)>> {
    let taus = if cfg.sweep.tau.is_empty() { vec![cfg.graph.tau] } else { cfg.sweep.tau.clone() };
    let chunks = if cfg.sweep.chunk_size.is_empty() {
        vec![cfg.extract.chunk_size]
    } else {
        cfg.sweep.chunk_size.clone()
    };
    let mut out = Vec::new();
    for &tau in &taus {
        for &c in &chunks {
            let label = sweep_label(tau, c);
            let mut point = cfg.clone();
            point.graph.tau = tau;
            point.extract.chunk_size = c;
            point.output_dir = cfg.output_dir.join("sweep").join(&label);
            out.push((label, run_all(&point)?));
        }
    }
    Ok(out)
}
