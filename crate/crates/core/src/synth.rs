//! Synthetic corpora with planted topics, for end-to-end runs where no real
//! corpus is available.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DEFAULT_STOPWORDS};
use crate::error::{Error, Result};
use crate::extraction::MISC_LABEL;
use crate::stem::porter_stem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub background_docs: usize,
    /// Distinct words owned by each topic.
    pub topic_vocabulary: usize,
    /// Words drawn by every document regardless of topic.
    pub shared_vocabulary: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a word of a topic document comes from its topic.
    pub topic_share: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            topics: 5,
            docs_per_topic: 90,
            background_docs: 50,
            topic_vocabulary: 40,
            shared_vocabulary: 200,
            min_words: 30,
            max_words: 60,
            topic_share: 0.6,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn n_docs(&self) -> usize {
        self.topics * self.docs_per_topic + self.background_docs
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.docs_per_topic < 2 {
            return Err(Error::config("topics", "need at least one topic of two documents"));
        }
        if self.topic_vocabulary == 0 || self.shared_vocabulary == 0 {
            return Err(Error::config("topic_vocabulary", "vocabularies must be non-empty"));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::config("min_words", "need 0 < min_words <= max_words"));
        }
        if !(0.0..=1.0).contains(&self.topic_share) {
            return Err(Error::config("topic_share", "must lie in [0,1]"));
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "o", "u", "i"];

/// `count` letter-only pseudo-words with pairwise distinct stems, none of
/// them a stopword.
fn pseudo_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            w.push_str(VOWELS.choose(rng).expect("non-empty"));
        }
        w.push_str(ONSETS.choose(rng).expect("non-empty"));
        let stem = porter_stem(&w);
        if DEFAULT_STOPWORDS.contains(&stem.as_str()) || !taken.insert(stem) {
            continue;
        }
        out.push(w);
    }
    out
}

/// Topic documents are tagged `t1, t2, …`; background documents `misc`.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = BTreeSet::new();
    let shared = pseudo_words(&mut rng, spec.shared_vocabulary, &mut taken);
    let topics: Vec<Vec<String>> = (0..spec.topics)
        .map(|_| pseudo_words(&mut rng, spec.topic_vocabulary, &mut taken))
        .collect();

    let mut docs = Vec::with_capacity(spec.n_docs());
    let mut plan: Vec<Option<usize>> = (0..spec.topics)
        .flat_map(|t| std::iter::repeat_n(Some(t), spec.docs_per_topic))
        .collect();
    plan.extend(std::iter::repeat_n(None, spec.background_docs));
    for (i, topic) in plan.into_iter().enumerate() {
        let len = rng.random_range(spec.min_words..=spec.max_words);
        let words: Vec<&str> = (0..len)
            .map(|_| {
                let pool = match topic {
                    Some(t) if rng.random_bool(spec.topic_share) => &topics[t],
                    _ => &shared,
                };
                pool.choose(&mut rng).expect("non-empty").as_str()
            })
            .collect();
        let mut doc = Document::new(format!("s{i:04}"), words.join(" "));
        doc.tags = Some(vec![topic.map_or_else(|| MISC_LABEL.to_string(), |t| format!("t{}", t + 1))]);
        docs.push(doc);
    }
    Ok(docs)
}

/// One JSON object per line with `id`, `text` and `tags`.
pub fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = Vec::new();
    for d in docs {
        let rec = serde_json::json!({ "id": d.id, "text": d.raw_text, "tags": d.tags });
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, CorpusFormat, Preprocessor};

    #[test]
    fn deterministic_and_tagged() {
        let spec = SynthSpec { topics: 2, docs_per_topic: 5, background_docs: 3, ..Default::default() };
        let a = generate_corpus(&spec).unwrap();
        assert_eq!(a, generate_corpus(&spec).unwrap());
        assert_eq!(a.len(), 13);
        assert_eq!(a[0].tags.as_deref(), Some(&["t1".to_string()][..]));
        assert_eq!(a[12].tags.as_deref(), Some(&["misc".to_string()][..]));
    }

    #[test]
    fn words_survive_preprocessing() {
        let spec = SynthSpec { topics: 2, docs_per_topic: 4, background_docs: 0, ..Default::default() };
        let mut docs = generate_corpus(&spec).unwrap();
        let lens: Vec<usize> = docs.iter().map(|d| d.raw_text.split(' ').count()).collect();
        Preprocessor::default().process_all(&mut docs);
        for (d, n) in docs.iter().zip(lens) {
            assert_eq!(d.tokens.len(), n);
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = generate_corpus(&SynthSpec { topics: 1, docs_per_topic: 3, background_docs: 1, ..Default::default() }).unwrap();
        write_jsonl(&path, &docs).unwrap();
        let back = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[1].raw_text, docs[1].raw_text);
        assert_eq!(back[3].tags, docs[3].tags);
    }
}
