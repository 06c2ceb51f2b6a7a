//! Class-based TF-IDF topic descriptions.
//!
//! Each cluster's documents are concatenated into one pseudo-document and
//! terms are weighted by `W(x, c) = tf(x, c) · log(1 + A / f(x))`, where
//! `tf` is L1-normalised within the cluster, `f(x)` is the term's count over
//! all clusters and `A` is the mean token count per cluster. Top terms and
//! representative documents feed a prompt file for an external labeler; the
//! resulting names are read back from a JSONL response file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::OUTLIER;
use crate::corpus::Corpus;

pub const TOP_TERMS: usize = 10;
pub const REPRESENTATIVE_DOCS: usize = 5;
/// Characters kept from each representative text in a prompt.
pub const PROMPT_TEXT_CHARS: usize = 300;

/// Common English function words, available through
/// [`TokenizerConfig::english`].
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are",
    "as", "at", "be", "been", "before", "being", "below", "between", "both", "but", "by", "can",
    "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from",
    "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how",
    "if", "in", "into", "is", "it", "its", "itself", "me", "more", "most", "my", "no", "nor",
    "not", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "would", "you", "your", "yours",
];

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("cluster {0} has no tokens")]
    EmptyCluster(i32),
    #[error("unknown topic {0}")]
    UnknownTopic(i32),
    #[error("no clustered documents")]
    NoClusters,
    #[error("{labels} labels for {docs} documents")]
    LengthMismatch { docs: usize, labels: usize },
    #[error("invalid labeling configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub stopwords: BTreeSet<String>,
    /// Also emit adjacent-word pairs ("water supply").
    pub bigrams: bool,
}

impl TokenizerConfig {
    pub fn english() -> Self {
        Self {
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            bigrams: false,
        }
    }
}

/// Lowercased alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, &TokenizerConfig::default())
}

pub fn tokenize_with(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .filter(|w| !cfg.stopwords.contains(w))
        .collect();
    if !cfg.bigrams || words.len() < 2 {
        return words;
    }
    let pairs: Vec<String> = words
        .windows(2)
        .map(|w| format!("{} {}", w[0], w[1]))
        .collect();
    let mut out = words;
    out.extend(pairs);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub tokenizer: TokenizerConfig,
    pub top_terms: usize,
    pub representative_docs: usize,
    /// Logarithm base in the IDF factor; rankings do not depend on it.
    pub log_base: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::english(),
            top_terms: TOP_TERMS,
            representative_docs: REPRESENTATIVE_DOCS,
            log_base: std::f64::consts::E,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<(), LabelingError> {
        if !(self.log_base > 1.0 && self.log_base.is_finite()) {
            return Err(LabelingError::InvalidConfig("log_base must be > 1".into()));
        }
        if self.top_terms == 0 {
            return Err(LabelingError::InvalidConfig(
                "top_terms must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Lexicographically ordered; a term's id is its index.
    pub terms: Vec<String>,
    /// Clustered documents containing the term.
    pub df: Vec<u64>,
    /// Count over all clusters (`f(x)`).
    pub total_frequency: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
            && self.df == other.df
            && self.total_frequency == other.total_frequency
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        if self.index.is_empty() && !self.terms.is_empty() {
            return self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok();
        }
        self.index.get(term).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTermWeights {
    pub vocabulary: Vocabulary,
    /// Cluster labels, ascending; row `i` of `tf` and `weights` belongs to `topics[i]`.
    pub topics: Vec<i32>,
    /// Mean token count per cluster.
    pub a: f64,
    pub token_counts: Vec<u64>,
    /// Sparse `(term id, tf)` rows sorted by term id.
    pub tf: Vec<Vec<(usize, f64)>>,
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl ClassTermWeights {
    fn row(&self, topic: i32) -> Result<usize, LabelingError> {
        self.topics
            .binary_search(&topic)
            .map_err(|_| LabelingError::UnknownTopic(topic))
    }

    pub fn weight(&self, topic: i32, term: &str) -> Result<f64, LabelingError> {
        let r = self.row(topic)?;
        Ok(self
            .vocabulary
            .id(term)
            .and_then(|id| {
                let row = &self.weights[r];
                row.binary_search_by_key(&id, |e| e.0)
                    .ok()
                    .map(|p| row[p].1)
            })
            .unwrap_or(0.0))
    }

    /// Highest-weight terms of `topic`, ties in lexicographic order.
    pub fn top_terms(&self, topic: i32, m: usize) -> Result<Vec<(String, f64)>, LabelingError> {
        let r = self.row(topic)?;
        let mut row = self.weights[r].clone();
        // Term ids are lexicographic, so the id breaks ties.
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(row
            .into_iter()
            .take(m)
            .map(|(id, w)| (self.vocabulary.terms[id].clone(), w))
            .collect())
    }
}

fn count_terms(tokens: &[String]) -> BTreeMap<&str, u64> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// c-TF-IDF over tokenized documents; documents labeled −1 are ignored.
pub fn ctfidf(
    doc_tokens: &[Vec<String>],
    labels: &[i32],
    log_base: f64,
) -> Result<ClassTermWeights, LabelingError> {
    if doc_tokens.len() != labels.len() {
        return Err(LabelingError::LengthMismatch {
            docs: doc_tokens.len(),
            labels: labels.len(),
        });
    }
    let topics: Vec<i32> = labels
        .iter()
        .filter(|&&l| l != OUTLIER)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if topics.is_empty() {
        return Err(LabelingError::NoClusters);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); topics.len()];
    for (i, l) in labels.iter().enumerate() {
        if let Ok(r) = topics.binary_search(l) {
            members[r].push(i);
        }
    }

    // Per cluster: term counts and document frequencies.
    type Tallies<'a> = (BTreeMap<&'a str, u64>, BTreeMap<&'a str, u64>);
    let per_cluster: Vec<Tallies> = members
        .par_iter()
        .map(|docs| {
            let mut counts = BTreeMap::new();
            let mut df = BTreeMap::new();
            for &d in docs {
                for (t, c) in count_terms(&doc_tokens[d]) {
                    *counts.entry(t).or_insert(0) += c;
                    *df.entry(t).or_insert(0) += 1;
                }
            }
            (counts, df)
        })
        .collect();
    for (r, (counts, _)) in per_cluster.iter().enumerate() {
        if counts.is_empty() {
            return Err(LabelingError::EmptyCluster(topics[r]));
        }
    }

    let mut global: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (counts, df) in &per_cluster {
        for (t, &c) in counts {
            let e = global.entry(t).or_insert((0, 0));
            e.0 += c;
            e.1 += df[t];
        }
    }
    let mut vocabulary = Vocabulary::default();
    for (i, (t, (f, df))) in global.iter().enumerate() {
        vocabulary.terms.push(t.to_string());
        vocabulary.total_frequency.push(*f);
        vocabulary.df.push(*df);
        vocabulary.index.insert(t.to_string(), i);
    }

    let token_counts: Vec<u64> = per_cluster.iter().map(|(c, _)| c.values().sum()).collect();
    let a = token_counts.iter().sum::<u64>() as f64 / topics.len() as f64;
    let ln_base = log_base.ln();
    let mut tf = Vec::with_capacity(topics.len());
    let mut weights = Vec::with_capacity(topics.len());
    for ((counts, _), &total) in per_cluster.iter().zip(&token_counts) {
        let mut tf_row = Vec::with_capacity(counts.len());
        let mut w_row = Vec::with_capacity(counts.len());
        for (t, &c) in counts {
            let id = vocabulary.index[*t];
            let tfv = c as f64 / total as f64;
            let fx = vocabulary.total_frequency[id] as f64;
            tf_row.push((id, tfv));
            w_row.push((id, tfv * (1.0 + a / fx).ln() / ln_base));
        }
        tf.push(tf_row);
        weights.push(w_row);
    }
    Ok(ClassTermWeights {
        vocabulary,
        topics,
        a,
        token_counts,
        tf,
        weights,
    })
}

/// Top `r` member documents by cosine similarity between their L1 term
/// frequencies and the topic's weight vector; ties go to the lower doc id.
pub fn representative_docs(
    doc_tokens: &[Vec<String>],
    labels: &[i32],
    weights: &ClassTermWeights,
    topic: i32,
    r: usize,
) -> Result<Vec<usize>, LabelingError> {
    let row = weights.row(topic)?;
    let w: HashMap<usize, f64> = weights.weights[row].iter().copied().collect();
    let w_norm = w.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = labels
        .par_iter()
        .enumerate()
        .filter(|(_, &l)| l == topic)
        .map(|(d, _)| {
            let counts = count_terms(&doc_tokens[d]);
            let total: u64 = counts.values().sum();
            if total == 0 || w_norm == 0.0 {
                return (0.0, d);
            }
            let mut dot = 0.0;
            let mut norm = 0.0;
            for (t, c) in counts {
                let tfv = c as f64 / total as f64;
                norm += tfv * tfv;
                if let Some(id) = weights.vocabulary.id(t) {
                    dot += tfv * w.get(&id).copied().unwrap_or(0.0);
                }
            }
            (dot / (norm.sqrt() * w_norm), d)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(r).map(|(_, d)| d).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_id: i32,
    pub top_terms: Vec<(String, f64)>,
    pub representative_doc_ids: Vec<usize>,
    pub auto_label: Option<String>,
    /// Unique documents in the topic.
    pub size: usize,
    /// Share of all usable records that fall in the topic.
    pub record_share: f64,
}

/// c-TF-IDF weights and one summary per cluster of `corpus`.
pub fn summarize(
    corpus: &Corpus,
    labels: &[i32],
    cfg: &LabelingConfig,
) -> Result<(ClassTermWeights, Vec<TopicSummary>), LabelingError> {
    cfg.validate()?;
    let tokens: Vec<Vec<String>> = corpus
        .documents
        .par_iter()
        .map(|d| tokenize_with(&d.normalized_text, &cfg.tokenizer))
        .collect();
    let weights = ctfidf(&tokens, labels, cfg.log_base)?;
    let total_records = corpus.total_records.max(1) as f64;
    let mut summaries = Vec::with_capacity(weights.topics.len());
    for &topic in &weights.topics {
        let (size, records) = labels
            .iter()
            .zip(&corpus.documents)
            .filter(|(&l, _)| l == topic)
            .fold((0usize, 0usize), |(s, r), (_, d)| {
                (s + 1, r + d.multiplicity())
            });
        summaries.push(TopicSummary {
            topic_id: topic,
            top_terms: weights.top_terms(topic, cfg.top_terms)?,
            representative_doc_ids: representative_docs(
                &tokens,
                labels,
                &weights,
                topic,
                cfg.representative_docs,
            )?,
            auto_label: None,
            size,
            record_share: records as f64 / total_records,
        });
    }
    Ok((weights, summaries))
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((cut, _)) => format!("{}…", &text[..cut]),
        None => text.to_string(),
    }
}

/// Renders the labeling prompt for one topic:
///
/// ```text
/// Give a short descriptive name (at most six words) to a topic found in development-aid project descriptions.
/// Keywords: <k1>, <k2>, ...
/// Representative descriptions:
/// 1. <text, at most 300 characters then "…">
/// ...
/// Topic name:
/// ```
pub fn build_label_prompt(summary: &TopicSummary, corpus: &Corpus) -> String {
    let keywords: Vec<&str> = summary
        .top_terms
        .iter()
        .take(TOP_TERMS)
        .map(|(t, _)| t.as_str())
        .collect();
    let mut prompt = String::from(
        "Give a short descriptive name (at most six words) to a topic found in development-aid project descriptions.\n",
    );
    prompt.push_str("Keywords: ");
    prompt.push_str(&keywords.join(", "));
    prompt.push_str("\nRepresentative descriptions:\n");
    for (i, &d) in summary
        .representative_doc_ids
        .iter()
        .take(REPRESENTATIVE_DOCS)
        .enumerate()
    {
        let text = corpus
            .documents
            .get(d)
            .map_or("", |doc| doc.raw_text.as_str());
        prompt.push_str(&format!(
            "{}. {}\n",
            i + 1,
            truncate_chars(text, PROMPT_TEXT_CHARS)
        ));
    }
    prompt.push_str("Topic name:");
    prompt
}

#[derive(Serialize, Deserialize)]
struct PromptLine<'a> {
    topic_id: i32,
    prompt: &'a str,
}

#[derive(Serialize, Deserialize)]
struct LabelLine {
    topic_id: i32,
    label: String,
}

/// One `{"topic_id", "prompt"}` object per line.
pub fn write_prompts<W: Write>(
    mut out: W,
    summaries: &[TopicSummary],
    corpus: &Corpus,
) -> Result<(), LabelingError> {
    for s in summaries {
        let prompt = build_label_prompt(s, corpus);
        let line = PromptLine {
            topic_id: s.topic_id,
            prompt: &prompt,
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `{"topic_id", "label"}` lines; later lines win for repeated ids.
pub fn read_labels<R: BufRead>(input: R) -> Result<BTreeMap<i32, String>, LabelingError> {
    let mut labels = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| LabelingError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        labels.insert(parsed.topic_id, parsed.label);
    }
    Ok(labels)
}

/// Sets `auto_label` from a response map; returns ids that matched no topic.
pub fn apply_labels(summaries: &mut [TopicSummary], labels: &BTreeMap<i32, String>) -> Vec<i32> {
    let known: BTreeSet<i32> = summaries.iter().map(|s| s.topic_id).collect();
    for s in summaries.iter_mut() {
        if let Some(l) = labels.get(&s.topic_id) {
            s.auto_label = Some(l.clone());
        }
    }
    labels
        .keys()
        .filter(|k| !known.contains(k))
        .copied()
        .collect()
}
