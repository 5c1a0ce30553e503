//! Collapsed Gibbs sampling LDA for corpora without category labels.
//!
//! Documents become topic-proportion rows; an author's category vector is the
//! mean of their documents' rows and topic similarity is the cosine between
//! topic columns (see [`crate::taxonomy::topic_cosine_similarity`]).

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("document {0:?} has no tokens after filtering")]
    EmptyDocument(String),
    #[error("corpus vocabulary is empty")]
    EmptyVocabulary,
    #[error("invalid topic model config: {0}")]
    Config(String),
    #[error("author {0:?} has no documents")]
    AuthorWithoutDocuments(String),
    #[error("author {author:?} references document {index} out of {docs}")]
    BadDocument {
        author: String,
        index: usize,
        docs: usize,
    },
    #[error("documents line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "if", "in", "into", "is", "it", "its",
    "itself", "just", "may", "me", "more", "most", "must", "my", "myself", "no", "nor", "not",
    "now", "of", "off", "on", "once", "one", "only", "or", "other", "our", "ours", "ourselves",
    "out", "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the",
    "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those",
    "through", "thus", "to", "too", "two", "under", "until", "up", "upon", "us", "very", "was",
    "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "within", "without", "would", "you", "your", "yours", "yourself", "yourselves",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric runs of at least two characters, stop words removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .filter(|t| !is_stop_word(t))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

/// Reads `documents.jsonl`: one `{"doc_id": .., "text": ..}` object per line.
pub fn read_documents<R: BufRead>(r: R) -> Result<Vec<Document>, TopicError> {
    let mut docs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line).map_err(|e| TopicError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(docs)
}

/// Integer-coded documents over a first-seen-order vocabulary.
#[derive(Debug, Clone, Default)]
pub struct TokenCorpus {
    pub doc_ids: Vec<String>,
    pub docs: Vec<Vec<u32>>,
    pub vocab: Vec<String>,
}

impl TokenCorpus {
    pub fn from_texts<'a, I>(texts: I) -> Result<Self, TopicError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::from_token_lists(texts.into_iter().map(|(id, text)| (id, tokenize(text))))
    }

    pub fn from_token_lists<'a, I>(lists: I) -> Result<Self, TopicError>
    where
        I: IntoIterator<Item = (&'a str, Vec<String>)>,
    {
        let mut corpus = TokenCorpus::default();
        let mut ids: HashMap<String, u32> = HashMap::new();
        for (doc_id, tokens) in lists {
            if tokens.is_empty() {
                return Err(TopicError::EmptyDocument(doc_id.to_string()));
            }
            let coded = tokens
                .into_iter()
                .map(|t| {
                    let next = ids.len() as u32;
                    *ids.entry(t.clone()).or_insert_with(|| {
                        corpus.vocab.push(t);
                        next
                    })
                })
                .collect();
            corpus.doc_ids.push(doc_id.to_string());
            corpus.docs.push(coded);
        }
        if corpus.vocab.is_empty() {
            return Err(TopicError::EmptyVocabulary);
        }
        Ok(corpus)
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModelConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl TopicModelConfig {
    /// Symmetric priors `alpha = 50 / K`, `beta = 0.01`.
    pub fn new(topics: usize) -> Self {
        TopicModelConfig {
            topics,
            alpha: 50.0 / topics.max(1) as f64,
            beta: 0.01,
            iterations: 500,
            seed: 0,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn validate(&self) -> Result<(), TopicError> {
        if self.topics == 0 {
            return Err(TopicError::Config("topic count must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(TopicError::Config("alpha and beta must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(TopicError::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Documents × topics; every row is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTopicMatrix {
    doc_ids: Vec<String>,
    topics: usize,
    values: Vec<f64>,
}

impl DocTopicMatrix {
    pub fn from_rows(doc_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        let topics = rows.first().map(Vec::len).unwrap_or(0);
        DocTopicMatrix {
            doc_ids,
            topics,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.values[d * self.topics..(d + 1) * self.topics]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|d| self.row(d).to_vec()).collect()
    }

    pub fn dominant_topic(&self, d: usize) -> (usize, f64) {
        self.row(d)
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |best, (k, v)| if v > best.1 { (k, v) } else { best })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "doc_id")?;
        for k in 0..self.topics {
            write!(w, ",topic_{k}")?;
        }
        writeln!(w)?;
        for (d, id) in self.doc_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for v in self.row(d) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TopicError> {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate().skip(1) {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            ids.push(fields.next().unwrap_or_default().to_string());
            let row = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TopicError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            rows.push(row);
        }
        Ok(Self::from_rows(ids, rows))
    }
}

/// Final sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaFit {
    pub doc_topic: DocTopicMatrix,
    /// `D × K` row-major document-topic counts.
    pub doc_counts: Vec<u32>,
    /// `K × V` row-major topic-word counts.
    pub topic_word: Vec<u32>,
    pub vocab_size: usize,
}

/// Runs `config.iterations` collapsed Gibbs sweeps and returns the final-sample point estimate
/// `theta_dk = (n_dk + alpha) / (N_d + K alpha)`. Deterministic in (corpus order, config).
pub fn fit_lda(corpus: &TokenCorpus, config: &TopicModelConfig) -> Result<LdaFit, TopicError> {
    config.validate()?;
    if corpus.vocab.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    if let Some(d) = corpus.docs.iter().position(Vec::is_empty) {
        return Err(TopicError::EmptyDocument(corpus.doc_ids[d].clone()));
    }
    let k = config.topics;
    let v = corpus.vocab.len();
    let (alpha, beta) = (config.alpha, config.beta);
    let v_beta = v as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut doc_counts = vec![0u32; corpus.docs.len() * k];
    let mut topic_word = vec![0u32; k * v];
    let mut topic_totals = vec![0u32; k];
    let mut z: Vec<Vec<u32>> = Vec::with_capacity(corpus.docs.len());
    for (d, doc) in corpus.docs.iter().enumerate() {
        let assign: Vec<u32> = doc
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                doc_counts[d * k + t] += 1;
                topic_word[t * v + w as usize] += 1;
                topic_totals[t] += 1;
                t as u32
            })
            .collect();
        z.push(assign);
    }

    let mut weights = vec![0.0f64; k];
    for _ in 0..config.iterations {
        for (d, doc) in corpus.docs.iter().enumerate() {
            let dc = &mut doc_counts[d * k..(d + 1) * k];
            for (pos, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = z[d][pos] as usize;
                dc[old] -= 1;
                topic_word[old * v + w] -= 1;
                topic_totals[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (dc[t] as f64 + alpha) * (topic_word[t * v + w] as f64 + beta)
                        / (topic_totals[t] as f64 + v_beta);
                    weights[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = weights.partition_point(|&c| c <= u).min(k - 1);

                dc[new] += 1;
                topic_word[new * v + w] += 1;
                topic_totals[new] += 1;
                z[d][pos] = new as u32;
            }
        }
    }

    let k_alpha = k as f64 * alpha;
    let rows = corpus
        .docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let denom = doc.len() as f64 + k_alpha;
            (0..k)
                .map(|t| (doc_counts[d * k + t] as f64 + alpha) / denom)
                .collect()
        })
        .collect();
    Ok(LdaFit {
        doc_topic: DocTopicMatrix::from_rows(corpus.doc_ids.clone(), rows),
        doc_counts,
        topic_word,
        vocab_size: v,
    })
}

/// Unweighted mean of each author's document rows.
pub fn author_topic_distribution(
    doc_topic: &DocTopicMatrix,
    authorship: &BTreeMap<String, Vec<usize>>,
) -> Result<BTreeMap<String, Vec<f64>>, TopicError> {
    let mut out = BTreeMap::new();
    for (author, docs) in authorship {
        if docs.is_empty() {
            return Err(TopicError::AuthorWithoutDocuments(author.clone()));
        }
        let mut mean = vec![0.0; doc_topic.topics()];
        for &d in docs {
            if d >= doc_topic.len() {
                return Err(TopicError::BadDocument {
                    author: author.clone(),
                    index: d,
                    docs: doc_topic.len(),
                });
            }
            for (m, x) in mean.iter_mut().zip(doc_topic.row(d)) {
                *m += x;
            }
        }
        let n = docs.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        out.insert(author.clone(), mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_list_is_sorted() {
        assert!(STOP_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("The Quantum-optics of a laser, x 42nd!"),
            vec!["quantum", "optics", "laser", "42nd"]
        );
    }

    #[test]
    fn empty_document_rejected() {
        let err = TokenCorpus::from_texts([("d1", "quantum laser"), ("d2", "the a of")]).unwrap_err();
        assert!(matches!(err, TopicError::EmptyDocument(ref d) if d == "d2"));
    }

    #[test]
    fn single_topic_rows_are_one() {
        let c = TokenCorpus::from_texts([("a", "alpha beta gamma"), ("b", "delta epsilon")]).unwrap();
        let fit = fit_lda(&c, &TopicModelConfig::new(1).with_iterations(3)).unwrap();
        for d in 0..2 {
            assert_eq!(fit.doc_topic.row(d), &[1.0]);
        }
    }

    #[test]
    fn zero_iterations_rejected() {
        let c = TokenCorpus::from_texts([("a", "alpha beta")]).unwrap();
        assert!(fit_lda(&c, &TopicModelConfig::new(2).with_iterations(0)).is_err());
    }

    #[test]
    fn counts_are_consistent() {
        let c = TokenCorpus::from_texts([
            ("a", "alpha beta gamma alpha"),
            ("b", "delta epsilon delta"),
            ("c", "alpha delta"),
        ])
        .unwrap();
        let fit = fit_lda(&c, &TopicModelConfig::new(3).with_iterations(10).with_seed(7)).unwrap();
        let total: u32 = fit.topic_word.iter().sum();
        assert_eq!(total as usize, c.token_count());
        for (d, doc) in c.docs.iter().enumerate() {
            let n: u32 = fit.doc_counts[d * 3..(d + 1) * 3].iter().sum();
            assert_eq!(n as usize, doc.len());
            let s: f64 = fit.doc_topic.row(d).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn author_mean_examples() {
        let m = DocTopicMatrix::from_rows(
            vec!["x".into(), "y".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        );
        let mut authorship = BTreeMap::new();
        authorship.insert("solo".to_string(), vec![0]);
        authorship.insert("both".to_string(), vec![0, 1]);
        let out = author_topic_distribution(&m, &authorship).unwrap();
        assert_eq!(out["solo"], vec![1.0, 0.0]);
        assert_eq!(out["both"], vec![0.5, 0.5]);

        authorship.insert("none".to_string(), vec![]);
        assert!(matches!(
            author_topic_distribution(&m, &authorship),
            Err(TopicError::AuthorWithoutDocuments(_))
        ));
    }

    #[test]
    fn doc_topic_csv_round_trip() {
        let m = DocTopicMatrix::from_rows(
            vec!["x".into(), "y".into()],
            vec![vec![0.25, 0.75], vec![0.1, 0.9]],
        );
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out.clone()).unwrap().starts_with("doc_id,topic_0,topic_1\nx,0.25,0.75\n"));
        assert_eq!(DocTopicMatrix::read_csv(&out[..]).unwrap(), m);
    }
}
