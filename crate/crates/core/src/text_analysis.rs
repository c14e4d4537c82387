//! Deterministic text algorithms used by the matching pipeline.
//!
//! Everything here is a pure function of its inputs. Segmentation goes through
//! the [`Tokenizer`] trait so that languages without whitespace word
//! boundaries can plug in their own segmenter; the default
//! [`UnicodeTokenizer`] splits on any non-alphanumeric character.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TextError {
    #[error("input contains no analyzable text")]
    EmptyInput,
    #[error("term vectors have different vocabularies")]
    VocabularyMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Normalized tokens of one piece of text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    /// Character count of the source text.
    pub source_len: usize,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> TokenStream;
}

/// Splits on every non-alphanumeric Unicode character and lowercases each
/// fragment with single-code-point case mappings. Stopwords are removed after
/// splitting; the default list is empty.
#[derive(Debug, Clone, Default)]
pub struct UnicodeTokenizer {
    stopwords: HashSet<String>,
}

impl UnicodeTokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_stopwords<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let stopwords = stopwords.into_iter().map(|s| fold_case(s.as_ref())).collect();
        Self { stopwords }
    }
}

impl Tokenizer for UnicodeTokenizer {
    fn tokenize(&self, text: &str) -> TokenStream {
        let tokens = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|fragment| !fragment.is_empty())
            .map(fold_case)
            .filter(|token| !self.stopwords.contains(token))
            .collect();
        TokenStream {
            tokens,
            source_len: text.chars().count(),
        }
    }
}

/// Lowercases characters whose lowercase form is a single code point and
/// leaves the rest untouched, approximating Unicode simple case folding.
fn fold_case(fragment: &str) -> String {
    fragment
        .chars()
        .map(|c| {
            let mut lower = c.to_lowercase();
            match (lower.next(), lower.next()) {
                (Some(l), None) => l,
                _ => c,
            }
        })
        .collect()
}

/// Tokenizes with the default [`UnicodeTokenizer`].
pub fn tokenize(text: &str) -> TokenStream {
    UnicodeTokenizer::default().tokenize(text)
}

const SENTENCE_TERMINATORS: [char; 7] = ['.', '!', '?', '。', '！', '？', '\n'];

/// Splits text into trimmed, nonempty sentences.
pub fn split_sentences(text: &str) -> Vec<String> {
    text.split(SENTENCE_TERMINATORS)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Sentences selected by TextRank, in document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sentences: Vec<String>,
    pub scores: Vec<f64>,
}

impl Summary {
    /// The selected sentences joined by single spaces.
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

pub const DEFAULT_SUMMARY_SENTENCES: usize = 3;

/// Damped PageRank over a sentence-similarity graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextRank {
    pub damping: f64,
    /// Iteration stops once the largest per-sentence score change is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for TextRank {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

impl TextRank {
    /// Edge weight between two tokenized sentences: the number of distinct
    /// shared tokens over `ln|a| + ln|b|`, with the denominator replaced by 1
    /// when it is not positive.
    pub fn edge_weight(a: &[String], b: &[String]) -> f64 {
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let left: HashSet<&str> = a.iter().map(String::as_str).collect();
        let right: HashSet<&str> = b.iter().map(String::as_str).collect();
        let shared = left.intersection(&right).count() as f64;
        let denominator = (a.len() as f64).ln() + (b.len() as f64).ln();
        let denominator = if denominator > 0.0 { denominator } else { 1.0 };
        shared / denominator
    }

    /// Dense symmetric weight matrix with a zero diagonal.
    pub fn weight_matrix(sentences: &[Vec<String>]) -> Vec<Vec<f64>> {
        let n = sentences.len();
        let mut weights = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w = Self::edge_weight(&sentences[i], &sentences[j]);
                weights[i][j] = w;
                weights[j][i] = w;
            }
        }
        weights
    }

    /// One synchronous update: `s'_i = (1 - d) + d * sum_j w_ji / out_j * s_j`.
    /// Sentences without outgoing weight contribute nothing.
    pub fn step(&self, weights: &[Vec<f64>], out_weight: &[f64], scores: &[f64]) -> Vec<f64> {
        let n = scores.len();
        (0..n)
            .map(|i| {
                let incoming: f64 = (0..n)
                    .filter(|&j| out_weight[j] > 0.0)
                    .map(|j| weights[j][i] / out_weight[j] * scores[j])
                    .sum();
                (1.0 - self.damping) + self.damping * incoming
            })
            .collect()
    }

    /// Converged scores for already-tokenized sentences.
    pub fn scores(&self, sentences: &[Vec<String>]) -> Vec<f64> {
        let n = sentences.len();
        if n == 0 {
            return Vec::new();
        }
        let weights = Self::weight_matrix(sentences);
        let out_weight: Vec<f64> = weights.iter().map(|row| row.iter().sum()).collect();
        let mut scores = vec![1.0 / n as f64; n];
        for _ in 0..self.max_iterations {
            let next = self.step(&weights, &out_weight, &scores);
            let delta = next
                .iter()
                .zip(&scores)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            scores = next;
            if delta < self.tolerance {
                break;
            }
        }
        scores
    }

    /// Extracts the `max_sentences` highest-scoring sentences. Ties go to the
    /// earlier sentence; output is in document order.
    pub fn summarize(
        &self,
        tokenizer: &dyn Tokenizer,
        text: &str,
        max_sentences: usize,
    ) -> Result<Summary, TextError> {
        if max_sentences == 0 {
            return Err(TextError::InvalidArgument("max_sentences must be at least 1"));
        }
        let sentences = split_sentences(text);
        if sentences.is_empty() {
            return Err(TextError::EmptyInput);
        }
        let tokenized: Vec<Vec<String>> = sentences.iter().map(|s| tokenizer.tokenize(s).tokens).collect();
        let scores = self.scores(&tokenized);

        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = order.into_iter().take(max_sentences.min(sentences.len())).collect();
        chosen.sort_unstable();

        Ok(Summary {
            scores: chosen.iter().map(|&i| scores[i]).collect(),
            sentences: chosen.into_iter().map(|i| sentences[i].clone()).collect(),
        })
    }
}

/// TextRank summary with default parameters and tokenizer.
pub fn textrank_summary(text: &str, max_sentences: usize) -> Result<Summary, TextError> {
    TextRank::default().summarize(&UnicodeTokenizer::default(), text, max_sentences)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    pub score: f64,
}

/// Keywords in descending score order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub keywords: Vec<Keyword>,
}

impl KeywordSet {
    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.keywords.iter().any(|k| k.term == term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|k| k.term.as_str())
    }
}

/// Document frequencies of a fixed corpus, with smoothed inverse document
/// frequency `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    documents: usize,
    document_frequency: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_documents<'a, I>(tokenizer: &dyn Tokenizer, documents: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut document_frequency = HashMap::new();
        let mut count = 0;
        for doc in documents {
            count += 1;
            let distinct: HashSet<String> = tokenizer.tokenize(doc).tokens.into_iter().collect();
            for term in distinct {
                *document_frequency.entry(term).or_insert(0) += 1;
            }
        }
        Self {
            documents: count,
            document_frequency,
        }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.document_frequency.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.documents as f64;
        let df = self.document_frequency(term) as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Top `k` terms of an already-tokenized document by `tf * idf`, where
    /// `tf` is the term count over the document length. Ties are broken
    /// lexicographically.
    pub fn keywords(&self, doc: &TokenStream, k: usize) -> Result<KeywordSet, TextError> {
        if k == 0 {
            return Err(TextError::InvalidArgument("k must be at least 1"));
        }
        if doc.is_empty() {
            return Err(TextError::EmptyInput);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for token in doc.iter() {
            *counts.entry(token).or_insert(0) += 1;
        }
        let total = doc.len() as f64;
        let mut keywords: Vec<Keyword> = counts
            .into_iter()
            .map(|(term, count)| Keyword {
                term: term.to_owned(),
                score: count as f64 / total * self.idf(term),
            })
            .collect();
        keywords.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
        keywords.truncate(k);
        Ok(KeywordSet { keywords })
    }
}

/// TF-IDF keywords of `doc` against `corpus`, using the default tokenizer.
pub fn tfidf_keywords(doc: &str, corpus: &[&str], k: usize) -> Result<KeywordSet, TextError> {
    if corpus.is_empty() {
        return Err(TextError::InvalidArgument("corpus must not be empty"));
    }
    let tokenizer = UnicodeTokenizer::default();
    let table = IdfTable::from_documents(&tokenizer, corpus.iter().copied());
    table.keywords(&tokenizer.tokenize(doc), k)
}

/// Raw term counts over an explicit vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermVector {
    pub vocabulary: Vec<String>,
    pub counts: Vec<u64>,
}

impl TermVector {
    pub fn norm(&self) -> f64 {
        (self.counts.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            vocabulary: self.vocabulary.clone(),
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Counts both streams over the sorted union of their distinct terms.
pub fn vectorize(a: &TokenStream, b: &TokenStream) -> (TermVector, TermVector) {
    let vocabulary: Vec<String> = a
        .iter()
        .chain(b.iter())
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let count = |stream: &TokenStream| {
        let mut counts = vec![0u64; vocabulary.len()];
        for token in stream.iter() {
            counts[index[token]] += 1;
        }
        counts
    };
    let (ca, cb) = (count(a), count(b));
    (
        TermVector {
            vocabulary: vocabulary.clone(),
            counts: ca,
        },
        TermVector { vocabulary, counts: cb },
    )
}

/// `dot(u, v) / (|u| |v|)`, or 0 when either vector is zero.
pub fn cosine_similarity(u: &TermVector, v: &TermVector) -> Result<f64, TextError> {
    if u.vocabulary != v.vocabulary {
        return Err(TextError::VocabularyMismatch);
    }
    let dot: f64 = u.counts.iter().zip(&v.counts).map(|(&a, &b)| (a * b) as f64).sum();
    let uu: f64 = u.counts.iter().map(|&a| (a * a) as f64).sum();
    let vv: f64 = v.counts.iter().map(|&b| (b * b) as f64).sum();
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (uu * vv).sqrt()).clamp(0.0, 1.0))
}
