//! Client speech against the knowledge base.
//!
//! The pipeline per call: TextRank summary of the speech, TF-IDF keywords of
//! the summary against the corpus of all disorder descriptions, then a cosine
//! similarity between the keyword frequency vector and the target text. The
//! keyword vector counts each keyword by its frequency in the summary.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::knowledge_base::{DisorderRecord, KnowledgeBase};
use crate::text_analysis::{
    cosine_similarity, vectorize, IdfTable, KeywordSet, Summary, TextError, TextRank, TokenStream, Tokenizer,
    UnicodeTokenizer, DEFAULT_SUMMARY_SENTENCES,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("speech contains no analyzable text")]
    EmptyInput,
    #[error("{name} = {value} is outside [0, 1]")]
    Domain { name: &'static str, value: f64 },
    #[error("invalid match configuration: {0}")]
    InvalidConfig(&'static str),
}

impl From<TextError> for MatchError {
    fn from(err: TextError) -> Self {
        match err {
            TextError::EmptyInput => MatchError::EmptyInput,
            TextError::InvalidArgument(what) => MatchError::InvalidConfig(what),
            TextError::VocabularyMismatch => unreachable!("vectorize always yields a shared vocabulary"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Best disorder similarity needed to leave the matching stage.
    pub initial_threshold: f64,
    /// Client-profile similarity needed to enter the intervention stage.
    pub intervention_threshold: f64,
    pub keyword_k: usize,
    pub summary_sentences: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            initial_threshold: 0.30,
            intervention_threshold: 0.50,
            keyword_k: 10,
            summary_sentences: DEFAULT_SUMMARY_SENTENCES,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        check_unit("initial_threshold", self.initial_threshold)?;
        check_unit("intervention_threshold", self.intervention_threshold)?;
        if self.keyword_k == 0 {
            return Err(MatchError::InvalidConfig("keyword_k must be at least 1"));
        }
        if self.summary_sentences == 0 {
            return Err(MatchError::InvalidConfig("summary_sentences must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub disorder_id: String,
    pub similarity: f64,
    pub keywords_used: KeywordSet,
}

/// Summary and keywords extracted from one piece of speech.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechProfile {
    pub summary: Summary,
    pub keywords: KeywordSet,
    /// Summary tokens restricted to keyword terms, multiplicity preserved.
    pub keyword_tokens: TokenStream,
}

fn check_unit(name: &'static str, value: f64) -> Result<(), MatchError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MatchError::Domain { name, value })
    }
}

/// Inclusive threshold test: `similarity >= threshold`.
pub fn crossed_threshold(similarity: f64, threshold: f64) -> Result<bool, MatchError> {
    check_unit("similarity", similarity)?;
    check_unit("threshold", threshold)?;
    Ok(similarity >= threshold)
}

/// Matching state derived from one knowledge base: the description corpus
/// statistics and pre-tokenized descriptions.
pub struct Matcher {
    kb: Arc<KnowledgeBase>,
    tokenizer: Arc<dyn Tokenizer>,
    textrank: TextRank,
    idf: IdfTable,
    descriptions: Vec<TokenStream>,
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matcher")
            .field("kb", &self.kb.source_path())
            .field("textrank", &self.textrank)
            .finish_non_exhaustive()
    }
}

impl Matcher {
    pub fn new(kb: Arc<KnowledgeBase>) -> Self {
        Self::with_tokenizer(kb, Arc::new(UnicodeTokenizer::default()), TextRank::default())
    }

    pub fn with_tokenizer(kb: Arc<KnowledgeBase>, tokenizer: Arc<dyn Tokenizer>, textrank: TextRank) -> Self {
        let idf = IdfTable::from_documents(tokenizer.as_ref(), kb.descriptions());
        let descriptions = kb.descriptions().map(|d| tokenizer.tokenize(d)).collect();
        Self {
            kb,
            tokenizer,
            textrank,
            idf,
            descriptions,
        }
    }

    pub fn knowledge_base(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer.as_ref()
    }

    pub fn textrank(&self) -> &TextRank {
        &self.textrank
    }

    pub fn summarize(&self, speech: &str, cfg: &MatchConfig) -> Result<Summary, MatchError> {
        Ok(self
            .textrank
            .summarize(self.tokenizer.as_ref(), speech, cfg.summary_sentences)?)
    }

    pub fn profile_speech(&self, speech: &str, cfg: &MatchConfig) -> Result<SpeechProfile, MatchError> {
        let summary = self.summarize(speech, cfg)?;
        let summary_tokens = self.tokenizer.tokenize(&summary.text());
        let keywords = self.idf.keywords(&summary_tokens, cfg.keyword_k)?;
        let keyword_tokens = TokenStream {
            tokens: summary_tokens
                .tokens
                .iter()
                .filter(|t| keywords.contains(t))
                .cloned()
                .collect(),
            source_len: summary_tokens.source_len,
        };
        Ok(SpeechProfile {
            summary,
            keywords,
            keyword_tokens,
        })
    }

    fn similarity(keyword_tokens: &TokenStream, target: &TokenStream) -> f64 {
        let (u, v) = vectorize(keyword_tokens, target);
        cosine_similarity(&u, &v).expect("shared vocabulary")
    }

    /// Every record ranked by description similarity, descending; ties keep
    /// knowledge base order.
    pub fn match_disorders(&self, speech: &str, cfg: &MatchConfig) -> Result<Vec<MatchResult>, MatchError> {
        let profile = self.profile_speech(speech, cfg)?;
        Ok(self.rank(&profile))
    }

    /// Ranks an already extracted speech profile.
    pub fn rank(&self, profile: &SpeechProfile) -> Vec<MatchResult> {
        let mut results: Vec<MatchResult> = self
            .kb
            .records()
            .iter()
            .zip(&self.descriptions)
            .map(|(record, description)| MatchResult {
                disorder_id: record.id.clone(),
                similarity: Self::similarity(&profile.keyword_tokens, description),
                keywords_used: profile.keywords.clone(),
            })
            .collect();
        // Stable sort keeps file order within ties.
        results.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        results
    }

    /// Similarity of the speech to the record's typical client profile.
    pub fn match_client_profile(
        &self,
        speech: &str,
        record: &DisorderRecord,
        cfg: &MatchConfig,
    ) -> Result<f64, MatchError> {
        let profile = self.profile_speech(speech, cfg)?;
        let target = self.tokenizer.tokenize(&record.typical_client);
        Ok(Self::similarity(&profile.keyword_tokens, &target))
    }
}
