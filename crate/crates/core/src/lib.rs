//! Knowledge-grounded counseling dialogue engine.
//!
//! The crate is organized bottom-up:
//!
//! - [`knowledge_base`]: the disorder knowledge base and its JSON format.
//! - [`text_analysis`]: tokenization, TextRank summaries, TF-IDF keywords and
//!   cosine similarity over term-frequency vectors.
//! - [`matching`]: client speech against disorder descriptions and typical
//!   client profiles.
//! - [`session`]: the staged conversation state machine, structured prompts
//!   and response backends.
//! - [`emotion`]: per-utterance emotion values and the trend pipeline.
//! - [`evaluation`]: questionnaire scoring and one-way ANOVA.

pub mod emotion;
pub mod evaluation;
pub mod knowledge_base;
pub mod matching;
pub mod session;
pub mod text_analysis;

pub use knowledge_base::{DisorderRecord, KnowledgeBase, KnowledgeBaseError};
pub use matching::{MatchConfig, MatchResult, Matcher};
pub use session::{SessionState, Stage};
