//! Staged counseling session.
//!
//! A session moves through `Matching -> Elicitation -> Intervention`, with
//! `Closed` reachable from anywhere. Each client turn is processed under the
//! stage the session is in when the turn arrives; a transition decided during
//! the turn applies from the next turn on.
//!
//! - **Matching**: the cumulative client text is matched against every
//!   disorder description. When the best similarity reaches
//!   `initial_threshold` the disorder is frozen as the session's match.
//! - **Elicitation**: the matched record's therapist characteristics and
//!   assessment form the preset; the cumulative client text is compared with
//!   its typical client profile until `intervention_threshold` is reached.
//! - **Intervention**: the intervention strategies become the preset and,
//!   together with the prognosis, the knowledge block.

mod backend;
mod prompt;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use backend::{
    BackendError, BackendErrorKind, BackendReply, HttpBackend, HttpBackendConfig, MockBackend, ResponseBackend,
};
pub use prompt::{client_block, render_prompt, PromptError, StructuredPrompt};

use crate::knowledge_base::DisorderRecord;
use crate::matching::{crossed_threshold, MatchConfig, MatchError, Matcher};

pub const DEFAULT_INTAKE_PRESET: &str = "You are a supportive counselor in an intake conversation. \
Listen carefully, reflect what the client says, and ask one open question about what is troubling them.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Matching,
    Elicitation,
    Intervention,
    Closed,
}

impl Stage {
    /// Position along the conversation path.
    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Matching => "matching",
            Stage::Elicitation => "elicitation",
            Stage::Intervention => "intervention",
            Stage::Closed => "closed",
        }
    }

    pub fn can_transition_to(self, next: Stage) -> bool {
        matches!(
            (self, next),
            (Stage::Matching, Stage::Elicitation)
                | (Stage::Elicitation, Stage::Intervention)
                | (Stage::Matching | Stage::Elicitation | Stage::Intervention, Stage::Closed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Client,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    /// Transcript index of the client turn that produced this value.
    pub turn_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("session is closed")]
    Closed,
    #[error("utterance contains no analyzable text")]
    EmptyUtterance,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("matched disorder `{0}` is not in the knowledge base")]
    UnknownDisorder(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub transcript: Vec<Turn>,
    pub stage: Stage,
    pub matched_disorder: Option<String>,
    pub similarity_history: Vec<SimilarityRecord>,
    pub config: MatchConfig,
    pub created_at: DateTime<Utc>,
}

impl SessionState {
    pub fn new(config: MatchConfig) -> Self {
        Self::with_id(Uuid::new_v4().to_string(), config, Utc::now())
    }

    pub fn with_id(session_id: impl Into<String>, config: MatchConfig, created_at: DateTime<Utc>) -> Self {
        Self {
            session_id: session_id.into(),
            transcript: Vec::new(),
            stage: Stage::Matching,
            matched_disorder: None,
            similarity_history: Vec::new(),
            config,
            created_at,
        }
    }

    /// All client utterances in order, one per line.
    pub fn case_text(&self) -> String {
        self.client_turns().collect::<Vec<_>>().join("\n")
    }

    pub fn client_turns(&self) -> impl Iterator<Item = &str> {
        self.transcript
            .iter()
            .filter(|t| t.speaker == Speaker::Client)
            .map(|t| t.text.as_str())
    }

    pub fn best_similarity(&self) -> Option<f64> {
        self.similarity_history.last().map(|r| r.similarity)
    }

    pub fn is_closed(&self) -> bool {
        self.stage == Stage::Closed
    }

    /// Moves to `Closed`. Idempotent.
    pub fn close(&mut self) {
        self.stage = Stage::Closed;
    }
}

/// Everything a client turn produced, for logging and inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub reply: BackendReply,
    pub prompt: StructuredPrompt,
    pub rendered_prompt: String,
    pub stage_before: Stage,
    pub stage_after: Stage,
    /// Set when this turn froze the session's disorder match.
    pub newly_matched: Option<String>,
    pub similarity: SimilarityRecord,
}

/// Drives sessions against one knowledge base.
#[derive(Debug, Clone)]
pub struct DialogueEngine {
    matcher: Arc<Matcher>,
    intake_preset: String,
}

impl DialogueEngine {
    pub fn new(matcher: Arc<Matcher>) -> Self {
        Self {
            matcher,
            intake_preset: DEFAULT_INTAKE_PRESET.to_string(),
        }
    }

    pub fn with_intake_preset(mut self, preset: impl Into<String>) -> Self {
        self.intake_preset = preset.into();
        self
    }

    pub fn matcher(&self) -> &Arc<Matcher> {
        &self.matcher
    }

    pub fn intake_preset(&self) -> &str {
        &self.intake_preset
    }

    pub fn new_session(&self, config: MatchConfig) -> SessionState {
        SessionState::new(config)
    }

    fn record(&self, id: &str) -> Result<&DisorderRecord, SessionError> {
        self.matcher
            .knowledge_base()
            .get(id)
            .ok_or_else(|| SessionError::UnknownDisorder(id.to_string()))
    }

    /// Processes one client utterance.
    ///
    /// On a backend failure the client utterance stays in the transcript
    /// while stage, match and similarity history are restored, so the turn
    /// can be retried.
    pub fn client_turn(
        &self,
        state: &mut SessionState,
        utterance: &str,
        backend: &dyn ResponseBackend,
    ) -> Result<TurnOutcome, SessionError> {
        if state.is_closed() {
            return Err(SessionError::Closed);
        }
        if self.matcher.tokenizer().tokenize(utterance).is_empty() {
            return Err(SessionError::EmptyUtterance);
        }

        state.transcript.push(Turn {
            speaker: Speaker::Client,
            text: utterance.to_string(),
            timestamp: Utc::now(),
        });
        let turn_index = state.transcript.len() - 1;
        let stage_before = state.stage;
        let matched_before = state.matched_disorder.clone();
        let history_len = state.similarity_history.len();

        let result = self.advance(state, utterance, turn_index, backend);
        if result.is_err() {
            state.stage = stage_before;
            state.matched_disorder = matched_before;
            state.similarity_history.truncate(history_len);
        }
        result
    }

    fn advance(
        &self,
        state: &mut SessionState,
        utterance: &str,
        turn_index: usize,
        backend: &dyn ResponseBackend,
    ) -> Result<TurnOutcome, SessionError> {
        let cfg = state.config;
        let case_text = state.case_text();
        let profile = self.matcher.profile_speech(&case_text, &cfg)?;
        let case_summary = profile.summary.text();
        let stage_before = state.stage;
        let mut newly_matched = None;

        let (similarity, preset, knowledge) = match state.stage {
            Stage::Matching => {
                let ranking = self.matcher.rank(&profile);
                let best = &ranking[0];
                let knowledge = if crossed_threshold(best.similarity, cfg.initial_threshold)? {
                    state.matched_disorder = Some(best.disorder_id.clone());
                    state.stage = Stage::Elicitation;
                    newly_matched = Some(best.disorder_id.clone());
                    self.record(&best.disorder_id)?.description.clone()
                } else {
                    String::new()
                };
                (best.similarity, self.intake_preset.clone(), knowledge)
            }
            Stage::Elicitation => {
                let record = self.matched_record(state)?;
                let similarity = self.matcher.match_client_profile(&case_text, record, &cfg)?;
                let preset = join_blocks(&[&record.therapist_characteristics, &record.assessment]);
                let knowledge = record.description.clone();
                if crossed_threshold(similarity, cfg.intervention_threshold)? {
                    state.stage = Stage::Intervention;
                }
                (similarity, preset, knowledge)
            }
            Stage::Intervention => {
                let record = self.matched_record(state)?;
                let similarity = self.matcher.match_client_profile(&case_text, record, &cfg)?;
                let preset = record.intervention_strategies.clone();
                let knowledge = join_blocks(&[&record.intervention_strategies, &record.prognosis]);
                (similarity, preset, knowledge)
            }
            Stage::Closed => return Err(SessionError::Closed),
        };

        let similarity = SimilarityRecord {
            turn_index,
            similarity,
        };
        state.similarity_history.push(similarity);

        let prompt = StructuredPrompt {
            preset,
            case_summary,
            knowledge,
            client_utterance: utterance.to_string(),
        };
        let rendered_prompt = render_prompt(&prompt)?;
        let reply = backend.complete(&rendered_prompt)?;
        if reply.text.trim().is_empty() {
            return Err(BackendError::new(reply.backend_id, BackendErrorKind::EmptyReply).into());
        }

        state.transcript.push(Turn {
            speaker: Speaker::Agent,
            text: reply.text.clone(),
            timestamp: Utc::now(),
        });

        Ok(TurnOutcome {
            reply,
            prompt,
            rendered_prompt,
            stage_before,
            stage_after: state.stage,
            newly_matched,
            similarity,
        })
    }

    fn matched_record(&self, state: &SessionState) -> Result<&DisorderRecord, SessionError> {
        let id = state
            .matched_disorder
            .as_deref()
            .ok_or_else(|| SessionError::UnknownDisorder("<none>".to_string()))?;
        self.record(id)
    }
}

/// Joins the nonempty blocks with newlines.
fn join_blocks(blocks: &[&str]) -> String {
    blocks
        .iter()
        .filter(|b| !b.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join("\n")
}
