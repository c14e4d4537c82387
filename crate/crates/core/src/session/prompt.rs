use serde::{Deserialize, Serialize};

pub const PRESET_HEADER: &str = "[PRESET]";
pub const CASE_HEADER: &str = "[CASE]";
pub const KNOWLEDGE_HEADER: &str = "[KNOWLEDGE]";
pub const CLIENT_HEADER: &str = "[CLIENT]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt block `{0}` must not be empty")]
    EmptyBlock(&'static str),
}

/// The four labeled blocks sent to a response backend. Serialization order is
/// fixed: preset, case, knowledge, client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub preset: String,
    pub case_summary: String,
    pub knowledge: String,
    pub client_utterance: String,
}

impl StructuredPrompt {
    pub fn render(&self) -> Result<String, PromptError> {
        render_prompt(self)
    }
}

/// Renders `[PRESET]\n{preset}\n[CASE]\n{case}\n[KNOWLEDGE]\n{knowledge}\n[CLIENT]\n{client}\n`.
pub fn render_prompt(prompt: &StructuredPrompt) -> Result<String, PromptError> {
    if prompt.preset.is_empty() {
        return Err(PromptError::EmptyBlock("preset"));
    }
    if prompt.client_utterance.is_empty() {
        return Err(PromptError::EmptyBlock("client_utterance"));
    }
    Ok(format!(
        "{PRESET_HEADER}\n{}\n{CASE_HEADER}\n{}\n{KNOWLEDGE_HEADER}\n{}\n{CLIENT_HEADER}\n{}\n",
        prompt.preset, prompt.case_summary, prompt.knowledge, prompt.client_utterance
    ))
}

/// Body of the last `[CLIENT]` block of a rendered prompt, if present.
pub fn client_block(rendered: &str) -> Option<&str> {
    let marker = format!("\n{CLIENT_HEADER}\n");
    let start = if let Some(rest) = rendered.strip_prefix(&marker[1..]) {
        // A prompt that consists of only the client block.
        rendered.len() - rest.len()
    } else {
        rendered.rfind(&marker)? + marker.len()
    };
    let body = &rendered[start..];
    Some(body.strip_suffix('\n').unwrap_or(body))
}
