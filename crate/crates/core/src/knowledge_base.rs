//! Disorder knowledge base.
//!
//! A knowledge base is a JSON document with a single `disorders` array. Each
//! record carries six free-text attributes that drive different parts of the
//! dialogue pipeline:
//!
//! | attribute                   | used for                               |
//! |-----------------------------|----------------------------------------|
//! | `description`               | disorder matching, TF-IDF corpus       |
//! | `typical_client`            | client-profile matching                |
//! | `therapist_characteristics` | elicitation preset                     |
//! | `assessment`                | elicitation preset                     |
//! | `intervention_strategies`   | intervention preset and knowledge      |
//! | `prognosis`                 | intervention knowledge                 |
//!
//! Record order is preserved from the file and is part of the contract:
//! matching ties are broken by it.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

const RECORD_FIELDS: [&str; 8] = [
    "id",
    "name",
    "description",
    "typical_client",
    "therapist_characteristics",
    "intervention_strategies",
    "prognosis",
    "assessment",
];

/// Fields that must be present and nonempty regardless of strictness.
const REQUIRED_FIELDS: [&str; 6] = [
    "id",
    "name",
    "description",
    "typical_client",
    "therapist_characteristics",
    "intervention_strategies",
];

/// Fields that may be missing or empty when loading non-strictly.
const STRICT_ONLY_FIELDS: [&str; 2] = ["prognosis", "assessment"];

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeBaseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at byte offset {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record {record}: {message}")]
    Schema { record: String, message: String },
    #[error("knowledge base contains no disorders")]
    NoRecords,
}

impl KnowledgeBaseError {
    fn schema(record: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            record: record.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisorderRecord {
    pub id: String,
    pub name: String,
    pub description: String,
    pub typical_client: String,
    pub therapist_characteristics: String,
    pub intervention_strategies: String,
    pub prognosis: String,
    pub assessment: String,
}

impl DisorderRecord {
    fn field(&self, name: &str) -> &str {
        match name {
            "id" => &self.id,
            "name" => &self.name,
            "description" => &self.description,
            "typical_client" => &self.typical_client,
            "therapist_characteristics" => &self.therapist_characteristics,
            "intervention_strategies" => &self.intervention_strategies,
            "prognosis" => &self.prognosis,
            "assessment" => &self.assessment,
            other => unreachable!("unknown record field {other}"),
        }
    }

    /// Checks the record invariants. `strict` additionally requires
    /// `prognosis` and `assessment`.
    pub fn validate(&self, strict: bool) -> Result<(), KnowledgeBaseError> {
        let label = if self.id.trim().is_empty() {
            "<no id>".to_string()
        } else {
            self.id.clone()
        };
        for name in REQUIRED_FIELDS {
            if self.field(name).trim().is_empty() {
                return Err(KnowledgeBaseError::schema(&label, format!("field `{name}` is empty")));
            }
        }
        if strict {
            for name in STRICT_ONLY_FIELDS {
                if self.field(name).trim().is_empty() {
                    return Err(KnowledgeBaseError::schema(
                        &label,
                        format!("field `{name}` is empty (strict mode)"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CanonicalFile<'a> {
    disorders: &'a [DisorderRecord],
}

/// A validated, immutable collection of disorder records.
///
/// Equality compares records and provenance; the load timestamp is ignored so
/// that two loads of the same file compare equal.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    records: Vec<DisorderRecord>,
    source_path: String,
    loaded_at: DateTime<Utc>,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.source_path == other.source_path
    }
}

impl Eq for KnowledgeBase {}

impl KnowledgeBase {
    /// Loads and validates a knowledge base file.
    pub fn load(path: impl AsRef<Path>, strict: bool) -> Result<Self, KnowledgeBaseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KnowledgeBaseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, path.display().to_string(), strict)
    }

    /// Parses a knowledge base from JSON text. `source_path` is recorded as
    /// provenance only.
    pub fn from_json_str(
        text: &str,
        source_path: impl Into<String>,
        strict: bool,
    ) -> Result<Self, KnowledgeBaseError> {
        let root: Value = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        let root = match root {
            Value::Object(map) => map,
            _ => return Err(KnowledgeBaseError::schema("<root>", "expected a JSON object")),
        };
        if strict {
            if let Some(key) = root.keys().find(|k| k.as_str() != "disorders") {
                return Err(KnowledgeBaseError::schema("<root>", format!("unknown key `{key}`")));
            }
        }
        let disorders = match root.get("disorders") {
            Some(Value::Array(items)) => items,
            Some(_) => return Err(KnowledgeBaseError::schema("<root>", "`disorders` must be an array")),
            None => return Err(KnowledgeBaseError::schema("<root>", "missing `disorders` array")),
        };
        if disorders.is_empty() {
            return Err(KnowledgeBaseError::NoRecords);
        }

        let mut seen = HashSet::new();
        let mut records = Vec::with_capacity(disorders.len());
        for (index, item) in disorders.iter().enumerate() {
            let record = record_from_value(index, item, strict)?;
            record.validate(strict)?;
            if !seen.insert(record.id.clone()) {
                return Err(KnowledgeBaseError::schema(&record.id, "duplicate id"));
            }
            records.push(record);
        }

        Ok(Self {
            records,
            source_path: source_path.into(),
            loaded_at: Utc::now(),
        })
    }

    pub fn records(&self) -> &[DisorderRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false for a loaded knowledge base; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn loaded_at(&self) -> DateTime<Utc> {
        self.loaded_at
    }

    /// Looks up a record by id.
    pub fn get(&self, id: &str) -> Option<&DisorderRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Position of a record in file order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// The `description` fields in record order: the TF-IDF corpus.
    pub fn descriptions(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.description.as_str())
    }

    /// Canonical serialization: pretty-printed JSON with a fixed field order
    /// and a trailing newline. Loading the output yields an equal knowledge
    /// base whose canonical form is byte-identical.
    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&CanonicalFile {
            disorders: &self.records,
        })
        .expect("records serialize");
        out.push('\n');
        out
    }
}

impl fmt::Display for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} disorders)", self.source_path, self.records.len())
    }
}

fn record_from_value(index: usize, item: &Value, strict: bool) -> Result<DisorderRecord, KnowledgeBaseError> {
    let obj = match item {
        Value::Object(map) => map,
        _ => return Err(KnowledgeBaseError::schema(format!("#{index}"), "expected an object")),
    };
    let label = match obj.get("id") {
        Some(Value::String(id)) if !id.trim().is_empty() => id.clone(),
        _ => format!("#{index}"),
    };
    if strict {
        if let Some(key) = obj.keys().find(|k| !RECORD_FIELDS.contains(&k.as_str())) {
            return Err(KnowledgeBaseError::schema(&label, format!("unknown key `{key}`")));
        }
    }

    let text = |name: &str| -> Result<String, KnowledgeBaseError> { string_field(obj, name, &label, strict) };
    Ok(DisorderRecord {
        id: text("id")?,
        name: text("name")?,
        description: text("description")?,
        typical_client: text("typical_client")?,
        therapist_characteristics: text("therapist_characteristics")?,
        intervention_strategies: text("intervention_strategies")?,
        prognosis: text("prognosis")?,
        assessment: text("assessment")?,
    })
}

fn string_field(
    obj: &Map<String, Value>,
    name: &str,
    label: &str,
    strict: bool,
) -> Result<String, KnowledgeBaseError> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(KnowledgeBaseError::schema(label, format!("field `{name}` must be a string"))),
        None if !strict && STRICT_ONLY_FIELDS.contains(&name) => Ok(String::new()),
        None => Err(KnowledgeBaseError::schema(label, format!("missing field `{name}`"))),
    }
}

fn parse_error(text: &str, err: &serde_json::Error) -> KnowledgeBaseError {
    let (line, column) = (err.line(), err.column());
    let offset = if line == 0 {
        0
    } else {
        let preceding: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
        (preceding + column.saturating_sub(1)).min(text.len())
    };
    KnowledgeBaseError::Parse {
        offset,
        line,
        column,
        message: err.to_string(),
    }
}
