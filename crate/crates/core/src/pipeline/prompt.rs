//! Prompt templates and engineered-prompt assembly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::conversation::Message;
use crate::document::Document;
use crate::index::SearchHit;
use crate::situational::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placeholder {
    Question,
    History,
    Situation,
    Retrieved,
}

impl Placeholder {
    pub const ALL: [Placeholder; 4] = [
        Placeholder::Question,
        Placeholder::History,
        Placeholder::Situation,
        Placeholder::Retrieved,
    ];

    pub fn marker(self) -> &'static str {
        match self {
            Placeholder::Question => "{question}",
            Placeholder::History => "{history}",
            Placeholder::Situation => "{situation}",
            Placeholder::Retrieved => "{retrieved}",
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {name:?} is missing placeholder {marker}")]
    Missing { name: String, marker: &'static str },
    #[error("template {name:?} uses placeholder {marker} {count} times; exactly once is required")]
    Repeated {
        name: String,
        marker: &'static str,
        count: usize,
    },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Placeholder),
}

/// A validated prompt template. The body is split into literal text and
/// slots once, at construction, so substituted values are never rescanned
/// for markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    segments: Vec<Segment>,
}

pub const DEFAULT_TEMPLATE_NAME: &str = "default";

pub const DEFAULT_TEMPLATE_BODY: &str = "\
You are a helpful shopping assistant. Answer the question using the context below.

## Question
{question}

## Conversation history
{history}

## User situation
{situation}

## Retrieved documents
{retrieved}
";

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE_NAME, DEFAULT_TEMPLATE_BODY).expect("built-in template is valid")
    }
}

impl PromptTemplate {
    /// Validates that each of the four placeholders appears exactly once.
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let name = name.into();
        let body = body.into();
        let mut found: Vec<(usize, Placeholder)> = Vec::new();
        for p in Placeholder::ALL {
            let positions: Vec<usize> = body.match_indices(p.marker()).map(|(i, _)| i).collect();
            match positions.len() {
                0 => {
                    return Err(TemplateError::Missing {
                        name,
                        marker: p.marker(),
                    })
                }
                1 => found.push((positions[0], p)),
                count => {
                    return Err(TemplateError::Repeated {
                        name,
                        marker: p.marker(),
                        count,
                    })
                }
            }
        }
        found.sort_by_key(|(i, _)| *i);
        let mut segments = Vec::with_capacity(9);
        let mut cursor = 0;
        for (start, p) in found {
            if start > cursor {
                segments.push(Segment::Text(body[cursor..start].to_owned()));
            }
            segments.push(Segment::Slot(p));
            cursor = start + p.marker().len();
        }
        if cursor < body.len() {
            segments.push(Segment::Text(body[cursor..].to_owned()));
        }
        Ok(Self {
            name,
            body,
            segments,
        })
    }

    /// Reads `<dir>/<name>.txt`.
    pub fn load(dir: impl AsRef<Path>, name: &str) -> Result<Self, TemplateError> {
        let path = dir.as_ref().join(format!("{name}.txt"));
        let body =
            fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })?;
        Self::new(name, body)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    fn render(&self, question: &str, history: &str, situation: &str, retrieved: &str) -> String {
        let mut out = String::with_capacity(
            self.body.len() + question.len() + history.len() + situation.len() + retrieved.len(),
        );
        for segment in &self.segments {
            out.push_str(match segment {
                Segment::Text(t) => t,
                Segment::Slot(Placeholder::Question) => question,
                Segment::Slot(Placeholder::History) => history,
                Segment::Slot(Placeholder::Situation) => situation,
                Segment::Slot(Placeholder::Retrieved) => retrieved,
            });
        }
        out
    }
}

/// What went into an engineered prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptSources {
    pub history_count: usize,
    pub situation_fields: Vec<String>,
    /// `(doc_id, distance)` in rank order.
    pub retrieved: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineeredPrompt {
    pub question: String,
    pub rendered: String,
    pub sources: PromptSources,
}

/// Text used for the situation block when there is no profile.
pub const NO_SITUATION: &str = "none";

/// Fills `template` with the question, the history as `role: text` lines, the
/// profile as sorted `field=value` lines (or `none`), and one
/// `doc_id (distance=D.DD): text` line per hit.
pub fn assemble_prompt(
    template: &PromptTemplate,
    question: &str,
    history: &[Message],
    profile: Option<&Profile>,
    hits: &[(SearchHit, Document)],
) -> EngineeredPrompt {
    let history_block = history
        .iter()
        .map(|m| format!("{}: {}", m.role, m.text))
        .collect::<Vec<_>>()
        .join("\n");

    let (situation_block, situation_fields) = match profile {
        Some(p) => {
            let mut block = String::new();
            for (field, value) in &p.fields {
                if !block.is_empty() {
                    block.push('\n');
                }
                let _ = write!(block, "{field}={value}");
            }
            (block, p.fields.keys().cloned().collect())
        }
        None => (NO_SITUATION.to_owned(), Vec::new()),
    };

    let retrieved_block = hits
        .iter()
        .map(|(hit, doc)| {
            format!(
                "{} (distance={:.2}): {}",
                hit.doc_id,
                hit.distance,
                doc.text()
            )
        })
        .collect::<Vec<_>>()
        .join("\n");

    EngineeredPrompt {
        question: question.to_owned(),
        rendered: template.render(question, &history_block, &situation_block, &retrieved_block),
        sources: PromptSources {
            history_count: history.len(),
            situation_fields,
            retrieved: hits
                .iter()
                .map(|(h, _)| (h.doc_id.clone(), h.distance))
                .collect(),
        },
    }
}
