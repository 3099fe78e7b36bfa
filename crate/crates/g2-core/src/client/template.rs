//! Prompt templates and placeholder substitution.
//!
//! Templates are plain-text data files under `templates/`, one per role,
//! compiled into the binary verbatim. Two placeholder grammars appear in
//! them: `$NAME$` (uppercase) and `{name}` (lowercase, from a fixed set so
//! that literal JSON braces in the template bodies are left untouched).

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("unbound placeholder: {0}")]
    UnboundPlaceholder(String),
}

/// Identifies one shipped prompt template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateId {
    Initializer,
    Evolver,
    DecomposerInitial,
    DecomposerRefine,
    Worker,
    Reasoner,
    Checker,
    JudgeAccuracy,
    JudgeRecall,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::Initializer,
        TemplateId::Evolver,
        TemplateId::DecomposerInitial,
        TemplateId::DecomposerRefine,
        TemplateId::Worker,
        TemplateId::Reasoner,
        TemplateId::Checker,
        TemplateId::JudgeAccuracy,
        TemplateId::JudgeRecall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Initializer => "initializer",
            TemplateId::Evolver => "evolver",
            TemplateId::DecomposerInitial => "decomposer_initial",
            TemplateId::DecomposerRefine => "decomposer_refine",
            TemplateId::Worker => "worker",
            TemplateId::Reasoner => "reasoner",
            TemplateId::Checker => "checker",
            TemplateId::JudgeAccuracy => "judge_accuracy",
            TemplateId::JudgeRecall => "judge_recall",
        }
    }

    pub fn from_name(name: &str) -> Result<TemplateId, TemplateError> {
        TemplateId::ALL
            .iter()
            .copied()
            .find(|t| t.name() == name)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))
    }

    /// Raw template text as shipped.
    pub fn source(self) -> &'static str {
        match self {
            TemplateId::Initializer => include_str!("../../templates/initializer.txt"),
            TemplateId::Evolver => include_str!("../../templates/evolver.txt"),
            TemplateId::DecomposerInitial => {
                include_str!("../../templates/decomposer_initial.txt")
            }
            TemplateId::DecomposerRefine => include_str!("../../templates/decomposer_refine.txt"),
            TemplateId::Worker => include_str!("../../templates/worker.txt"),
            TemplateId::Reasoner => include_str!("../../templates/reasoner.txt"),
            TemplateId::Checker => include_str!("../../templates/checker.txt"),
            TemplateId::JudgeAccuracy => include_str!("../../templates/judge_accuracy.txt"),
            TemplateId::JudgeRecall => include_str!("../../templates/judge_recall.txt"),
        }
    }
}

/// Brace-style placeholders recognized by the renderer. Anything else inside
/// braces (e.g. the JSON examples embedded in the templates) is literal text.
const BRACE_PLACEHOLDERS: [&str; 10] = [
    "content",
    "context",
    "keywords",
    "neighbors",
    "neighbor_number",
    "question",
    "gold_answers",
    "assistant_answer",
    "evidence_raw",
    "retrieved_context",
];

/// Placeholder values for one render. Names are given without delimiters,
/// e.g. `bind("DOC", ...)` for `$DOC$` and `bind("content", ...)` for
/// `{content}`.
#[derive(Debug, Clone, Default)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn bind(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

fn is_dollar_name(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_uppercase() || c == '_')
}

/// Substitute every placeholder in the template. Placeholder occurrences
/// without a binding are an error; inserted values are not rescanned.
pub fn render_template(id: TemplateId, bindings: &Bindings) -> Result<String, TemplateError> {
    render_str(id.source(), bindings)
}

pub(crate) fn render_str(template: &str, bindings: &Bindings) -> Result<String, TemplateError> {
    let bytes = template.as_bytes();
    let mut out = String::with_capacity(template.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'$' => {
                if let Some(rel) = template[i + 1..].find('$') {
                    let token = &template[i + 1..i + 1 + rel];
                    if is_dollar_name(token) {
                        match bindings.get(token) {
                            Some(value) => out.push_str(value),
                            None => {
                                return Err(TemplateError::UnboundPlaceholder(format!(
                                    "${token}$"
                                )))
                            }
                        }
                        i += token.len() + 2;
                        continue;
                    }
                }
                out.push('$');
                i += 1;
            }
            b'{' => {
                if let Some(rel) = template[i + 1..].find('}') {
                    let token = &template[i + 1..i + 1 + rel];
                    if BRACE_PLACEHOLDERS.contains(&token) {
                        match bindings.get(token) {
                            Some(value) => out.push_str(value),
                            None => {
                                return Err(TemplateError::UnboundPlaceholder(format!(
                                    "{{{token}}}"
                                )))
                            }
                        }
                        i += token.len() + 2;
                        continue;
                    }
                }
                out.push('{');
                i += 1;
            }
            _ => {
                // advance one whole UTF-8 character
                let ch = template[i..].chars().next().expect("in-bounds char");
                out.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    Ok(out)
}
