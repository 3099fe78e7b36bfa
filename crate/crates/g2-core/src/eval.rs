//! Judge-based evaluation: answer accuracy and retrieval recall.
//!
//! Accuracy verdicts are binary. Recall verdicts follow a four-level rubric
//! with fixed scores {1.0, 0.7, 0.3, 0.0}; a response whose score and label
//! disagree is rejected and retried, since real judges drift. Judge failures
//! are excluded from aggregates and counted separately rather than scored
//! zero, keeping the accuracy semantics clean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::extract::parse_structured_lenient;
use crate::client::template::{render_template, Bindings, TemplateId};
use crate::client::{
    chat_with_parse_retries, ChatRequest, ClientError, ModelClient, ParseRetryError, Role,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judge output unusable after {attempts} attempt(s): {reason}")]
    JudgeFailure { attempts: u32, reason: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Accuracy judgment for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedAnswer {
    pub question: String,
    pub gold: String,
    pub predicted: String,
    /// 0 or 1.
    pub accuracy: u8,
    pub reasoning: String,
}

/// The four support levels of the recall rubric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecallLabel {
    #[serde(rename = "Full Support")]
    FullSupport,
    #[serde(rename = "Near Full Support")]
    NearFullSupport,
    #[serde(rename = "Partial/Weak Support")]
    PartialWeakSupport,
    #[serde(rename = "No Support/Contradictory")]
    NoSupportContradictory,
}

impl RecallLabel {
    pub fn score(self) -> f64 {
        match self {
            RecallLabel::FullSupport => 1.0,
            RecallLabel::NearFullSupport => 0.7,
            RecallLabel::PartialWeakSupport => 0.3,
            RecallLabel::NoSupportContradictory => 0.0,
        }
    }

    pub fn from_label(label: &str) -> Option<RecallLabel> {
        match label {
            "Full Support" => Some(RecallLabel::FullSupport),
            "Near Full Support" => Some(RecallLabel::NearFullSupport),
            "Partial/Weak Support" => Some(RecallLabel::PartialWeakSupport),
            "No Support/Contradictory" => Some(RecallLabel::NoSupportContradictory),
            _ => None,
        }
    }
}

/// Recall judgment for one evidence/context pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallVerdict {
    /// One of 0.0, 0.3, 0.7, 1.0, always consistent with `label`.
    pub score: f64,
    pub label: RecallLabel,
    pub supported_count: u64,
    pub total_segments: u64,
    pub missing_segments: Vec<String>,
    pub contradicted_segments: Vec<String>,
    pub reasoning: String,
}

fn judge_failure(err: ParseRetryError) -> EvalError {
    match err {
        ParseRetryError::Client(e) => EvalError::Client(e),
        ParseRetryError::Unparseable { attempts, reason, .. } => {
            EvalError::JudgeFailure { attempts, reason }
        }
    }
}

/// Judge whether a predicted answer matches the gold answer.
pub fn judge_accuracy(
    question: &str,
    gold: &str,
    predicted: &str,
    client: &dyn ModelClient,
) -> Result<JudgedAnswer, EvalError> {
    let prompt = render_template(
        TemplateId::JudgeAccuracy,
        &Bindings::new()
            .bind("question", question)
            .bind("gold_answers", gold)
            .bind("assistant_answer", predicted),
    )
    .expect("accuracy judge template bindings are complete");
    let request = ChatRequest::text(Role::Judge, prompt);
    let (accuracy, reasoning) = chat_with_parse_retries(client, &request, |response| {
        let value = parse_structured_lenient(response).map_err(|e| e.to_string())?;
        let accuracy = value
            .get("accuracy")
            .and_then(|v| v.as_u64())
            .ok_or("missing integer field: accuracy")?;
        if accuracy > 1 {
            return Err(format!("accuracy {accuracy} outside {{0, 1}}"));
        }
        let reasoning = value
            .get("reasoning")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        Ok((accuracy as u8, reasoning))
    })
    .map_err(judge_failure)?;
    Ok(JudgedAnswer {
        question: question.to_string(),
        gold: gold.to_string(),
        predicted: predicted.to_string(),
        accuracy,
        reasoning,
    })
}

/// Judge how fully a retrieved context supports ground-truth evidence.
pub fn judge_recall(
    evidence_raw: &str,
    retrieved_context: &str,
    client: &dyn ModelClient,
) -> Result<RecallVerdict, EvalError> {
    let prompt = render_template(
        TemplateId::JudgeRecall,
        &Bindings::new()
            .bind("evidence_raw", evidence_raw)
            .bind("retrieved_context", retrieved_context),
    )
    .expect("recall judge template bindings are complete");
    let request = ChatRequest::text(Role::Judge, prompt);
    chat_with_parse_retries(client, &request, |response| {
        let value = parse_structured_lenient(response).map_err(|e| e.to_string())?;
        let score = value
            .get("score")
            .and_then(|v| v.as_f64())
            .ok_or("missing number field: score")?;
        let label_str = value
            .get("label")
            .and_then(|v| v.as_str())
            .ok_or("missing string field: label")?;
        let label = RecallLabel::from_label(label_str)
            .ok_or_else(|| format!("unknown label {label_str:?}"))?;
        if (score - label.score()).abs() > 1e-9 {
            return Err(format!(
                "score {score} inconsistent with label {label_str:?} (expects {})",
                label.score()
            ));
        }
        let supported_count = value
            .get("supported_count")
            .and_then(|v| v.as_u64())
            .unwrap_or(0);
        let total_segments = value
            .get("total_segments")
            .and_then(|v| v.as_u64())
            .unwrap_or(0);
        if supported_count > total_segments {
            return Err(format!(
                "supported_count {supported_count} exceeds total_segments {total_segments}"
            ));
        }
        let strings = |field: &str| -> Vec<String> {
            value
                .get(field)
                .and_then(|v| v.as_array())
                .map(|arr| {
                    arr.iter()
                        .filter_map(|x| x.as_str().map(str::to_string))
                        .collect()
                })
                .unwrap_or_default()
        };
        Ok(RecallVerdict {
            score: label.score(),
            label,
            supported_count,
            total_segments,
            missing_segments: strings("missing_segments"),
            contradicted_segments: strings("contradicted_segments"),
            reasoning: value
                .get("reasoning")
                .and_then(|v| v.as_str())
                .unwrap_or_default()
                .to_string(),
        })
    })
    .map_err(judge_failure)
}

/// Aggregate over judged answers, with failures counted apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub judge_failures: usize,
    /// Mean accuracy in percent; absent when nothing was judged.
    pub mean_accuracy_percent: Option<f64>,
}

pub fn aggregate(judged: &[JudgedAnswer], judge_failures: usize) -> EvalSummary {
    let mean = if judged.is_empty() {
        None
    } else {
        let sum: u64 = judged.iter().map(|j| u64::from(j.accuracy)).sum();
        Some(100.0 * sum as f64 / judged.len() as f64)
    };
    EvalSummary {
        count: judged.len(),
        judge_failures,
        mean_accuracy_percent: mean,
    }
}

/// One input record of a batch evaluation file (JSON Lines, or one JSON
/// array). Recall is judged only when both evidence and context are present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question: String,
    pub gold: String,
    pub predicted: String,
    #[serde(default)]
    pub evidence: Option<String>,
    #[serde(default)]
    pub context: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemReport {
    pub question: String,
    pub accuracy: Option<JudgedAnswer>,
    pub recall: Option<RecallVerdict>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub items: Vec<ItemReport>,
}

/// Parse a batch input file: either JSON Lines or a single JSON array.
pub fn parse_records(raw: &str) -> Result<Vec<EvalRecord>, String> {
    let trimmed = raw.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(raw).map_err(|e| e.to_string());
    }
    raw.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(|line| serde_json::from_str(line).map_err(|e| e.to_string()))
        .collect()
}

/// Judge a batch of records. Items whose judge fails are reported with the
/// failure and excluded from the mean.
pub fn eval_batch(records: &[EvalRecord], client: &dyn ModelClient) -> EvalReport {
    let mut judged = Vec::new();
    let mut failures = 0usize;
    let mut items = Vec::new();
    for record in records {
        let mut item = ItemReport {
            question: record.question.clone(),
            accuracy: None,
            recall: None,
            error: None,
        };
        match judge_accuracy(&record.question, &record.gold, &record.predicted, client) {
            Ok(answer) => {
                judged.push(answer.clone());
                item.accuracy = Some(answer);
            }
            Err(err) => {
                failures += 1;
                item.error = Some(err.to_string());
            }
        }
        if let (Some(evidence), Some(context)) = (&record.evidence, &record.context) {
            match judge_recall(evidence, context, client) {
                Ok(verdict) => item.recall = Some(verdict),
                Err(err) => {
                    item.error = Some(match item.error.take() {
                        Some(prev) => format!("{prev}; recall: {err}"),
                        None => format!("recall: {err}"),
                    });
                }
            }
        }
        items.push(item);
    }
    EvalReport { summary: aggregate(&judged, failures), items }
}
