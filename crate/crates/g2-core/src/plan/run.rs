//! Planning-graph execution: decompose, execute, check, refine, synthesize.
//!
//! One query runs as: probing retrieval seeds the initial decomposition;
//! non-root nodes execute in dependency order, each with its own evidence
//! readout plus its children's answers; the checker judges sufficiency;
//! while insufficient and within the refinement budget, the decomposer
//! revises the DAG against the identified gaps and only new or changed
//! nodes re-execute. The reasoner then synthesizes the final answer from
//! the union of node evidence and the QA trajectory. The root node is never
//! sent to the worker; answering it is the reasoner's job.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    validate_planning_graph, PlanError, PlanningGraph, WireDag, ROOT_ID,
};
use crate::client::extract::{extract_tagged_block, parse_structured_lenient};
use crate::client::template::{render_template, Bindings, TemplateId};
use crate::client::{
    chat_with_parse_retries, ChatRequest, Exchange, ModelClient, ParseRetryError, RecordingClient,
    Role,
};
use crate::graph::{subgraph_readout, ContentGraph, EvidenceSubgraph, SelectedNode};

/// Retrieval and refinement budgets for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Node budget per evidence readout (probe and per-node alike).
    pub k: usize,
    /// Maximum refinement rounds after the initial decomposition.
    pub tau_max: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { k: 5, tau_max: 3 }
    }
}

/// A worker's answer for one plan node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAnswer {
    pub node_id: String,
    pub task: String,
    pub answer_text: String,
    pub thought_text: String,
    pub evidence: EvidenceSubgraph,
    /// True when no attempt produced a well-formed `<output>` block and the
    /// answer is the raw response.
    pub degraded: bool,
}

/// Checker verdict over the accumulated evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    /// Empty when sufficient; at most three gap descriptions otherwise.
    pub gaps: Vec<String>,
}

/// Complete record of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub query: String,
    pub probe: EvidenceSubgraph,
    pub dag_versions: Vec<PlanningGraph>,
    /// Answers per DAG version, in that version's execution order.
    pub answers: Vec<Vec<NodeAnswer>>,
    pub verdicts: Vec<SufficiencyVerdict>,
    pub final_answer: String,
    pub degraded_final: bool,
    pub model_exchanges: Vec<Exchange>,
}

/// A fatal pipeline stage error with the partial trace attached.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: PlanError,
    pub trace: Box<ExecutionTrace>,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn qa_block(answers: &[NodeAnswer]) -> String {
    if answers.is_empty() {
        return "(no sub-task answers yet)".to_string();
    }
    answers
        .iter()
        .map(|a| format!("[Q]: {}\n[A]: {}", a.task, a.answer_text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn gaps_block(gaps: &[String]) -> String {
    if gaps.is_empty() {
        return "(none)".to_string();
    }
    gaps.iter()
        .map(|g| format!("- {g}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn attach_images(mut request: ChatRequest, evidence: &EvidenceSubgraph, vision: bool) -> ChatRequest {
    if vision {
        for path in evidence.image_paths() {
            request = request.with_image(path.to_path_buf());
        }
    }
    request
}

const INVALID_DAG_MARK: &str = "invalid dag: ";

fn parse_wire_dag(response: &str) -> Result<(WireDag, Vec<super::Violation>), String> {
    let block = extract_tagged_block(response, "dag").map_err(|e| e.to_string())?;
    let value = parse_structured_lenient(&block).map_err(|e| e.to_string())?;
    let wire: WireDag =
        serde_json::from_value(value).map_err(|e| format!("dag shape: {e}"))?;
    let violations = super::validate_wire_dag(&wire);
    let fatal: Vec<String> = violations
        .iter()
        .filter(|v| v.is_fatal())
        .map(ToString::to_string)
        .collect();
    if !fatal.is_empty() {
        return Err(format!("{INVALID_DAG_MARK}{}", fatal.join("; ")));
    }
    Ok((wire, violations))
}

fn dag_parse_error(err: ParseRetryError) -> PlanError {
    match err {
        ParseRetryError::Client(e) => PlanError::Client(e),
        ParseRetryError::Unparseable { attempts, reason, .. } => {
            if let Some(detail) = reason.strip_prefix(INVALID_DAG_MARK) {
                PlanError::InvalidDag { attempts, reason: detail.to_string() }
            } else {
                PlanError::ModelOutputUnparseable { attempts, reason }
            }
        }
    }
}

fn log_soft_violations(stage: &str, pg: &PlanningGraph, extra: &[super::Violation]) {
    for violation in validate_planning_graph(pg).iter().chain(extra) {
        if !violation.is_fatal() {
            log::warn!("{stage}: {violation}");
        }
    }
}

/// Build the initial planning graph from the probing context.
pub fn decompose_initial(
    query: &str,
    probe: &EvidenceSubgraph,
    client: &dyn ModelClient,
) -> Result<PlanningGraph, PlanError> {
    let prompt = render_template(
        TemplateId::DecomposerInitial,
        &Bindings::new()
            .bind("DOC", probe.context_block(client.vision_capable()))
            .bind("Q", query),
    )
    .expect("decomposer template bindings are complete");
    let request = attach_images(
        ChatRequest::text(Role::Decomposer, prompt),
        probe,
        client.vision_capable(),
    );
    let (wire, _) =
        chat_with_parse_retries(client, &request, parse_wire_dag).map_err(dag_parse_error)?;
    let (pg, soft) = PlanningGraph::from_wire(&wire, 0)
        .expect("fatal violations rejected during parsing");
    log_soft_violations("initial decomposition", &pg, &soft);
    Ok(pg)
}

/// Execute one non-root node: retrieve its evidence, fold in child answers,
/// and parse the worker's `<output>`/`<thought>` blocks.
pub fn execute_node(
    pg: &PlanningGraph,
    node_id: &str,
    graph: &ContentGraph,
    answers_so_far: &BTreeMap<String, NodeAnswer>,
    k: usize,
    client: &dyn ModelClient,
) -> Result<NodeAnswer, PlanError> {
    let node = pg
        .node(node_id)
        .ok_or_else(|| PlanError::UnknownNode(node_id.to_string()))?;
    debug_assert!(node_id != ROOT_ID, "the root is answered by the reasoner");
    let evidence = subgraph_readout(graph, &node.task, k, client)?;

    let mut doc = evidence.context_block(client.vision_capable());
    let child_answers: Vec<&NodeAnswer> = node
        .children
        .iter()
        .filter_map(|c| answers_so_far.get(c))
        .collect();
    if !child_answers.is_empty() {
        doc.push_str("\n\nSupplementary QA from answered sub-tasks:");
        for answer in &child_answers {
            doc.push_str(&format!("\n[Q]: {}\n[A]: {}", answer.task, answer.answer_text));
        }
    }

    let prompt = render_template(
        TemplateId::Worker,
        &Bindings::new().bind("DOC", doc).bind("Q", node.task.clone()),
    )
    .expect("worker template bindings are complete");
    let request = attach_images(
        ChatRequest::text(Role::Worker, prompt),
        &evidence,
        client.vision_capable(),
    );
    let parsed = chat_with_parse_retries(client, &request, |response| {
        let output = extract_tagged_block(response, "output").map_err(|e| e.to_string())?;
        let thought = extract_tagged_block(response, "thought").unwrap_or_default();
        Ok((output, thought))
    });
    match parsed {
        Ok((answer_text, thought_text)) => Ok(NodeAnswer {
            node_id: node_id.to_string(),
            task: node.task.clone(),
            answer_text,
            thought_text,
            evidence,
            degraded: false,
        }),
        Err(ParseRetryError::Client(err)) => Err(err.into()),
        Err(ParseRetryError::Unparseable { attempts, last_response, .. }) => {
            log::warn!(
                "worker output for node {node_id} lacked an <output> block after {attempts} attempt(s); using the raw response"
            );
            Ok(NodeAnswer {
                node_id: node_id.to_string(),
                task: node.task.clone(),
                answer_text: last_response,
                thought_text: String::new(),
                evidence,
                degraded: true,
            })
        }
    }
}

/// Judge whether the accumulated QA evidence answers the query. An
/// unparseable checker is treated as insufficient with a synthetic gap, so a
/// flaky judge can never end the loop early.
pub fn check_sufficiency(
    query: &str,
    answers: &[NodeAnswer],
    probe: &EvidenceSubgraph,
    client: &dyn ModelClient,
) -> Result<SufficiencyVerdict, PlanError> {
    let prompt = render_template(
        TemplateId::Checker,
        &Bindings::new()
            .bind("Q", query)
            .bind("DOC", probe.context_block(client.vision_capable()))
            .bind("EVIDENCE", qa_block(answers)),
    )
    .expect("checker template bindings are complete");
    let request = ChatRequest::text(Role::Checker, prompt);
    let parsed = chat_with_parse_retries(client, &request, |response| {
        let block = extract_tagged_block(response, "check").map_err(|e| e.to_string())?;
        let value = parse_structured_lenient(&block).map_err(|e| e.to_string())?;
        let sufficient = value
            .get("sufficient")
            .and_then(|v| v.as_bool())
            .ok_or("missing boolean field: sufficient")?;
        let gaps: Vec<String> = match value.get("gaps").and_then(|v| v.as_array()) {
            Some(arr) => arr
                .iter()
                .filter_map(|g| g.as_str().map(str::to_string))
                .collect(),
            None => Vec::new(),
        };
        if !sufficient && gaps.is_empty() {
            return Err("insufficient verdict must list 1-3 gaps".to_string());
        }
        Ok(SufficiencyVerdict { sufficient, gaps })
    });
    match parsed {
        Ok(mut verdict) => {
            if verdict.sufficient {
                verdict.gaps.clear();
            } else if verdict.gaps.len() > 3 {
                log::warn!(
                    "checker listed {} gaps; keeping the first 3",
                    verdict.gaps.len()
                );
                verdict.gaps.truncate(3);
            }
            Ok(verdict)
        }
        Err(ParseRetryError::Client(err)) => Err(err.into()),
        Err(ParseRetryError::Unparseable { attempts, .. }) => {
            log::warn!("checker output unparseable after {attempts} attempt(s); treating as insufficient");
            Ok(SufficiencyVerdict {
                sufficient: false,
                gaps: vec!["checker output unparseable".to_string()],
            })
        }
    }
}

/// Ask the decomposer to revise the DAG against the identified gaps.
pub fn refine_planning_graph(
    query: &str,
    answers: &[NodeAnswer],
    gaps: &[String],
    old: &PlanningGraph,
    probe: &EvidenceSubgraph,
    client: &dyn ModelClient,
) -> Result<PlanningGraph, PlanError> {
    let prompt = render_template(
        TemplateId::DecomposerRefine,
        &Bindings::new()
            .bind("DOC", probe.context_block(client.vision_capable()))
            .bind("Q", query)
            .bind("OLD_DAG", old.wire_json())
            .bind("EVIDENCE", qa_block(answers))
            .bind("GAPS", gaps_block(gaps)),
    )
    .expect("refine template bindings are complete");
    let request = attach_images(
        ChatRequest::text(Role::Decomposer, prompt),
        probe,
        client.vision_capable(),
    );
    let (wire, _) =
        chat_with_parse_retries(client, &request, parse_wire_dag).map_err(dag_parse_error)?;
    let (pg, mut soft) = PlanningGraph::from_wire(&wire, old.revision() + 1)
        .expect("fatal violations rejected during parsing");
    let delta = pg.len() as i64 - old.len() as i64;
    if !(1..=3).contains(&delta) {
        soft.push(super::Violation::RefinementDeltaOutOfRange { delta });
    }
    log_soft_violations("refinement", &pg, &soft);
    Ok(pg)
}

/// Merge the evidence subgraphs of all answers, deduplicated by node id in
/// first-seen order. Falls back to the probe when no node evidence exists.
fn union_evidence(
    query: &str,
    answers: &[NodeAnswer],
    probe: &EvidenceSubgraph,
) -> EvidenceSubgraph {
    if answers.is_empty() {
        return EvidenceSubgraph {
            query_text: query.to_string(),
            selected: probe.selected.clone(),
        };
    }
    let mut seen = std::collections::HashSet::new();
    let mut selected: Vec<SelectedNode> = Vec::new();
    for answer in answers {
        for node in &answer.evidence.selected {
            if seen.insert(node.node_id.clone()) {
                selected.push(node.clone());
            }
        }
    }
    EvidenceSubgraph { query_text: query.to_string(), selected }
}

/// Produce the final answer from the union of node evidence and the QA
/// trajectory. On persistent parse failure the raw response is returned,
/// flagged as degraded.
pub fn synthesize_answer(
    query: &str,
    answers: &[NodeAnswer],
    probe: &EvidenceSubgraph,
    client: &dyn ModelClient,
) -> Result<(String, bool), PlanError> {
    let evidence = union_evidence(query, answers, probe);
    let prompt = render_template(
        TemplateId::Reasoner,
        &Bindings::new()
            .bind("Q", query)
            .bind("DOC", evidence.context_block(client.vision_capable()))
            .bind("TRA", qa_block(answers)),
    )
    .expect("reasoner template bindings are complete");
    let request = attach_images(
        ChatRequest::text(Role::Reasoner, prompt),
        &evidence,
        client.vision_capable(),
    );
    let parsed = chat_with_parse_retries(client, &request, |response| {
        extract_tagged_block(response, "output").map_err(|e| e.to_string())
    });
    match parsed {
        Ok(answer) => Ok((answer, false)),
        Err(ParseRetryError::Client(err)) => Err(err.into()),
        Err(ParseRetryError::Unparseable { attempts, last_response, .. }) => {
            log::warn!("reasoner output lacked an <output> block after {attempts} attempt(s); using the raw response");
            Ok((last_response, true))
        }
    }
}

struct TraceBuilder {
    query: String,
    probe: EvidenceSubgraph,
    dag_versions: Vec<PlanningGraph>,
    answers: Vec<Vec<NodeAnswer>>,
    verdicts: Vec<SufficiencyVerdict>,
}

impl TraceBuilder {
    fn finish(
        self,
        final_answer: String,
        degraded_final: bool,
        exchanges: Vec<Exchange>,
    ) -> ExecutionTrace {
        ExecutionTrace {
            query: self.query,
            probe: self.probe,
            dag_versions: self.dag_versions,
            answers: self.answers,
            verdicts: self.verdicts,
            final_answer,
            degraded_final,
            model_exchanges: exchanges,
        }
    }
}

/// Run the full loop for one query over an evolved, immutable content graph.
///
/// The trace records the probe, every DAG version with its answers and
/// verdict, the final answer, and every model exchange. With a fully
/// scripted client the trace is deterministic end to end. Fatal stage errors
/// abort and return the partial trace alongside the error.
pub fn answer_query(
    query: &str,
    graph: &ContentGraph,
    cfg: &PipelineConfig,
    client: &dyn ModelClient,
) -> Result<ExecutionTrace, PipelineFailure> {
    let recorder = RecordingClient::new(client);
    let mut builder = TraceBuilder {
        query: query.to_string(),
        probe: EvidenceSubgraph { query_text: query.to_string(), selected: vec![] },
        dag_versions: Vec::new(),
        answers: Vec::new(),
        verdicts: Vec::new(),
    };
    let fail = |builder: TraceBuilder, recorder: &RecordingClient<'_>, error: PlanError| {
        Err(PipelineFailure {
            error,
            trace: Box::new(builder.finish(String::new(), false, recorder.take_exchanges())),
        })
    };

    // probing retrieval seeds the first decomposition
    let probe = match subgraph_readout(graph, query, cfg.k, &recorder) {
        Ok(probe) => probe,
        Err(err) => return fail(builder, &recorder, err.into()),
    };
    builder.probe = probe.clone();

    let mut pg = match decompose_initial(query, &probe, &recorder) {
        Ok(pg) => pg,
        Err(err) => return fail(builder, &recorder, err),
    };

    // answers from the previous version, keyed by (node id, task text):
    // a refinement that keeps both reuses the answer without a worker call
    let mut reusable: BTreeMap<(String, String), NodeAnswer> = BTreeMap::new();
    let mut refinements = 0u64;

    loop {
        let order = match pg.execution_order() {
            Ok(order) => order,
            Err(err) => return fail(builder, &recorder, err),
        };
        let mut answers_by_id: BTreeMap<String, NodeAnswer> = BTreeMap::new();
        for node_id in order.iter().filter(|id| *id != ROOT_ID) {
            let task = pg.node(node_id).expect("ordered ids are nodes").task.clone();
            let key = (node_id.clone(), task);
            let answer = match reusable.get(&key) {
                Some(previous) => previous.clone(),
                None => match execute_node(&pg, node_id, graph, &answers_by_id, cfg.k, &recorder)
                {
                    Ok(answer) => answer,
                    Err(err) => return fail(builder, &recorder, err),
                },
            };
            answers_by_id.insert(node_id.clone(), answer);
        }
        let answers_in_order: Vec<NodeAnswer> = order
            .iter()
            .filter(|id| *id != ROOT_ID)
            .map(|id| answers_by_id[id].clone())
            .collect();

        let verdict = match check_sufficiency(query, &answers_in_order, &probe, &recorder) {
            Ok(verdict) => verdict,
            Err(err) => return fail(builder, &recorder, err),
        };

        builder.dag_versions.push(pg.clone());
        builder.answers.push(answers_in_order.clone());
        builder.verdicts.push(verdict.clone());

        if verdict.sufficient || refinements >= cfg.tau_max {
            break;
        }
        match refine_planning_graph(query, &answers_in_order, &verdict.gaps, &pg, &probe, &recorder)
        {
            Ok(refined) => {
                reusable = answers_by_id
                    .into_iter()
                    .map(|(id, answer)| ((id, answer.task.clone()), answer))
                    .collect();
                pg = refined;
                refinements += 1;
            }
            Err(PlanError::ModelOutputUnparseable { attempts, reason })
            | Err(PlanError::InvalidDag { attempts, reason }) => {
                log::warn!(
                    "refinement abandoned after {attempts} attempt(s) ({reason}); answering with current evidence"
                );
                break;
            }
            Err(err) => return fail(builder, &recorder, err),
        }
    }

    let final_answers = builder.answers.last().cloned().unwrap_or_default();
    let (final_answer, degraded_final) =
        match synthesize_answer(query, &final_answers, &probe, &recorder) {
            Ok(pair) => pair,
            Err(err) => return fail(builder, &recorder, err),
        };
    Ok(builder.finish(final_answer, degraded_final, recorder.take_exchanges()))
}
