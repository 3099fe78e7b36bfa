//! Dual-graph retrieval pipeline for question answering over parsed
//! multimodal documents.
//!
//! The library is organized around two graphs:
//!
//! - a [`graph::ContentGraph`] built over atomic document units (paragraphs,
//!   tables, figures), whose node attributes and semantic links are refined
//!   over a fixed number of evolution passes, and
//! - a [`plan::PlanningGraph`], a DAG of sub-questions that is executed,
//!   checked for evidence sufficiency, and refined until the evidence
//!   suffices or the refinement budget is exhausted.
//!
//! Model access goes through the [`client::ModelClient`] trait, with a
//! deterministic scripted mock for offline runs and an OpenAI-compatible
//! wire client for real backends.

pub mod client;
pub mod config;
pub mod document;
pub mod dot;
pub mod eval;
pub mod graph;
pub mod plan;
pub mod store;

pub use client::mock::{MockClient, MockClientBuilder, MockScript};
pub use client::template::{render_template, Bindings, TemplateError, TemplateId};
pub use client::wire::WireClient;
pub use client::{
    CallLedger, ChatRequest, ClientConfig, ClientError, Exchange, LedgerSnapshot, ModelClient,
    Part, RecordingClient, Role,
};
pub use config::{EvolutionMode, RunConfig, Schedule};
pub use document::{load_corpus, AtomicUnit, DocumentError, Modality, ParsedCorpus};
pub use graph::{
    candidate_neighborhood, cosine_similarity, evolve_graph, init_structural_edges,
    initialize_node_attributes, subgraph_readout, ContentGraph, EvidenceSubgraph, EvolutionConfig,
    GraphError, GraphNode, NodeAttributes, NodeUpdate, Provenance, SelectedNode,
};
pub use plan::{
    answer_query, validate_planning_graph, validate_wire_dag, ExecutionTrace, NodeAnswer,
    PipelineConfig, PipelineFailure, PlanError, PlanNode, PlanNodeType, PlanningGraph,
    SufficiencyVerdict, Violation, WireDag, WireEdge,
};
pub use store::{StoreError, StorePaths};
