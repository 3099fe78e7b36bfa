//! The content graph: atomic document units with model-generated attributes,
//! window-based structural edges, and an evolved semantic edge layer.
//!
//! Every node pairs the raw unit with a summary, keywords, tags, and an
//! embedding of `summary + "\n" + keywords.join(", ")`. Two edge layers
//! coexist: the structural layer links units whose global reading-order
//! ranks differ by at most the window `w` and is never modified after
//! construction; the semantic layer is rewritten per node during evolution.
//! Keeping the structural layer immutable means a bad evolver output can
//! never disconnect the graph.

mod evolve;
mod readout;

pub use evolve::{
    evolve_graph, evolve_node_lite, evolve_node_vlm, lite_update_for, EvolutionConfig, NodeUpdate,
};
pub use readout::{subgraph_readout, EvidenceSubgraph, Provenance, SelectedNode};

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::template::{render_template, Bindings, TemplateId};
use crate::client::{
    chat_with_parse_retries, ChatRequest, ClientError, ModelClient, ParseRetryError, Role,
};
use crate::document::{AtomicUnit, Modality, ParsedCorpus};

/// Sentinel phrase the node initializer emits for content-free units
/// (reference lists, boilerplate). Nodes whose summary contains it are kept
/// in the graph but excluded from ranking and neighbor expansion.
pub const NO_MEANING_SENTINEL: &str = "No meaningful information";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("model output unparseable after {attempts} attempt(s): {reason}")]
    ModelOutputUnparseable { attempts: u32, reason: String },
    #[error("content graph has no meaningful nodes to rank")]
    EmptyGraph,
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl GraphError {
    pub(crate) fn from_parse_retry(err: ParseRetryError) -> GraphError {
        match err {
            ParseRetryError::Client(e) => GraphError::Client(e),
            ParseRetryError::Unparseable { attempts, reason, .. } => {
                GraphError::ModelOutputUnparseable { attempts, reason }
            }
        }
    }
}

/// Model-generated node attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAttributes {
    pub summary: String,
    /// Deduplicated, order-preserving; never empty.
    pub keywords: Vec<String>,
    pub tags: Vec<String>,
    /// False when the summary carries [`NO_MEANING_SENTINEL`].
    pub meaningful: bool,
}

impl NodeAttributes {
    /// Validate and normalize: keywords are deduplicated preserving order,
    /// and `meaningful` is derived from the summary.
    pub fn new(
        summary: impl Into<String>,
        keywords: Vec<String>,
        tags: Vec<String>,
    ) -> Result<NodeAttributes, String> {
        let summary = summary.into();
        if summary.is_empty() {
            return Err("summary must be non-empty".to_string());
        }
        let mut seen = HashSet::new();
        let keywords: Vec<String> = keywords
            .into_iter()
            .filter(|k| seen.insert(k.clone()))
            .collect();
        if keywords.is_empty() {
            return Err("keywords must be non-empty".to_string());
        }
        let meaningful = !summary.contains(NO_MEANING_SENTINEL);
        Ok(NodeAttributes { summary, keywords, tags, meaningful })
    }
}

/// One content-graph node: the unit itself, its attributes, and its
/// embedding. `version` counts applied attribute updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub unit: AtomicUnit,
    pub attrs: NodeAttributes,
    pub embedding: Vec<f64>,
    pub version: u64,
}

impl GraphNode {
    pub fn node_id(&self) -> &str {
        &self.unit.unit_id
    }

    pub fn is_meaningful(&self) -> bool {
        self.attrs.meaningful
    }
}

/// The evolving content graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentGraph {
    /// Nodes in global reading order; the index in this vector is the rank.
    nodes: Vec<GraphNode>,
    index: HashMap<String, usize>,
    /// Normalized (lexicographically ordered) pairs; fixed at init.
    structural_edges: BTreeSet<(String, String)>,
    /// Stored as (suggesting node, target); adjacency is symmetric. Keeping
    /// the suggester lets one node's update replace its own links without
    /// erasing links other nodes asserted toward it.
    semantic_edges: BTreeSet<(String, String)>,
    d: usize,
    epoch: u64,
    window: usize,
}

fn norm_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl ContentGraph {
    /// Initialize a graph over a corpus: one initializer call plus one
    /// embedding per unit, then window edges over reading-order ranks.
    pub fn build(
        corpus: &ParsedCorpus,
        client: &dyn ModelClient,
        window: usize,
    ) -> Result<ContentGraph, GraphError> {
        assert!(window >= 1, "window must be at least 1");
        assert!(!corpus.is_empty(), "corpus must be non-empty");
        let mut nodes = Vec::with_capacity(corpus.len());
        let mut d = 0usize;
        for unit in corpus.units() {
            let attrs = initialize_node_attributes(unit, client)?;
            let embedding = embed_attributes(&attrs, client)?;
            if d == 0 {
                d = embedding.len();
            } else if embedding.len() != d {
                return Err(GraphError::DimensionMismatch {
                    expected: d,
                    actual: embedding.len(),
                });
            }
            nodes.push(GraphNode {
                unit: unit.clone(),
                attrs,
                embedding,
                version: 0,
            });
        }
        let structural_edges = init_structural_edges(corpus, window);
        let index = nodes
            .iter()
            .enumerate()
            .map(|(rank, node)| (node.node_id().to_string(), rank))
            .collect();
        Ok(ContentGraph {
            nodes,
            index,
            structural_edges,
            semantic_edges: BTreeSet::new(),
            d,
            epoch: 0,
            window,
        })
    }

    /// Reassemble a graph from stored parts, re-validating every invariant:
    /// unique ids, embedding dimensions, live edge endpoints, no self-loops,
    /// and the structural layer equal to the window formula.
    pub fn from_parts(
        nodes: Vec<GraphNode>,
        structural_edges: BTreeSet<(String, String)>,
        semantic_edges: BTreeSet<(String, String)>,
        d: usize,
        epoch: u64,
        window: usize,
    ) -> Result<ContentGraph, String> {
        let mut index = HashMap::new();
        for (rank, node) in nodes.iter().enumerate() {
            if index.insert(node.node_id().to_string(), rank).is_some() {
                return Err(format!("duplicate node_id {:?}", node.node_id()));
            }
            if node.embedding.len() != d {
                return Err(format!(
                    "node {:?} embedding has length {}, graph dimension is {d}",
                    node.node_id(),
                    node.embedding.len()
                ));
            }
        }
        for (a, b) in structural_edges.iter().chain(semantic_edges.iter()) {
            if a == b {
                return Err(format!("self-loop on {a:?}"));
            }
            if !index.contains_key(a) {
                return Err(format!("edge endpoint {a:?} is not a node"));
            }
            if !index.contains_key(b) {
                return Err(format!("edge endpoint {b:?} is not a node"));
            }
        }
        for (a, b) in &structural_edges {
            if norm_pair(a, b) != (a.clone(), b.clone()) {
                return Err(format!("structural edge ({a:?}, {b:?}) is not normalized"));
            }
        }
        let expected = window_edges(
            &nodes.iter().map(|n| n.node_id().to_string()).collect::<Vec<_>>(),
            window,
        );
        if structural_edges != expected {
            return Err("structural edges do not match the window formula".to_string());
        }
        Ok(ContentGraph {
            nodes,
            index,
            structural_edges,
            semantic_edges,
            d,
            epoch,
            window,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, node_id: &str) -> Option<&GraphNode> {
        self.index.get(node_id).map(|&rank| &self.nodes[rank])
    }

    pub fn rank(&self, node_id: &str) -> Option<usize> {
        self.index.get(node_id).copied()
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.node_id().to_string()).collect()
    }

    pub fn structural_edges(&self) -> &BTreeSet<(String, String)> {
        &self.structural_edges
    }

    /// Raw semantic links as (suggesting node, target). Use
    /// [`ContentGraph::has_semantic_edge`] for order-insensitive checks.
    pub fn semantic_edges(&self) -> &BTreeSet<(String, String)> {
        &self.semantic_edges
    }

    /// Whether a semantic link exists between two nodes, in either
    /// suggestion direction.
    pub fn has_semantic_edge(&self, a: &str, b: &str) -> bool {
        self.semantic_edges.contains(&(a.to_string(), b.to_string()))
            || self.semantic_edges.contains(&(b.to_string(), a.to_string()))
    }

    /// Neighbor ranks across both edge layers, ascending.
    pub fn neighbor_ranks(&self, rank: usize) -> Vec<usize> {
        let id = self.nodes[rank].node_id();
        let mut out = BTreeSet::new();
        for (a, b) in self.structural_edges.iter().chain(self.semantic_edges.iter()) {
            if a == id {
                out.insert(self.index[b]);
            } else if b == id {
                out.insert(self.index[a]);
            }
        }
        out.into_iter().collect()
    }

    /// Neighbor ids across both layers, ordered by ascending rank.
    pub fn neighbors(&self, node_id: &str) -> Option<Vec<String>> {
        let rank = self.rank(node_id)?;
        Some(
            self.neighbor_ranks(rank)
                .into_iter()
                .map(|r| self.nodes[r].node_id().to_string())
                .collect(),
        )
    }

    /// Replace the semantic links this node suggests. Links other nodes
    /// suggested toward it, and the structural layer, are untouched.
    pub fn set_semantic_neighbors(&mut self, node_id: &str, neighbors: &[String]) {
        self.semantic_edges.retain(|(owner, _)| owner != node_id);
        for other in neighbors {
            if other != node_id && self.index.contains_key(other) {
                self.semantic_edges
                    .insert((node_id.to_string(), other.clone()));
            }
        }
    }

    pub(crate) fn node_mut(&mut self, node_id: &str) -> Option<&mut GraphNode> {
        let rank = *self.index.get(node_id)?;
        Some(&mut self.nodes[rank])
    }

    pub(crate) fn bump_epoch(&mut self) {
        self.epoch += 1;
    }

    pub(crate) fn check_dimension(&self, actual: usize) -> Result<(), GraphError> {
        if actual == self.d {
            Ok(())
        } else {
            Err(GraphError::DimensionMismatch { expected: self.d, actual })
        }
    }

    /// Ranks of meaningful nodes, ascending.
    pub fn meaningful_ranks(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_meaningful())
            .map(|(rank, _)| rank)
            .collect()
    }
}

fn window_edges(ids: &[String], window: usize) -> BTreeSet<(String, String)> {
    let mut edges = BTreeSet::new();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len().min(i + window + 1) {
            edges.insert(norm_pair(&ids[i], &ids[j]));
        }
    }
    edges
}

/// Window edges over a corpus: every pair of units whose global
/// reading-order ranks differ by at most `window`.
pub fn init_structural_edges(corpus: &ParsedCorpus, window: usize) -> BTreeSet<(String, String)> {
    assert!(window >= 1, "window must be at least 1");
    let ids: Vec<String> = corpus.units().iter().map(|u| u.unit_id.clone()).collect();
    window_edges(&ids, window)
}

/// Standard cosine similarity. Zero-norm inputs compare as 0 rather than
/// erroring; degenerate vectors occur with mock encoders.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, GraphError> {
    if a.len() != b.len() {
        return Err(GraphError::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

pub(crate) fn cosine_to_node(graph: &ContentGraph, rank: usize, query: &[f64]) -> f64 {
    cosine_similarity(&graph.nodes[rank].embedding, query)
        .expect("graph embeddings share the declared dimension")
}

/// The candidate set an evolver sees for one node: the `top_k` most similar
/// other nodes (ties broken by ascending rank) followed by any current
/// neighbors not already ranked, by ascending rank. Self is excluded.
pub fn candidate_neighborhood(
    graph: &ContentGraph,
    node_id: &str,
    top_k: usize,
) -> Result<Vec<String>, GraphError> {
    let rank = graph
        .rank(node_id)
        .ok_or_else(|| GraphError::UnknownNode(node_id.to_string()))?;
    let own = &graph.nodes[rank].embedding;
    let mut scored: Vec<(usize, f64)> = (0..graph.len())
        .filter(|&r| r != rank)
        .map(|r| (r, cosine_to_node(graph, r, own)))
        .collect();
    scored.sort_by(|(ra, sa), (rb, sb)| {
        sb.partial_cmp(sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ra.cmp(rb))
    });
    let ranked: Vec<usize> = scored.iter().take(top_k).map(|(r, _)| *r).collect();
    let ranked_set: HashSet<usize> = ranked.iter().copied().collect();
    let mut out: Vec<String> = ranked
        .iter()
        .map(|&r| graph.nodes[r].node_id().to_string())
        .collect();
    for nrank in graph.neighbor_ranks(rank) {
        if !ranked_set.contains(&nrank) {
            out.push(graph.nodes[nrank].node_id().to_string());
        }
    }
    Ok(out)
}

/// Textual form of a unit for prompts. Text-only backends get the rendering
/// prefixed so the model knows it stands in for a visual element.
pub(crate) fn unit_prompt_content(unit: &AtomicUnit, vision: bool) -> String {
    if unit.modality == Modality::Text || vision {
        unit.text.clone()
    } else {
        format!("figure/table described as: {}", unit.text)
    }
}

/// Ask the initializer for summary/keywords/tags over one unit. Images ride
/// along for table/figure units when the client is vision-capable.
pub fn initialize_node_attributes(
    unit: &AtomicUnit,
    client: &dyn ModelClient,
) -> Result<NodeAttributes, GraphError> {
    let prompt = render_template(
        TemplateId::Initializer,
        &Bindings::new().bind("content", unit_prompt_content(unit, client.vision_capable())),
    )
    .expect("initializer template bindings are complete");
    let mut request = ChatRequest::text(Role::Initializer, prompt);
    if client.vision_capable() {
        if let Some(image) = &unit.image_ref {
            request = request.with_image(image.clone());
        }
    }
    chat_with_parse_retries(client, &request, |response| {
        let value = crate::client::extract::parse_structured_lenient(response)
            .map_err(|e| e.to_string())?;
        let summary = value
            .get("summary")
            .and_then(|v| v.as_str())
            .ok_or("missing string field: summary")?
            .to_string();
        let keywords = string_array(&value, "keywords")?;
        let tags = string_array(&value, "tags").unwrap_or_default();
        NodeAttributes::new(summary, keywords, tags)
    })
    .map_err(GraphError::from_parse_retry)
}

fn string_array(value: &serde_json::Value, field: &str) -> Result<Vec<String>, String> {
    let arr = value
        .get(field)
        .and_then(|v| v.as_array())
        .ok_or_else(|| format!("missing array field: {field}"))?;
    arr.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("non-string entry in {field}"))
        })
        .collect()
}

/// The exact text fed to the embedding encoder for a node.
pub fn embedding_input(attrs: &NodeAttributes) -> String {
    format!("{}\n{}", attrs.summary, attrs.keywords.join(", "))
}

/// Embed a node's attributes. Dimension agreement with the graph is checked
/// by callers that hold the graph.
pub fn embed_attributes(
    attrs: &NodeAttributes,
    client: &dyn ModelClient,
) -> Result<Vec<f64>, GraphError> {
    let mut vectors = client.embed(&[embedding_input(attrs)])?;
    Ok(vectors.pop().expect("one vector per input text"))
}
