//! Structure-aware evidence retrieval.
//!
//! Readout embeds the query, ranks the meaningful nodes by cosine
//! similarity, then walks the ranked list greedily: each not-yet-selected
//! ranked node is taken together with its immediate neighbors (both edge
//! layers), and the walk stops at the first point where at least `k` nodes
//! are selected. The budget can overshoot, since one selection brings in the
//! whole neighborhood. Non-meaningful nodes never appear in the output.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{cosine_to_node, ContentGraph, GraphError};
use crate::client::ModelClient;
use crate::document::Modality;

/// How a node entered the evidence set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Picked directly from the similarity ranking.
    Ranked,
    /// Pulled in as a neighbor of an earlier ranked selection.
    NeighborOf { node_id: String },
}

/// One selected node with its retrieved content. Self-contained so traces
/// remain readable without the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedNode {
    pub node_id: String,
    /// Cosine similarity of this node to the query.
    pub score: f64,
    pub provenance: Provenance,
    pub doc_id: String,
    pub modality: Modality,
    pub text: String,
    pub image_ref: Option<PathBuf>,
}

/// Readout result: selected nodes in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSubgraph {
    pub query_text: String,
    pub selected: Vec<SelectedNode>,
}

impl EvidenceSubgraph {
    /// Render the evidence as the numbered chunk block used in prompts.
    /// Table/figure text gets a describing prefix for text-only backends.
    pub fn context_block(&self, vision: bool) -> String {
        if self.selected.is_empty() {
            return "(no retrieved context)".to_string();
        }
        let mut out = String::new();
        for (i, node) in self.selected.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let body = if node.modality == Modality::Text || vision {
                node.text.clone()
            } else {
                format!("figure/table described as: {}", node.text)
            };
            out.push_str(&format!("Related Memory [{}] ({}): {}", i + 1, node.node_id, body));
        }
        out
    }

    /// Image paths carried by the selected nodes, in selection order.
    pub fn image_paths(&self) -> Vec<&Path> {
        self.selected
            .iter()
            .filter_map(|n| n.image_ref.as_deref())
            .collect()
    }

    pub fn node_ids(&self) -> Vec<&str> {
        self.selected.iter().map(|n| n.node_id.as_str()).collect()
    }
}

/// Greedy budgeted readout over meaningful nodes.
pub fn subgraph_readout(
    graph: &ContentGraph,
    query: &str,
    budget: usize,
    client: &dyn ModelClient,
) -> Result<EvidenceSubgraph, GraphError> {
    assert!(budget >= 1, "node budget must be at least 1");
    let meaningful = graph.meaningful_ranks();
    if meaningful.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let query_vec = {
        let mut vectors = client.embed(&[query.to_string()])?;
        vectors.pop().expect("one vector per input text")
    };
    graph.check_dimension(query_vec.len())?;

    let meaningful_set: HashSet<usize> = meaningful.iter().copied().collect();
    let scores: Vec<f64> = (0..graph.len())
        .map(|rank| cosine_to_node(graph, rank, &query_vec))
        .collect();
    let mut ranked: Vec<usize> = meaningful.clone();
    ranked.sort_by(|a, b| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });

    let mut selected: Vec<SelectedNode> = Vec::new();
    let mut present: HashSet<usize> = HashSet::new();
    let make = |rank: usize, provenance: Provenance| {
        let node = &graph.nodes()[rank];
        SelectedNode {
            node_id: node.node_id().to_string(),
            score: scores[rank],
            provenance,
            doc_id: node.unit.doc_id.clone(),
            modality: node.unit.modality,
            text: node.unit.text.clone(),
            image_ref: node.unit.image_ref.clone(),
        }
    };
    for &rank in &ranked {
        if present.contains(&rank) {
            continue;
        }
        present.insert(rank);
        selected.push(make(rank, Provenance::Ranked));
        let anchor_id = graph.nodes()[rank].node_id().to_string();
        for nrank in graph.neighbor_ranks(rank) {
            if !meaningful_set.contains(&nrank) || present.contains(&nrank) {
                continue;
            }
            present.insert(nrank);
            selected.push(make(nrank, Provenance::NeighborOf { node_id: anchor_id.clone() }));
        }
        if selected.len() >= budget {
            break;
        }
    }
    Ok(EvidenceSubgraph { query_text: query.to_string(), selected })
}
