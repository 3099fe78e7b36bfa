//! Durable single-file JSON stores for corpora, graphs, and traces.
//!
//! Writes go through a temp file in the target directory followed by a
//! rename, so a crash never leaves a half-written store. Serialization is
//! deterministic: node order is reading order, edge sets are sorted, and
//! floats round-trip exactly through serde_json's shortest-representation
//! formatting, so saving the same graph twice produces identical bytes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::document::{AtomicUnit, Modality, ParsedCorpus};
use crate::graph::{ContentGraph, GraphNode, NodeAttributes};
use crate::plan::ExecutionTrace;

pub const GRAPH_FILE_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed store file {path}: {reason}")]
    MalformedInput { path: PathBuf, reason: String },
    #[error("unsupported store version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u64,
        expected: u64,
    },
}

/// Layout of one store directory. Every resolved path is under the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorePaths {
    root: PathBuf,
}

impl StorePaths {
    pub fn new(root: impl Into<PathBuf>) -> StorePaths {
        StorePaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_file(&self) -> PathBuf {
        self.root.join("corpus.json")
    }

    pub fn graph_file(&self) -> PathBuf {
        self.root.join("graph.json")
    }

    pub fn traces_dir(&self) -> PathBuf {
        self.root.join("traces")
    }

    pub fn ensure_dirs(&self) -> Result<(), StoreError> {
        for dir in [self.root.clone(), self.traces_dir()] {
            std::fs::create_dir_all(&dir)
                .map_err(|source| StoreError::IoFailure { path: dir.clone(), source })?;
        }
        Ok(())
    }
}

/// Atomic file write: temp file in the same directory, then rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("store")
    ));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

// --- graph file schema ---

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    version: u64,
    d: usize,
    epoch: u64,
    w: usize,
    nodes: Vec<GraphFileNode>,
    structural_edges: Vec<(String, String)>,
    semantic_edges: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFileNode {
    node_id: String,
    doc_id: String,
    order: u64,
    modality: Modality,
    text: String,
    image_ref: Option<String>,
    summary: String,
    keywords: Vec<String>,
    tags: Vec<String>,
    meaningful: bool,
    embedding: Vec<f64>,
    version: u64,
}

/// Serialize and atomically write a finalized graph.
pub fn save_graph(graph: &ContentGraph, path: &Path) -> Result<(), StoreError> {
    let file = GraphFile {
        version: GRAPH_FILE_VERSION,
        d: graph.dimension(),
        epoch: graph.epoch(),
        w: graph.window(),
        nodes: graph
            .nodes()
            .iter()
            .map(|node| GraphFileNode {
                node_id: node.node_id().to_string(),
                doc_id: node.unit.doc_id.clone(),
                order: node.unit.order,
                modality: node.unit.modality,
                text: node.unit.text.clone(),
                image_ref: node.unit.image_ref.as_ref().map(|p| p.display().to_string()),
                summary: node.attrs.summary.clone(),
                keywords: node.attrs.keywords.clone(),
                tags: node.attrs.tags.clone(),
                meaningful: node.attrs.meaningful,
                embedding: node.embedding.clone(),
                version: node.version,
            })
            .collect(),
        structural_edges: graph.structural_edges().iter().cloned().collect(),
        semantic_edges: graph.semantic_edges().iter().cloned().collect(),
    };
    let body = serde_json::to_string_pretty(&file).expect("graph serialization cannot fail");
    write_atomic(path, body.as_bytes())
        .map_err(|source| StoreError::IoFailure { path: path.to_path_buf(), source })
}

/// Load a graph file and re-validate every structural invariant.
pub fn load_graph(path: &Path) -> Result<ContentGraph, StoreError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| StoreError::IoFailure { path: path.to_path_buf(), source })?;
    let file: GraphFile = serde_json::from_str(&raw).map_err(|err| StoreError::MalformedInput {
        path: path.to_path_buf(),
        reason: err.to_string(),
    })?;
    if file.version != GRAPH_FILE_VERSION {
        return Err(StoreError::VersionMismatch {
            path: path.to_path_buf(),
            found: file.version,
            expected: GRAPH_FILE_VERSION,
        });
    }
    let nodes: Vec<GraphNode> = file
        .nodes
        .into_iter()
        .map(|n| GraphNode {
            unit: AtomicUnit {
                doc_id: n.doc_id,
                unit_id: n.node_id,
                order: n.order,
                modality: n.modality,
                text: n.text,
                image_ref: n.image_ref.map(PathBuf::from),
            },
            attrs: NodeAttributes {
                summary: n.summary,
                keywords: n.keywords,
                tags: n.tags,
                meaningful: n.meaningful,
            },
            embedding: n.embedding,
            version: n.version,
        })
        .collect();
    let structural: BTreeSet<(String, String)> = file.structural_edges.into_iter().collect();
    let semantic: BTreeSet<(String, String)> = file.semantic_edges.into_iter().collect();
    ContentGraph::from_parts(nodes, structural, semantic, file.d, file.epoch, file.w).map_err(
        |reason| StoreError::MalformedInput { path: path.to_path_buf(), reason },
    )
}

/// Save a corpus into a store.
pub fn save_corpus(corpus: &ParsedCorpus, path: &Path) -> Result<(), StoreError> {
    crate::document::save_corpus(corpus, path).map_err(|err| match err {
        crate::document::DocumentError::Io { path, source } => {
            StoreError::IoFailure { path, source }
        }
        other => StoreError::MalformedInput {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Load the corpus file of a store.
pub fn load_corpus(path: &Path) -> Result<ParsedCorpus, StoreError> {
    crate::document::load_corpus(path).map_err(|err| match err {
        crate::document::DocumentError::Io { path, source } => {
            StoreError::IoFailure { path, source }
        }
        other => StoreError::MalformedInput {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Write a trace to an explicit path.
pub fn save_trace_to(trace: &ExecutionTrace, path: &Path) -> Result<(), StoreError> {
    let body = serde_json::to_string_pretty(trace).expect("trace serialization cannot fail");
    write_atomic(path, body.as_bytes())
        .map_err(|source| StoreError::IoFailure { path: path.to_path_buf(), source })
}

/// Write a trace into the store's traces directory, named by timestamp plus
/// a short hash of the query.
pub fn save_trace(trace: &ExecutionTrace, paths: &StorePaths) -> Result<PathBuf, StoreError> {
    let seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let digest = Sha256::digest(trace.query.as_bytes());
    let path = paths.traces_dir().join(format!(
        "{seconds}_{:02x}{:02x}{:02x}{:02x}.json",
        digest[0], digest[1], digest[2], digest[3]
    ));
    save_trace_to(trace, &path)?;
    Ok(path)
}

/// Load a trace file.
pub fn load_trace(path: &Path) -> Result<ExecutionTrace, StoreError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| StoreError::IoFailure { path: path.to_path_buf(), source })?;
    serde_json::from_str(&raw).map_err(|err| StoreError::MalformedInput {
        path: path.to_path_buf(),
        reason: err.to_string(),
    })
}
