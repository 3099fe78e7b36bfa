//! The planning graph: a DAG of sub-questions rooted at the original query.
//!
//! The wire form is the JSON structure the decomposer emits inside `<dag>`
//! tags: `{"nodes": [{"id", "task", "type", "children"}], "edges":
//! [{"from", "to"}]}`. Parsing unions the `children` lists with the `edges`
//! array so the two can never disagree, then validates. Cycles, dangling
//! ids, duplicate ids, and a missing or duplicated root are fatal; the
//! node-count and depth limits from the decomposer instructions are
//! warnings only, since discarding an otherwise valid plan over a count
//! breach costs more than it saves.

mod run;

pub use run::{
    answer_query, check_sufficiency, decompose_initial, execute_node, refine_planning_graph,
    synthesize_answer, ExecutionTrace, NodeAnswer, PipelineConfig, PipelineFailure,
    SufficiencyVerdict,
};

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ClientError;
use crate::graph::GraphError;

pub const ROOT_ID: &str = "root";

/// Node-count limit for an initial decomposition (soft).
pub const INITIAL_NODE_LIMIT: usize = 6;
/// Node-count limit after refinement (soft).
pub const REFINED_NODE_LIMIT: usize = 8;
/// Depth limit, root counted as level 1 (soft).
pub const DEPTH_LIMIT: usize = 3;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("model output unparseable after {attempts} attempt(s): {reason}")]
    ModelOutputUnparseable { attempts: u32, reason: String },
    #[error("invalid planning dag after {attempts} attempt(s): {reason}")]
    InvalidDag { attempts: u32, reason: String },
    #[error("cycle detected in planning graph")]
    CycleDetected,
    #[error("unknown plan node: {0}")]
    UnknownNode(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanNodeType {
    Question,
    SubQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: String,
    pub task: String,
    #[serde(rename = "type")]
    pub node_type: PlanNodeType,
    pub children: Vec<String>,
}

/// Wire form of a DAG as exchanged with the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireDag {
    pub nodes: Vec<PlanNode>,
    #[serde(default)]
    pub edges: Vec<WireEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEdge {
    pub from: String,
    pub to: String,
}

/// Validation findings over a parsed DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    // fatal
    MissingRoot,
    DuplicateRoot(Vec<String>),
    DuplicateId(String),
    DanglingEdge(String),
    Cycle(Vec<String>),
    // soft
    NodeCountExceeded { count: usize, limit: usize },
    DepthExceeded { depth: usize, limit: usize },
    RefinementDeltaOutOfRange { delta: i64 },
}

impl Violation {
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            Violation::MissingRoot
                | Violation::DuplicateRoot(_)
                | Violation::DuplicateId(_)
                | Violation::DanglingEdge(_)
                | Violation::Cycle(_)
        )
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::MissingRoot => write!(f, "no question node with id {ROOT_ID:?}"),
            Violation::DuplicateRoot(ids) => write!(f, "multiple question nodes: {ids:?}"),
            Violation::DuplicateId(id) => write!(f, "duplicate node id {id:?}"),
            Violation::DanglingEdge(id) => write!(f, "edge references undeclared id {id:?}"),
            Violation::Cycle(ids) => write!(f, "cycle through {ids:?}"),
            Violation::NodeCountExceeded { count, limit } => {
                write!(f, "{count} nodes exceeds the limit of {limit}")
            }
            Violation::DepthExceeded { depth, limit } => {
                write!(f, "depth {depth} exceeds the limit of {limit}")
            }
            Violation::RefinementDeltaOutOfRange { delta } => {
                write!(f, "refinement changed node count by {delta}, expected +1 to +3")
            }
        }
    }
}

/// Serialized shape of a [`PlanningGraph`] in traces and stores: the wire
/// form plus the revision counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DagRepr {
    #[serde(default)]
    revision: u64,
    nodes: Vec<PlanNode>,
    #[serde(default)]
    edges: Vec<WireEdge>,
}

/// A validated sub-question DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct PlanningGraph {
    nodes: BTreeMap<String, PlanNode>,
    edges: BTreeSet<(String, String)>,
    revision: u64,
}

impl TryFrom<DagRepr> for PlanningGraph {
    type Error = String;

    fn try_from(repr: DagRepr) -> Result<PlanningGraph, String> {
        let wire = WireDag { nodes: repr.nodes, edges: repr.edges };
        PlanningGraph::from_wire(&wire, repr.revision)
            .map(|(pg, _)| pg)
            .map_err(|fatal| {
                fatal
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; ")
            })
    }
}

impl From<PlanningGraph> for DagRepr {
    fn from(pg: PlanningGraph) -> DagRepr {
        let wire = pg.to_wire();
        DagRepr { revision: pg.revision, nodes: wire.nodes, edges: wire.edges }
    }
}

impl PlanningGraph {
    /// Normalize and validate a wire DAG. Fatal violations reject the graph;
    /// soft violations are returned for the caller to log.
    pub fn from_wire(
        wire: &WireDag,
        revision: u64,
    ) -> Result<(PlanningGraph, Vec<Violation>), Vec<Violation>> {
        let mut violations = validate_wire_dag(wire);
        let fatal: Vec<Violation> =
            violations.iter().filter(|v| v.is_fatal()).cloned().collect();
        if !fatal.is_empty() {
            return Err(fatal);
        }

        // union edges from children lists and the edges array
        let declared: HashSet<&str> = wire.nodes.iter().map(|n| n.id.as_str()).collect();
        let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
        for node in &wire.nodes {
            for child in &node.children {
                edges.insert((node.id.clone(), child.clone()));
            }
        }
        for edge in &wire.edges {
            edges.insert((edge.from.clone(), edge.to.clone()));
        }
        debug_assert!(edges
            .iter()
            .all(|(a, b)| declared.contains(a.as_str()) && declared.contains(b.as_str())));

        // rebuild children lists: wire order first, edge-only targets
        // appended in ascending id order
        let mut nodes = BTreeMap::new();
        for node in &wire.nodes {
            let mut children: Vec<String> = Vec::new();
            let mut seen = HashSet::new();
            for child in &node.children {
                if seen.insert(child.clone()) {
                    children.push(child.clone());
                }
            }
            for (from, to) in edges.range((node.id.clone(), String::new())..) {
                if from != &node.id {
                    break;
                }
                if seen.insert(to.clone()) {
                    children.push(to.clone());
                }
            }
            nodes.insert(
                node.id.clone(),
                PlanNode {
                    id: node.id.clone(),
                    task: node.task.clone(),
                    node_type: node.node_type,
                    children,
                },
            );
        }

        let graph = PlanningGraph { nodes, edges, revision };
        // the union may have created a cycle that neither source had alone
        if graph.execution_order().is_err() {
            return Err(vec![Violation::Cycle(graph.nodes.keys().cloned().collect())]);
        }
        violations.retain(|v| !v.is_fatal());
        Ok((graph, violations))
    }

    pub fn to_wire(&self) -> WireDag {
        let mut nodes: Vec<PlanNode> = Vec::with_capacity(self.nodes.len());
        if let Some(root) = self.nodes.get(ROOT_ID) {
            nodes.push(root.clone());
        }
        for (id, node) in &self.nodes {
            if id != ROOT_ID {
                nodes.push(node.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .map(|(from, to)| WireEdge { from: from.clone(), to: to.clone() })
            .collect();
        WireDag { nodes, edges }
    }

    /// Wire-form JSON, stable across serializations of the same graph, used
    /// verbatim inside refinement prompts.
    pub fn wire_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_wire()).expect("wire serialization cannot fail")
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&PlanNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &PlanNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    /// Dependency-resolving order: every node appears after all of its
    /// children, ties broken by ascending id, root last.
    pub fn execution_order(&self) -> Result<Vec<String>, PlanError> {
        // a node is ready once all of its children are emitted
        let mut pending_children: HashMap<&str, usize> = HashMap::new();
        let mut parents_of: HashMap<&str, Vec<&str>> = HashMap::new();
        for node in self.nodes.values() {
            pending_children.insert(&node.id, node.children.len());
            for child in &node.children {
                parents_of.entry(child.as_str()).or_default().push(&node.id);
            }
        }
        // min-heap on (is_root, id) keeps the root last among ready nodes
        let mut ready: BinaryHeap<std::cmp::Reverse<(bool, &str)>> = pending_children
            .iter()
            .filter(|(_, &count)| count == 0)
            .map(|(&id, _)| std::cmp::Reverse((id == ROOT_ID, id)))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(std::cmp::Reverse((_, id))) = ready.pop() {
            order.push(id.to_string());
            for &parent in parents_of.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                let count = pending_children
                    .get_mut(parent)
                    .expect("parent ids are declared nodes");
                *count -= 1;
                if *count == 0 {
                    ready.push(std::cmp::Reverse((parent == ROOT_ID, parent)));
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(PlanError::CycleDetected);
        }
        Ok(order)
    }

    /// Longest root-to-node path length in levels, root at level 1. Zero for
    /// an empty graph.
    pub fn depth(&self) -> usize {
        if !self.nodes.contains_key(ROOT_ID) {
            return 0;
        }
        let Ok(order) = self.execution_order() else {
            return 0;
        };
        // process parents before children: reverse of execution order
        let mut level: HashMap<&str, usize> = HashMap::new();
        level.insert(ROOT_ID, 1);
        for id in order.iter().rev() {
            let Some(&own) = level.get(id.as_str()) else {
                continue;
            };
            let node = &self.nodes[id];
            for child in &node.children {
                let entry = level.entry(child.as_str()).or_insert(0);
                *entry = (*entry).max(own + 1);
            }
        }
        level.values().copied().max().unwrap_or(0)
    }
}

/// Check a wire DAG. Fatal findings: duplicate ids, dangling edge
/// references, missing or duplicated root, cycles. Soft findings: node
/// count and depth over the decomposer limits.
pub fn validate_wire_dag(wire: &WireDag) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut ids: HashSet<&str> = HashSet::new();
    for node in &wire.nodes {
        if !ids.insert(&node.id) {
            violations.push(Violation::DuplicateId(node.id.clone()));
        }
    }

    let root_ok = wire
        .nodes
        .iter()
        .any(|n| n.id == ROOT_ID && n.node_type == PlanNodeType::Question);
    if !root_ok {
        violations.push(Violation::MissingRoot);
    }
    let question_ids: Vec<String> = wire
        .nodes
        .iter()
        .filter(|n| n.node_type == PlanNodeType::Question)
        .map(|n| n.id.clone())
        .collect();
    if question_ids.len() > 1 {
        violations.push(Violation::DuplicateRoot(question_ids));
    }

    let mut dangling: BTreeSet<String> = BTreeSet::new();
    for node in &wire.nodes {
        for child in &node.children {
            if !ids.contains(child.as_str()) {
                dangling.insert(child.clone());
            }
        }
    }
    for edge in &wire.edges {
        for endpoint in [&edge.from, &edge.to] {
            if !ids.contains(endpoint.as_str()) {
                dangling.insert(endpoint.clone());
            }
        }
    }
    for id in dangling {
        violations.push(Violation::DanglingEdge(id));
    }

    // cycle check over the unioned edges, only meaningful without dangling
    // references or duplicates
    if violations.iter().all(|v| !v.is_fatal()) {
        if let Some(cycle) = find_cycle(wire) {
            violations.push(Violation::Cycle(cycle));
        }
    }

    if wire.nodes.len() > REFINED_NODE_LIMIT {
        violations.push(Violation::NodeCountExceeded {
            count: wire.nodes.len(),
            limit: REFINED_NODE_LIMIT,
        });
    }
    violations
}

fn find_cycle(wire: &WireDag) -> Option<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = wire.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
    let mut out_edges: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for node in &wire.nodes {
        for child in &node.children {
            out_edges.entry(&node.id).or_default().insert(child);
        }
    }
    for edge in &wire.edges {
        out_edges.entry(&edge.from).or_default().insert(&edge.to);
    }
    for targets in out_edges.values() {
        for t in targets {
            if let Some(count) = indegree.get_mut(t) {
                *count += 1;
            }
        }
    }
    let mut queue: VecDeque<&str> = indegree
        .iter()
        .filter(|(_, &c)| c == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut emitted = 0usize;
    while let Some(id) = queue.pop_front() {
        emitted += 1;
        if let Some(targets) = out_edges.get(id) {
            for t in targets {
                let count = indegree.get_mut(t).expect("declared id");
                *count -= 1;
                if *count == 0 {
                    queue.push_back(t);
                }
            }
        }
    }
    if emitted == wire.nodes.len() {
        None
    } else {
        Some(
            indegree
                .iter()
                .filter(|(_, &c)| c > 0)
                .map(|(&id, _)| id.to_string())
                .collect(),
        )
    }
}

/// Check a constructed graph: soft limits given its revision, plus the
/// structural re-checks. Fatal findings cannot normally occur on a value of
/// [`PlanningGraph`], which is validated at construction.
pub fn validate_planning_graph(pg: &PlanningGraph) -> Vec<Violation> {
    let mut violations = validate_wire_dag(&pg.to_wire());
    // the initial decomposition has a tighter node budget
    if pg.revision == 0 && pg.len() > INITIAL_NODE_LIMIT {
        violations.retain(|v| !matches!(v, Violation::NodeCountExceeded { .. }));
        violations.push(Violation::NodeCountExceeded {
            count: pg.len(),
            limit: INITIAL_NODE_LIMIT,
        });
    }
    let depth = pg.depth();
    if depth > DEPTH_LIMIT {
        violations.push(Violation::DepthExceeded { depth, limit: DEPTH_LIMIT });
    }
    violations
}

#[cfg(test)]
pub(crate) mod testwire {
    use super::*;

    /// Shorthand for building wire DAGs in tests: `(id, task, children)`
    /// triples, the node with id "root" typed as the question.
    pub fn wire(nodes: &[(&str, &str, &[&str])]) -> WireDag {
        WireDag {
            nodes: nodes
                .iter()
                .map(|(id, task, children)| PlanNode {
                    id: id.to_string(),
                    task: task.to_string(),
                    node_type: if *id == ROOT_ID {
                        PlanNodeType::Question
                    } else {
                        PlanNodeType::SubQuestion
                    },
                    children: children.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
            edges: Vec::new(),
        }
    }
}
