//! Graphviz DOT export for both graphs.
//!
//! Content graphs render structural edges solid and semantic edges dashed,
//! with node labels from truncated summaries. Planning DAGs render as
//! directed graphs labeled by task.

use crate::graph::ContentGraph;
use crate::plan::{PlanningGraph, ROOT_ID};

const LABEL_CHARS: usize = 40;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn truncate_label(s: &str) -> String {
    let flat = s.replace('\n', " ");
    if flat.chars().count() <= LABEL_CHARS {
        return flat;
    }
    let mut out: String = flat.chars().take(LABEL_CHARS).collect();
    out.push('…');
    out
}

/// DOT form of a content graph.
pub fn content_graph_dot(graph: &ContentGraph) -> String {
    let mut out = String::from("graph content {\n  node [shape=box, fontsize=10];\n");
    for node in graph.nodes() {
        let style = if node.is_meaningful() { "" } else { ", style=dotted" };
        out.push_str(&format!(
            "  \"{}\" [label=\"{}\"{}];\n",
            escape(node.node_id()),
            escape(&truncate_label(&node.attrs.summary)),
            style
        ));
    }
    for (a, b) in graph.structural_edges() {
        out.push_str(&format!("  \"{}\" -- \"{}\" [style=solid];\n", escape(a), escape(b)));
    }
    // semantic links are stored with their suggester first; mirrored pairs
    // render as one undirected edge
    let mut seen = std::collections::BTreeSet::new();
    for (a, b) in graph.semantic_edges() {
        let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        if seen.insert(key.clone()) {
            out.push_str(&format!(
                "  \"{}\" -- \"{}\" [style=dashed];\n",
                escape(&key.0),
                escape(&key.1)
            ));
        }
    }
    out.push_str("}\n");
    out
}

/// DOT form of a planning DAG.
pub fn planning_dag_dot(pg: &PlanningGraph) -> String {
    let mut out = String::from("digraph plan {\n  node [shape=box, fontsize=10];\n");
    for node in pg.nodes() {
        let shape = if node.id == ROOT_ID { ", shape=ellipse" } else { "" };
        out.push_str(&format!(
            "  \"{}\" [label=\"{}: {}\"{}];\n",
            escape(&node.id),
            escape(&node.id),
            escape(&truncate_label(&node.task)),
            shape
        ));
    }
    for (from, to) in pg.edges() {
        out.push_str(&format!("  \"{}\" -> \"{}\";\n", escape(from), escape(to)));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::testutil::graph_from_embeddings;
    use crate::plan::testwire::wire;

    #[test]
    fn content_dot_styles_layers() {
        let mut g = graph_from_embeddings(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            1,
        );
        g.set_semantic_neighbors("u00", &["u02".to_string()]);
        let dot = content_graph_dot(&g);
        assert!(dot.contains("\"u00\" -- \"u01\" [style=solid];"));
        assert!(dot.contains("\"u00\" -- \"u02\" [style=dashed];"));
        assert!(dot.starts_with("graph content {"));
    }

    #[test]
    fn dag_dot_directed_edges() {
        let (pg, _) = PlanningGraph::from_wire(
            &wire(&[("root", "the question", &["n1"]), ("n1", "sub", &[])]),
            0,
        )
        .unwrap();
        let dot = planning_dag_dot(&pg);
        assert!(dot.contains("\"root\" -> \"n1\";"));
        assert!(dot.contains("shape=ellipse"));
    }

    #[test]
    fn long_summaries_truncated() {
        let long = "x".repeat(100);
        assert_eq!(truncate_label(&long).chars().count(), LABEL_CHARS + 1);
        assert!(truncate_label("short").eq("short"));
    }
}
