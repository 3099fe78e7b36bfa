//! Property tests over the crate's core invariants.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use g2_core::client::extract::extract_tagged_block;
use g2_core::client::mock::MockClient;
use g2_core::graph::{cosine_similarity, init_structural_edges, ContentGraph, GraphNode, NodeAttributes};
use g2_core::{AtomicUnit, Modality, ModelClient, ParsedCorpus};

fn finite_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1e6f64..1e6, dim)
}

proptest! {
    #[test]
    fn cosine_self_similarity_is_one(v in finite_vec(6)) {
        prop_assume!(v.iter().any(|x| *x != 0.0));
        let sim = cosine_similarity(&v, &v).unwrap();
        prop_assert!((sim - 1.0).abs() < 1e-9, "self-similarity {sim}");
    }

    #[test]
    fn cosine_symmetric_and_bounded(a in finite_vec(5), b in finite_vec(5)) {
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.abs() <= 1.0 + 1e-12, "out of range: {}", ab);
    }

    #[test]
    fn tagged_block_round_trips(body in "[a-zA-Z0-9 .,;_-]{0,80}") {
        let wrapped = format!("before <block>{body}</block> after");
        let got = extract_tagged_block(&wrapped, "block").unwrap();
        prop_assert_eq!(got, body.trim().to_string());
    }

    #[test]
    fn mock_embeddings_equal_iff_equal_text(
        a in "[a-z]{1,12}",
        b in "[a-z]{1,12}",
        seed in 0u64..1000,
    ) {
        let client = MockClient::builder(8).seed(seed).build();
        let vectors = client.embed(&[a.clone(), b.clone()]).unwrap();
        if a == b {
            prop_assert_eq!(&vectors[0], &vectors[1]);
        } else {
            prop_assert_ne!(&vectors[0], &vectors[1]);
        }
    }

    #[test]
    fn valid_corpora_always_load_with_invariants(
        per_doc in proptest::collection::vec(1usize..6, 1..4),
    ) {
        // build a unit list across several documents with gappy but
        // increasing order values
        let mut units = Vec::new();
        for (doc, &count) in per_doc.iter().enumerate() {
            for slot in 0..count {
                units.push(AtomicUnit {
                    doc_id: format!("doc{doc}"),
                    unit_id: format!("d{doc}-u{slot}"),
                    order: (slot * 3 + 1) as u64,
                    modality: if slot % 2 == 0 { Modality::Text } else { Modality::Table },
                    text: format!("content {doc}/{slot}"),
                    image_ref: None,
                });
            }
        }
        let corpus = ParsedCorpus::from_units(units, BTreeMap::new()).unwrap();
        // unit ids unique, order strictly increasing per doc
        let mut seen = BTreeSet::new();
        for pair in corpus.units().windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                prop_assert!(pair[0].order < pair[1].order);
            }
        }
        for unit in corpus.units() {
            prop_assert!(seen.insert(unit.unit_id.clone()));
            if unit.modality == Modality::Text {
                prop_assert!(unit.image_ref.is_none());
            }
        }
    }

    #[test]
    fn graph_round_trip_structural_equality(
        embeddings in proptest::collection::vec(finite_vec(3), 2..8),
        window in 1usize..3,
    ) {
        let n = embeddings.len();
        let units: Vec<AtomicUnit> = (0..n)
            .map(|i| AtomicUnit {
                doc_id: "d".to_string(),
                unit_id: format!("u{i:02}"),
                order: i as u64,
                modality: Modality::Text,
                text: format!("t{i}"),
                image_ref: None,
            })
            .collect();
        let corpus = ParsedCorpus::from_units(units, BTreeMap::new()).unwrap();
        let nodes: Vec<GraphNode> = corpus
            .units()
            .iter()
            .zip(&embeddings)
            .map(|(unit, embedding)| GraphNode {
                unit: unit.clone(),
                attrs: NodeAttributes {
                    summary: format!("s {}", unit.unit_id),
                    keywords: vec![unit.unit_id.clone()],
                    tags: vec![],
                    meaningful: true,
                },
                embedding: embedding.clone(),
                version: 0,
            })
            .collect();
        let structural = init_structural_edges(&corpus, window);
        let graph =
            ContentGraph::from_parts(nodes, structural, BTreeSet::new(), 3, 0, window).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        g2_core::store::save_graph(&graph, &path).unwrap();
        let loaded = g2_core::store::load_graph(&path).unwrap();
        prop_assert_eq!(graph, loaded);
    }
}
