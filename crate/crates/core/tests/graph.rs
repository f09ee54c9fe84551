use std::collections::BTreeSet;

use kinfuse::kg::{KgError, TripleFormat};
use kinfuse::{ConceptId, KnowledgeGraph};
use proptest::prelude::*;

mod common;
use common::ancestor_table;

/// Random taxonomy DAG: an edge `i isa j` only when `i > j`, plus a sprinkle
/// of non-taxonomy edges in either direction.
fn random_graph() -> impl Strategy<Value = KnowledgeGraph> {
    (2usize..12)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec((0..n, 0..n, any::<bool>()), 1..30),
            )
        })
        .prop_map(|(n, edges)| {
            let mut triples = Vec::new();
            for i in 0..n {
                triples.push((format!("n{i}"), "self".to_string(), format!("n{i}")));
            }
            for (a, b, taxonomy) in edges {
                if taxonomy && a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    triples.push((format!("n{hi}"), "isa".into(), format!("n{lo}")));
                } else {
                    triples.push((format!("n{a}"), "rel".into(), format!("n{b}")));
                }
            }
            KnowledgeGraph::from_label_triples(triples, "isa").unwrap()
        })
}

fn undirected_ball(kg: &KnowledgeGraph, seeds: &BTreeSet<ConceptId>, n: u32) -> BTreeSet<ConceptId> {
    let mut ball = seeds.clone();
    for _ in 0..n {
        let mut next = ball.clone();
        for t in kg.triples() {
            if ball.contains(&t.subject) || ball.contains(&t.object) {
                next.insert(t.subject);
                next.insert(t.object);
            }
        }
        ball = next;
    }
    ball
}

proptest! {
    #[test]
    fn lcs_is_symmetric_and_matches_floyd_warshall(kg in random_graph()) {
        let table = ancestor_table(&kg);
        for a in kg.concepts() {
            for b in kg.concepts() {
                let ab = kg.lcs_distance(a, b).unwrap();
                prop_assert_eq!(ab, kg.lcs_distance(b, a).unwrap());
                let want = common::lcs(&table, a, b);
                prop_assert_eq!(ab, want);
            }
        }
    }

    #[test]
    fn neighborhood_is_monotone_and_matches_oracle(kg in random_graph(), seed in 0u32..12, n1 in 0u32..4, extra in 0u32..3) {
        let seeds = BTreeSet::from([ConceptId(seed % kg.concept_count() as u32)]);
        let small = kg.n_hop_neighborhood(&seeds, n1).unwrap();
        let large = kg.n_hop_neighborhood(&seeds, n1 + extra).unwrap();
        prop_assert!(small.triples.is_subset(&large.triples));
        let ball = undirected_ball(&kg, &seeds, n1);
        let want: BTreeSet<_> = kg
            .triples()
            .iter()
            .filter(|t| ball.contains(&t.subject) && ball.contains(&t.object))
            .cloned()
            .collect();
        prop_assert_eq!(&small.triples, &want);
        prop_assert!(small.depth.values().all(|&d| d <= n1));
        prop_assert_eq!(small.depth.keys().copied().collect::<BTreeSet<_>>(), ball);
    }

    #[test]
    fn tsv_round_trip(kg in random_graph()) {
        let text = kg.to_tsv();
        let back = KnowledgeGraph::parse_tsv(text.as_bytes(), "isa").unwrap();
        prop_assert_eq!(back.triples(), kg.triples());
        prop_assert_eq!(back.to_tsv(), text);
    }
}

#[test]
fn load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kg.tsv");
    std::fs::write(&path, "# toy\ncat\tisa\tmammal\ndog\tisa\tmammal\ncat\tisa\tmammal\n").unwrap();
    let kg = KnowledgeGraph::load(&path, TripleFormat::Tsv, "isa").unwrap();
    assert_eq!((kg.concept_count(), kg.triples().len()), (3, 2));
    let (cat, dog) = (kg.concept("cat").unwrap(), kg.concept("dog").unwrap());
    assert_eq!(kg.lcs_distance(cat, dog).unwrap(), Some(2));

    std::fs::write(&path, "a\tisa\tb\nb\tisa\ta\n").unwrap();
    match KnowledgeGraph::load(&path, TripleFormat::Tsv, "isa") {
        Err(KgError::TaxonomyCycle { members }) => {
            let mut m = members.clone();
            m.sort();
            assert_eq!(m, ["a", "b"]);
        }
        other => panic!("expected a cycle error, got {other:?}"),
    }
    assert!(KnowledgeGraph::load(&dir.path().join("missing.tsv"), TripleFormat::Tsv, "isa").is_err());
}

#[test]
fn identifiers_are_stable_across_input_order() {
    let a = KnowledgeGraph::from_label_triples([("x", "r", "y"), ("y", "isa", "z")], "isa").unwrap();
    let b = KnowledgeGraph::from_label_triples([("Y", "isa", "Z"), ("X", "r", "Y")], "isa").unwrap();
    for label in ["x", "y", "z"] {
        assert_eq!(a.concept(label), b.concept(label));
    }
    assert_eq!(a.triples(), b.triples());
}
