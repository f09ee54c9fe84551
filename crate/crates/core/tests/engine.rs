use std::collections::BTreeSet;

use kinfuse::dke::{differential_subkg, knowledge_proximity, solve_mapping, update_seeded, MappingSolution};
use kinfuse::seeded::{corpus_stats, extract_seeded_subkg};
use kinfuse::{DimensionModel, KnowledgeGraph, LabeledDoc, SeededSubKG, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::linalg::{dense_solve, mat, system};

#[test]
fn hand_set_two_by_one_case() {
    let s = Tensor::from_vec(&[2, 1], vec![0.6, 0.8]).unwrap();
    let d = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).unwrap();
    let sol = solve_mapping(&s, &d, 2.0, 0.1).unwrap();
    let (a, b) = system(&mat(&s), &mat(&d), 2.0, 0.1);
    let want = dense_solve(&a, &b);
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            assert!((sol.w.at(i, j) - w).abs() < 1e-12);
        }
    }
    assert!(sol.residual < 1e-10);
}

#[test]
fn random_well_conditioned_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut solved = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=6);
        let cols = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let s = Tensor::from_columns(n, &cols(&mut rng));
        let d = Tensor::from_columns(n, &cols(&mut rng));
        let sol = solve_mapping(&s, &d, rng.random_range(0.5..3.0), 0.1);
        let Ok(sol) = sol else { continue };
        assert!(sol.residual < 1e-8, "{}", sol.residual);
        assert!(sol.w.is_finite());
        solved += 1;
    }
    assert!(solved >= 95, "{solved}");
}

#[test]
fn identical_spaces_at_unit_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=8 {
        let cols: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let s = Tensor::from_columns(n, &cols);
        let sol = solve_mapping(&s, &s, 1.0, 0.1).unwrap();
        assert!(sol.w.sum_squares().sqrt() < 1e-10);
    }
}

struct Toy {
    kg: KnowledgeGraph,
    models: Vec<DimensionModel>,
    seeded: SeededSubKG,
}

fn toy() -> Toy {
    let kg = KnowledgeGraph::from_label_triples(
        [
            ("alpha", "r", "beta"),
            ("beta", "r", "gamma"),
            ("gamma", "r", "delta"),
            ("gamma", "r", "epsilon"),
            ("gamma", "r", "zeta unknown"),
        ],
        "isa",
    )
    .unwrap();
    let vocab = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let data = vec![1.0, 0.0, 0.8, 0.6, 0.0, 1.0, -0.6, 0.8, 0.3, -0.9];
    let m = DimensionModel::from_parts(
        "m",
        vocab.iter().map(|s| s.to_string()).collect(),
        &Tensor::from_vec(&[5, 2], data).unwrap(),
    )
    .unwrap();
    let docs = [LabeledDoc::new("pos", "alpha alpha"), LabeledDoc::new("neg", "beta")];
    let seeded = extract_seeded_subkg(&kg, &corpus_stats(&docs).unwrap(), "pos", 1, 1, std::slice::from_ref(&m)).unwrap();
    Toy {
        kg,
        models: vec![m],
        seeded,
    }
}

#[test]
fn differential_counts_resolvable_new_concepts() {
    let t = toy();
    assert_eq!(t.seeded.subkg.triples.len(), 1);
    let gamma = t.kg.concept("gamma").unwrap();
    let retrieved = knowledge_proximity(&t.kg, &BTreeSet::from([gamma]), 1).unwrap();
    let diff = differential_subkg(&t.kg, &retrieved, &t.seeded, &t.models);
    assert!(diff.triples.is_disjoint(&t.seeded.subkg.triples));
    // gamma, delta, epsilon, "zeta unknown" are new; the last has no vector
    assert_eq!(diff.new_concepts.len(), 4);
    assert_eq!(diff.d_kg.len(), 3);
    let proximity = knowledge_proximity(&t.kg, &BTreeSet::from([t.kg.concept("alpha").unwrap()]), 1).unwrap();
    assert!(differential_subkg(&t.kg, &proximity, &t.seeded, &t.models).is_empty());
}

#[test]
fn update_absorbs_and_stays_normalized() {
    let t = toy();
    let mut seeded = t.seeded.clone();
    for seed_label in ["gamma", "epsilon", "zeta unknown"] {
        let c = t.kg.concept(seed_label).unwrap();
        let retrieved = knowledge_proximity(&t.kg, &BTreeSet::from([c]), 2).unwrap();
        let diff = differential_subkg(&t.kg, &retrieved, &seeded, &t.models);
        let sol = if diff.d_kg.is_empty() {
            None
        } else {
            Some(solve_mapping(&seeded.embeddings.to_tensor(), &diff.d_kg.to_tensor(), 1.0, 0.1).unwrap())
        };
        let next = update_seeded(&seeded, &diff, sol.as_ref());
        assert!(seeded.subkg.triples.is_subset(&next.subkg.triples));
        assert!(differential_subkg(&t.kg, &retrieved, &next, &t.models).is_empty());
        for col in next.embeddings.columns() {
            assert!((col.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
        seeded = next;
    }
    assert_eq!(seeded.subkg.triples.len(), t.kg.triples().len());
}

#[test]
fn identity_map_and_hand_map() {
    let t = toy();
    let c = t.kg.concept("gamma").unwrap();
    let retrieved = knowledge_proximity(&t.kg, &BTreeSet::from([t.kg.concept("beta").unwrap()]), 1).unwrap();
    let diff = differential_subkg(&t.kg, &retrieved, &t.seeded, &t.models);
    assert_eq!(diff.d_kg.ids(), [c]);
    let v = diff.d_kg.column_of(c).unwrap().to_vec();

    let identity = MappingSolution {
        w: Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        alpha: 1.0,
        lambda: 0.1,
        residual: 0.0,
        imbalance: 0.0,
    };
    let out = update_seeded(&t.seeded, &diff, Some(&identity));
    assert_eq!(out.embeddings.column_of(c).unwrap(), v.as_slice());
    assert!((out.relevance[&c] - 0.5).abs() < 1e-15);

    let sol = solve_mapping(&t.seeded.embeddings.to_tensor(), &diff.d_kg.to_tensor(), 2.0, 0.1).unwrap();
    let w = mat(&sol.w);
    let mapped = [w[0][0] * v[0] + w[0][1] * v[1], w[1][0] * v[0] + w[1][1] * v[1]];
    let norm = (mapped[0] * mapped[0] + mapped[1] * mapped[1]).sqrt();
    let out = update_seeded(&t.seeded, &diff, Some(&sol));
    let got = out.embeddings.column_of(c).unwrap();
    assert!((got[0] - mapped[0] / norm).abs() < 1e-12 && (got[1] - mapped[1] / norm).abs() < 1e-12);
}

#[test]
fn empty_difference_is_a_no_op() {
    let t = toy();
    let retrieved = t.seeded.subkg.clone();
    let diff = differential_subkg(&t.kg, &retrieved, &t.seeded, &t.models);
    assert!(diff.is_empty() && diff.d_kg.is_empty());
    assert_eq!(update_seeded(&t.seeded, &diff, None), t.seeded);
}
