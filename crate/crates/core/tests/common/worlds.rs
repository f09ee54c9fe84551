//! Random small worlds and brute-force recomputation of relevance, seeds
//! and the knowledge embedding from raw counts and raw vectors.

use std::collections::{BTreeMap, BTreeSet};

use kinfuse::embedding::knowledge_embedding;
use kinfuse::seeded::{corpus_stats, extract_seeded_subkg, relevance_score};
use kinfuse::{ConceptId, DimensionModel, KnowledgeGraph, LabeledDoc, PredicateAllowlist, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-12;

pub struct World {
    pub kg: KnowledgeGraph,
    pub docs: Vec<LabeledDoc>,
    pub models: Vec<DimensionModel>,
    /// word → raw vector per model (absent when out of that model's vocab)
    pub raw: Vec<BTreeMap<String, Vec<f64>>>,
}

pub fn world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10usize);
    let mut triples = Vec::new();
    for i in 0..n {
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i > j {
            triples.push((format!("w{i}"), "isa".to_string(), format!("w{j}")));
        }
        triples.push((format!("w{i}"), ["rel", "part of"][k % 2].to_string(), format!("w{k}")));
    }
    let kg = KnowledgeGraph::from_label_triples(triples, "isa").unwrap();

    let words: Vec<String> = (0..n + 3).map(|i| format!("w{i}")).collect();
    let docs = (0..rng.random_range(4..12))
        .map(|d| {
            let len = rng.random_range(1..8);
            let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
            LabeledDoc::new(if d % 2 == 0 { "pos" } else { "neg" }, text.join(" "))
        })
        .collect();

    let mut models = Vec::new();
    let mut raw = Vec::new();
    for m in 0..2 {
        let width = rng.random_range(1..4);
        let vocab: Vec<String> = words.iter().filter(|_| rng.random_bool(0.7)).cloned().collect();
        let vocab = if vocab.is_empty() { vec![words[0].clone()] } else { vocab };
        let data: Vec<f64> = (0..vocab.len() * width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = Tensor::from_vec(&[vocab.len(), width], data.clone()).unwrap();
        models.push(DimensionModel::from_parts(&format!("m{m}"), vocab.clone(), &t).unwrap());
        raw.push(
            vocab
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), data[i * width..(i + 1) * width].to_vec()))
                .collect(),
        );
    }
    World { kg, docs, models, raw }
}

pub fn raw_counts(docs: &[LabeledDoc], class: Option<&str>) -> (BTreeMap<String, f64>, f64) {
    let mut counts = BTreeMap::new();
    let mut total = 0.0;
    for d in docs.iter().filter(|d| class.is_none_or(|c| d.label == c)) {
        for w in d.text.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0.0) += 1.0;
            total += 1.0;
        }
    }
    (counts, total)
}

pub fn oracle_score(docs: &[LabeledDoc], word: &str) -> f64 {
    let (all, n_all) = raw_counts(docs, None);
    let (pos, n_pos) = raw_counts(docs, Some("pos"));
    let v = all.len() as f64;
    let p = (pos.get(word).unwrap_or(&0.0) + 1.0) / (n_pos + v);
    let q = (all.get(word).unwrap_or(&0.0) + 1.0) / (n_all + v);
    p * (p / q).ln()
}

pub fn oracle_embedding(w: &World, word: &str) -> Option<Vec<f64>> {
    let mut v = Vec::new();
    let mut hit = false;
    for (m, raw) in w.models.iter().zip(&w.raw) {
        match raw.get(word) {
            Some(x) => {
                v.extend_from_slice(x);
                hit = true;
            }
            None => v.extend(std::iter::repeat_n(0.0, m.width())),
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (hit && norm > 0.0).then(|| v.iter().map(|x| x / norm).collect())
}

/// Returns the number of pairs aggregated into `K_e`.
pub fn check_world(seed: u64, hops: u32, top_m: usize) -> usize {
    let w = world(seed);
    let stats = corpus_stats(&w.docs).unwrap();
    let (all, _) = raw_counts(&w.docs, None);

    let mut scores = BTreeMap::new();
    for c in w.kg.concepts() {
        let label = w.kg.label(c);
        let got = relevance_score(label, &stats, "pos");
        let want = oracle_score(&w.docs, label);
        assert!((got - want).abs() < TOL, "seed {seed}, {label}: {got} vs {want}");
        if all.contains_key(label) {
            scores.insert(c, want);
        }
    }
    let Ok(seeded) = extract_seeded_subkg(&w.kg, &stats, "pos", hops, top_m, &w.models) else {
        assert!(scores.is_empty(), "seed {seed}: extraction failed with scorable concepts");
        return 0;
    };

    let mut ranked: Vec<f64> = scores.values().copied().collect();
    ranked.sort_by(|a, b| b.total_cmp(a));
    let cutoff = ranked[top_m.min(ranked.len()) - 1];
    let want_seeds: BTreeSet<ConceptId> = scores.iter().filter(|(_, s)| **s >= cutoff).map(|(c, _)| *c).collect();
    assert_eq!(seeded.seeds, want_seeds, "seed {seed}");
    for (c, s) in &seeded.relevance {
        assert!((s - scores[c]).abs() < TOL);
    }

    let table = super::ancestor_table(&w.kg);
    let mut acc = vec![0.0; w.models.iter().map(DimensionModel::width).sum()];
    let mut pairs = 0;
    for t in &seeded.subkg.triples {
        let (Some(a), Some(b)) = (
            oracle_embedding(&w, w.kg.label(t.subject)),
            oracle_embedding(&w, w.kg.label(t.object)),
        ) else {
            continue;
        };
        let dist = super::lcs(&table, t.subject, t.object).unwrap_or(u32::from(t.subject != t.object));
        let weight = 1.0 / (1.0 + dist as f64);
        for i in 0..acc.len() {
            acc[i] += weight * (a[i] + b[i]) / 2.0;
        }
        pairs += 1;
    }
    let ke = knowledge_embedding(&w.kg, &seeded, &PredicateAllowlist::All).unwrap();
    assert_eq!(ke.pair_count, pairs, "seed {seed}");
    if pairs > 0 {
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (g, a) in ke.values.iter().zip(&acc) {
            assert!((g - a / norm).abs() < TOL, "seed {seed}: {:?} vs {:?}", ke.values, acc);
        }
    } else {
        assert!(ke.values.iter().all(|&v| v == 0.0));
    }
    pairs
}

