#![allow(dead_code, clippy::needless_range_loop)]

pub mod linalg;
pub mod worlds;

use std::collections::BTreeMap;

use kinfuse::{ConceptId, KnowledgeGraph};

/// Upward BFS distances from every concept to each ancestor (itself at 0).
pub fn ancestor_table(kg: &KnowledgeGraph) -> Vec<BTreeMap<ConceptId, u32>> {
    let n = kg.concept_count();
    let inf = u32::MAX / 4;
    let mut dist = vec![vec![inf; n]; n];
    for i in 0..n {
        dist[i][i] = 0;
    }
    for t in kg.triples() {
        if t.predicate == "isa" {
            dist[t.subject.index()][t.object.index()] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| dist[i][j] < inf)
                .map(|j| (ConceptId(j as u32), dist[i][j]))
                .collect()
        })
        .collect()
}

/// LCS distance from the ancestor table.
pub fn lcs(table: &[BTreeMap<ConceptId, u32>], a: ConceptId, b: ConceptId) -> Option<u32> {
    table[a.index()]
        .iter()
        .filter_map(|(anc, da)| table[b.index()].get(anc).map(|db| da + db))
        .min()
}
