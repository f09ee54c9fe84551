//! Differential knowledge engine: retrieve knowledge around misclassified
//! data, isolate what the seeded sub-graph lacks, learn a linear map between
//! the two embedding spaces, and fold the new knowledge in.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::embedding::{concept_embedding, pair_weight, DimensionModel};
use crate::kg::{ConceptId, KgError, KnowledgeGraph, SubKG, Triple};
use crate::seeded::{EmbeddingMatrix, SeededSubKG};
use crate::tensor::{self, Tensor};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_PROXIMITY_HOPS: u32 = 2;
/// Systems whose reciprocal condition number falls below this are refused.
pub const MIN_RCOND: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DkeError {
    #[error("none of the {0} data-point concepts exist in the graph")]
    NoKnownConcepts(usize),
    #[error("proximity needs at least one hop")]
    ZeroHops,
    #[error("alpha must be positive and lambda non-negative (alpha = {alpha}, lambda = {lambda})")]
    BadHyperparameters { alpha: f64, lambda: f64 },
    #[error("mapping needs non-empty matrices of equal height, got {s:?} and {d:?}")]
    Shape { s: Vec<usize>, d: Vec<usize> },
    #[error("mapping system is singular (rcond {rcond:.3e}); raise lambda")]
    Singular { rcond: f64 },
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// n-hop ball around the concepts linked to a data point. Unknown concepts
/// are skipped with a warning.
pub fn knowledge_proximity(
    kg: &KnowledgeGraph,
    datapoint_concepts: &BTreeSet<ConceptId>,
    hops: u32,
) -> Result<SubKG, DkeError> {
    if hops == 0 {
        return Err(DkeError::ZeroHops);
    }
    let known: BTreeSet<ConceptId> = datapoint_concepts.iter().copied().filter(|&c| kg.contains(c)).collect();
    let skipped = datapoint_concepts.len() - known.len();
    if skipped > 0 {
        warn!("skipping {skipped} concepts not present in the graph");
    }
    if known.is_empty() {
        return Err(DkeError::NoKnownConcepts(datapoint_concepts.len()));
    }
    Ok(kg.n_hop_neighborhood(&known, hops)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialSubKG {
    /// Retrieved triples missing from the seeded sub-graph.
    pub triples: BTreeSet<Triple>,
    /// Concepts of those triples that the seeded sub-graph lacks, with their
    /// proximity depth.
    pub new_concepts: BTreeMap<ConceptId, u32>,
    /// `D_kg`: unit columns for the resolvable new concepts.
    pub d_kg: EmbeddingMatrix,
}

impl DifferentialSubKG {
    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

pub fn differential_subkg(
    kg: &KnowledgeGraph,
    retrieved: &SubKG,
    seeded: &SeededSubKG,
    models: &[DimensionModel],
) -> DifferentialSubKG {
    let triples: BTreeSet<Triple> = retrieved.triples.difference(&seeded.subkg.triples).cloned().collect();
    let new_concepts: BTreeMap<ConceptId, u32> = triples
        .iter()
        .flat_map(|t| [t.subject, t.object])
        .filter(|c| !seeded.subkg.contains_concept(*c))
        .map(|c| (c, retrieved.depth.get(&c).copied().unwrap_or(retrieved.hop_bound)))
        .collect();
    let mut d_kg = EmbeddingMatrix::empty(seeded.embeddings.dim());
    for &c in new_concepts.keys() {
        let v = concept_embedding(models, kg.label(c));
        if v.resolvable {
            d_kg.insert(c, &v.values);
        }
    }
    DifferentialSubKG {
        triples,
        new_concepts,
        d_kg,
    }
}

/// For each column of `d`, the most cosine-similar column of `s` (lowest
/// index on ties), giving a matrix shaped like `d`.
pub fn align_columns(s: &Tensor, d: &Tensor) -> Tensor {
    let s_cols = s.columns();
    let aligned: Vec<Vec<f64>> = d
        .columns()
        .iter()
        .map(|v| {
            let mut best = 0;
            let mut best_cos = f64::NEG_INFINITY;
            for (j, c) in s_cols.iter().enumerate() {
                let cos = tensor::cosine(c, v);
                if cos > best_cos {
                    best = j;
                    best_cos = cos;
                }
            }
            s_cols[best].clone()
        })
        .collect();
    Tensor::from_columns(s.rows(), &aligned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingSolution {
    /// `d × d` map taking differential embeddings into the seeded space.
    pub w: Tensor,
    pub alpha: f64,
    pub lambda: f64,
    /// `‖W(αSSᵀ − DDᵀ + λI) − (αDSᵀ − SDᵀ)‖_F` on the aligned matrices.
    pub residual: f64,
    /// `‖S − WD‖²_F − α‖WS − D‖²_F`, zero at exact equilibrium.
    pub imbalance: f64,
}

fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn from_na(m: &DMatrix<f64>) -> Tensor {
    let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    Tensor::from_vec(&[m.nrows(), m.ncols()], data).expect("consistent shape")
}

/// Solves the ridge-regularized stationarity condition
/// `W(αSSᵀ − DDᵀ + λI) = αDSᵀ − SDᵀ` after aligning the columns of `s_kg`
/// to those of `d_kg` with [`align_columns`].
pub fn solve_mapping(s_kg: &Tensor, d_kg: &Tensor, alpha: f64, lambda: f64) -> Result<MappingSolution, DkeError> {
    if !(alpha > 0.0 && lambda >= 0.0 && alpha.is_finite() && lambda.is_finite()) {
        return Err(DkeError::BadHyperparameters { alpha, lambda });
    }
    let shape_err = || DkeError::Shape {
        s: s_kg.shape().to_vec(),
        d: d_kg.shape().to_vec(),
    };
    if s_kg.shape().len() != 2 || d_kg.shape().len() != 2 || s_kg.is_empty() || d_kg.is_empty() {
        return Err(shape_err());
    }
    if s_kg.rows() != d_kg.rows() {
        return Err(shape_err());
    }
    let s = to_na(&align_columns(s_kg, d_kg));
    let d = to_na(d_kg);
    let n = s.nrows();
    let a = &s * s.transpose() * alpha - &d * d.transpose() + DMatrix::identity(n, n) * lambda;
    let b = &d * s.transpose() * alpha - &s * d.transpose();

    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if rcond.is_nan() || rcond < MIN_RCOND {
        return Err(DkeError::Singular { rcond });
    }
    // W A = B  ⇔  Aᵀ Wᵀ = Bᵀ
    let wt = a
        .transpose()
        .lu()
        .solve(&b.transpose())
        .ok_or(DkeError::Singular { rcond })?;
    let w = wt.transpose();
    let residual = (&w * &a - &b).norm();
    let imbalance = (&s - &w * &d).norm_squared() - alpha * (&w * &s - &d).norm_squared();
    Ok(MappingSolution {
        w: from_na(&w),
        alpha,
        lambda,
        residual,
        imbalance,
    })
}

/// Adds the differential triples and concepts to a copy of `seeded`. Each
/// new embedding column `v` is stored as `normalize(W·v)` (or `v` itself when
/// no solution is supplied or the mapped vector vanishes). New concepts get
/// relevance `1 / (1 + depth)`.
pub fn update_seeded(
    seeded: &SeededSubKG,
    diff: &DifferentialSubKG,
    solution: Option<&MappingSolution>,
) -> SeededSubKG {
    let mut out = seeded.clone();
    if diff.is_empty() && diff.new_concepts.is_empty() {
        return out;
    }
    out.subkg.triples.extend(diff.triples.iter().cloned());
    for (&c, &depth) in &diff.new_concepts {
        out.subkg.depth.entry(c).or_insert(depth);
        out.relevance.entry(c).or_insert_with(|| pair_weight(depth));
        out.subkg.hop_bound = out.subkg.hop_bound.max(depth);
    }
    for (&c, v) in diff.d_kg.ids().iter().zip(diff.d_kg.columns()) {
        let mapped = solution.map(|s| s.w.matvec(v));
        let stored = match mapped {
            Some(m) if out.embeddings.insert(c, &m) => continue,
            Some(_) => {
                warn!("mapped embedding of {c} vanished; storing it unmapped");
                v
            }
            None => v,
        };
        out.embeddings.insert(c, stored);
    }
    out
}
