//! Per-dimension distributional models, concatenated content vectors, and the
//! knowledge embedding that summarizes a seeded sub-graph.
//!
//! Each [`DimensionModel`] is trained on its own corpus (one per contextual
//! dimension, e.g. "religion" or "politics"). A text is embedded by averaging
//! its in-vocabulary token vectors inside every model and concatenating the
//! per-model averages in a fixed order.

use std::collections::{BTreeSet, HashMap};

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::kg::{KgError, KnowledgeGraph};
use crate::seeded::SeededSubKG;
use crate::tensor::{self, Tensor};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary of {vocab} tokens is smaller than width {d_sub}")]
    VocabularyTooSmall { vocab: usize, d_sub: usize },
    #[error("model width must be at least 1")]
    ZeroWidth,
    #[error("vocabulary indices are not dense: {0}")]
    BadVocabulary(String),
    #[error("sub-graph is empty")]
    EmptySubgraph,
    #[error("weighted pair sum cancelled to zero over {0} pairs")]
    Degenerate(usize),
    #[error(transparent)]
    Kg(#[from] KgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionModel {
    name: String,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    d_sub: usize,
    vectors: Vec<f64>,
}

impl DimensionModel {
    /// Reassembles a model from its vocabulary (position = index) and a
    /// `|vocab| × d_sub` matrix.
    pub fn from_parts(name: &str, vocab: Vec<String>, vectors: &Tensor) -> Result<Self, EmbeddingError> {
        if vectors.shape().len() != 2 || vectors.rows() != vocab.len() {
            return Err(EmbeddingError::BadVocabulary(format!(
                "{} tokens vs matrix shape {:?}",
                vocab.len(),
                vectors.shape()
            )));
        }
        let d_sub = vectors.cols();
        if d_sub == 0 {
            return Err(EmbeddingError::ZeroWidth);
        }
        if !vectors.is_finite() {
            return Err(EmbeddingError::BadVocabulary("non-finite vector".into()));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(EmbeddingError::BadVocabulary("duplicate token".into()));
        }
        Ok(Self {
            name: name.to_string(),
            vocab,
            index,
            d_sub,
            vectors: vectors.data().to_vec(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.d_sub
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.d_sub..(index + 1) * self.d_sub]
    }

    pub fn token_vector(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.vector(i))
    }

    pub fn matrix(&self) -> Tensor {
        Tensor::from_vec(&[self.vocab.len(), self.d_sub], self.vectors.clone()).expect("consistent shape")
    }

    /// Mean of the in-vocabulary vectors among `tokens`, or zeros.
    fn mean_of(&self, tokens: &[String]) -> (Vec<f64>, usize) {
        let mut acc = vec![0.0; self.d_sub];
        let mut hits = 0usize;
        for t in tokens {
            if let Some(v) = self.token_vector(t) {
                hits += 1;
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
        }
        if hits > 0 {
            let n = hits as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        (acc, hits)
    }
}

/// Builds symmetric co-occurrence counts within ±`window` tokens (per
/// document), converts them to positive PMI, and keeps the `d_sub` leading
/// singular directions.
///
/// The PPMI matrix is symmetric, so its SVD comes from a symmetric
/// eigendecomposition: singular values are `|λ|`, left vectors are the
/// eigenvectors. Token vectors are `u_k · sqrt(σ_k)`. Directions are ordered by
/// `σ` descending, then `λ` descending, and each column's sign is fixed so
/// that its largest-magnitude entry is positive. The factorization is exact,
/// so `seed` has no effect on this trainer; it is part of the signature for
/// stochastic trainers.
pub fn train_dimension_model<S: AsRef<str>>(
    name: &str,
    corpus: &[S],
    d_sub: usize,
    window: usize,
    _seed: u64,
) -> Result<DimensionModel, EmbeddingError> {
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    if d_sub == 0 {
        return Err(EmbeddingError::ZeroWidth);
    }
    let docs: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(d.as_ref())).collect();
    let vocab: Vec<String> = docs
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let v = vocab.len();
    if v < d_sub {
        return Err(EmbeddingError::VocabularyTooSmall { vocab: v, d_sub });
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut counts = DMatrix::<f64>::zeros(v, v);
    for doc in &docs {
        let ids: Vec<usize> = doc.iter().map(|t| index[t.as_str()]).collect();
        for (i, &a) in ids.iter().enumerate() {
            for &b in ids.iter().skip(i + 1).take(window) {
                counts[(a, b)] += 1.0;
                counts[(b, a)] += 1.0;
            }
        }
    }
    let ppmi = ppmi(&counts);
    let eig = SymmetricEigen::new(ppmi);

    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&i, &j| {
        let (li, lj) = (eig.eigenvalues[i], eig.eigenvalues[j]);
        lj.abs()
            .total_cmp(&li.abs())
            .then(lj.total_cmp(&li))
            .then(i.cmp(&j))
    });

    let mut vectors = vec![0.0; v * d_sub];
    for (k, &col) in order.iter().take(d_sub).enumerate() {
        let scale = eig.eigenvalues[col].abs().sqrt();
        let u = eig.eigenvectors.column(col);
        let pivot = (0..v)
            .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if u[pivot] < 0.0 { -1.0 } else { 1.0 };
        for row in 0..v {
            vectors[row * d_sub + k] = sign * u[row] * scale;
        }
    }
    let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(DimensionModel {
        name: name.to_string(),
        vocab,
        index,
        d_sub,
        vectors,
    })
}

/// `max(0, ln(C_ij · total / (row_i · row_j)))`, zero where `C_ij = 0`.
pub fn ppmi(counts: &DMatrix<f64>) -> DMatrix<f64> {
    let total: f64 = counts.iter().sum();
    let rows: Vec<f64> = counts.row_iter().map(|r| r.sum()).collect();
    DMatrix::from_fn(counts.nrows(), counts.ncols(), |i, j| {
        let c = counts[(i, j)];
        if c <= 0.0 {
            0.0
        } else {
            (c * total / (rows[i] * rows[j])).ln().max(0.0)
        }
    })
}

/// Concatenated content representation. `offsets` has one more entry than
/// there are models; model `m` owns `values[offsets[m]..offsets[m + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentVector {
    pub values: Vec<f64>,
    pub offsets: Vec<usize>,
}

impl ContentVector {
    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn slice(&self, model: usize) -> &[f64] {
        &self.values[self.offsets[model]..self.offsets[model + 1]]
    }
}

pub fn content_width(models: &[DimensionModel]) -> usize {
    models.iter().map(DimensionModel::width).sum()
}

fn embed_tokens(models: &[DimensionModel], tokens: &[String]) -> (ContentVector, usize) {
    let mut values = Vec::with_capacity(content_width(models));
    let mut offsets = vec![0];
    let mut hits = 0;
    for m in models {
        let (mean, h) = m.mean_of(tokens);
        hits += h;
        values.extend(mean);
        offsets.push(values.len());
    }
    (ContentVector { values, offsets }, hits)
}

/// Bag-of-words mean per model, concatenated in model order.
pub fn embed_text(models: &[DimensionModel], text: &str) -> ContentVector {
    embed_tokens(models, &tokenize(text)).0
}

/// Content vector of a single (already tokenized) token.
pub fn embed_token(models: &[DimensionModel], token: &str) -> ContentVector {
    embed_tokens(models, std::slice::from_ref(&token.to_string())).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVector {
    pub values: Vec<f64>,
    /// False when no label token is known to any model or the mean is zero;
    /// such concepts are left out of embedding matrices.
    pub resolvable: bool,
}

pub fn concept_embedding(models: &[DimensionModel], label: &str) -> ConceptVector {
    let (cv, hits) = embed_tokens(models, &tokenize(label));
    let resolvable = hits > 0 && tensor::norm(&cv.values) > 0.0;
    ConceptVector {
        values: cv.values,
        resolvable,
    }
}

/// Which predicates contribute concept pairs to the knowledge embedding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PredicateAllowlist {
    #[default]
    All,
    Only(BTreeSet<String>),
}

impl PredicateAllowlist {
    pub fn permits(&self, predicate: &str) -> bool {
        match self {
            Self::All => true,
            Self::Only(set) => set.contains(predicate),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeEmbedding {
    pub values: Vec<f64>,
    pub pair_count: usize,
}

impl KnowledgeEmbedding {
    pub fn is_zero(&self) -> bool {
        self.pair_count == 0
    }
}

/// Distance-to-weight map, `1 / (1 + distance)`.
pub fn pair_weight(distance: u32) -> f64 {
    1.0 / (1.0 + distance as f64)
}

/// Sums, over every allowed triple whose endpoints both have a stored
/// embedding, the mean of the two endpoint vectors scaled by
/// [`pair_weight`] of their LCS distance in `kg`. When the endpoints share no
/// taxonomy ancestor the hop count inside the sub-graph is used instead (the
/// endpoints of a triple are adjacent, so 1, or 0 for a self-loop). The sum is
/// L2-normalized.
pub fn knowledge_embedding(
    kg: &KnowledgeGraph,
    seeded: &SeededSubKG,
    allowlist: &PredicateAllowlist,
) -> Result<KnowledgeEmbedding, EmbeddingError> {
    if seeded.subkg.is_empty() {
        return Err(EmbeddingError::EmptySubgraph);
    }
    let dim = seeded.embeddings.dim();
    let mut acc = vec![0.0; dim];
    let mut pair_count = 0;
    for t in &seeded.subkg.triples {
        if !allowlist.permits(&t.predicate) {
            continue;
        }
        let (Some(ci), Some(cj)) = (seeded.embeddings.column_of(t.subject), seeded.embeddings.column_of(t.object))
        else {
            continue;
        };
        let distance = match kg.lcs_distance(t.subject, t.object)? {
            Some(d) => d,
            None => u32::from(t.subject != t.object),
        };
        let w = pair_weight(distance);
        for ((a, x), y) in acc.iter_mut().zip(ci).zip(cj) {
            *a += w * 0.5 * (x + y);
        }
        pair_count += 1;
    }
    if pair_count == 0 {
        warn!("no resolvable concept pair in the seeded sub-graph; knowledge embedding is zero");
        return Ok(KnowledgeEmbedding {
            values: vec![0.0; dim],
            pair_count: 0,
        });
    }
    let values = tensor::normalized(&acc).ok_or(EmbeddingError::Degenerate(pair_count))?;
    Ok(KnowledgeEmbedding { values, pair_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_model(name: &str, rows: &[(&str, &[f64])]) -> DimensionModel {
        let vocab = rows.iter().map(|(t, _)| t.to_string()).collect();
        let d = rows[0].1.len();
        let data = rows.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        DimensionModel::from_parts(name, vocab, &Tensor::from_vec(&[rows.len(), d], data).unwrap()).unwrap()
    }

    #[test]
    fn single_token_corpus() {
        let m = train_dimension_model("x", &["a a a", "a"], 1, 2, 0).unwrap();
        assert_eq!(m.vocab(), ["a"]);
        assert_eq!(m.matrix().shape(), &[1, 1]);
        assert!(m.vector(0)[0].is_finite());
        assert!(matches!(
            train_dimension_model("x", &["a a a"], 2, 2, 0),
            Err(EmbeddingError::VocabularyTooSmall { vocab: 1, d_sub: 2 })
        ));
    }

    #[test]
    fn training_errors() {
        let empty: [&str; 0] = [];
        assert!(matches!(train_dimension_model("x", &empty, 1, 2, 0), Err(EmbeddingError::EmptyCorpus)));
        assert!(matches!(train_dimension_model("x", &["a b"], 0, 2, 0), Err(EmbeddingError::ZeroWidth)));
    }

    #[test]
    fn ppmi_by_hand_for_two_tokens() {
        // "x y" five times, window 1: C = [[0,5],[5,0]], total 10, rows 5,5
        // PMI(x,y) = ln(5·10/25) = ln 2, diagonal has no counts
        let counts = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        let p = ppmi(&counts);
        assert_eq!(p[(0, 0)], 0.0);
        assert!((p[(0, 1)] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn co_occurring_tokens_align() {
        let corpus = vec!["x y"; 5];
        let m = train_dimension_model("d", &corpus, 1, 1, 3).unwrap();
        let (x, y) = (m.token_vector("x").unwrap(), m.token_vector("y").unwrap());
        assert!(tensor::cosine(x, y) > 0.99);
        // top singular value is ln 2, eigenvector (1,1)/sqrt 2
        let expect = (2f64.ln()).sqrt() / 2f64.sqrt();
        assert!((x[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = ["the cat sat on the mat", "the dog sat on the log", "a cat and a dog"];
        let a = train_dimension_model("d", &corpus, 3, 2, 11).unwrap();
        let b = train_dimension_model("d", &corpus, 3, 2, 11).unwrap();
        let bits = |m: &DimensionModel| m.matrix().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.matrix().is_finite());
    }

    #[test]
    fn embed_text_examples() {
        let m1 = toy_model("a", &[("cat", &[1.0, 2.0]), ("dog", &[3.0, 0.0])]);
        let m2 = toy_model("b", &[("fish", &[5.0])]);
        let both = [m1.clone(), m2.clone()];

        let none = embed_text(&both, "zebra !!");
        assert_eq!(none.values, vec![0.0; 3]);
        assert_eq!(none.offsets, vec![0, 2, 3]);

        assert_eq!(embed_text(std::slice::from_ref(&m1), "cat").values, vec![1.0, 2.0]);
        assert_eq!(embed_text(&both, "cat").values, vec![1.0, 2.0, 0.0]);
        assert_eq!(embed_text(&both, "Cat dog").values, vec![2.0, 1.0, 0.0]);
        assert_eq!(embed_text(&both, "cat fish").slice(1), &[5.0]);
    }

    #[test]
    fn concept_embedding_resolution() {
        let m = toy_model("a", &[("south", &[1.0, 0.0]), ("carolina", &[0.0, 1.0])]);
        let models = [m];
        assert_eq!(concept_embedding(&models, "south").values, embed_text(&models, "south").values);
        let multi = concept_embedding(&models, "South Carolina");
        assert_eq!(multi.values, vec![0.5, 0.5]);
        assert!(multi.resolvable);
        let oov = concept_embedding(&models, "texas");
        assert_eq!(oov.values, vec![0.0, 0.0]);
        assert!(!oov.resolvable);
    }

    proptest! {
        #[test]
        fn embed_text_is_order_invariant(perm in Just(vec!["cat", "dog", "cat", "fish", "eel"]).prop_shuffle()) {
            let m = toy_model("a", &[("cat", &[0.1, 0.7]), ("dog", &[0.3, -0.2]), ("fish", &[1.0, 1.0])]);
            let models = [m];
            let base = embed_text(&models, "cat dog cat fish eel");
            let shuffled = embed_text(&models, &perm.join(" "));
            for (a, b) in base.values.iter().zip(&shuffled.values) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn offsets_partition_width(widths in proptest::collection::vec(1usize..4, 1..4)) {
            let models: Vec<_> = widths
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    DimensionModel::from_parts(&format!("m{i}"), vec!["t".into()], &Tensor::zeros(&[1, w])).unwrap()
                })
                .collect();
            let cv = embed_text(&models, "t");
            prop_assert_eq!(cv.width(), widths.iter().sum::<usize>());
            prop_assert_eq!(cv.offsets[0], 0);
            prop_assert_eq!(*cv.offsets.last().unwrap(), cv.width());
            for w in cv.offsets.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}
