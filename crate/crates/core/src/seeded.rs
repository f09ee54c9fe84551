//! Corpus-driven selection of the seeded sub-graph.
//!
//! Every concept whose label tokens all occur in the labelled corpus gets a
//! relevance score: the pointwise KL contribution `p · ln(p / q)` of its label
//! tokens, where `p` is the add-one smoothed token probability in the target
//! class and `q` the smoothed probability over the whole corpus. The top
//! scorers become seeds and their n-hop ball is the seeded sub-graph.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use thiserror::Error;

use crate::embedding::{concept_embedding, content_width, DimensionModel};
use crate::kg::{ConceptId, KgError, KnowledgeGraph, SubKG};
use crate::tensor::{self, Tensor};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("line {line}: {message}")]
    MalformedDataset { line: usize, message: String },
    #[error("class {0:?} does not occur in the dataset")]
    UnknownClass(String),
    #[error("top_m must be at least 1")]
    ZeroTopM,
    #[error("no concept label intersects the corpus vocabulary")]
    NoOverlap,
    #[error("malformed seeded sub-graph file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDoc {
    pub label: String,
    pub text: String,
}

impl LabeledDoc {
    pub fn new(label: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            text: text.into(),
        }
    }
}

/// Reads `label<TAB>text` lines. Blank lines and `#` comments are skipped;
/// the text is everything after the first tab.
pub fn parse_dataset(reader: impl BufRead) -> Result<Vec<LabeledDoc>, SeedError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((label, text)) = line.split_once('\t') else {
            return Err(SeedError::MalformedDataset {
                line: i + 1,
                message: "expected label<TAB>text".into(),
            });
        };
        let label = label.trim();
        if label.is_empty() {
            return Err(SeedError::MalformedDataset {
                line: i + 1,
                message: "empty label".into(),
            });
        }
        docs.push(LabeledDoc::new(label, text));
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    /// class → token → count
    pub token_counts: BTreeMap<String, BTreeMap<String, u64>>,
    /// token → number of documents containing it
    pub doc_freq: BTreeMap<String, u64>,
    /// class → number of tokens
    pub class_totals: BTreeMap<String, u64>,
    /// token → count over all classes
    pub overall: BTreeMap<String, u64>,
    pub total_tokens: u64,
}

impl CorpusStats {
    pub fn vocab_size(&self) -> usize {
        self.overall.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.class_totals.keys().map(String::as_str)
    }

    pub fn has_token(&self, token: &str) -> bool {
        self.overall.contains_key(token)
    }

    fn class_count(&self, class: &str, token: &str) -> u64 {
        self.token_counts
            .get(class)
            .and_then(|m| m.get(token))
            .copied()
            .unwrap_or(0)
    }
}

pub fn corpus_stats(dataset: &[LabeledDoc]) -> Result<CorpusStats, SeedError> {
    if dataset.is_empty() {
        return Err(SeedError::EmptyDataset);
    }
    let mut stats = CorpusStats::default();
    for doc in dataset {
        let tokens = tokenize(&doc.text);
        let class = stats.token_counts.entry(doc.label.clone()).or_default();
        for t in &tokens {
            *class.entry(t.clone()).or_default() += 1;
            *stats.overall.entry(t.clone()).or_default() += 1;
        }
        *stats.class_totals.entry(doc.label.clone()).or_default() += tokens.len() as u64;
        stats.total_tokens += tokens.len() as u64;
        for t in tokens.into_iter().collect::<BTreeSet<_>>() {
            *stats.doc_freq.entry(t).or_default() += 1;
        }
    }
    Ok(stats)
}

/// Pointwise KL contribution of a label, summed over its tokens. Unseen
/// tokens fall back to the smoothing floor, so the score is always finite.
pub fn relevance_score(label: &str, stats: &CorpusStats, target_class: &str) -> f64 {
    let v = stats.vocab_size() as f64;
    let target_total = stats.class_totals.get(target_class).copied().unwrap_or(0) as f64;
    let all_total = stats.total_tokens as f64;
    tokenize(label)
        .iter()
        .map(|t| {
            let p = (stats.class_count(target_class, t) as f64 + 1.0) / (target_total + v);
            let q = (stats.overall.get(t).copied().unwrap_or(0) as f64 + 1.0) / (all_total + v);
            p * (p / q).ln()
        })
        .sum()
}

/// Concept embeddings stored column-wise in ascending [`ConceptId`] order.
/// Every column is unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<ConceptId>,
    columns: Vec<Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ConceptId] {
        &self.ids
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_of(&self, id: ConceptId) -> Option<&[f64]> {
        self.ids.binary_search(&id).ok().map(|i| self.columns[i].as_slice())
    }

    /// Inserts (or replaces) a column, normalizing it. Zero vectors are
    /// rejected and `false` is returned.
    pub fn insert(&mut self, id: ConceptId, values: &[f64]) -> bool {
        assert_eq!(values.len(), self.dim, "column width mismatch");
        let Some(unit) = tensor::normalized(values) else {
            return false;
        };
        match self.ids.binary_search(&id) {
            Ok(i) => self.columns[i] = unit,
            Err(i) => {
                self.ids.insert(i, id);
                self.columns.insert(i, unit);
            }
        }
        true
    }

    /// `dim × k` tensor, columns in id order.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_columns(self.dim, &self.columns)
    }

    /// Rebuilds from a `dim × k` tensor whose columns belong to `ids`.
    /// Columns are stored as given (no renormalization) to keep round trips exact.
    pub fn from_tensor(ids: Vec<ConceptId>, t: &Tensor) -> Result<Self, SeedError> {
        if t.shape().len() != 2 || t.cols() != ids.len() {
            return Err(SeedError::MalformedFile(format!(
                "matrix shape {:?} does not match {} columns",
                t.shape(),
                ids.len()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SeedError::MalformedFile("column ids are not strictly ascending".into()));
        }
        Ok(Self {
            dim: t.rows(),
            ids,
            columns: t.columns(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeededSubKG {
    pub target_class: String,
    pub seeds: BTreeSet<ConceptId>,
    pub subkg: SubKG,
    /// Relevance in nats for every scored concept of the sub-graph.
    pub relevance: BTreeMap<ConceptId, f64>,
    /// `S_kg`: one unit column per concept with a resolvable label.
    pub embeddings: EmbeddingMatrix,
}

/// Scores every concept present in the corpus, keeps the `top_m` best (plus
/// anything tied with the last one), and expands them by `hops`.
pub fn extract_seeded_subkg(
    kg: &KnowledgeGraph,
    stats: &CorpusStats,
    target_class: &str,
    hops: u32,
    top_m: usize,
    models: &[DimensionModel],
) -> Result<SeededSubKG, SeedError> {
    if top_m == 0 {
        return Err(SeedError::ZeroTopM);
    }
    if !stats.class_totals.contains_key(target_class) {
        return Err(SeedError::UnknownClass(target_class.to_string()));
    }
    let mut scored: Vec<(ConceptId, f64)> = kg
        .concepts()
        .filter(|&c| {
            let tokens = tokenize(kg.label(c));
            !tokens.is_empty() && tokens.iter().all(|t| stats.has_token(t))
        })
        .map(|c| (c, relevance_score(kg.label(c), stats, target_class)))
        .collect();
    if scored.is_empty() {
        return Err(SeedError::NoOverlap);
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let cutoff = scored[top_m.min(scored.len()) - 1].1;
    let seeds: BTreeSet<ConceptId> = scored.iter().filter(|(_, s)| *s >= cutoff).map(|(c, _)| *c).collect();

    let subkg = kg.n_hop_neighborhood(&seeds, hops)?;
    let relevance = scored
        .into_iter()
        .filter(|(c, _)| subkg.contains_concept(*c))
        .collect();
    let mut embeddings = EmbeddingMatrix::empty(content_width(models));
    for c in subkg.concepts() {
        let v = concept_embedding(models, kg.label(c));
        if v.resolvable {
            embeddings.insert(c, &v.values);
        }
    }
    Ok(SeededSubKG {
        target_class: target_class.to_string(),
        seeds,
        subkg,
        relevance,
        embeddings,
    })
}

/// Text and matrix payloads of a persisted [`SeededSubKG`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeededFiles {
    pub triples_tsv: String,
    pub scores_tsv: String,
    pub matrix: Tensor,
}

const SCORES_HEADER: &str = "label\tdepth\tscore\tcolumn\tseed";

impl SeededSubKG {
    pub fn concept_count(&self) -> usize {
        self.subkg.depth.len()
    }

    /// Triples TSV, a per-concept scores TSV (`label, depth, score, column,
    /// seed`, empty cells where absent) and the `S_kg` matrix.
    pub fn to_files(&self, kg: &KnowledgeGraph) -> SeededFiles {
        let mut scores = format!(
            "#target_class\t{}\n#hop_bound\t{}\n#dim\t{}\n{SCORES_HEADER}\n",
            self.target_class,
            self.subkg.hop_bound,
            self.embeddings.dim()
        );
        for (&c, &depth) in &self.subkg.depth {
            let score = self.relevance.get(&c).map(|s| s.to_string()).unwrap_or_default();
            let column = self
                .embeddings
                .ids()
                .binary_search(&c)
                .map(|i| i.to_string())
                .unwrap_or_default();
            let seed = u8::from(self.seeds.contains(&c));
            scores.push_str(&format!("{}\t{depth}\t{score}\t{column}\t{seed}\n", kg.label(c)));
        }
        SeededFiles {
            triples_tsv: self.subkg.to_tsv(kg),
            scores_tsv: scores,
            matrix: self.embeddings.to_tensor(),
        }
    }

    pub fn from_files(kg: &KnowledgeGraph, files: &SeededFiles) -> Result<Self, SeedError> {
        let bad = |m: String| SeedError::MalformedFile(m);
        let lookup = |label: &str| kg.concept(label).ok_or_else(|| bad(format!("unknown concept {label:?}")));

        let mut target_class = None;
        let mut hop_bound = None;
        let mut dim = None;
        let mut seeds = BTreeSet::new();
        let mut depth = BTreeMap::new();
        let mut relevance = BTreeMap::new();
        let mut columns: Vec<(usize, ConceptId)> = Vec::new();
        for line in files.scores_tsv.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta.split_once('\t').ok_or_else(|| bad(format!("bad metadata {line:?}")))?;
                match k {
                    "target_class" => target_class = Some(v.to_string()),
                    "hop_bound" => hop_bound = v.parse::<u32>().ok(),
                    "dim" => dim = v.parse::<usize>().ok(),
                    _ => return Err(bad(format!("unknown metadata key {k:?}"))),
                }
                continue;
            }
            if line == SCORES_HEADER || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields in {line:?}")));
            }
            let c = lookup(f[0])?;
            depth.insert(c, f[1].parse::<u32>().map_err(|e| bad(e.to_string()))?);
            if !f[2].is_empty() {
                relevance.insert(c, f[2].parse::<f64>().map_err(|e| bad(e.to_string()))?);
            }
            if !f[3].is_empty() {
                columns.push((f[3].parse::<usize>().map_err(|e| bad(e.to_string()))?, c));
            }
            if f[4] == "1" {
                seeds.insert(c);
            }
        }
        columns.sort();
        if columns.iter().enumerate().any(|(i, (col, _))| *col != i) {
            return Err(bad("column indices are not dense".into()));
        }
        let ids: Vec<ConceptId> = columns.into_iter().map(|(_, c)| c).collect();
        let dim = dim.ok_or_else(|| bad("missing #dim".into()))?;
        let embeddings = if ids.is_empty() {
            EmbeddingMatrix::empty(dim)
        } else {
            EmbeddingMatrix::from_tensor(ids, &files.matrix)?
        };
        if embeddings.dim() != dim {
            return Err(bad("matrix height disagrees with #dim".into()));
        }

        let mut triples = BTreeSet::new();
        for (i, line) in files.triples_tsv.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("triple line {}", i + 1)));
            }
            let (s, o) = (lookup(f[0])?, lookup(f[2])?);
            let t = crate::kg::Triple {
                subject: s,
                predicate: f[1].to_string(),
                object: o,
            };
            if kg.triples().binary_search(&t).is_err() {
                return Err(bad(format!("triple {line:?} is not in the graph")));
            }
            triples.insert(t);
        }
        Ok(Self {
            target_class: target_class.ok_or_else(|| bad("missing #target_class".into()))?,
            seeds,
            subkg: SubKG {
                triples,
                depth,
                hop_bound: hop_bound.ok_or_else(|| bad("missing #hop_bound".into()))?,
            },
            relevance,
            embeddings,
        })
    }
}
