//! Knowledge-infused learning.
//!
//! The pipeline, bottom up:
//!
//! * [`kg`]: a triple store with a taxonomy relation, LCS distances and n-hop
//!   neighbourhoods.
//! * [`seeded`]: corpus-driven relevance scoring that picks the seeded
//!   sub-graph.
//! * [`embedding`]: per-dimension PPMI/SVD models, concatenated content
//!   vectors and the knowledge embedding `K_e`.
//! * [`nlm`]: a stacked-LSTM classifier exposing `h_T` and `h_{T-1}`.
//! * [`infusion`]: the KL-guided fusion gate and modulation that merge `K_e`
//!   into the classifier.
//! * [`dke`]: the engine that grows the seeded sub-graph from
//!   misclassifications.
//!
//! The `book/` directory walks through each stage; its code listings are
//! compiled and run as doc tests of this crate.

pub mod dke;
pub mod embedding;
pub mod infusion;
pub mod io;
pub mod kg;
pub mod nlm;
pub mod rng;
pub mod seeded;
pub mod tensor;
pub mod text;

pub use embedding::{DimensionModel, KnowledgeEmbedding, PredicateAllowlist};
pub use kg::{ConceptId, KnowledgeGraph, SubKG, Triple};
pub use seeded::{LabeledDoc, SeededSubKG};
pub use tensor::Tensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/knowledge-graphs.md")]
    mod knowledge_graphs {}
    #[doc = include_str!("../../../book/src/seeding.md")]
    mod seeding {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/recurrent-classifier.md")]
    mod recurrent_classifier {}
    #[doc = include_str!("../../../book/src/infusion.md")]
    mod infusion {}
    #[doc = include_str!("../../../book/src/differential-engine.md")]
    mod differential_engine {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
