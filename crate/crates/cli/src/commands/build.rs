use std::collections::BTreeMap;
use std::fs;

use kinfuse::embedding::{knowledge_embedding, train_dimension_model};
use kinfuse::io::tensor_to_bytes;
use kinfuse::kg::TripleFormat;
use kinfuse::seeded::{corpus_stats, extract_seeded_subkg};
use kinfuse::KnowledgeGraph;
use log::info;
use serde::Serialize;

use crate::artifacts::{
    emit, file_hash, model_matrix_file, model_vocab_file, seeded_payloads, sha256_hex, vocab_tsv, Manifest, KG_FILE,
};
use crate::config::{Dimension, EmbeddingSection, KgSection, LoadedConfig, Paths, Seeding};
use crate::data::load_dataset;
use crate::error::CliError;

use super::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildStatus {
    Built,
    UpToDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildSummary {
    pub status: BuildStatus,
    pub manifest: Manifest,
}

/// The configuration settings that influence build outputs.
#[derive(Serialize)]
struct BuildKey<'a> {
    paths: &'a Paths,
    dimension: &'a BTreeMap<String, Dimension>,
    kg: &'a KgSection,
    seeding: &'a Seeding,
    embedding: &'a EmbeddingSection,
}

fn input_hashes(cfg: &LoadedConfig) -> Result<BTreeMap<String, String>, CliError> {
    let c = &cfg.config;
    let key = BuildKey {
        paths: &c.paths,
        dimension: &c.dimension,
        kg: &c.kg,
        seeding: &c.seeding,
        embedding: &c.embedding,
    };
    let key = toml::to_string(&key).expect("serializable");
    let mut m = BTreeMap::from([("settings".to_string(), sha256_hex(key.as_bytes()))]);
    for (name, path) in cfg.inputs() {
        m.insert(name, file_hash(&path)?);
    }
    Ok(m)
}

fn read_corpus(path: &std::path::Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::validation(path.display(), e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

/// Loads the graph and corpora, trains the dimension models, extracts the
/// seeded sub-graph and writes everything to the output directory. Skips all
/// work when the manifest shows identical inputs and untouched outputs.
pub fn build(ctx: &Context) -> Result<BuildSummary, CliError> {
    let cfg = &ctx.cfg;
    let c = &cfg.config;
    cfg.check_inputs()?;
    let inputs = input_hashes(cfg)?;
    if let Some(old) = Manifest::read(&ctx.out) {
        if old.inputs == inputs && old.outputs_intact(&ctx.out) {
            return Ok(BuildSummary {
                status: BuildStatus::UpToDate,
                manifest: old,
            });
        }
    }

    let kg_path = cfg.resolve(&c.paths.kg);
    let kg = KnowledgeGraph::load(&kg_path, TripleFormat::Tsv, &c.kg.taxonomy_predicate)
        .map_err(|e| CliError::validation(kg_path.display(), e))?;
    info!("graph: {}", kg.stats());
    let train_path = cfg.resolve(&c.paths.train);
    let docs = load_dataset(&train_path)?;
    let stats = corpus_stats(&docs).map_err(|e| CliError::validation(train_path.display(), e))?;

    let mut models = Vec::new();
    for (name, dim) in &c.dimension {
        let path = cfg.resolve(&dim.corpus);
        let corpus = read_corpus(&path)?;
        let model = train_dimension_model(name, &corpus, dim.d_sub, c.embedding.window, ctx.seed)
            .map_err(|e| CliError::validation(path.display(), e))?;
        info!("dimension {name}: {} tokens, width {}", model.vocab().len(), model.width());
        models.push(model);
    }
    let seeded = extract_seeded_subkg(
        &kg,
        &stats,
        &c.seeding.target_class,
        c.seeding.hops,
        c.seeding.top_m,
        &models,
    )
    .map_err(|e| CliError::validation("seeding", e))?;
    let ke = knowledge_embedding(&kg, &seeded, &c.allowlist()).map_err(|e| CliError::runtime("knowledge embedding", e))?;
    info!(
        "seeded sub-graph: {} seeds, {} concepts, {} triples, {} embedded; knowledge pairs {}",
        seeded.seeds.len(),
        seeded.concept_count(),
        seeded.subkg.triples.len(),
        seeded.embeddings.len(),
        ke.pair_count
    );

    ctx.ensure_out()?;
    let mut outputs = BTreeMap::new();
    emit(&ctx.out, KG_FILE, kg.to_tsv().as_bytes(), &mut outputs)?;
    for (name, bytes) in seeded_payloads(&kg, &seeded) {
        emit(&ctx.out, name, &bytes, &mut outputs)?;
    }
    for m in &models {
        emit(&ctx.out, &model_vocab_file(m.name()), vocab_tsv(m).as_bytes(), &mut outputs)?;
        emit(&ctx.out, &model_matrix_file(m.name()), &tensor_to_bytes(&m.matrix()), &mut outputs)?;
    }
    let manifest = Manifest { inputs, outputs };
    manifest.write(&ctx.out)?;
    Ok(BuildSummary {
        status: BuildStatus::Built,
        manifest,
    })
}
