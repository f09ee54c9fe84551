//! Files produced by `build` and read back by the other commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kinfuse::io::{load_tensor, tensor_to_bytes, write_atomic};
use kinfuse::kg::TripleFormat;
use kinfuse::seeded::SeededFiles;
use kinfuse::{DimensionModel, KnowledgeGraph, SeededSubKG};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::CliError;

pub const KG_FILE: &str = "kg.tsv";
pub const SEEDED_TRIPLES: &str = "seeded.triples.tsv";
pub const SEEDED_SCORES: &str = "seeded.scores.tsv";
pub const SEEDED_MATRIX: &str = "seeded.kign";
pub const MANIFEST: &str = "build.manifest";
pub const AUDIT_LOG: &str = "update.audit.log";

pub fn model_vocab_file(name: &str) -> String {
    format!("model.{name}.vocab.tsv")
}

pub fn model_matrix_file(name: &str) -> String {
    format!("model.{name}.kign")
}

pub fn checkpoint_file(mode: &str) -> String {
    format!("model.{mode}.ckpt")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::validation(path.display(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the labelled input hashes, so a change to any input changes it.
pub fn combined_hash(parts: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in parts {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Input and output content hashes of the last build, one
/// `input|output<TAB>name<TAB>sha256` line each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (kind, map) in [("input", &self.inputs), ("output", &self.outputs)] {
            for (k, v) in map {
                s.push_str(&format!("{kind}\t{k}\t{v}\n"));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut m = Self::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let mut f = line.split('\t');
            let (kind, k, v) = (f.next()?, f.next()?, f.next()?);
            match kind {
                "input" => m.inputs.insert(k.into(), v.into()),
                "output" => m.outputs.insert(k.into(), v.into()),
                _ => return None,
            };
        }
        Some(m)
    }

    pub fn read(out: &Path) -> Option<Self> {
        Self::parse(&fs::read_to_string(out.join(MANIFEST)).ok()?)
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        write_atomic(&out.join(MANIFEST), self.to_text().as_bytes())?;
        Ok(())
    }

    /// Every listed output exists with the recorded hash.
    pub fn outputs_intact(&self, out: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(name, hash)| file_hash(&out.join(name)).is_ok_and(|h| &h == hash))
    }

    pub fn combined_input_hash(&self) -> String {
        combined_hash(&self.inputs)
    }
}

/// Writes `bytes` atomically and records its hash under `name`.
pub fn emit(out: &Path, name: &str, bytes: &[u8], hashes: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    write_atomic(&out.join(name), bytes).map_err(|e| CliError::runtime(out.join(name).display(), e))?;
    hashes.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

pub fn vocab_tsv(model: &DimensionModel) -> String {
    let mut s = String::from("token\tindex\n");
    for (i, t) in model.vocab().iter().enumerate() {
        s.push_str(&format!("{t}\t{i}\n"));
    }
    s
}

fn parse_vocab(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::validation(path.display(), e))?;
    let mut vocab = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (tok, idx) = line
            .split_once('\t')
            .ok_or_else(|| CliError::Validation(format!("{}:{}: expected token<TAB>index", path.display(), i + 1)))?;
        if idx.parse::<usize>().ok() != Some(vocab.len()) {
            return Err(CliError::Validation(format!("{}:{}: indices must be dense", path.display(), i + 1)));
        }
        vocab.push(tok.to_string());
    }
    Ok(vocab)
}

/// Seeded sub-graph files as (name, bytes), in write order.
pub fn seeded_payloads(kg: &KnowledgeGraph, seeded: &SeededSubKG) -> Vec<(&'static str, Vec<u8>)> {
    let files = seeded.to_files(kg);
    vec![
        (SEEDED_TRIPLES, files.triples_tsv.into_bytes()),
        (SEEDED_SCORES, files.scores_tsv.into_bytes()),
        (SEEDED_MATRIX, tensor_to_bytes(&files.matrix)),
    ]
}

pub struct Artifacts {
    pub kg: KnowledgeGraph,
    pub seeded: SeededSubKG,
    /// In configuration (name) order.
    pub models: Vec<DimensionModel>,
}

fn require(out: &Path, name: &str) -> Result<PathBuf, CliError> {
    let p = out.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Validation(format!(
            "{} is missing; run `kinfuse build` first",
            p.display()
        )))
    }
}

pub fn load_models(cfg: &LoadedConfig, out: &Path) -> Result<Vec<DimensionModel>, CliError> {
    cfg.config
        .dimension
        .keys()
        .map(|name| {
            let vocab = parse_vocab(&require(out, &model_vocab_file(name))?)?;
            let matrix_path = require(out, &model_matrix_file(name))?;
            let m = load_tensor(&matrix_path).map_err(|e| CliError::validation(matrix_path.display(), e))?;
            DimensionModel::from_parts(name, vocab, &m).map_err(|e| CliError::validation(matrix_path.display(), e))
        })
        .collect()
}

pub fn load_artifacts(cfg: &LoadedConfig, out: &Path) -> Result<Artifacts, CliError> {
    let kg_path = require(out, KG_FILE)?;
    let kg = KnowledgeGraph::load(&kg_path, TripleFormat::Tsv, &cfg.config.kg.taxonomy_predicate)
        .map_err(|e| CliError::validation(kg_path.display(), e))?;
    let read = |name: &str| -> Result<String, CliError> {
        let p = require(out, name)?;
        fs::read_to_string(&p).map_err(|e| CliError::validation(p.display(), e))
    };
    let matrix_path = require(out, SEEDED_MATRIX)?;
    let files = SeededFiles {
        triples_tsv: read(SEEDED_TRIPLES)?,
        scores_tsv: read(SEEDED_SCORES)?,
        matrix: load_tensor(&matrix_path).map_err(|e| CliError::validation(matrix_path.display(), e))?,
    };
    let seeded = SeededSubKG::from_files(&kg, &files).map_err(|e| CliError::validation("seeded sub-graph", e))?;
    let models = load_models(cfg, out)?;
    Ok(Artifacts { kg, seeded, models })
}
