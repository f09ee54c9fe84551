//! Pipeline configuration.
//!
//! A TOML file with one table per concern. Relative paths are resolved
//! against the directory holding the file. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kinfuse::dke::{DEFAULT_ALPHA, DEFAULT_LAMBDA, DEFAULT_PROXIMITY_HOPS};
use kinfuse::embedding::PredicateAllowlist;
use kinfuse::infusion::{
    InfusionParams, ModulationInput, DEFAULT_EPSILON, DEFAULT_ETA_K, DEFAULT_MAX_INNER_ITERS,
};
use kinfuse::kg::DEFAULT_TAXONOMY_PREDICATE;
use kinfuse::nlm::{TrainConfig, DEFAULT_CLIP_NORM};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Vanilla,
    Infused,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Infused => "infused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    /// Dimension models, applied in name order.
    pub dimension: BTreeMap<String, Dimension>,
    #[serde(default)]
    pub kg: KgSection,
    pub seeding: Seeding,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub infusion: InfusionSection,
    #[serde(default)]
    pub dke: DkeSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub kg: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub corpus: PathBuf,
    pub d_sub: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KgSection {
    pub taxonomy_predicate: String,
    /// Predicates contributing to the knowledge embedding; empty means all.
    pub predicates: Vec<String>,
}

impl Default for KgSection {
    fn default() -> Self {
        Self {
            taxonomy_predicate: DEFAULT_TAXONOMY_PREDICATE.into(),
            predicates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeding {
    pub target_class: String,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    #[serde(default = "default_seed_hops")]
    pub hops: u32,
}

fn default_top_m() -> usize {
    3
}

fn default_seed_hops() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub window: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self { window: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub layers: usize,
    /// Tokens kept per document.
    pub max_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { layers: 2, max_len: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 5,
            iters: 20,
            batch_size: 16,
            lr: 0.5,
            clip: DEFAULT_CLIP_NORM,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfusionSection {
    pub epsilon: f64,
    pub eta_k: f64,
    pub max_inner_iters: usize,
    /// Modulate the original hidden vector (false) or the fused one (true).
    pub modulate_fused: bool,
}

impl Default for InfusionSection {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            eta_k: DEFAULT_ETA_K,
            max_inner_iters: DEFAULT_MAX_INNER_ITERS,
            modulate_fused: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DkeSection {
    pub alpha: f64,
    pub lambda: f64,
    pub hops: u32,
}

impl Default for DkeSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
            hops: DEFAULT_PROXIMITY_HOPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// Seeds `train.seed .. train.seed + runs` are compared.
    pub runs: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { runs: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Mode,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        Ok(cfg.normalized())
    }

    /// Canonical form: predicate names normalized, sorted and deduplicated.
    pub fn normalized(mut self) -> Self {
        let mut preds: Vec<String> = self
            .kg
            .predicates
            .iter()
            .map(|p| kinfuse::text::normalize_label(p))
            .collect();
        preds.sort();
        preds.dedup();
        self.kg.predicates = preds;
        self.kg.taxonomy_predicate = kinfuse::text::normalize_label(&self.kg.taxonomy_predicate);
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Range checks that need no file access.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Validation(format!("config: {m}")));
        if self.dimension.is_empty() {
            return bad("at least one [dimension.NAME] table is required");
        }
        if self.dimension.values().any(|d| d.d_sub == 0) {
            return bad("d_sub must be at least 1");
        }
        if self.seeding.top_m == 0 {
            return bad("seeding.top_m must be at least 1");
        }
        if self.seeding.target_class.trim().is_empty() {
            return bad("seeding.target_class is empty");
        }
        if self.embedding.window == 0 {
            return bad("embedding.window must be at least 1");
        }
        if self.model.layers < 2 {
            return bad("model.layers must be at least 2");
        }
        if self.model.max_len == 0 {
            return bad("model.max_len must be at least 1");
        }
        self.train_config(self.train.seed)
            .validate()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        self.infusion_params(1)
            .validate()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if !(self.dke.alpha > 0.0 && self.dke.lambda >= 0.0) {
            return bad("dke.alpha must be positive and dke.lambda non-negative");
        }
        if self.dke.hops == 0 {
            return bad("dke.hops must be at least 1");
        }
        if self.kg.taxonomy_predicate.is_empty() {
            return bad("kg.taxonomy_predicate is empty");
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            iters: self.train.iters,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            clip_norm: self.train.clip,
            seed,
        }
    }

    /// Initial gate parameters: zero weights, so every gate starts at 0.5.
    pub fn infusion_params(&self, d: usize) -> InfusionParams {
        InfusionParams {
            eta_k: self.infusion.eta_k,
            epsilon: self.infusion.epsilon,
            max_inner_iters: self.infusion.max_inner_iters,
            modulation: if self.infusion.modulate_fused {
                ModulationInput::Fused
            } else {
                ModulationInput::Original
            },
            ..InfusionParams::zeros(d)
        }
    }

    pub fn allowlist(&self) -> PredicateAllowlist {
        if self.kg.predicates.is_empty() {
            PredicateAllowlist::All
        } else {
            PredicateAllowlist::Only(self.kg.predicates.iter().cloned().collect())
        }
    }
}

/// A parsed configuration together with the directory its paths are
/// relative to and the raw bytes it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base: PathBuf,
    pub raw: Vec<u8>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw)
            .map_err(|_| CliError::Validation(format!("{}: not UTF-8", path.display())))?;
        let config = PipelineConfig::parse(text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base, raw })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Every input file, labelled, in a fixed order.
    pub fn inputs(&self) -> Vec<(String, PathBuf)> {
        let c = &self.config;
        let mut v = vec![
            ("kg".to_string(), self.resolve(&c.paths.kg)),
            ("train".to_string(), self.resolve(&c.paths.train)),
            ("test".to_string(), self.resolve(&c.paths.test)),
        ];
        for (name, d) in &c.dimension {
            v.push((format!("corpus.{name}"), self.resolve(&d.corpus)));
        }
        v
    }

    /// Fails with a validation error naming the first missing input.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for (name, path) in self.inputs() {
            if !path.is_file() {
                return Err(CliError::Validation(format!("{name} file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}
