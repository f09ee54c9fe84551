use std::fs;
use std::path::{Path, PathBuf};

use kinfuse::embedding::content_width;
use kinfuse::nlm::{forward, read_checkpoint, Checkpoint, Classifier};
use kinfuse::{DimensionModel, LabeledDoc};

use crate::artifacts::{checkpoint_file, combined_hash, file_hash, load_models, sha256_hex, Manifest};
use crate::config::LoadedConfig;
use crate::data::{load_dataset, sequence};
use crate::error::CliError;
use crate::report::{confusion, EvalReport, RunMetadata};

use super::Context;

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| {
        CliError::Validation(format!("{}: {e}; run `kinfuse train` first", path.display()))
    })?;
    read_checkpoint(&mut bytes.as_slice()).map_err(|e| CliError::validation(path.display(), e))
}

/// Most probable class, lowest index on ties.
pub fn predict(model: &Classifier, seq: &[Vec<f64>]) -> Result<usize, CliError> {
    let out = forward(model, seq).map_err(|e| CliError::runtime("forward pass", e))?;
    let mut best = 0;
    for (i, p) in out.probs.iter().enumerate() {
        if *p > out.probs[best] {
            best = i;
        }
    }
    Ok(best)
}

/// `(actual, predicted)` class indices for every document.
pub fn predictions(
    ckpt: &Checkpoint,
    docs: &[LabeledDoc],
    models: &[DimensionModel],
    max_len: usize,
) -> Result<Vec<(usize, usize)>, CliError> {
    let width = content_width(models);
    if ckpt.model.lstm.input_width() != width {
        return Err(CliError::Validation(format!(
            "checkpoint expects input width {}, dimension models give {width}",
            ckpt.model.lstm.input_width()
        )));
    }
    docs.iter()
        .map(|d| {
            let actual = ckpt.labels.iter().position(|l| *l == d.label).ok_or_else(|| {
                CliError::Validation(format!("label {:?} is not one of the checkpoint's {:?}", d.label, ckpt.labels))
            })?;
            Ok((actual, predict(&ckpt.model, &sequence(models, &d.text, max_len))?))
        })
        .collect()
}

pub fn evaluate(
    ckpt: &Checkpoint,
    docs: &[LabeledDoc],
    models: &[DimensionModel],
    max_len: usize,
    target: &str,
    meta: RunMetadata,
) -> Result<EvalReport, CliError> {
    let pairs = predictions(ckpt, docs, models, max_len)?;
    Ok(EvalReport::new(
        ckpt.labels.clone(),
        confusion(ckpt.labels.len(), pairs),
        target,
        meta,
    ))
}

/// Seed, normalized-config hash and combined input hash.
pub fn run_metadata(cfg: &LoadedConfig, out: &Path, mode: &str, seed: u64) -> Result<RunMetadata, CliError> {
    let input_hash = match Manifest::read(out) {
        Some(m) => m.combined_input_hash(),
        None => {
            let mut parts = std::collections::BTreeMap::new();
            for (name, path) in cfg.inputs() {
                parts.insert(name, file_hash(&path)?);
            }
            combined_hash(&parts)
        }
    };
    Ok(RunMetadata {
        mode: mode.to_string(),
        seed,
        config_hash: sha256_hex(cfg.config.to_toml().as_bytes()),
        input_hash,
    })
}

pub fn cmd_eval(ctx: &Context, data: Option<PathBuf>) -> Result<EvalReport, CliError> {
    let c = &ctx.cfg.config;
    let mode = ctx.mode.as_str();
    let ckpt = load_checkpoint(&ctx.out.join(checkpoint_file(mode)))?;
    let models = load_models(&ctx.cfg, &ctx.out)?;
    let data = data.unwrap_or_else(|| ctx.cfg.resolve(&c.paths.test));
    let docs = load_dataset(&data)?;
    let meta = run_metadata(&ctx.cfg, &ctx.out, mode, ctx.seed)?;
    let report = evaluate(&ckpt, &docs, &models, c.model.max_len, &c.seeding.target_class, meta)?;
    kinfuse::io::write_atomic(&ctx.out.join(format!("eval.{mode}.txt")), report.to_text().as_bytes())?;
    kinfuse::io::write_atomic(&ctx.out.join(format!("eval.{mode}.csv")), report.to_csv().as_bytes())?;
    Ok(report)
}
