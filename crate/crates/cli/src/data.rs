//! Labelled documents to classifier examples.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use kinfuse::embedding::{content_width, embed_token};
use kinfuse::nlm::Example;
use kinfuse::seeded::parse_dataset;
use kinfuse::text::tokenize;
use kinfuse::{DimensionModel, LabeledDoc};

use crate::error::CliError;

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledDoc>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::validation(path.display(), e))?;
    let docs = parse_dataset(std::io::BufReader::new(file)).map_err(|e| CliError::validation(path.display(), e))?;
    if docs.is_empty() {
        return Err(CliError::Validation(format!("{}: no documents", path.display())));
    }
    Ok(docs)
}

/// Sorted distinct labels; the class index of a label is its position.
pub fn label_set(docs: &[LabeledDoc]) -> Vec<String> {
    docs.iter().map(|d| d.label.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// The content vectors of the first `max_len` tokens known to any model. A
/// document with none of them becomes a single zero vector.
pub fn sequence(models: &[DimensionModel], text: &str, max_len: usize) -> Vec<Vec<f64>> {
    let mut seq: Vec<Vec<f64>> = tokenize(text)
        .iter()
        .filter(|t| models.iter().any(|m| m.index_of(t).is_some()))
        .take(max_len)
        .map(|t| embed_token(models, t).values)
        .collect();
    if seq.is_empty() {
        seq.push(vec![0.0; content_width(models)]);
    }
    seq
}

pub fn encode(
    docs: &[LabeledDoc],
    models: &[DimensionModel],
    labels: &[String],
    max_len: usize,
) -> Result<Vec<Example>, CliError> {
    docs.iter()
        .map(|d| {
            let label = labels
                .iter()
                .position(|l| *l == d.label)
                .ok_or_else(|| CliError::Validation(format!("label {:?} is not among {labels:?}", d.label)))?;
            Ok(Example {
                sequence: sequence(models, &d.text, max_len),
                label,
            })
        })
        .collect()
}
