use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;

use kinfuse::dke::{differential_subkg, knowledge_proximity, solve_mapping, update_seeded};
use kinfuse::text::tokenize;
use kinfuse::{ConceptId, KnowledgeGraph};
use log::info;

use crate::artifacts::{checkpoint_file, emit, load_artifacts, seeded_payloads, Manifest, AUDIT_LOG};
use crate::data::load_dataset;
use crate::error::CliError;

use super::eval::{load_checkpoint, predictions};
use super::Context;

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSummary {
    pub cycle: usize,
    pub epochs: u32,
    pub misclassified: usize,
    pub new_triples: usize,
    pub new_concepts: usize,
    /// Stationarity residual of the mapping, when one was solved.
    pub residual: Option<f64>,
    /// Why nothing changed, for no-op cycles.
    pub skipped: Option<String>,
}

impl UpdateSummary {
    pub fn audit_line(&self) -> String {
        let residual = self.residual.map_or("-".to_string(), |r| format!("{r:e}"));
        let mut s = format!(
            "cycle {} epochs {} misclassified {} new_triples +{} new_concepts +{} residual {residual}",
            self.cycle, self.epochs, self.misclassified, self.new_triples, self.new_concepts
        );
        if let Some(reason) = &self.skipped {
            s.push_str(&format!(" note {reason}"));
        }
        s
    }
}

/// Concepts whose normalized label occurs as a contiguous token run in `text`.
pub fn linked_concepts(kg: &KnowledgeGraph, text: &str) -> BTreeSet<ConceptId> {
    let tokens = tokenize(text);
    kg.concepts()
        .filter(|&c| {
            let label = tokenize(kg.label(c));
            !label.is_empty() && tokens.windows(label.len()).any(|w| w == label.as_slice())
        })
        .collect()
}

/// One evolution cycle: classify the training set with the checkpoint of the
/// current mode, retrieve the knowledge around every misclassified
/// document, and fold what the seeded sub-graph lacks into it.
pub fn cmd_update_kg(ctx: &Context) -> Result<UpdateSummary, CliError> {
    let c = &ctx.cfg.config;
    let arts = load_artifacts(&ctx.cfg, &ctx.out)?;
    let ckpt = load_checkpoint(&ctx.out.join(checkpoint_file(ctx.mode.as_str())))?;
    let docs = load_dataset(&ctx.cfg.resolve(&c.paths.train))?;
    let pairs = predictions(&ckpt, &docs, &arts.models, c.model.max_len)?;

    let audit_path = ctx.out.join(AUDIT_LOG);
    let cycle = fs::read_to_string(&audit_path).map_or(0, |s| s.lines().count()) + 1;
    let mut summary = UpdateSummary {
        cycle,
        epochs: ckpt.epochs,
        misclassified: 0,
        new_triples: 0,
        new_concepts: 0,
        residual: None,
        skipped: None,
    };

    let wrong: Vec<_> = docs.iter().zip(&pairs).filter(|(_, (a, p))| a != p).map(|(d, _)| d).collect();
    summary.misclassified = wrong.len();
    let concepts: BTreeSet<ConceptId> = wrong.iter().flat_map(|d| linked_concepts(&arts.kg, &d.text)).collect();

    if wrong.is_empty() {
        summary.skipped = Some("no-misclassified-examples".into());
    } else if concepts.is_empty() {
        summary.skipped = Some("no-linked-concepts".into());
    } else {
        let retrieved = knowledge_proximity(&arts.kg, &concepts, c.dke.hops)
            .map_err(|e| CliError::runtime("knowledge proximity", e))?;
        let diff = differential_subkg(&arts.kg, &retrieved, &arts.seeded, &arts.models);
        if diff.is_empty() {
            summary.skipped = Some("nothing-new".into());
        } else {
            let solution = if diff.d_kg.is_empty() || arts.seeded.embeddings.is_empty() {
                None
            } else {
                Some(
                    solve_mapping(
                        &arts.seeded.embeddings.to_tensor(),
                        &diff.d_kg.to_tensor(),
                        c.dke.alpha,
                        c.dke.lambda,
                    )
                    .map_err(|e| CliError::runtime("mapping", e))?,
                )
            };
            let updated = update_seeded(&arts.seeded, &diff, solution.as_ref());
            summary.new_triples = diff.triples.len();
            summary.new_concepts = diff.new_concepts.len();
            summary.residual = solution.map(|s| s.residual);

            let mut manifest = Manifest::read(&ctx.out).unwrap_or_default();
            for (name, bytes) in seeded_payloads(&arts.kg, &updated) {
                emit(&ctx.out, name, &bytes, &mut manifest.outputs)?;
            }
            manifest.write(&ctx.out)?;
        }
    }
    if let Some(reason) = &summary.skipped {
        info!("seeded sub-graph unchanged: {reason}");
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&audit_path)
        .map_err(|e| CliError::runtime(audit_path.display(), e))?;
    writeln!(f, "{}", summary.audit_line())?;
    Ok(summary)
}
