use std::fmt::Write as _;

use kinfuse::embedding::knowledge_embedding;
use kinfuse::infusion::InfusionExit;
use kinfuse::nlm::{train, write_checkpoint, Checkpoint, TrainMode, TrainOutcome};
use kinfuse::LabeledDoc;

use crate::artifacts::{checkpoint_file, load_artifacts, Artifacts};
use crate::config::{Mode, PipelineConfig};
use crate::data::{encode, label_set, load_dataset};
use crate::error::CliError;

use super::Context;

/// `K_e` of the seeded sub-graph; refuses a zero vector.
pub fn knowledge_vector(config: &PipelineConfig, arts: &Artifacts) -> Result<Vec<f64>, CliError> {
    let ke = knowledge_embedding(&arts.kg, &arts.seeded, &config.allowlist())
        .map_err(|e| CliError::runtime("knowledge embedding", e))?;
    if ke.is_zero() {
        return Err(CliError::Validation(
            "the seeded sub-graph has no concept pair with embeddings on both ends, so the knowledge embedding is \
             zero; widen seeding (top_m, hops), relax kg.predicates, or add the concept labels to a dimension \
             corpus, then rebuild"
                .into(),
        ));
    }
    Ok(ke.values)
}

/// Trains one model on `docs`. Returns the outcome and the class labels.
pub fn train_model(
    config: &PipelineConfig,
    arts: &Artifacts,
    docs: &[LabeledDoc],
    mode: Mode,
    seed: u64,
) -> Result<(TrainOutcome, Vec<String>), CliError> {
    let labels = label_set(docs);
    let examples = encode(docs, &arts.models, &labels, config.model.max_len)?;
    let train_mode = match mode {
        Mode::Vanilla => TrainMode::Vanilla,
        Mode::Infused => {
            let k_e = knowledge_vector(config, arts)?;
            let infusion = config.infusion_params(k_e.len());
            TrainMode::Infused { k_e, infusion }
        }
    };
    let outcome = train(
        &examples,
        config.model.layers,
        labels.len(),
        &config.train_config(seed),
        train_mode,
    )
    .map_err(|e| CliError::runtime("training", e))?;
    Ok((outcome, labels))
}

pub fn training_log(outcome: &TrainOutcome, mode: Mode, seed: u64) -> String {
    let mut s = format!("mode {}\nseed {seed}\n", mode.as_str());
    for e in &outcome.epochs {
        let _ = write!(s, "epoch {} mean_loss {:?}", e.epoch, e.mean_loss);
        if let Some(inf) = &e.infusion {
            let last = inf.trace.last().map_or(f64::NAN, |t| t.d_cur);
            let exit = match inf.exit {
                InfusionExit::Epsilon => "epsilon",
                InfusionExit::IterationBound => "iteration-bound",
            };
            let _ = write!(
                s,
                " inner_iterations {} final_divergence {last:?} exit {exit}",
                inf.inner_iterations
            );
        }
        s.push('\n');
    }
    s
}

/// `epoch,iteration,d_prev,d_cur,step` for every inner update of every epoch.
pub fn divergence_csv(outcome: &TrainOutcome) -> String {
    let mut s = String::from("epoch,iteration,d_prev,d_cur,step\n");
    for e in &outcome.epochs {
        if let Some(inf) = &e.infusion {
            for (i, t) in inf.trace.iter().enumerate() {
                let _ = writeln!(s, "{},{},{:?},{:?},{:?}", e.epoch, i + 1, t.d_prev, t.d_cur, t.step);
            }
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    pub labels: Vec<String>,
    pub checkpoint: std::path::PathBuf,
}

pub fn cmd_train(ctx: &Context) -> Result<TrainSummary, CliError> {
    let c = &ctx.cfg.config;
    let arts = load_artifacts(&ctx.cfg, &ctx.out)?;
    let docs = load_dataset(&ctx.cfg.resolve(&c.paths.train))?;
    let (outcome, labels) = train_model(c, &arts, &docs, ctx.mode, ctx.seed)?;

    let ckpt = Checkpoint {
        model: outcome.model.clone(),
        labels: labels.clone(),
        epochs: outcome.epochs.len() as u32,
    };
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &ckpt)?;
    let mode = ctx.mode.as_str();
    let path = ctx.out.join(checkpoint_file(mode));
    kinfuse::io::write_atomic(&path, &bytes)?;
    kinfuse::io::write_atomic(
        &ctx.out.join(format!("train.{mode}.log")),
        training_log(&outcome, ctx.mode, ctx.seed).as_bytes(),
    )?;
    if ctx.mode == Mode::Infused {
        kinfuse::io::write_atomic(
            &ctx.out.join(format!("divergence.{mode}.csv")),
            divergence_csv(&outcome).as_bytes(),
        )?;
    }
    Ok(TrainSummary {
        outcome,
        labels,
        checkpoint: path,
    })
}
