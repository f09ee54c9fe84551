use rand::seq::SliceRandom;

use crate::infusion::{knowledge_infusion, InfusionExit, InfusionParams, TraceEntry};
use crate::rng::SeedStream;

use super::lstm::{backward, forward, forward_traced, Classifier, KnowledgeGate, LstmParams};
use super::NlmError;

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// One content vector per token.
    pub sequence: Vec<Vec<f64>>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Minibatch updates per epoch.
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NlmError> {
        if self.epochs == 0 || self.iters == 0 || self.batch_size == 0 {
            return Err(NlmError::Config("epochs, iters and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.clip_norm > 0.0) {
            return Err(NlmError::Config("lr and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

fn check_label(model: &Classifier, ex: &Example) -> Result<(), NlmError> {
    let classes = model.lstm.classes();
    if ex.label >= classes {
        return Err(NlmError::Label {
            label: ex.label,
            classes,
        });
    }
    Ok(())
}

/// Mean cross-entropy over `batch`.
pub fn batch_loss(model: &Classifier, batch: &[Example]) -> Result<f64, NlmError> {
    if batch.is_empty() {
        return Err(NlmError::EmptyBatch);
    }
    let mut total = 0.0;
    for ex in batch {
        check_label(model, ex)?;
        let out = forward(model, &ex.sequence)?;
        total -= out.probs[ex.label].ln();
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy and its gradient over `batch`.
pub fn batch_gradient(model: &Classifier, batch: &[Example]) -> Result<(f64, LstmParams), NlmError> {
    if batch.is_empty() {
        return Err(NlmError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = model.lstm.zeros_like();
    let mut total = 0.0;
    for ex in batch {
        check_label(model, ex)?;
        let (_, trace) = forward_traced(model, &ex.sequence)?;
        total += backward(model, &trace, ex.label, &mut grads, scale);
    }
    Ok((total * scale, grads))
}

/// One SGD update on the LSTM and head weights with global-norm clipping.
/// Returns the batch loss before the update.
pub fn train_step(model: &mut Classifier, batch: &[Example], lr: f64, clip_norm: f64) -> Result<f64, NlmError> {
    let (loss, grads) = batch_gradient(model, batch)?;
    if !loss.is_finite() {
        return Err(NlmError::NonFinite(format!("loss ({loss})")));
    }
    let norm = grads.sum_squares().sqrt();
    if !norm.is_finite() {
        return Err(NlmError::NonFinite("gradient".into()));
    }
    let scale = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    let step = lr * scale;
    for ((_, p), (_, g)) in model.lstm.groups_mut().into_iter().zip(grads.groups()) {
        for (w, gv) in p.iter_mut().zip(g) {
            *w -= step * gv;
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSummary {
    /// Mean last-layer output at the final time step.
    pub h_t: Vec<f64>,
    /// Mean penultimate-layer output at the final time step.
    pub h_prev: Vec<f64>,
}

pub fn epoch_hidden_summary(model: &Classifier, dataset: &[Example]) -> Result<HiddenSummary, NlmError> {
    if dataset.is_empty() {
        return Err(NlmError::EmptyBatch);
    }
    let d = model.lstm.hidden();
    let mut h_t = vec![0.0; d];
    let mut h_prev = vec![0.0; d];
    for ex in dataset {
        let out = forward(model, &ex.sequence)?;
        for (a, v) in h_t.iter_mut().zip(out.hidden.last()) {
            *a += v;
        }
        for (a, v) in h_prev.iter_mut().zip(out.hidden.penultimate()) {
            *a += v;
        }
    }
    let n = dataset.len() as f64;
    h_t.iter_mut().for_each(|v| *v /= n);
    h_prev.iter_mut().for_each(|v| *v /= n);
    Ok(HiddenSummary { h_t, h_prev })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainMode {
    Vanilla,
    /// Knowledge infusion after every epoch. `infusion` supplies the initial
    /// gate weights and the inner-loop hyperparameters.
    Infused { k_e: Vec<f64>, infusion: InfusionParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfusionLog {
    pub inner_iterations: usize,
    pub exit: InfusionExit,
    pub trace: Vec<TraceEntry>,
    /// `M_T` of the epoch's mean hidden vector.
    pub m_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub mean_loss: f64,
    pub infusion: Option<InfusionLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Classifier,
    pub epochs: Vec<EpochLog>,
}

/// Outer training loop.
///
/// Each epoch makes `iters` minibatch SGD updates (batches drawn from a
/// seeded shuffle, reshuffled whenever it is exhausted). In infused mode the
/// gate sits frozen between the LSTM and the head during those updates; after
/// them the dataset-mean `h_T` and `h_{T-1}` drive [`knowledge_infusion`],
/// which moves only the gate weights.
pub fn train(
    examples: &[Example],
    layers: usize,
    classes: usize,
    config: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainOutcome, NlmError> {
    config.validate()?;
    let first = examples.first().ok_or(NlmError::EmptyBatch)?;
    let input_width = first.sequence.first().ok_or(NlmError::EmptySequence)?.len();
    let streams = SeedStream::new(config.seed);
    // hidden width equals the content width so that h_T and K_e share a space
    let hidden = input_width;
    if let TrainMode::Infused { k_e, .. } = &mode {
        if k_e.len() != hidden {
            return Err(NlmError::Width {
                expected: hidden,
                actual: k_e.len(),
            });
        }
    }
    let lstm = LstmParams::init(input_width, hidden, layers, classes, &mut streams.rng("nlm.init"))?;
    let gate = match mode {
        TrainMode::Vanilla => None,
        TrainMode::Infused { k_e, infusion } => {
            infusion.validate()?;
            if infusion.width() != k_e.len() {
                return Err(NlmError::Width {
                    expected: k_e.len(),
                    actual: infusion.width(),
                });
            }
            Some(KnowledgeGate { params: infusion, k_e })
        }
    };
    let mut model = Classifier { lstm, gate };

    let mut batch_rng = streams.rng("nlm.batches");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut batch_rng);
    let mut cursor = 0;
    let mut logs = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..config.iters {
            batch.clear();
            while batch.len() < config.batch_size.min(examples.len()) {
                if cursor == order.len() {
                    order.shuffle(&mut batch_rng);
                    cursor = 0;
                }
                batch.push(examples[order[cursor]].clone());
                cursor += 1;
            }
            loss_sum += train_step(&mut model, &batch, config.lr, config.clip_norm)?;
        }
        let infusion = match model.gate.take() {
            None => None,
            Some(mut gate) => {
                let summary = epoch_hidden_summary(&model, examples)?;
                let r = knowledge_infusion(&summary.h_t, &summary.h_prev, &gate.k_e, &mut gate.params)?;
                model.gate = Some(gate);
                Some(InfusionLog {
                    inner_iterations: r.inner_iterations,
                    exit: r.exit,
                    trace: r.trace,
                    m_t: r.m_t,
                })
            }
        };
        logs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / config.iters as f64,
            infusion,
        });
    }
    Ok(TrainOutcome { model, epochs: logs })
}
