//! The knowledge infusion layer.
//!
//! Hidden vectors and the knowledge embedding are mapped onto the simplex by
//! softmax before any divergence is taken. The fusion gate is
//! `g = σ(W_hk · (h_T ⊕ K_e) + b_hk)` with `W_hk` of shape `d × 2d`; the
//! knowledge-aware loss is `D_KL(softmax(g) ‖ softmax(K_e))`, and the
//! modulated representation handed to the classifier head is `M_T = h_T ⊙ g`.

use rand::Rng;
use thiserror::Error;

use crate::tensor::{self, log_softmax, sigmoid, Tensor};

#[derive(Debug, Error)]
pub enum InfusionError {
    #[error("width mismatch: expected {expected}, got {actual}")]
    Width { expected: usize, actual: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("knowledge embedding is zero; the seeded sub-graph produced no resolvable concept pair")]
    ZeroKnowledge,
    #[error("invalid infusion parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite value after {} inner iterations", trace.len())]
    Diverged { trace: Vec<TraceEntry> },
}

fn check_width(expected: usize, v: &[f64]) -> Result<(), InfusionError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(InfusionError::Width {
            expected,
            actual: v.len(),
        })
    }
}

fn check_finite(v: &[f64]) -> Result<(), InfusionError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(InfusionError::NonFinite)
    }
}

/// `D_KL(softmax(p_raw) ‖ softmax(q_raw))` in nats.
pub fn kl_divergence(p_raw: &[f64], q_raw: &[f64]) -> Result<f64, InfusionError> {
    check_width(p_raw.len(), q_raw)?;
    check_finite(p_raw)?;
    check_finite(q_raw)?;
    Ok(kl_unchecked(p_raw, q_raw))
}

fn kl_unchecked(p_raw: &[f64], q_raw: &[f64]) -> f64 {
    let lp = log_softmax(p_raw);
    let lq = log_softmax(q_raw);
    let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    // rounding can leave a tiny negative residue when the inputs nearly coincide
    kl.max(0.0)
}

/// Which vector line 10 of the infusion routine modulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModulationInput {
    /// `M_T = h_T ⊙ g`, with the hidden vector as produced by the network.
    #[default]
    Original,
    /// `M_T = g ⊙ g`: the fused vector overwrites `h_T` before modulation.
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfusionParams {
    /// `d × 2d` fusion weights.
    pub w_hk: Tensor,
    pub b_hk: Vec<f64>,
    pub eta_k: f64,
    pub epsilon: f64,
    pub max_inner_iters: usize,
    pub modulation: ModulationInput,
}

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_MAX_INNER_ITERS: usize = 50;
pub const DEFAULT_ETA_K: f64 = 0.5;
/// Maximum number of step halvings tried before an inner step is rejected.
pub const MAX_HALVINGS: usize = 20;

impl InfusionParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_hk: Tensor::zeros(&[d, 2 * d]),
            b_hk: vec![0.0; d],
            eta_k: DEFAULT_ETA_K,
            epsilon: DEFAULT_EPSILON,
            max_inner_iters: DEFAULT_MAX_INNER_ITERS,
            modulation: ModulationInput::Original,
        }
    }

    /// Weights uniform in `±1/sqrt(2d)`, zero bias.
    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(d);
        let bound = 1.0 / ((2 * d) as f64).sqrt();
        p.w_hk
            .data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..bound));
        p
    }

    pub fn width(&self) -> usize {
        self.b_hk.len()
    }

    pub fn validate(&self) -> Result<(), InfusionError> {
        let d = self.b_hk.len();
        if self.w_hk.shape() != [d, 2 * d] {
            return Err(InfusionError::InvalidParams(format!(
                "W_hk has shape {:?}, expected [{d}, {}]",
                self.w_hk.shape(),
                2 * d
            )));
        }
        if !(self.eta_k > 0.0 && self.epsilon > 0.0 && self.max_inner_iters >= 1) {
            return Err(InfusionError::InvalidParams(
                "eta_k and epsilon must be positive and max_inner_iters at least 1".into(),
            ));
        }
        if !self.w_hk.is_finite() || self.b_hk.iter().any(|b| !b.is_finite()) {
            return Err(InfusionError::InvalidParams("non-finite weights".into()));
        }
        Ok(())
    }

    /// Pre-activation `W_hk · (h ⊕ k) + b_hk`.
    pub fn preactivation(&self, h: &[f64], k: &[f64]) -> Vec<f64> {
        let d = self.width();
        (0..d)
            .map(|i| {
                let row = self.w_hk.row(i);
                tensor::dot(&row[..d], h) + tensor::dot(&row[d..], k) + self.b_hk[i]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlfLoss {
    pub loss: f64,
    /// `D_KL(h_T ‖ K_e) < D_KL(h_prev ‖ K_e)`, strictly.
    pub constraint_ok: bool,
}

fn check_knowledge(k_e: &[f64]) -> Result<(), InfusionError> {
    check_finite(k_e)?;
    if k_e.iter().all(|&v| v == 0.0) {
        return Err(InfusionError::ZeroKnowledge);
    }
    Ok(())
}

pub fn klf_loss(h_t: &[f64], h_prev: &[f64], k_e: &[f64]) -> Result<KlfLoss, InfusionError> {
    check_width(k_e.len(), h_t)?;
    check_width(k_e.len(), h_prev)?;
    check_knowledge(k_e)?;
    let loss = kl_divergence(h_t, k_e)?;
    let prev = kl_divergence(h_prev, k_e)?;
    Ok(KlfLoss {
        loss,
        constraint_ok: loss < prev,
    })
}

/// `σ(W_hk · (h_T ⊕ K_e) + b_hk)`.
pub fn fuse_step(h_t: &[f64], k_e: &[f64], params: &InfusionParams) -> Result<Vec<f64>, InfusionError> {
    let d = params.width();
    check_width(d, h_t)?;
    check_width(d, k_e)?;
    Ok(params.preactivation(h_t, k_e).into_iter().map(sigmoid).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlfGradient {
    pub loss: f64,
    pub w_hk: Tensor,
    pub b_hk: Vec<f64>,
}

impl KlfGradient {
    pub fn norm(&self) -> f64 {
        (self.w_hk.sum_squares() + self.b_hk.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Exact gradient of `D_KL(softmax(fuse_step(h_T, K_e)) ‖ softmax(K_e))`
/// with respect to `W_hk` and `b_hk`.
pub fn klf_gradient(h_t: &[f64], k_e: &[f64], params: &InfusionParams) -> Result<KlfGradient, InfusionError> {
    let z = fuse_step(h_t, k_e, params)?;
    let lp = log_softmax(&z);
    let lq = log_softmax(k_e);
    let loss: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    // ∂L/∂z_j = p_j (ln p_j − ln q_j − L), then through the logistic
    let delta: Vec<f64> = (0..z.len())
        .map(|j| {
            let dz = lp[j].exp() * (lp[j] - lq[j] - loss);
            dz * z[j] * (1.0 - z[j])
        })
        .collect();
    let x: Vec<f64> = h_t.iter().chain(k_e).copied().collect();
    let mut w = Tensor::zeros(params.w_hk.shape());
    w.add_outer(&delta, &x, 1.0);
    Ok(KlfGradient {
        loss: loss.max(0.0),
        w_hk: w,
        b_hk: delta,
    })
}

pub fn modulate(h_t: &[f64], gate: &[f64]) -> Result<Vec<f64>, InfusionError> {
    check_width(h_t.len(), gate)?;
    Ok(h_t.iter().zip(gate).map(|(h, g)| h * g).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// `D_KL(h_{T-1} ‖ K_e)`
    pub d_prev: f64,
    /// `D_KL(fused h_T ‖ K_e)` after the step
    pub d_cur: f64,
    /// Step size actually applied (0 when every halving was rejected).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfusionExit {
    /// The divergence gap fell to `ε` or below.
    Epsilon,
    /// `max_inner_iters` updates were applied.
    IterationBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfusionResult {
    pub m_t: Vec<f64>,
    pub gate: Vec<f64>,
    pub inner_iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub exit: InfusionExit,
    /// `D_KL(fuse_step(h_T, K_e) ‖ K_e)` under the weights on entry.
    pub initial_fused_divergence: f64,
}

/// Runs the inner fusion/update loop.
///
/// While `D_KL(h_prev ‖ K_e) − D_KL(h_T ‖ K_e) > ε` (with `h_T` replaced by
/// the fused vector after the first update) and fewer than
/// `max_inner_iters` updates have been made, take one gradient step on
/// `(W_hk, b_hk)`. A step that would raise the loss is halved, up to
/// [`MAX_HALVINGS`] times, and dropped if it still does. The fused input is
/// always the original `h_T`; only the weights move. On exit the original
/// `h_T` is modulated by the final gate.
pub fn knowledge_infusion(
    h_t: &[f64],
    h_prev: &[f64],
    k_e: &[f64],
    params: &mut InfusionParams,
) -> Result<InfusionResult, InfusionError> {
    params.validate()?;
    let d = params.width();
    check_width(d, h_t)?;
    check_width(d, h_prev)?;
    check_width(d, k_e)?;
    check_finite(h_t)?;
    check_finite(h_prev)?;
    check_knowledge(k_e)?;

    let d_prev = kl_unchecked(h_prev, k_e);
    let mut d_cur = kl_unchecked(h_t, k_e);
    let initial_fused_divergence = kl_unchecked(&fuse_step(h_t, k_e, params)?, k_e);
    let mut trace = Vec::new();

    while d_prev - d_cur > params.epsilon && trace.len() < params.max_inner_iters {
        let grad = klf_gradient(h_t, k_e, params)?;
        let mut eta = params.eta_k;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = params.clone();
            for (w, g) in trial.w_hk.data_mut().iter_mut().zip(grad.w_hk.data()) {
                *w -= eta * g;
            }
            for (b, g) in trial.b_hk.iter_mut().zip(&grad.b_hk) {
                *b -= eta * g;
            }
            let loss = kl_unchecked(&fuse_step(h_t, k_e, &trial)?, k_e);
            if !loss.is_finite() {
                return Err(InfusionError::Diverged { trace });
            }
            if loss <= grad.loss {
                accepted = Some((trial, loss));
                break;
            }
            eta *= 0.5;
        }
        let step = match accepted {
            Some((trial, loss)) => {
                *params = trial;
                d_cur = loss;
                eta
            }
            None => {
                d_cur = grad.loss;
                0.0
            }
        };
        trace.push(TraceEntry { d_prev, d_cur, step });
    }

    let exit = if trace.len() == params.max_inner_iters && d_prev - d_cur > params.epsilon {
        InfusionExit::IterationBound
    } else {
        InfusionExit::Epsilon
    };
    let gate = fuse_step(h_t, k_e, params)?;
    let base = match params.modulation {
        ModulationInput::Original => h_t,
        ModulationInput::Fused => &gate,
    };
    let m_t = modulate(base, &gate)?;
    if m_t.iter().any(|v| !v.is_finite()) {
        return Err(InfusionError::Diverged { trace });
    }
    Ok(InfusionResult {
        m_t,
        gate,
        inner_iterations: trace.len(),
        trace,
        exit,
        initial_fused_divergence,
    })
}

/// `iteration,d_prev,d_cur,step` rows, one per inner update.
pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("iteration,d_prev,d_cur,step\n");
    for (i, t) in trace.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i + 1, t.d_prev, t.d_cur, t.step));
    }
    out
}
