use rand::Rng;

use crate::infusion::{InfusionParams, ModulationInput};
use crate::tensor::{log_softmax, sigmoid, Tensor};

use super::NlmError;

/// One stacked LSTM layer. Rows of `w` are grouped in blocks of `d` as
/// input, forget, output and modulation (candidate) gates; columns are the
/// layer input followed by the previous hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w: Tensor,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub layers: Vec<LstmLayer>,
    /// `classes × d` softmax weights.
    pub head_w: Tensor,
    pub head_b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_width: usize, hidden: usize, layers: usize, classes: usize) -> Result<Self, NlmError> {
        if layers < 2 {
            return Err(NlmError::Config(format!("need at least 2 layers, got {layers}")));
        }
        if input_width == 0 || hidden == 0 || classes == 0 {
            return Err(NlmError::Config("widths and class count must be positive".into()));
        }
        let layers = (0..layers)
            .map(|l| {
                let fan_in = if l == 0 { input_width } else { hidden };
                LstmLayer {
                    w: Tensor::zeros(&[4 * hidden, fan_in + hidden]),
                    b: vec![0.0; 4 * hidden],
                }
            })
            .collect();
        Ok(Self {
            layers,
            head_w: Tensor::zeros(&[classes, hidden]),
            head_b: vec![0.0; classes],
        })
    }

    /// Weights uniform in `±1/sqrt(d)`, forget-gate bias 1, other biases 0.
    pub fn init(
        input_width: usize,
        hidden: usize,
        layers: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, NlmError> {
        let mut p = Self::zeros(input_width, hidden, layers, classes)?;
        let bound = 1.0 / (hidden as f64).sqrt();
        for layer in &mut p.layers {
            layer.w.data_mut().iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
            layer.b[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        }
        p.head_w.data_mut().iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.head_w.cols()
    }

    pub fn classes(&self) -> usize {
        self.head_w.rows()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w.cols() - self.hidden()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w: Tensor::zeros(l.w.shape()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
            head_w: Tensor::zeros(self.head_w.shape()),
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Named parameter groups in a fixed order.
    pub fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{}.w", l + 1), layer.w.data()));
            out.push((format!("layer{}.b", l + 1), &layer.b));
        }
        out.push(("head.w".into(), self.head_w.data()));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{}.w", l + 1), layer.w.data_mut()));
            out.push((format!("layer{}.b", l + 1), &mut layer.b));
        }
        out.push(("head.w".into(), self.head_w.data_mut()));
        out.push(("head.b".into(), &mut self.head_b));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.groups().iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }

    /// Sum of squares over all groups.
    pub fn sum_squares(&self) -> f64 {
        self.groups().iter().flat_map(|(_, g)| g.iter()).map(|v| v * v).sum()
    }
}

/// Frozen infusion gate between the last LSTM layer and the softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGate {
    pub params: InfusionParams,
    pub k_e: Vec<f64>,
}

/// LSTM stack plus an optional knowledge gate. Without a gate the head reads
/// `h_T` directly; with one it reads the modulated `M_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub lstm: LstmParams,
    pub gate: Option<KnowledgeGate>,
}

impl Classifier {
    pub fn vanilla(lstm: LstmParams) -> Self {
        Self { lstm, gate: None }
    }
}

/// Last-time-step state of every layer, bottom layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl HiddenStates {
    /// Output of the last layer (`h_T`).
    pub fn last(&self) -> &[f64] {
        self.h.last().expect("at least two layers")
    }

    /// Output of the penultimate layer (`h_{T-1}`).
    pub fn penultimate(&self) -> &[f64] {
        &self.h[self.h.len() - 2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub hidden: HiddenStates,
    /// Vector fed to the head: `h_T`, or `M_T` when a gate is present.
    pub head_input: Vec<f64>,
    pub probs: Vec<f64>,
}

struct StepCache {
    /// `[x_t; h_{t-1}]`
    input: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates `i, f, o, g`, each of width d, concatenated.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct GateCache {
    gate: Vec<f64>,
}

pub(crate) struct Trace {
    layers: Vec<Vec<StepCache>>,
    top_h: Vec<f64>,
    gate: Option<GateCache>,
    head_input: Vec<f64>,
    log_probs: Vec<f64>,
}

fn check_sequence(lstm: &LstmParams, sequence: &[Vec<f64>]) -> Result<(), NlmError> {
    if sequence.is_empty() {
        return Err(NlmError::EmptySequence);
    }
    let width = lstm.input_width();
    if let Some(bad) = sequence.iter().find(|x| x.len() != width) {
        return Err(NlmError::Width {
            expected: width,
            actual: bad.len(),
        });
    }
    Ok(())
}

pub(crate) fn forward_traced(model: &Classifier, sequence: &[Vec<f64>]) -> Result<(ForwardOutput, Trace), NlmError> {
    let lstm = &model.lstm;
    check_sequence(lstm, sequence)?;
    if let Some(g) = &model.gate {
        if g.params.width() != lstm.hidden() || g.k_e.len() != lstm.hidden() {
            return Err(NlmError::Width {
                expected: lstm.hidden(),
                actual: g.k_e.len(),
            });
        }
    }
    let d = lstm.hidden();
    let mut inputs: Vec<Vec<f64>> = sequence.to_vec();
    let mut caches = Vec::with_capacity(lstm.layer_count());
    let mut last_h = Vec::with_capacity(lstm.layer_count());
    let mut last_c = Vec::with_capacity(lstm.layer_count());

    for layer in &lstm.layers {
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut steps = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let mut input = Vec::with_capacity(x.len() + d);
            input.extend_from_slice(x);
            input.extend_from_slice(&h);
            let mut a = layer.w.matvec(&input);
            for (ai, bi) in a.iter_mut().zip(&layer.b) {
                *ai += bi;
            }
            for (k, v) in a.iter_mut().enumerate() {
                *v = if k < 3 * d { sigmoid(*v) } else { v.tanh() };
            }
            let c_prev = c.clone();
            for j in 0..d {
                c[j] = a[d + j] * c_prev[j] + a[j] * a[3 * d + j];
            }
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            for j in 0..d {
                h[j] = a[2 * d + j] * tanh_c[j];
            }
            outputs.push(h.clone());
            steps.push(StepCache {
                input,
                c_prev,
                gates: a,
                tanh_c,
            });
        }
        caches.push(steps);
        last_h.push(h);
        last_c.push(c);
        inputs = outputs;
    }

    let top_h = last_h.last().unwrap().clone();
    let (head_input, gate) = match &model.gate {
        None => (top_h.clone(), None),
        Some(kg) => {
            let gate: Vec<f64> = kg
                .params
                .preactivation(&top_h, &kg.k_e)
                .into_iter()
                .map(sigmoid)
                .collect();
            let base = match kg.params.modulation {
                ModulationInput::Original => &top_h,
                ModulationInput::Fused => &gate,
            };
            let m: Vec<f64> = base.iter().zip(&gate).map(|(a, b)| a * b).collect();
            (m, Some(GateCache { gate }))
        }
    };
    let mut logits = lstm.head_w.matvec(&head_input);
    for (z, b) in logits.iter_mut().zip(&lstm.head_b) {
        *z += b;
    }
    let log_probs = log_softmax(&logits);
    let probs: Vec<f64> = log_probs.iter().map(|v| v.exp()).collect();
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(NlmError::NonFinite("forward pass".into()));
    }
    let out = ForwardOutput {
        hidden: HiddenStates { h: last_h, c: last_c },
        head_input: head_input.clone(),
        probs,
    };
    Ok((
        out,
        Trace {
            layers: caches,
            top_h,
            gate,
            head_input,
            log_probs,
        },
    ))
}

/// Stacked-LSTM recurrence over `sequence`, then the (optionally gated)
/// softmax head.
pub fn forward(model: &Classifier, sequence: &[Vec<f64>]) -> Result<ForwardOutput, NlmError> {
    forward_traced(model, sequence).map(|(out, _)| out)
}

/// Cross-entropy of `label` and its gradient with respect to every LSTM and
/// head parameter (the gate is treated as a constant layer).
pub(crate) fn backward(model: &Classifier, trace: &Trace, label: usize, grads: &mut LstmParams, scale: f64) -> f64 {
    let lstm = &model.lstm;
    let d = lstm.hidden();
    let loss = -trace.log_probs[label];

    // head
    let mut dlogits: Vec<f64> = trace.log_probs.iter().map(|v| v.exp()).collect();
    dlogits[label] -= 1.0;
    grads.head_w.add_outer(&dlogits, &trace.head_input, scale);
    for (g, v) in grads.head_b.iter_mut().zip(&dlogits) {
        *g += scale * v;
    }
    let d_head_in = lstm.head_w.matvec_t(&dlogits);

    // gate
    let d_top = match (&model.gate, &trace.gate) {
        (Some(kg), Some(cache)) => {
            let g = &cache.gate;
            let (mut dh, dg): (Vec<f64>, Vec<f64>) = match kg.params.modulation {
                ModulationInput::Original => (
                    d_head_in.iter().zip(g).map(|(a, b)| a * b).collect(),
                    d_head_in.iter().zip(&trace.top_h).map(|(a, h)| a * h).collect(),
                ),
                ModulationInput::Fused => (
                    vec![0.0; d],
                    d_head_in.iter().zip(g).map(|(a, gv)| 2.0 * a * gv).collect(),
                ),
            };
            let da: Vec<f64> = dg.iter().zip(g).map(|(x, gv)| x * gv * (1.0 - gv)).collect();
            for (i, dai) in da.iter().enumerate() {
                let row = kg.params.w_hk.row(i);
                for j in 0..d {
                    dh[j] += row[j] * dai;
                }
            }
            dh
        }
        _ => d_head_in,
    };

    // BPTT, top layer first; `upstream[t]` is dL/dh_t arriving from above
    let steps = trace.layers[0].len();
    let mut upstream: Vec<Vec<f64>> = vec![vec![0.0; d]; steps];
    upstream[steps - 1] = d_top;
    for (l, layer) in lstm.layers.iter().enumerate().rev() {
        let cache = &trace.layers[l];
        let fan_in = layer.w.cols() - d;
        let mut below: Vec<Vec<f64>> = vec![vec![0.0; fan_in]; steps];
        let mut dh_next = vec![0.0; d];
        let mut dc_next = vec![0.0; d];
        let mut da = vec![0.0; 4 * d];
        for t in (0..steps).rev() {
            let s = &cache[t];
            let (i, f, o, g) = (&s.gates[..d], &s.gates[d..2 * d], &s.gates[2 * d..3 * d], &s.gates[3 * d..]);
            for j in 0..d {
                let dh = upstream[t][j] + dh_next[j];
                let dc = dc_next[j] + dh * o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                da[j] = dc * g[j] * i[j] * (1.0 - i[j]);
                da[d + j] = dc * s.c_prev[j] * f[j] * (1.0 - f[j]);
                da[2 * d + j] = dh * s.tanh_c[j] * o[j] * (1.0 - o[j]);
                da[3 * d + j] = dc * i[j] * (1.0 - g[j] * g[j]);
                dc_next[j] = dc * f[j];
            }
            let gl = &mut grads.layers[l];
            gl.w.add_outer(&da, &s.input, scale);
            for (gb, v) in gl.b.iter_mut().zip(&da) {
                *gb += scale * v;
            }
            let dinput = layer.w.matvec_t(&da);
            below[t].copy_from_slice(&dinput[..fan_in]);
            dh_next.copy_from_slice(&dinput[fan_in..]);
        }
        upstream = below;
    }
    loss
}
