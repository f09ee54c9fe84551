use std::fmt::Write as _;

use kinfuse::infusion::{fuse_step, kl_divergence, klf_gradient, InfusionParams};
use kinfuse::nlm::{gradient_check, Classifier, Example, GradCheckReport, KnowledgeGate, LstmParams};
use kinfuse::rng::SeedStream;
use rand::Rng;

use crate::error::CliError;

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSummary {
    pub width: usize,
    pub lstm: GradCheckReport,
    pub gated: GradCheckReport,
    /// Relative error of the fusion-gate gradient (`W_hk` and `b_hk` together).
    pub fusion_rel_error: f64,
}

impl GradcheckSummary {
    pub fn max_rel_error(&self) -> f64 {
        self.lstm
            .max_rel_error()
            .max(self.gated.max_rel_error())
            .max(self.fusion_rel_error)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("width {}, two layers, central differences with step {FD_STEP:e}\n", self.width);
        for (title, r) in [("classifier", &self.lstm), ("gated classifier", &self.gated)] {
            let _ = writeln!(s, "{title}");
            for g in &r.groups {
                let _ = writeln!(s, "  {:<10} rel {:.3e}", g.name, g.rel_error);
            }
        }
        let _ = writeln!(s, "fusion gate rel {:.3e}", self.fusion_rel_error);
        let _ = writeln!(s, "max rel {:.3e} (limit {TOLERANCE:e})", self.max_rel_error());
        s
    }
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        0.0
    } else {
        diff / scale
    }
}

fn fusion_check(h: &[f64], k: &[f64], p: &InfusionParams) -> Result<f64, CliError> {
    let g = klf_gradient(h, k, p).map_err(|e| CliError::runtime("fusion gradient", e))?;
    let loss = |q: &InfusionParams| -> f64 { kl_divergence(&fuse_step(h, k, q).unwrap(), k).unwrap() };
    let mut analytic = g.w_hk.data().to_vec();
    analytic.extend(&g.b_hk);
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let nudge = |delta: f64| {
            let mut q = p.clone();
            let w = q.w_hk.len();
            if i < w {
                q.w_hk.data_mut()[i] += delta;
            } else {
                q.b_hk[i - w] += delta;
            }
            loss(&q)
        };
        numeric.push((nudge(FD_STEP) - nudge(-FD_STEP)) / (2.0 * FD_STEP));
    }
    Ok(rel(&analytic, &numeric))
}

/// Checks analytic gradients of a random two-layer classifier (with and
/// without the knowledge gate) and of the fusion gate against central
/// differences.
pub fn gradcheck(width: usize, seed: u64) -> Result<GradcheckSummary, CliError> {
    if !(1..=8).contains(&width) {
        return Err(CliError::Validation(format!("gradcheck width must be in 1..=8, got {width}")));
    }
    let streams = SeedStream::new(seed);
    let mut rng = streams.rng("gradcheck");
    let lstm = LstmParams::init(width, width, 2, 3, &mut rng).map_err(|e| CliError::runtime("init", e))?;
    let batch: Vec<Example> = (0..3)
        .map(|i| Example {
            sequence: (0..2 + i).map(|_| random_vec(&mut rng, width)).collect(),
            label: i % 3,
        })
        .collect();
    let vanilla = Classifier::vanilla(lstm.clone());
    let k_e = random_vec(&mut rng, width);
    let gate_params = InfusionParams::random(width, &mut rng);
    let gated = Classifier {
        lstm,
        gate: Some(KnowledgeGate {
            params: gate_params.clone(),
            k_e: k_e.clone(),
        }),
    };
    let check = |m: &Classifier| gradient_check(m, &batch, FD_STEP).map_err(|e| CliError::runtime("gradient check", e));
    let h = random_vec(&mut rng, width);
    Ok(GradcheckSummary {
        width,
        lstm: check(&vanilla)?,
        gated: check(&gated)?,
        fusion_rel_error: fusion_check(&h, &k_e, &gate_params)?,
    })
}
