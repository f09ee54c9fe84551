use crate::tensor::norm;

use super::lstm::Classifier;
use super::train::{batch_gradient, batch_loss, Example};
use super::NlmError;

pub const MAX_GRADCHECK_PARAMS: usize = 5_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or 0 when both
    /// norms are below 1e-10.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient of the mean batch loss against central
/// differences `(L(θ+ε) − L(θ−ε)) / 2ε`, one parameter at a time.
pub fn gradient_check(model: &Classifier, batch: &[Example], epsilon: f64) -> Result<GradCheckReport, NlmError> {
    gradient_check_groups(model, batch, epsilon, |_| true)
}

/// Like [`gradient_check`], restricted to the groups accepted by `keep`
/// (names such as `layer1.w`, `layer2.b`, `head.w`).
pub fn gradient_check_groups(
    model: &Classifier,
    batch: &[Example],
    epsilon: f64,
    keep: impl Fn(&str) -> bool,
) -> Result<GradCheckReport, NlmError> {
    let count = model.lstm.parameter_count();
    if count > MAX_GRADCHECK_PARAMS {
        return Err(NlmError::TooLarge(count));
    }
    let (_, analytic) = batch_gradient(model, batch)?;
    let names: Vec<String> = model.lstm.groups().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut groups = Vec::new();
    for (gi, name) in names.iter().enumerate() {
        if !keep(name) {
            continue;
        }
        let len = model.lstm.groups()[gi].1.len();
        let mut numeric = vec![0.0; len];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let original = probe.lstm.groups()[gi].1[k];
            probe.lstm.groups_mut()[gi].1[k] = original + epsilon;
            let plus = batch_loss(&probe, batch)?;
            probe.lstm.groups_mut()[gi].1[k] = original - epsilon;
            let minus = batch_loss(&probe, batch)?;
            probe.lstm.groups_mut()[gi].1[k] = original;
            *slot = (plus - minus) / (2.0 * epsilon);
        }
        let a = analytic.groups()[gi].1;
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let (an, nn) = (norm(a), norm(&numeric));
        let scale = an.max(nn);
        groups.push(GroupCheck {
            name: name.clone(),
            analytic_norm: an,
            numeric_norm: nn,
            rel_error: if scale < 1e-10 { 0.0 } else { norm(&diff) / scale },
        });
    }
    Ok(GradCheckReport { groups })
}
