//! Classification metrics and their text/CSV renderings.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub label: String,
    /// Documents whose true label is this class.
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False positives over actual negatives.
    pub false_alarm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub mode: String,
    pub seed: u64,
    pub config_hash: String,
    pub input_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub labels: Vec<String>,
    /// `confusion[actual][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub classes: Vec<ClassMetrics>,
    pub target: String,
    pub meta: RunMetadata,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion matrix of `(actual, predicted)` class indices.
pub fn confusion(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (a, p) in pairs {
        m[a][p] += 1;
    }
    m
}

/// Per-class metrics from a confusion matrix. Undefined ratios (no
/// predictions, no support, no negatives) are reported as 0.
pub fn class_metrics(labels: &[String], confusion: &[Vec<u64>]) -> Vec<ClassMetrics> {
    let total: u64 = confusion.iter().flatten().sum();
    (0..labels.len())
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let fp = predicted - tp;
            let negatives = total - support;
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: labels[c].clone(),
                support,
                precision,
                recall,
                f1,
                false_alarm: ratio(fp, negatives),
            }
        })
        .collect()
}

impl EvalReport {
    pub fn new(labels: Vec<String>, confusion: Vec<Vec<u64>>, target: &str, meta: RunMetadata) -> Self {
        let classes = class_metrics(&labels, &confusion);
        Self {
            labels,
            confusion,
            classes,
            target: target.to_string(),
            meta,
        }
    }

    pub fn target_metrics(&self) -> &ClassMetrics {
        self.classes
            .iter()
            .find(|c| c.label == self.target)
            .unwrap_or(&self.classes[0])
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        let _ = writeln!(s, "mode {}  seed {}", m.mode, m.seed);
        let _ = writeln!(s, "config {}", m.config_hash);
        let _ = writeln!(s, "inputs {}", m.input_hash);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16} {:>8} {:>9} {:>9} {:>9} {:>11}", "class", "support", "precision", "recall", "f1", "false-alarm");
        for c in &self.classes {
            let mark = if c.label == self.target { "*" } else { " " };
            let _ = writeln!(
                s,
                "{:<15}{mark} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>11.4}",
                c.label, c.support, c.precision, c.recall, c.f1, c.false_alarm
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion (rows actual, columns predicted)");
        let _ = writeln!(s, "{:<16} {}", "", self.labels.iter().map(|l| format!("{l:>8}")).collect::<String>());
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let _ = writeln!(s, "{label:<16} {}", row.iter().map(|v| format!("{v:>8}")).collect::<String>());
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let m = &self.meta;
        let mut s = String::from("mode,seed,config_hash,input_hash,class,target,support,precision,recall,f1,false_alarm\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                m.mode,
                m.seed,
                m.config_hash,
                m.input_hash,
                c.label,
                u8::from(c.label == self.target),
                c.support,
                c.precision,
                c.recall,
                c.f1,
                c.false_alarm
            );
        }
        s
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
