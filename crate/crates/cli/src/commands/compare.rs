use std::fmt::Write as _;
use std::thread;

use kinfuse::infusion::InfusionExit;
use kinfuse::nlm::{Checkpoint, TrainOutcome};

use crate::artifacts::{load_artifacts, Artifacts};
use crate::config::{Mode, PipelineConfig};
use crate::data::load_dataset;
use crate::error::CliError;
use crate::report::{mean_std, ClassMetrics, RunMetadata};

use super::eval::{evaluate, run_metadata};
use super::train::train_model;
use super::Context;

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    /// Metrics of the target class on the evaluation set.
    pub metrics: ClassMetrics,
    /// Mean inner iterations per epoch (0 for vanilla runs).
    pub mean_inner_iterations: f64,
    /// `D_KL(fused h_T ‖ K_e)` after the last inner update of the last epoch.
    pub final_divergence: Option<f64>,
    /// Fraction of epochs whose inner loop ended by the ε test.
    pub epsilon_exits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub precision: (f64, f64),
    pub recall: (f64, f64),
    pub f1: (f64, f64),
    pub false_alarm: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deltas {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub false_alarm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub modes: [Mode; 2],
    pub runs: Vec<RunResult>,
    pub target: String,
}

fn summarize(runs: &[&RunResult]) -> Summary {
    let col = |f: fn(&ClassMetrics) -> f64| mean_std(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    Summary {
        precision: col(|m| m.precision),
        recall: col(|m| m.recall),
        f1: col(|m| m.f1),
        false_alarm: col(|m| m.false_alarm),
    }
}

impl ComparisonReport {
    pub fn runs_of(&self, mode_index: usize) -> Vec<&RunResult> {
        let n = self.runs.len() / 2;
        self.runs[mode_index * n..(mode_index + 1) * n].iter().collect()
    }

    pub fn summary(&self, mode_index: usize) -> Summary {
        summarize(&self.runs_of(mode_index))
    }

    /// Second mode's means minus the first mode's.
    pub fn deltas(&self) -> Deltas {
        let (a, b) = (self.summary(0), self.summary(1));
        Deltas {
            precision: b.precision.0 - a.precision.0,
            recall: b.recall.0 - a.recall.0,
            f1: b.f1.0 - a.f1.0,
            false_alarm: b.false_alarm.0 - a.false_alarm.0,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = self.runs.len() / 2;
        let _ = writeln!(s, "target class {}, {n} seeds per mode\n", self.target);
        let _ = writeln!(s, "{:<10} {:>17} {:>17} {:>17} {:>17}", "mode", "precision", "recall", "f1", "false-alarm");
        let pm = |v: (f64, f64)| format!("{:.4} ± {:.4}", v.0, v.1);
        for (i, mode) in self.modes.iter().enumerate() {
            let m = self.summary(i);
            let _ = writeln!(
                s,
                "{:<10} {:>17} {:>17} {:>17} {:>17}",
                mode.as_str(),
                pm(m.precision),
                pm(m.recall),
                pm(m.f1),
                pm(m.false_alarm)
            );
        }
        let d = self.deltas();
        let _ = writeln!(
            s,
            "{:<10} {:>17} {:>17} {:>17} {:>17}",
            "delta",
            format!("{:+.4}", d.precision),
            format!("{:+.4}", d.recall),
            format!("{:+.4}", d.f1),
            format!("{:+.4}", d.false_alarm)
        );
        for (i, mode) in self.modes.iter().enumerate() {
            let runs = self.runs_of(i);
            if runs.iter().all(|r| r.final_divergence.is_none()) {
                continue;
            }
            let iters = mean_std(&runs.iter().map(|r| r.mean_inner_iterations).collect::<Vec<_>>());
            let divs: Vec<f64> = runs.iter().filter_map(|r| r.final_divergence).collect();
            let div = mean_std(&divs);
            let eps = mean_std(&runs.iter().map(|r| r.epsilon_exits).collect::<Vec<_>>());
            let _ = writeln!(
                s,
                "\n{} infusion: inner iterations per epoch {}, final divergence {}, epsilon exits {:.0}%",
                mode.as_str(),
                pm(iters),
                pm(div),
                100.0 * eps.0
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "mode,seed,precision,recall,f1,false_alarm,mean_inner_iterations,final_divergence,epsilon_exits\n",
        );
        for r in &self.runs {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.mode.as_str(),
                r.seed,
                m.precision,
                m.recall,
                m.f1,
                m.false_alarm,
                r.mean_inner_iterations,
                r.final_divergence.map(|v| v.to_string()).unwrap_or_default(),
                r.epsilon_exits
            );
        }
        s
    }
}

fn infusion_stats(outcome: &TrainOutcome) -> (f64, Option<f64>, f64) {
    let logs: Vec<_> = outcome.epochs.iter().filter_map(|e| e.infusion.as_ref()).collect();
    if logs.is_empty() {
        return (0.0, None, 0.0);
    }
    let n = logs.len() as f64;
    let iters = logs.iter().map(|l| l.inner_iterations as f64).sum::<f64>() / n;
    let last = logs.last().and_then(|l| l.trace.last()).map(|t| t.d_cur);
    let eps = logs.iter().filter(|l| l.exit == InfusionExit::Epsilon).count() as f64 / n;
    (iters, last, eps)
}

/// Trains and evaluates `modes[0]` and `modes[1]` for every seed, one thread
/// per run. Runs are independent, so the result does not depend on
/// scheduling.
pub fn compare_modes(
    config: &PipelineConfig,
    arts: &Artifacts,
    train_docs: &[kinfuse::LabeledDoc],
    test_docs: &[kinfuse::LabeledDoc],
    seeds: &[u64],
    modes: [Mode; 2],
    meta: &RunMetadata,
) -> Result<ComparisonReport, CliError> {
    if seeds.len() < 2 {
        return Err(CliError::Validation(format!(
            "comparison needs at least 2 seeds for a standard deviation, got {}",
            seeds.len()
        )));
    }
    let jobs: Vec<(Mode, u64)> = modes.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let target = &config.seeding.target_class;
    let results: Vec<Result<RunResult, CliError>> = thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(mode, seed)| {
                scope.spawn(move || -> Result<RunResult, CliError> {
                    let (outcome, labels) = train_model(config, arts, train_docs, mode, seed)?;
                    let (mean_inner_iterations, final_divergence, epsilon_exits) = infusion_stats(&outcome);
                    let ckpt = Checkpoint {
                        model: outcome.model,
                        labels,
                        epochs: config.train.epochs as u32,
                    };
                    let meta = RunMetadata {
                        mode: mode.as_str().into(),
                        seed,
                        ..meta.clone()
                    };
                    let report = evaluate(&ckpt, test_docs, &arts.models, config.model.max_len, target, meta)?;
                    Ok(RunResult {
                        mode,
                        seed,
                        metrics: report.target_metrics().clone(),
                        mean_inner_iterations,
                        final_divergence,
                        epsilon_exits,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    Ok(ComparisonReport {
        modes,
        runs: results.into_iter().collect::<Result<_, _>>()?,
        target: target.clone(),
    })
}

pub fn cmd_compare(ctx: &Context, runs: Option<usize>) -> Result<ComparisonReport, CliError> {
    let c = &ctx.cfg.config;
    let runs = runs.unwrap_or(c.compare.runs);
    let seeds: Vec<u64> = (0..runs as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
    if seeds.len() < 2 {
        return Err(CliError::Validation(format!("compare needs at least 2 seeds, got {runs}")));
    }
    let arts = load_artifacts(&ctx.cfg, &ctx.out)?;
    let train_docs = load_dataset(&ctx.cfg.resolve(&c.paths.train))?;
    let test_docs = load_dataset(&ctx.cfg.resolve(&c.paths.test))?;
    let meta = run_metadata(&ctx.cfg, &ctx.out, "", ctx.seed)?;
    let report = compare_modes(c, &arts, &train_docs, &test_docs, &seeds, [Mode::Vanilla, Mode::Infused], &meta)?;
    kinfuse::io::write_atomic(&ctx.out.join("compare.txt"), report.to_text().as_bytes())?;
    kinfuse::io::write_atomic(&ctx.out.join("compare.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}
