use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kinfuse_cli::artifacts::{checkpoint_file, load_artifacts, Manifest, AUDIT_LOG};
use kinfuse_cli::commands::build::{build, BuildStatus};
use kinfuse_cli::commands::compare::compare_modes;
use kinfuse_cli::commands::eval::{cmd_eval, run_metadata};
use kinfuse_cli::commands::synth::synth;
use kinfuse_cli::commands::train::cmd_train;
use kinfuse_cli::commands::update_kg::cmd_update_kg;
use kinfuse_cli::commands::Context;
use kinfuse_cli::data::load_dataset;
use kinfuse_cli::{CliError, Mode};

/// Synthetic benchmark with a short training schedule.
fn fixture(dir: &Path) -> PathBuf {
    synth(dir, 7).unwrap();
    let path = dir.join("kinfuse.toml");
    let text = fs::read_to_string(&path).unwrap().replace("epochs = 150", "epochs = 2");
    fs::write(&path, text).unwrap();
    path
}

fn ctx(config: &Path, out: &Path, mode: Mode) -> Context {
    Context::new(config, Some(out.to_path_buf()), None, Some(mode)).unwrap()
}

fn kinfuse(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kinfuse"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn build_is_deterministic_and_incremental() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = build(&ctx(&config, &a, Mode::Vanilla)).unwrap();
    let second = build(&ctx(&config, &b, Mode::Vanilla)).unwrap();
    assert_eq!(first.status, BuildStatus::Built);
    assert_eq!(first.manifest, second.manifest);
    for name in first.manifest.outputs.keys() {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    assert_eq!(build(&ctx(&config, &a, Mode::Vanilla)).unwrap().status, BuildStatus::UpToDate);
    // training settings do not touch build outputs
    let text = fs::read_to_string(&config).unwrap().replace("lr = 0.1", "lr = 0.3");
    fs::write(&config, text).unwrap();
    assert_eq!(build(&ctx(&config, &a, Mode::Vanilla)).unwrap().status, BuildStatus::UpToDate);

    let mut kg = fs::read_to_string(dir.path().join("kg.tsv")).unwrap();
    kg.push_str("extra\tisa\tthreat\n");
    fs::write(dir.path().join("kg.tsv"), kg).unwrap();
    assert_eq!(build(&ctx(&config, &a, Mode::Vanilla)).unwrap().status, BuildStatus::Built);

    fs::remove_file(a.join("seeded.kign")).unwrap();
    assert_eq!(build(&ctx(&config, &a, Mode::Vanilla)).unwrap().status, BuildStatus::Built);
    assert!(Manifest::read(&a).unwrap().outputs_intact(&a));
}

#[test]
fn training_is_bit_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("build");
    build(&ctx(&config, &out, Mode::Infused)).unwrap();

    let infused = ctx(&config, &out, Mode::Infused);
    cmd_train(&infused).unwrap();
    let first = fs::read(out.join(checkpoint_file("infused"))).unwrap();
    cmd_train(&infused).unwrap();
    assert_eq!(first, fs::read(out.join(checkpoint_file("infused"))).unwrap());
    assert!(out.join("divergence.infused.csv").exists());

    let other = Context::new(&config, Some(out.clone()), Some(99), Some(Mode::Infused)).unwrap();
    cmd_train(&other).unwrap();
    assert_ne!(first, fs::read(out.join(checkpoint_file("infused"))).unwrap());

    cmd_train(&ctx(&config, &out, Mode::Vanilla)).unwrap();
    assert!(out.join(checkpoint_file("vanilla")).exists());
    assert!(!out.join("divergence.vanilla.csv").exists());
}

#[test]
fn eval_reports_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("build");
    let c = ctx(&config, &out, Mode::Vanilla);
    build(&c).unwrap();
    assert!(matches!(cmd_eval(&c, None), Err(CliError::Validation(_))));
    cmd_train(&c).unwrap();
    let report = cmd_eval(&c, None).unwrap();
    let total: u64 = report.confusion.iter().flatten().sum();
    assert_eq!(total, 100);
    for (row, class) in report.confusion.iter().zip(&report.classes) {
        assert_eq!(row.iter().sum::<u64>(), class.support);
    }
    assert_eq!(report.target_metrics().label, "pos");
    assert!(out.join("eval.vanilla.txt").exists());
    assert!(out.join("eval.vanilla.csv").exists());

    let train = cmd_eval(&c, Some(dir.path().join("train.tsv"))).unwrap();
    assert_eq!(train.confusion.iter().flatten().sum::<u64>(), 300);
}

#[test]
fn comparing_a_mode_with_itself_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("build");
    let c = ctx(&config, &out, Mode::Vanilla);
    build(&c).unwrap();
    let arts = load_artifacts(&c.cfg, &out).unwrap();
    let train = load_dataset(&dir.path().join("train.tsv")).unwrap();
    let test = load_dataset(&dir.path().join("test.tsv")).unwrap();
    let meta = run_metadata(&c.cfg, &out, "", 0).unwrap();
    let cfg = &c.cfg.config;

    let report = compare_modes(cfg, &arts, &train, &test, &[0, 1, 2], [Mode::Vanilla, Mode::Vanilla], &meta).unwrap();
    let d = report.deltas();
    assert_eq!((d.precision, d.recall, d.f1, d.false_alarm), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(report.runs.len(), 6);

    let single = compare_modes(cfg, &arts, &train, &test, &[0], [Mode::Vanilla, Mode::Infused], &meta);
    assert!(matches!(single, Err(CliError::Validation(_))));
}

#[test]
fn update_kg_absorbs_and_then_settles() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = dir.path().join("build");
    let c = ctx(&config, &out, Mode::Infused);
    build(&c).unwrap();
    assert!(matches!(cmd_update_kg(&c), Err(CliError::Validation(_))));
    cmd_train(&c).unwrap();

    let before = load_artifacts(&c.cfg, &out).unwrap().seeded;
    let first = cmd_update_kg(&c).unwrap();
    let after = load_artifacts(&c.cfg, &out).unwrap().seeded;
    assert_eq!(first.cycle, 1);
    assert!(first.new_triples > 0);
    assert_eq!(after.subkg.triples.len(), before.subkg.triples.len() + first.new_triples);
    assert!(after.subkg.triples.is_superset(&before.subkg.triples));
    assert!(Manifest::read(&out).unwrap().outputs_intact(&out));

    let second = cmd_update_kg(&c).unwrap();
    assert_eq!((second.cycle, second.new_triples, second.new_concepts), (2, 0, 0));
    assert!(second.skipped.is_some());
    let audit = fs::read_to_string(out.join(AUDIT_LOG)).unwrap();
    assert_eq!(audit.lines().count(), 2);
    assert!(audit.lines().next().unwrap().starts_with("cycle 1 epochs 2 misclassified "));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let cfg = config.to_str().unwrap();

    let (code, stdout, _) = kinfuse(&["--config", cfg, "build"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("built "));
    let (code, stdout, _) = kinfuse(&["--config", cfg, "build"]);
    assert_eq!((code, stdout.trim()), (0, "up to date"));

    let (code, _, stderr) = kinfuse(&["--config", cfg, "compare", "--runs", "1"]);
    assert_eq!(code, 1, "{stderr}");
    let (code, _, _) = kinfuse(&["--config", cfg, "--mode", "sideways", "train"]);
    assert_eq!(code, 1);
    let (code, _, _) = kinfuse(&["--config", "/nonexistent/kinfuse.toml", "build"]);
    assert_eq!(code, 1);
    let (code, stdout, _) = kinfuse(&["gradcheck", "--width", "3"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("3"));
    let (code, _, _) = kinfuse(&["gradcheck", "--width", "0"]);
    assert_eq!(code, 1);

    fs::remove_file(dir.path().join("corpus.general.txt")).unwrap();
    let (code, _, stderr) = kinfuse(&["--config", cfg, "build", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("corpus.general.txt"), "{stderr}");

    fs::write(&config, "[paths]\nkg = \"kg.tsv\"\nbogus = 1\n").unwrap();
    let (code, _, _) = kinfuse(&["--config", cfg, "build"]);
    assert_eq!(code, 1);
}
