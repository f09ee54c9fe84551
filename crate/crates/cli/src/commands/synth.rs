//! Synthetic sparse-signal benchmark.
//!
//! Two classes, 400 documents. Every positive document may carry one of 30
//! rare diagnostic tokens, each present in at most 2% of positive documents.
//! Both classes share the filler vocabulary and the ambiguous hub token
//! `threat`, which is only mildly more common in positive documents. In the
//! graph every diagnostic concept sits two hops below the hub, and in the
//! `domain` corpus the diagnostics co-occur with the hub and their category,
//! so their embeddings cluster even though the labelled data barely shows
//! them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kinfuse::rng::SeedStream;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::CliError;

pub const DOCS: usize = 400;
pub const POSITIVE: usize = 200;
pub const TRAIN: usize = 300;
pub const DIAGNOSTICS: usize = 30;
/// Positive documents carrying each diagnostic token.
pub const DIAGNOSTIC_DOCS: usize = 4;
pub const HUB: &str = "threat";
pub const CATEGORIES: [&str; 3] = ["weapon", "plot", "recruit"];
const NEUTRAL_ROOT: &str = "daily";
const NEUTRAL_CATEGORIES: [&str; 3] = ["food", "sport", "travel"];
const NEUTRAL: usize = 12;
const FILLERS: usize = 60;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllable(n: usize) -> String {
    let c = CONSONANTS[n % CONSONANTS.len()] as char;
    let v = VOWELS[(n / CONSONANTS.len()) % VOWELS.len()] as char;
    format!("{c}{v}")
}

/// Made-up three-syllable word; distinct for distinct `n < 4900`.
pub fn word(n: usize) -> String {
    let k = CONSONANTS.len() * VOWELS.len();
    format!("{}{}{}", syllable(n % k), syllable((n * 13 + 5) % k), syllable(n / k))
}

pub fn diagnostic(i: usize) -> String {
    word(i)
}

fn neutral(i: usize) -> String {
    word(200 + i)
}

fn filler(i: usize) -> String {
    word(1000 + i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub concepts: usize,
    pub triples: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    /// Largest share of positive documents containing one diagnostic token.
    pub max_diagnostic_share: f64,
}

fn graph() -> Vec<(String, String, String)> {
    let mut t = Vec::new();
    let mut add = |s: &str, p: &str, o: &str| t.push((s.to_string(), p.to_string(), o.to_string()));
    for c in CATEGORIES {
        add(c, "isa", HUB);
    }
    for i in 0..DIAGNOSTICS {
        add(&diagnostic(i), "isa", CATEGORIES[i % 3]);
        if i + 3 < DIAGNOSTICS {
            add(&diagnostic(i), "related to", &diagnostic(i + 3));
        }
    }
    for c in NEUTRAL_CATEGORIES {
        add(c, "isa", NEUTRAL_ROOT);
    }
    for i in 0..NEUTRAL {
        add(&neutral(i), "isa", NEUTRAL_CATEGORIES[i % 3]);
    }
    t
}

fn pick<'a>(rng: &mut impl Rng, words: &'a [String]) -> &'a str {
    &words[rng.random_range(0..words.len())]
}

fn documents(rng: &mut impl Rng) -> (Vec<(String, String)>, f64) {
    let fillers: Vec<String> = (0..FILLERS).map(filler).collect();
    let neutrals: Vec<String> = (0..NEUTRAL).map(neutral).collect();
    let mut slots: Vec<Option<usize>> = (0..DIAGNOSTICS)
        .flat_map(|i| std::iter::repeat_n(Some(i), DIAGNOSTIC_DOCS))
        .collect();
    slots.resize(POSITIVE, None);
    slots.shuffle(rng);

    let mut docs = Vec::with_capacity(DOCS);
    let mut counts = [0usize; DIAGNOSTICS];
    for d in 0..DOCS {
        let positive = d < POSITIVE;
        let mut tokens: Vec<String> = (0..rng.random_range(8..=14)).map(|_| pick(rng, &fillers).to_string()).collect();
        let mut extra = Vec::new();
        if rng.random_bool(if positive { 0.55 } else { 0.35 }) {
            extra.push(HUB.to_string());
        }
        if rng.random_bool(0.4) {
            extra.push(pick(rng, &neutrals).to_string());
        }
        if let Some(i) = slots.get(d).copied().flatten() {
            counts[i] += 1;
            extra.push(diagnostic(i));
        }
        for w in extra {
            let at = rng.random_range(0..=tokens.len());
            tokens.insert(at, w);
        }
        docs.push((if positive { "pos" } else { "neg" }.to_string(), tokens.join(" ")));
    }
    docs.shuffle(rng);
    let share = *counts.iter().max().unwrap_or(&0) as f64 / POSITIVE as f64;
    (docs, share)
}

fn domain_corpus(rng: &mut impl Rng) -> String {
    let fillers: Vec<String> = (0..FILLERS).map(filler).collect();
    let mut s = String::new();
    for (ci, cat) in CATEGORIES.iter().enumerate() {
        let members: Vec<String> = (0..DIAGNOSTICS).filter(|i| i % 3 == ci).map(diagnostic).collect();
        for _ in 0..60 {
            let mut line = vec![HUB.to_string(), cat.to_string()];
            line.extend((0..3).map(|_| pick(rng, &members).to_string()));
            line.extend((0..2).map(|_| pick(rng, &fillers).to_string()));
            line.shuffle(rng);
            let _ = writeln!(s, "{}", line.join(" "));
        }
    }
    for (ci, cat) in NEUTRAL_CATEGORIES.iter().enumerate() {
        let members: Vec<String> = (0..NEUTRAL).filter(|i| i % 3 == ci).map(neutral).collect();
        for _ in 0..40 {
            let mut line = vec![NEUTRAL_ROOT.to_string(), cat.to_string()];
            line.extend((0..2).map(|_| pick(rng, &members).to_string()));
            line.extend((0..2).map(|_| pick(rng, &fillers).to_string()));
            line.shuffle(rng);
            let _ = writeln!(s, "{}", line.join(" "));
        }
    }
    s
}

fn general_corpus(rng: &mut impl Rng) -> String {
    let fillers: Vec<String> = (0..FILLERS).map(filler).collect();
    let extras: Vec<String> = (0..DIAGNOSTICS)
        .map(diagnostic)
        .chain((0..NEUTRAL).map(neutral))
        .chain([HUB.to_string()])
        .collect();
    let mut s = String::new();
    for _ in 0..300 {
        let mut line: Vec<&str> = (0..8).map(|_| pick(rng, &fillers)).collect();
        if rng.random_bool(0.3) {
            line.push(pick(rng, &extras));
        }
        line.shuffle(rng);
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn config_text(seed: u64) -> String {
    format!(
        r#"[paths]
kg = "kg.tsv"
train = "train.tsv"
test = "test.tsv"

[dimension.domain]
corpus = "corpus.domain.txt"
d_sub = 4

[dimension.general]
corpus = "corpus.general.txt"
d_sub = 4

[seeding]
target_class = "pos"
top_m = 1
hops = 2

[embedding]
window = 3

[model]
layers = 2
max_len = 24

[train]
epochs = 150
iters = 20
batch_size = 16
lr = 0.1
seed = {seed}

[compare]
runs = 10
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    kinfuse::io::write_atomic(&dir.join(name), text.as_bytes()).map_err(|e| CliError::runtime(dir.join(name).display(), e))
}

/// Writes `kg.tsv`, `train.tsv`, `test.tsv`, two dimension corpora and a
/// ready-to-use `kinfuse.toml` into `dir`.
pub fn synth(dir: &Path, seed: u64) -> Result<SynthSummary, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(dir.display(), e))?;
    let streams = SeedStream::new(seed);
    let triples = graph();
    let mut kg = String::from("# synthetic benchmark graph\n");
    for (s, p, o) in &triples {
        let _ = writeln!(kg, "{s}\t{p}\t{o}");
    }
    let concepts: std::collections::BTreeSet<&String> = triples.iter().flat_map(|(s, _, o)| [s, o]).collect();
    write(dir, "kg.tsv", &kg)?;

    let (docs, max_diagnostic_share) = documents(&mut streams.rng("synth.docs"));
    let tsv = |rows: &[(String, String)]| rows.iter().map(|(l, t)| format!("{l}\t{t}\n")).collect::<String>();
    write(dir, "train.tsv", &tsv(&docs[..TRAIN]))?;
    write(dir, "test.tsv", &tsv(&docs[TRAIN..]))?;
    write(dir, "corpus.domain.txt", &domain_corpus(&mut streams.rng("synth.domain")))?;
    write(dir, "corpus.general.txt", &general_corpus(&mut streams.rng("synth.general")))?;
    write(dir, "kinfuse.toml", &config_text(seed))?;
    Ok(SynthSummary {
        concepts: concepts.len(),
        triples: triples.len(),
        train_docs: TRAIN,
        test_docs: DOCS - TRAIN,
        max_diagnostic_share,
    })
}
