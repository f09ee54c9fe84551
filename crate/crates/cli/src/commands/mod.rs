pub mod build;
pub mod compare;
pub mod eval;
pub mod gradcheck;
pub mod synth;
pub mod train;
pub mod update_kg;

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{LoadedConfig, Mode};
use crate::error::CliError;

/// A loaded configuration plus the command-line overrides.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: LoadedConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: Mode,
}

impl Context {
    /// `out` defaults to `build/` next to the config file; `seed` and `mode`
    /// default to the configured values.
    pub fn new(config: &Path, out: Option<PathBuf>, seed: Option<u64>, mode: Option<Mode>) -> Result<Self, CliError> {
        let cfg = LoadedConfig::load(config)?;
        let out = out.unwrap_or_else(|| cfg.base.join("build"));
        let seed = seed.unwrap_or(cfg.config.train.seed);
        let mode = mode.unwrap_or(cfg.config.run.mode);
        Ok(Self { cfg, out, seed, mode })
    }

    pub fn ensure_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::runtime(self.out.display(), e))
    }
}
