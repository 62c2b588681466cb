use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use evomarket::config::{parse_entries, read_config_text, Config, Entry};
use evomarket::Error;

use crate::artifacts::Manifest;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl ConfigArgs {
    /// File entries followed by `--set` entries and the `--seed` flag.
    pub fn entries(&self) -> CliResult<Vec<Entry>> {
        let mut entries = match &self.config {
            Some(path) => parse_entries(&read_config_text(path)?, &path.display().to_string())?,
            None => Vec::new(),
        };
        for s in &self.set {
            entries.push(Entry::from_override(s)?);
        }
        if let Some(seed) = self.seed {
            entries.push(flag_entry("seed", seed, "--seed"));
        }
        Ok(entries)
    }
}

pub fn flag_entry(key: &str, value: impl ToString, flag: &str) -> Entry {
    Entry {
        key: key.to_string(),
        value: value.to_string(),
        origin: flag.to_string(),
    }
}

/// Prefixes of keys that describe how an ensemble was generated.
const ENSEMBLE_KEYS: &[&str] = &["sim.", "selection.", "priors."];

/// The configuration an ensemble was generated with, from its manifest, with
/// analysis and calibration settings overridable.
pub fn derived_config(run_dir: &Path, args: &ConfigArgs) -> CliResult<(Manifest, Config)> {
    if !run_dir.is_dir() {
        return Err(CliError::Input(format!(
            "{} is not a directory",
            run_dir.display()
        )));
    }
    let manifest = Manifest::load(run_dir)?;
    let source = run_dir
        .join(crate::artifacts::MANIFEST)
        .display()
        .to_string();
    let mut config = Config::parse_str(&manifest.config, &source)
        .map_err(|e| CliError::Input(format!("recorded config is unusable: {e}")))?;
    let entries = args.entries()?;
    if let Some(e) = entries
        .iter()
        .find(|e| ENSEMBLE_KEYS.iter().any(|p| e.key.starts_with(p)))
    {
        return Err(CliError::Config(Error::ConfigEntry {
            origin: e.origin.clone(),
            message: format!(
                "`{}` is fixed by the ensemble in {}",
                e.key,
                run_dir.display()
            ),
        }));
    }
    config.apply(&entries)?;
    config.validate()?;
    Ok((manifest, config))
}

/// Creates `dir`, refusing a non-empty one unless `force` is set.
pub fn prepare_output(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let mut contents = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if contents.next().is_some() && !force {
            return Err(CliError::Config(Error::InvalidConfig(format!(
                "output directory {} is not empty (pass --force to write into it)",
                dir.display()
            ))));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Config(Error::InvalidConfig(
            "--jobs must be at least 1".into(),
        ))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| {
                CliError::Config(Error::InvalidConfig(format!(
                    "cannot start {n} threads: {e}"
                )))
            })?
            .install(f),
    }
}
