//! Flat `key = value` configuration with dotted section keys.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! selection.mechanism = quantile
//! priors.vol_pref = lognormal(0, 0.5)
//! calibration.bounds.sigma = 1e-6, 5
//! ```
//!
//! Every key maps onto one field of [`SimConfig`], [`SelectionConfig`],
//! [`ParamPriors`], the analysis options or the calibration options. Unknown
//! and repeated keys are rejected with the line they appear on. Command-line
//! overrides use the same keys and are applied after the file.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::Prior;
use crate::analysis::{FitBand, KlOptions};
use crate::calibration::{
    AlphaMode, CalibrationBounds, CalibrationProblem, DeConfig, ForwardBudget,
};
use crate::error::{Error, Result};
use crate::selection::MechanismKind;
use crate::simulation::SimConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub band: FitBand,
    pub kl: KlOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub budget: ForwardBudget,
    pub alpha: AlphaMode,
    pub bounds: CalibrationBounds,
    /// Optimizer settings; the search box comes from `bounds`.
    pub de: DeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Master seed of every random stream.
    pub seed: u64,
    pub sim: SimConfig,
    pub analysis: AnalysisOptions,
    pub calibration: CalibrationOptions,
    pub output_dir: Option<PathBuf>,
}

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "seed",
    "output.dir",
    "sim.n_runs",
    "sim.n_agents",
    "sim.periods_per_day",
    "sim.days",
    "sim.initial_price",
    "sim.initial_cash",
    "sim.initial_shares",
    "sim.p_trade",
    "sim.max_order_age",
    "selection.mechanism",
    "selection.p_selection",
    "selection.quantile_q",
    "selection.tournament_size",
    "selection.mix_weight",
    "selection.p_innovation",
    "priors.p_bid",
    "priors.n_shares",
    "priors.vol_pref",
    "analysis.psd_skip_low",
    "analysis.psd_upper_fraction",
    "analysis.kl_bins",
    "analysis.kl_smoothing",
    "calibration.paths",
    "calibration.pool_stride",
    "calibration.alpha",
    "calibration.bounds.theta_p_bid",
    "calibration.bounds.sigma",
    "calibration.bounds.mu_n_shares",
    "calibration.bounds.mu_vol_pref",
    "calibration.bounds.alpha",
    "calibration.de.population_size",
    "calibration.de.differential_weight",
    "calibration.de.crossover_rate",
    "calibration.de.max_generations",
    "calibration.de.tolerance",
    "calibration.de.stall_generations",
];

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_pair(value: &str) -> std::result::Result<(f64, f64), String> {
    match value
        .split(',')
        .map(str::trim)
        .collect::<Vec<_>>()
        .as_slice()
    {
        [lo, hi] => Ok((parse(lo)?, parse(hi)?)),
        _ => Err(format!("expected `lower, upper`, got `{value}`")),
    }
}

fn parse_alpha(value: &str) -> std::result::Result<AlphaMode, String> {
    if value.eq_ignore_ascii_case("free") {
        Ok(AlphaMode::Free)
    } else {
        Ok(AlphaMode::Fixed {
            value: parse(value)?,
        })
    }
}

/// One `key = value` assignment with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

impl Entry {
    /// Parses a command-line `key=value` override.
    pub fn from_override(assignment: &str) -> Result<Self> {
        let origin = format!("override `{assignment}`");
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::ConfigEntry {
                origin: origin.clone(),
                message: "expected `key=value`".into(),
            })?;
        Ok(Self {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            origin,
        })
    }

    fn error(&self, message: String) -> Error {
        Error::ConfigEntry {
            origin: self.origin.clone(),
            message,
        }
    }
}

/// Splits config text into entries, rejecting malformed lines, unknown keys
/// and repeated keys. `source` names the text in error messages.
pub fn parse_entries(text: &str, source: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let origin = format!("{source}:{line}");
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::ConfigEntry {
                origin,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::ConfigEntry {
                origin,
                message: format!("unknown key `{key}`"),
            });
        }
        if let Some(j) = entries.iter().position(|e| e.key == key) {
            return Err(Error::ConfigEntry {
                origin,
                message: format!("duplicate key `{key}` (first set on line {})", lines[j]),
            });
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            origin,
        });
        lines.push(line);
    }
    Ok(entries)
}

impl Config {
    /// Parses config text over the defaults. `source` names the text in
    /// error messages.
    pub fn parse_str(text: &str, source: &str) -> Result<Self> {
        let mut config = Config::default();
        config.apply(&parse_entries(text, source)?)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&read_config_text(path)?, &path.display().to_string())
    }

    /// Applies entries in order; later entries win.
    pub fn apply(&mut self, entries: &[Entry]) -> Result<()> {
        for e in entries {
            self.set(&e.key, &e.value).map_err(|m| e.error(m))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        self.apply(&[Entry::from_override(assignment)?])
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = parse(value)?,
            "output.dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "sim.n_runs" => self.sim.n_runs = parse(value)?,
            "sim.n_agents" => self.sim.n_agents = parse(value)?,
            "sim.periods_per_day" => self.sim.periods_per_day = parse(value)?,
            "sim.days" => self.sim.days = parse(value)?,
            "sim.initial_price" => self.sim.initial_price = parse(value)?,
            "sim.initial_cash" => self.sim.initial_cash = parse(value)?,
            "sim.initial_shares" => self.sim.initial_shares = parse(value)?,
            "sim.p_trade" => self.sim.p_trade = parse(value)?,
            "sim.max_order_age" => self.sim.max_order_age = parse(value)?,
            "selection.mechanism" => self.sim.selection.kind = parse::<MechanismKind>(value)?,
            "selection.p_selection" => self.sim.selection.p_selection = parse(value)?,
            "selection.quantile_q" => self.sim.selection.quantile_q = parse(value)?,
            "selection.tournament_size" => self.sim.selection.tournament_size = parse(value)?,
            "selection.mix_weight" => self.sim.selection.mix_weight = parse(value)?,
            "selection.p_innovation" => self.sim.selection.p_innovation = parse(value)?,
            "priors.p_bid" => self.sim.priors.p_bid = parse::<Prior>(value)?,
            "priors.n_shares" => self.sim.priors.n_shares = parse::<Prior>(value)?,
            "priors.vol_pref" => self.sim.priors.vol_pref = parse::<Prior>(value)?,
            "analysis.psd_skip_low" => self.analysis.band.skip_low = parse(value)?,
            "analysis.psd_upper_fraction" => self.analysis.band.upper_fraction = parse(value)?,
            "analysis.kl_bins" => self.analysis.kl.bins = parse(value)?,
            "analysis.kl_smoothing" => self.analysis.kl.smoothing = parse(value)?,
            "calibration.paths" => self.calibration.budget.paths = parse(value)?,
            "calibration.pool_stride" => self.calibration.budget.pool_stride = parse(value)?,
            "calibration.alpha" => self.calibration.alpha = parse_alpha(value)?,
            "calibration.bounds.theta_p_bid" => {
                self.calibration.bounds.theta_p_bid = parse_pair(value)?
            }
            "calibration.bounds.sigma" => self.calibration.bounds.sigma = parse_pair(value)?,
            "calibration.bounds.mu_n_shares" => {
                self.calibration.bounds.mu_n_shares = parse_pair(value)?
            }
            "calibration.bounds.mu_vol_pref" => {
                self.calibration.bounds.mu_vol_pref = parse_pair(value)?
            }
            "calibration.bounds.alpha" => self.calibration.bounds.alpha = parse_pair(value)?,
            "calibration.de.population_size" => self.calibration.de.population_size = parse(value)?,
            "calibration.de.differential_weight" => {
                self.calibration.de.differential_weight = parse(value)?
            }
            "calibration.de.crossover_rate" => self.calibration.de.crossover_rate = parse(value)?,
            "calibration.de.max_generations" => self.calibration.de.max_generations = parse(value)?,
            "calibration.de.tolerance" => self.calibration.de.tolerance = parse(value)?,
            "calibration.de.stall_generations" => {
                self.calibration.de.stall_generations = parse(value)?
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Text value of one key, in a form [`Config::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let sim = &self.sim;
        let sel = &sim.selection;
        let cal = &self.calibration;
        let pair = |(lo, hi): (f64, f64)| format!("{lo:?}, {hi:?}");
        let v = match key {
            "seed" => self.seed.to_string(),
            "output.dir" => self
                .output_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "sim.n_runs" => sim.n_runs.to_string(),
            "sim.n_agents" => sim.n_agents.to_string(),
            "sim.periods_per_day" => sim.periods_per_day.to_string(),
            "sim.days" => sim.days.to_string(),
            "sim.initial_price" => format!("{:?}", sim.initial_price),
            "sim.initial_cash" => format!("{:?}", sim.initial_cash),
            "sim.initial_shares" => sim.initial_shares.to_string(),
            "sim.p_trade" => format!("{:?}", sim.p_trade),
            "sim.max_order_age" => sim.max_order_age.to_string(),
            "selection.mechanism" => sel.kind.name().to_string(),
            "selection.p_selection" => format!("{:?}", sel.p_selection),
            "selection.quantile_q" => format!("{:?}", sel.quantile_q),
            "selection.tournament_size" => sel.tournament_size.to_string(),
            "selection.mix_weight" => format!("{:?}", sel.mix_weight),
            "selection.p_innovation" => format!("{:?}", sel.p_innovation),
            "priors.p_bid" => sim.priors.p_bid.to_string(),
            "priors.n_shares" => sim.priors.n_shares.to_string(),
            "priors.vol_pref" => sim.priors.vol_pref.to_string(),
            "analysis.psd_skip_low" => self.analysis.band.skip_low.to_string(),
            "analysis.psd_upper_fraction" => format!("{:?}", self.analysis.band.upper_fraction),
            "analysis.kl_bins" => self.analysis.kl.bins.to_string(),
            "analysis.kl_smoothing" => format!("{:?}", self.analysis.kl.smoothing),
            "calibration.paths" => cal.budget.paths.to_string(),
            "calibration.pool_stride" => cal.budget.pool_stride.to_string(),
            "calibration.alpha" => match cal.alpha {
                AlphaMode::Free => "free".to_string(),
                AlphaMode::Fixed { value } => format!("{value:?}"),
            },
            "calibration.bounds.theta_p_bid" => pair(cal.bounds.theta_p_bid),
            "calibration.bounds.sigma" => pair(cal.bounds.sigma),
            "calibration.bounds.mu_n_shares" => pair(cal.bounds.mu_n_shares),
            "calibration.bounds.mu_vol_pref" => pair(cal.bounds.mu_vol_pref),
            "calibration.bounds.alpha" => pair(cal.bounds.alpha),
            "calibration.de.population_size" => cal.de.population_size.to_string(),
            "calibration.de.differential_weight" => format!("{:?}", cal.de.differential_weight),
            "calibration.de.crossover_rate" => format!("{:?}", cal.de.crossover_rate),
            "calibration.de.max_generations" => cal.de.max_generations.to_string(),
            "calibration.de.tolerance" => format!("{:?}", cal.de.tolerance),
            "calibration.de.stall_generations" => cal.de.stall_generations.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Canonical text with every key; parsing it gives back `self`.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Simulation settings with the master seed applied.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.sim.clone()
        }
    }

    /// Optimizer settings for `problem`, seeded from the master seed.
    pub fn de_config(&self, problem: &CalibrationProblem) -> DeConfig {
        DeConfig {
            bounds: problem.search_bounds(),
            seed: self.seed,
            ..self.calibration.de.clone()
        }
    }

    /// Applies the calibration options to a problem built from data.
    pub fn configure_problem(&self, problem: &mut CalibrationProblem) {
        problem.budget = self.calibration.budget;
        problem.alpha = self.calibration.alpha;
        problem.bounds = self.calibration.bounds;
        problem.kl = self.analysis.kl;
        problem.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        let band = &self.analysis.band;
        if !(band.upper_fraction > 0.0 && band.upper_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "analysis.psd_upper_fraction = {} must lie in (0, 1]",
                band.upper_fraction
            )));
        }
        if self.analysis.kl.bins == 0 {
            return Err(Error::InvalidConfig(
                "analysis.kl_bins must be at least 1".into(),
            ));
        }
        if !(self.analysis.kl.smoothing > 0.0 && self.analysis.kl.smoothing.is_finite()) {
            return Err(Error::InvalidConfig(
                "analysis.kl_smoothing must be positive".into(),
            ));
        }
        let cal = &self.calibration;
        if cal.budget.paths == 0 || cal.budget.pool_stride == 0 {
            return Err(Error::InvalidConfig(
                "calibration.paths and calibration.pool_stride must be at least 1".into(),
            ));
        }
        if let AlphaMode::Fixed { value } = cal.alpha {
            if !(value > 0.0 && value <= 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "calibration.alpha = {value} must lie in (0, 2]"
                )));
            }
        }
        let b = &cal.bounds;
        for (name, (lo, hi)) in [
            ("theta_p_bid", b.theta_p_bid),
            ("sigma", b.sigma),
            ("mu_n_shares", b.mu_n_shares),
            ("mu_vol_pref", b.mu_vol_pref),
            ("alpha", b.alpha),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "calibration.bounds.{name} = [{lo}, {hi}] must be finite with lower < upper"
                )));
            }
        }
        DeConfig {
            bounds: vec![(0.0, 1.0)],
            ..cal.de.clone()
        }
        .validate()
        .map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("calibration.de: {m}")),
            other => other,
        })
    }
}

/// Reads a config file, reporting failures against the path.
pub fn read_config_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::ConfigEntry {
        origin: path.display().to_string(),
        message: format!("cannot read: {e}"),
    })
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_str(s, "config")
    }
}
