//! Evolutionary selection: which agents leave the market and who replaces them.
//!
//! Each mechanism implements [`SelectionMechanism`] and is looked up by name in
//! a [`MechanismRegistry`]. A selection round is triggered with probability
//! `p_selection` per period; removed agents are replaced one-for-one so the
//! population size never changes.
//!
//! Randomness is consumed from the run's single stream in this order:
//! trigger draw, mechanism draws (branch, sample, keep decisions), then for
//! each replacement the innovation draw followed by its parameter draws.

mod mechanisms;
mod registry;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentParams, AgentState, ParamPriors};
use crate::error::{Error, Result};

pub use mechanisms::{
    fitness_proportionate_select, keep_probabilities, quantile_select, Control,
    FitnessProportionate, Mixed, Quantile,
};
pub use registry::{MechanismFactory, MechanismRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Control,
    Quantile,
    FitnessProportionate,
    Mixed,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 4] = [
        MechanismKind::Control,
        MechanismKind::Quantile,
        MechanismKind::FitnessProportionate,
        MechanismKind::Mixed,
    ];

    /// Short registry name.
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Control => "control",
            MechanismKind::Quantile => "quantile",
            MechanismKind::FitnessProportionate => "fps",
            MechanismKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "control" | "none" => Ok(MechanismKind::Control),
            "quantile" | "truncation" => Ok(MechanismKind::Quantile),
            "fps" | "fitness_proportionate" | "fitness-proportionate" => {
                Ok(MechanismKind::FitnessProportionate)
            }
            "mixed" => Ok(MechanismKind::Mixed),
            other => Err(Error::InvalidConfig(format!(
                "unknown selection mechanism `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub kind: MechanismKind,
    pub p_selection: f64,
    pub quantile_q: f64,
    pub tournament_size: usize,
    pub mix_weight: f64,
    pub p_innovation: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            kind: MechanismKind::Control,
            p_selection: 1.0 / 24.0,
            quantile_q: 0.1,
            tournament_size: 10,
            mix_weight: 0.5,
            p_innovation: 0.01,
        }
    }
}

impl SelectionConfig {
    pub fn with_kind(kind: MechanismKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self, population: usize) -> Result<()> {
        for (name, p) in [
            ("p_selection", self.p_selection),
            ("quantile_q", self.quantile_q),
            ("mix_weight", self.mix_weight),
            ("p_innovation", self.p_innovation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "selection.{name} = {p} is not a probability"
                )));
            }
        }
        if self.tournament_size == 0 || self.tournament_size > population {
            return Err(Error::InvalidConfig(format!(
                "selection.tournament_size = {} must lie in [1, {population}]",
                self.tournament_size
            )));
        }
        Ok(())
    }
}

/// Outcome of one mechanism invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// For [`MechanismKind::Mixed`] this is the branch that actually ran.
    pub used: MechanismKind,
    pub removed: Vec<u64>,
}

/// A selection rule over the current population.
pub trait SelectionMechanism: Send + Sync {
    fn kind(&self) -> MechanismKind;

    /// Picks the agents to remove given the current price.
    fn select(&self, population: &[AgentState], price: f64, rng: &mut dyn RngCore) -> Selection;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub period: u64,
    pub mechanism_used: MechanismKind,
    pub removed_ids: Vec<u64>,
    pub replacement_ids: Vec<u64>,
    /// Aligned with `replacement_ids`: whether the replacement drew from the priors.
    pub innovated: Vec<bool>,
}

/// Starting portfolio handed to every new agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endowment {
    pub cash: f64,
    pub shares: i64,
}

/// Cash and shares created or destroyed by replacing agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub cash_in: f64,
    pub shares_in: i64,
    pub cash_out: f64,
    pub shares_out: i64,
}

/// Result of [`replace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Replacement {
    pub replacement_ids: Vec<u64>,
    pub innovated: Vec<bool>,
    pub injection: Injection,
}

/// Replaces every agent in `removed` (in place) by a newcomer.
///
/// With probability `p_innovation` the newcomer's parameters are drawn from
/// `priors`; otherwise each parameter is copied from an independently,
/// uniformly chosen survivor. Newcomers receive `endowment` and are born at
/// `period`. Fresh ids are taken from `next_id`.
#[allow(clippy::too_many_arguments)]
pub fn replace(
    population: &mut [AgentState],
    removed: &[u64],
    priors: &ParamPriors,
    p_innovation: f64,
    endowment: Endowment,
    period: u64,
    next_id: &mut u64,
    rng: &mut dyn RngCore,
) -> Result<Replacement> {
    let mut out = Replacement {
        replacement_ids: Vec::with_capacity(removed.len()),
        innovated: Vec::with_capacity(removed.len()),
        injection: Injection::default(),
    };
    if removed.is_empty() {
        return Ok(out);
    }
    let survivors: Vec<AgentParams> = population
        .iter()
        .filter(|a| !removed.contains(&a.id))
        .map(|a| a.params)
        .collect();
    if survivors.is_empty() {
        return Err(Error::Extinction { period });
    }

    for slot in population.iter_mut().filter(|a| removed.contains(&a.id)) {
        let innovate = rng.random_bool(p_innovation);
        let params = if innovate {
            priors.sample(rng)
        } else {
            let pick = |rng: &mut dyn RngCore| &survivors[rng.random_range(0..survivors.len())];
            AgentParams {
                p_bid: pick(rng).p_bid,
                n_shares: pick(rng).n_shares,
                vol_pref: pick(rng).vol_pref,
            }
        };
        out.injection.cash_out += slot.cash;
        out.injection.shares_out += slot.shares;
        out.injection.cash_in += endowment.cash;
        out.injection.shares_in += endowment.shares;

        let id = *next_id;
        *next_id += 1;
        *slot = AgentState::new(id, params, endowment.cash, endowment.shares, period);
        out.replacement_ids.push(id);
        out.innovated.push(innovate);
    }
    Ok(out)
}

/// One selection opportunity.
///
/// Returns `None` when the trigger does not fire or the mechanism is
/// [`MechanismKind::Control`]; otherwise the population has been updated and
/// the event describes the change.
#[allow(clippy::too_many_arguments)]
pub fn maybe_select(
    population: &mut [AgentState],
    price: f64,
    period: u64,
    mechanism: &dyn SelectionMechanism,
    config: &SelectionConfig,
    priors: &ParamPriors,
    endowment: Endowment,
    next_id: &mut u64,
    rng: &mut dyn RngCore,
) -> Result<Option<(SelectionEvent, Injection)>> {
    if population.is_empty() {
        return Err(Error::Extinction { period });
    }
    if !rng.random_bool(config.p_selection) || mechanism.kind() == MechanismKind::Control {
        return Ok(None);
    }
    let selection = mechanism.select(population, price, rng);
    let replacement = replace(
        population,
        &selection.removed,
        priors,
        config.p_innovation,
        endowment,
        period,
        next_id,
        rng,
    )?;
    let event = SelectionEvent {
        period,
        mechanism_used: selection.used,
        removed_ids: selection.removed,
        replacement_ids: replacement.replacement_ids,
        innovated: replacement.innovated,
    };
    Ok(Some((event, replacement.injection)))
}
