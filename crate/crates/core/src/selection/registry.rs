use std::collections::BTreeMap;

use super::{
    Control, FitnessProportionate, MechanismKind, Mixed, Quantile, SelectionConfig,
    SelectionMechanism,
};
use crate::error::{Error, Result};

pub type MechanismFactory = fn(&SelectionConfig) -> Box<dyn SelectionMechanism>;

/// Name-indexed constructors for selection mechanisms.
///
/// The default registry knows `control`, `quantile`, `fps` and `mixed`.
/// Additional mechanisms can be registered under new names.
#[derive(Clone)]
pub struct MechanismRegistry {
    factories: BTreeMap<String, MechanismFactory>,
}

impl Default for MechanismRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(MechanismKind::Control.name(), |_| Box::new(Control));
        r.register(MechanismKind::Quantile.name(), |c| {
            Box::new(Quantile { q: c.quantile_q })
        });
        r.register(MechanismKind::FitnessProportionate.name(), |c| {
            Box::new(FitnessProportionate {
                tournament_size: c.tournament_size,
            })
        });
        r.register(MechanismKind::Mixed.name(), |c| {
            Box::new(Mixed {
                weight: c.mix_weight,
                quantile: Box::new(Quantile { q: c.quantile_q }),
                fps: Box::new(FitnessProportionate {
                    tournament_size: c.tournament_size,
                }),
            })
        });
        r
    }
}

impl MechanismRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &str, factory: MechanismFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        name: &str,
        config: &SelectionConfig,
    ) -> Result<Box<dyn SelectionMechanism>> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|f| f(config))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "no selection mechanism named `{name}` (known: {})",
                    self.names().collect::<Vec<_>>().join(", ")
                ))
            })
    }

    /// Builds the mechanism named by `config.kind`.
    pub fn build_configured(
        &self,
        config: &SelectionConfig,
    ) -> Result<Box<dyn SelectionMechanism>> {
        self.build(config.kind.name(), config)
    }
}
