use rand::seq::index;
use rand::{Rng, RngCore};

use super::{MechanismKind, Selection, SelectionMechanism};
use crate::agents::AgentState;

/// No selection: the founding population trades for the whole run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Control;

impl SelectionMechanism for Control {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Control
    }

    fn select(&self, _: &[AgentState], _: f64, _: &mut dyn RngCore) -> Selection {
        Selection {
            used: MechanismKind::Control,
            removed: Vec::new(),
        }
    }
}

/// Truncation selection: removes the `floor(q N)` least profitable agents.
#[derive(Debug, Clone, Copy)]
pub struct Quantile {
    pub q: f64,
}

impl SelectionMechanism for Quantile {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Quantile
    }

    fn select(&self, population: &[AgentState], price: f64, _: &mut dyn RngCore) -> Selection {
        Selection {
            used: MechanismKind::Quantile,
            removed: quantile_select(population, price, self.q),
        }
    }
}

/// Tournament-style fitness-proportionate selection over a uniform sample.
#[derive(Debug, Clone, Copy)]
pub struct FitnessProportionate {
    pub tournament_size: usize,
}

impl SelectionMechanism for FitnessProportionate {
    fn kind(&self) -> MechanismKind {
        MechanismKind::FitnessProportionate
    }

    fn select(&self, population: &[AgentState], price: f64, rng: &mut dyn RngCore) -> Selection {
        Selection {
            used: MechanismKind::FitnessProportionate,
            removed: fitness_proportionate_select(population, price, self.tournament_size, rng),
        }
    }
}

/// Runs `quantile` with probability `weight`, otherwise `fps`.
pub struct Mixed {
    pub weight: f64,
    pub quantile: Box<dyn SelectionMechanism>,
    pub fps: Box<dyn SelectionMechanism>,
}

impl SelectionMechanism for Mixed {
    fn kind(&self) -> MechanismKind {
        MechanismKind::Mixed
    }

    fn select(&self, population: &[AgentState], price: f64, rng: &mut dyn RngCore) -> Selection {
        if rng.random_bool(self.weight) {
            self.quantile.select(population, price, rng)
        } else {
            self.fps.select(population, price, rng)
        }
    }
}

/// Ids of the `floor(q N)` lowest-profit agents. Ties go to the older agent,
/// then the lower id.
pub fn quantile_select(population: &[AgentState], price: f64, q: f64) -> Vec<u64> {
    // The epsilon keeps products like 0.29 * 100 from rounding down a whole agent.
    let k = ((q * population.len() as f64) + 1e-9).floor() as usize;
    let k = k.min(population.len());
    if k == 0 {
        return Vec::new();
    }
    let mut ranked: Vec<(f64, u64, u64)> = population
        .iter()
        .map(|a| (a.profit(price), a.born_at, a.id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    ranked[..k].iter().map(|r| r.2).collect()
}

/// Keep probabilities `pi_i / sum(pi_j)` for one sample.
///
/// If any fitness is negative, all are first shifted by `-min + eps` with
/// `eps = 1e-9 * max(1, |min|)`. If the total is zero, every member gets
/// `1 / len`.
pub fn keep_probabilities(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    if n == 0 {
        return Vec::new();
    }
    let min = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = if min < 0.0 {
        let eps = 1e-9 * min.abs().max(1.0);
        fitness.iter().map(|f| f - min + eps).collect()
    } else {
        fitness.to_vec()
    };
    let total: f64 = shifted.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return vec![1.0 / n as f64; n];
    }
    shifted
        .iter()
        .map(|f| (f / total).clamp(0.0, 1.0))
        .collect()
}

/// Draws `tournament_size` distinct agents; each is independently kept with its
/// keep probability and removed otherwise.
pub fn fitness_proportionate_select(
    population: &[AgentState],
    price: f64,
    tournament_size: usize,
    rng: &mut dyn RngCore,
) -> Vec<u64> {
    let m = tournament_size.min(population.len());
    if m == 0 {
        return Vec::new();
    }
    let sample: Vec<usize> = index::sample(rng, population.len(), m).into_vec();
    let fitness: Vec<f64> = sample
        .iter()
        .map(|&i| population[i].profit(price))
        .collect();
    let keep = keep_probabilities(&fitness);
    sample
        .iter()
        .zip(keep)
        .filter(|&(_, p)| !rng.random_bool(p))
        .map(|(&i, _)| population[i].id)
        .collect()
}
