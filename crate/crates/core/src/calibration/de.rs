//! Differential evolution, DE/rand/1/bin with clipping to the bounds.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population_size: usize,
    /// Mutation scale `F`.
    pub differential_weight: f64,
    pub crossover_rate: f64,
    pub max_generations: usize,
    /// Relative improvement over `stall_generations` below which the search
    /// stops; both the best and the population-mean objective must stall.
    pub tolerance: f64,
    pub stall_generations: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: 40,
            differential_weight: 0.8,
            crossover_rate: 0.9,
            max_generations: 200,
            tolerance: 1e-6,
            stall_generations: 20,
            bounds: Vec::new(),
            seed: 0,
        }
    }
}

impl DeConfig {
    pub fn with_bounds(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            bounds,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "population_size {} below the minimum of 4",
                self.population_size
            )));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight <= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "differential_weight {} outside (0, 2]",
                self.differential_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::InvalidConfig(format!(
                "crossover_rate {} outside [0, 1]",
                self.crossover_rate
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig(
                "tolerance must be non-negative".into(),
            ));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidConfig("no search dimensions".into()));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "bounds of dimension {i} must be finite with lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best value after initialization and after every generation.
    pub trace: Vec<f64>,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Generation limit reached before the stall criterion fired.
    pub budget_exhausted: bool,
}

fn evaluate<F: Fn(&[f64]) -> f64 + Sync>(objective: &F, points: &[Vec<f64>]) -> Vec<f64> {
    points
        .par_iter()
        .map(|x| {
            let v = objective(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Minimizes `objective` over the box `config.bounds`.
///
/// Trial vectors of a generation are built sequentially from the seeded
/// generator and evaluated in parallel, so the result does not depend on the
/// thread count. Non-finite objective values count as `+inf`.
pub fn differential_evolution<F>(objective: F, config: &DeConfig) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.bounds.len();
    let np = config.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect();
    let mut values = evaluate(&objective, &pop);
    let mut evaluations = np;

    let best_index = |values: &[f64]| {
        values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    let mut best = best_index(&values);
    let mut trace = vec![values[best]];
    let population_mean = |values: &[f64]| values.iter().sum::<f64>() / values.len() as f64;
    let mut means = vec![population_mean(&values)];
    let mut converged = false;
    let mut generations = 0;

    for generation in 1..=config.max_generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let picks = loop {
                    let s = sample(&mut rng, np, 3);
                    let v = [s.index(0), s.index(1), s.index(2)];
                    if !v.contains(&i) {
                        break v;
                    }
                };
                let forced = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        let (lo, hi) = config.bounds[j];
                        if j == forced || rng.random::<f64>() < config.crossover_rate {
                            let m = pop[picks[0]][j]
                                + config.differential_weight
                                    * (pop[picks[1]][j] - pop[picks[2]][j]);
                            m.clamp(lo, hi)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_values = evaluate(&objective, &trials);
        evaluations += np;
        for (i, (trial, value)) in trials.into_iter().zip(trial_values).enumerate() {
            if value <= values[i] {
                pop[i] = trial;
                values[i] = value;
            }
        }
        best = best_index(&values);
        trace.push(values[best]);
        means.push(population_mean(&values));
        generations = generation;

        if generation >= config.stall_generations && config.stall_generations > 0 {
            let stalled = |series: &[f64]| {
                let then = series[generation - config.stall_generations];
                let now = series[generation];
                then.is_finite() && then - now <= config.tolerance * then.abs()
            };
            if stalled(&trace) && stalled(&means) {
                converged = true;
                break;
            }
        }
    }

    Ok(DeResult {
        best: pop[best].clone(),
        best_value: values[best],
        trace,
        generations,
        evaluations,
        converged,
        budget_exhausted: !converged,
    })
}
