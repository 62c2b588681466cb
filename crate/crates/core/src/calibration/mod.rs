//! Fits the parameter-evolution SDEs to pooled agent-parameter series by
//! minimizing the summed KL divergence of fitted model marginals away from
//! the observed marginals.
//!
//! Each candidate is simulated forward from fixed innovations (common random
//! numbers), so the objective is a deterministic function of the candidate
//! during one calibration.

mod de;

pub use de::{differential_evolution, DeConfig, DeResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    fit_marginal_single_start, BinnedSample, Dist, Family, KlOptions, PooledParams,
};
use crate::error::{Error, Result};
use crate::simulation::RunRecord;
use crate::stochastic::{CmsInput, SdeKind, SdeSpec};

pub const PARAMETER_NAMES: [&str; 9] = [
    "theta_p_bid",
    "sigma_p_bid",
    "alpha_p_bid",
    "mu_n_shares",
    "sigma_n_shares",
    "alpha_n_shares",
    "mu_vol_pref",
    "sigma_vol_pref",
    "alpha_vol_pref",
];

/// Names of the three calibrated agent parameters, in process order.
pub const PROCESS_NAMES: [&str; 3] = ["p_bid", "n_shares", "vol_pref"];

/// Family fitted to the samples of each process.
pub const FAMILIES: [Family; 3] = [Family::StudentT, Family::StudentT, Family::LogNormal];
const KINDS: [SdeKind; 3] = [SdeKind::OuPbid, SdeKind::RwNshares, SdeKind::GeomVolpref];

/// The nine free parameters of the three agent-parameter processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParameters {
    pub theta_p_bid: f64,
    pub sigma_p_bid: f64,
    pub alpha_p_bid: f64,
    pub mu_n_shares: f64,
    pub sigma_n_shares: f64,
    pub alpha_n_shares: f64,
    pub mu_vol_pref: f64,
    pub sigma_vol_pref: f64,
    pub alpha_vol_pref: f64,
}

impl SdeParameters {
    /// Parameters with one tail exponent shared by all three processes.
    pub fn shared_alpha(
        theta: f64,
        sigma_p: f64,
        mu_n: f64,
        sigma_n: f64,
        mu_nu: f64,
        sigma_nu: f64,
        alpha: f64,
    ) -> Self {
        Self {
            theta_p_bid: theta,
            sigma_p_bid: sigma_p,
            alpha_p_bid: alpha,
            mu_n_shares: mu_n,
            sigma_n_shares: sigma_n,
            alpha_n_shares: alpha,
            mu_vol_pref: mu_nu,
            sigma_vol_pref: sigma_nu,
            alpha_vol_pref: alpha,
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 9] {
        let v = [
            self.theta_p_bid,
            self.sigma_p_bid,
            self.alpha_p_bid,
            self.mu_n_shares,
            self.sigma_n_shares,
            self.alpha_n_shares,
            self.mu_vol_pref,
            self.sigma_vol_pref,
            self.alpha_vol_pref,
        ];
        std::array::from_fn(|i| (PARAMETER_NAMES[i], v[i]))
    }

    /// `(drift, sigma, alpha)` of process `k` in [`PROCESS_NAMES`] order.
    fn process(&self, k: usize) -> (f64, f64, f64) {
        match k {
            0 => (self.theta_p_bid, self.sigma_p_bid, self.alpha_p_bid),
            1 => (self.mu_n_shares, self.sigma_n_shares, self.alpha_n_shares),
            _ => (self.mu_vol_pref, self.sigma_vol_pref, self.alpha_vol_pref),
        }
    }

    /// The three SDEs started from `x0` with step `dt`.
    pub fn specs(&self, x0: [f64; 3], dt: f64) -> [SdeSpec; 3] {
        std::array::from_fn(|k| {
            let (drift, sigma, alpha) = self.process(k);
            let mut s = SdeSpec::new(KINDS[k], drift, sigma, alpha, x0[k]);
            s.dt = dt;
            s
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlphaMode {
    Fixed {
        value: f64,
    },
    /// Searched within [`CalibrationBounds::alpha`], shared by the processes.
    Free,
}

impl Default for AlphaMode {
    fn default() -> Self {
        AlphaMode::Fixed { value: 1.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBounds {
    pub theta_p_bid: (f64, f64),
    /// Shared by the three noise scales.
    pub sigma: (f64, f64),
    pub mu_n_shares: (f64, f64),
    pub mu_vol_pref: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for CalibrationBounds {
    fn default() -> Self {
        Self {
            theta_p_bid: (0.0, 20.0),
            sigma: (1e-6, 5.0),
            mu_n_shares: (-1.0, 1.0),
            mu_vol_pref: (-0.1, 0.1),
            alpha: (1.7, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardBudget {
    pub paths: usize,
    /// Every `pool_stride`-th simulated value of each path enters the pool.
    pub pool_stride: usize,
}

impl Default for ForwardBudget {
    fn default() -> Self {
        Self {
            paths: 100,
            pool_stride: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProblem {
    pub targets: PooledParams,
    /// Initial values of the three processes.
    pub x0: [f64; 3],
    pub steps: usize,
    pub dt: f64,
    pub budget: ForwardBudget,
    pub alpha: AlphaMode,
    pub bounds: CalibrationBounds,
    pub kl: KlOptions,
    /// Seed of the common innovations.
    pub seed: u64,
}

impl CalibrationProblem {
    pub fn new(targets: PooledParams, x0: [f64; 3], steps: usize, dt: f64) -> Self {
        Self {
            targets,
            x0,
            steps,
            dt,
            budget: ForwardBudget::default(),
            alpha: AlphaMode::default(),
            bounds: CalibrationBounds::default(),
            kl: KlOptions::default(),
            seed: 0,
        }
    }

    /// Targets pooled from every period of every run; initial values are the
    /// ensemble means at `t = 0`; horizon is the runs' period count.
    pub fn from_runs(runs: &[RunRecord], dt: f64) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::InvalidConfig("calibration needs at least one run".into()))?;
        let n = runs.len() as f64;
        let x0 = [
            runs.iter().map(|r| r.mean_p_bid[0]).sum::<f64>() / n,
            runs.iter().map(|r| r.mean_n_shares[0]).sum::<f64>() / n,
            runs.iter().map(|r| r.mean_vol_pref[0]).sum::<f64>() / n,
        ];
        Ok(Self::new(
            PooledParams::from_runs(runs),
            x0,
            first.periods(),
            dt,
        ))
    }

    fn target(&self, k: usize) -> &[f64] {
        match k {
            0 => &self.targets.p_bid,
            1 => &self.targets.n_shares,
            _ => &self.targets.vol_pref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, name) in PROCESS_NAMES.iter().enumerate() {
            let t = self.target(k);
            if t.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "no target samples for {name}"
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "non-finite target sample for {name}"
                )));
            }
            if !self.x0[k].is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "non-finite initial value for {name}"
                )));
            }
        }
        if self.steps == 0 || self.budget.paths == 0 || self.budget.pool_stride == 0 {
            return Err(Error::InvalidConfig(
                "steps, paths and pool_stride must be positive".into(),
            ));
        }
        if self.steps < self.budget.pool_stride {
            return Err(Error::InvalidConfig(format!(
                "pool_stride {} exceeds the horizon of {} steps",
                self.budget.pool_stride, self.steps
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt {} must be positive",
                self.dt
            )));
        }
        let b = &self.bounds;
        for (name, (lo, hi)) in [
            ("theta_p_bid", b.theta_p_bid),
            ("sigma", b.sigma),
            ("mu_n_shares", b.mu_n_shares),
            ("mu_vol_pref", b.mu_vol_pref),
            ("alpha", b.alpha),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "bounds of {name} must satisfy lower < upper"
                )));
            }
        }
        if b.theta_p_bid.0 < 0.0 || b.sigma.0 <= 0.0 || b.alpha.0 <= 0.0 || b.alpha.1 > 2.0 {
            return Err(Error::InvalidConfig(
                "theta must be non-negative, sigma positive, alpha within (0, 2]".into(),
            ));
        }
        if let AlphaMode::Fixed { value } = self.alpha {
            if !(value > 0.0 && value <= 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha {value} outside (0, 2]"
                )));
            }
        }
        Ok(())
    }

    /// Search box: `theta, sigma_p, mu_n, sigma_n, mu_nu, sigma_nu` and,
    /// when free, the shared `alpha`.
    pub fn search_bounds(&self) -> Vec<(f64, f64)> {
        let b = &self.bounds;
        let mut v = vec![
            b.theta_p_bid,
            b.sigma,
            b.mu_n_shares,
            b.sigma,
            b.mu_vol_pref,
            b.sigma,
        ];
        if self.alpha == AlphaMode::Free {
            v.push(b.alpha);
        }
        v
    }

    pub fn decode(&self, v: &[f64]) -> SdeParameters {
        let alpha = match self.alpha {
            AlphaMode::Fixed { value } => value,
            AlphaMode::Free => v[6],
        };
        SdeParameters::shared_alpha(v[0], v[1], v[2], v[3], v[4], v[5], alpha)
    }

    pub fn encode(&self, p: &SdeParameters) -> Vec<f64> {
        let mut v = vec![
            p.theta_p_bid,
            p.sigma_p_bid,
            p.mu_n_shares,
            p.sigma_n_shares,
            p.mu_vol_pref,
            p.sigma_vol_pref,
        ];
        if self.alpha == AlphaMode::Free {
            v.push(p.alpha_p_bid);
        }
        v
    }
}

/// One process's contribution to the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessFit {
    pub parameter: String,
    pub family: Family,
    pub fit: Option<Dist>,
    pub kl: f64,
    pub clamp_count: usize,
    /// Pooled values left out of a log-normal fit for being non-positive.
    pub dropped: usize,
}

/// Figure-ready comparison of one process on the bins of the target sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub abm_density: Vec<f64>,
    pub fitted_pdf: Vec<f64>,
    pub simulated_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub parameters: SdeParameters,
    pub alpha_mode: AlphaMode,
    /// The optimizer's search vector.
    pub vector: Vec<f64>,
    pub objective: f64,
    pub processes: Vec<ProcessFit>,
    pub overlays: Vec<Overlay>,
    pub trace: Vec<f64>,
    pub generations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
    pub x0: [f64; 3],
}

/// The calibration objective with its innovations and binned targets
/// prepared once.
pub struct Objective<'a> {
    problem: &'a CalibrationProblem,
    binned: [BinnedSample; 3],
    inputs: [Vec<CmsInput>; 3],
    /// Unit stable draws when `alpha` is fixed.
    unit: Option<[Vec<f64>; 3]>,
}

struct Simulated {
    pool: Vec<f64>,
    clamp_count: usize,
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a CalibrationProblem) -> Result<Self> {
        problem.validate()?;
        let binned = [0, 1, 2].map(|k| BinnedSample::new(problem.target(k), &problem.kl));
        let [Some(b0), Some(b1), Some(b2)] = binned else {
            return Err(Error::Degenerate("a target sample has no spread".into()));
        };
        let n = problem.budget.paths * problem.steps;
        let inputs: [Vec<CmsInput>; 3] = std::array::from_fn(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
            rng.set_stream(k as u64);
            (0..n).map(|_| CmsInput::draw(&mut rng)).collect()
        });
        let unit = match problem.alpha {
            AlphaMode::Fixed { value } => Some(std::array::from_fn(|k| {
                inputs[k].iter().map(|c| c.stable(value)).collect()
            })),
            AlphaMode::Free => None,
        };
        Ok(Self {
            problem,
            binned: [b0, b1, b2],
            inputs,
            unit,
        })
    }

    fn simulate(&self, k: usize, spec: &SdeSpec) -> Option<Simulated> {
        let steps = self.problem.steps;
        let stride = self.problem.budget.pool_stride;
        let noise = spec.noise_scale();
        let mut pool = Vec::with_capacity(self.problem.budget.paths * (steps / stride));
        let mut clamp_count = 0;
        for path in 0..self.problem.budget.paths {
            let mut x = spec.x0;
            let base = path * steps;
            for step in 0..steps {
                let draw = match &self.unit {
                    Some(u) => u[k][base + step],
                    None => self.inputs[k][base + step].stable(spec.alpha),
                };
                let (next, clamped) = spec.advance(x, draw, noise);
                if !next.is_finite() {
                    return None;
                }
                clamp_count += clamped as usize;
                x = next;
                if (step + 1) % stride == 0 {
                    pool.push(x);
                }
            }
        }
        Some(Simulated { pool, clamp_count })
    }

    fn process(&self, k: usize, spec: &SdeSpec) -> (ProcessFit, Vec<f64>) {
        let mut out = ProcessFit {
            parameter: PROCESS_NAMES[k].to_string(),
            family: FAMILIES[k],
            fit: None,
            kl: f64::INFINITY,
            clamp_count: 0,
            dropped: 0,
        };
        let Some(sim) = self.simulate(k, spec) else {
            return (out, Vec::new());
        };
        out.clamp_count = sim.clamp_count;
        let mut pool = sim.pool;
        if FAMILIES[k] == Family::LogNormal {
            let before = pool.len();
            pool.retain(|v| *v > 0.0);
            out.dropped = before - pool.len();
        }
        if let Ok(fit) = fit_marginal_single_start(&pool, FAMILIES[k]) {
            out.kl = self.binned[k].kl_to_cdf(|x| fit.dist.cdf(x));
            out.fit = Some(fit.dist);
        }
        (out, pool)
    }

    /// Per-process fits, KL terms and simulated pools under `params`.
    pub fn evaluate_parameters(&self, params: &SdeParameters) -> Vec<(ProcessFit, Vec<f64>)> {
        let specs = params.specs(self.problem.x0, self.problem.dt);
        (0..3).map(|k| self.process(k, &specs[k])).collect()
    }

    /// Summed KL divergence; `+inf` when a forward path explodes or a fit fails.
    pub fn value(&self, params: &SdeParameters) -> f64 {
        let specs = params.specs(self.problem.x0, self.problem.dt);
        let mut total = 0.0;
        for (k, spec) in specs.iter().enumerate() {
            total += self.process(k, spec).0.kl;
            if !total.is_finite() {
                return f64::INFINITY;
            }
        }
        total
    }

    pub fn value_of_vector(&self, v: &[f64]) -> f64 {
        self.value(&self.problem.decode(v))
    }

    fn overlay(&self, k: usize, fit: Option<&Dist>, pool: &[f64]) -> Overlay {
        let b = &self.binned[k];
        let grid = b.centers();
        Overlay {
            parameter: PROCESS_NAMES[k].to_string(),
            abm_density: b.density_of(self.problem.target(k)),
            fitted_pdf: grid
                .iter()
                .map(|&x| fit.map_or(f64::NAN, |d| d.pdf(x)))
                .collect(),
            simulated_density: b.density_of(pool),
            grid,
        }
    }
}

/// Runs differential evolution on the problem. The search box of `de` is
/// replaced by the problem's bounds.
pub fn calibrate(problem: &CalibrationProblem, de: &DeConfig) -> Result<CalibrationResult> {
    let objective = Objective::new(problem)?;
    let config = DeConfig {
        bounds: problem.search_bounds(),
        ..de.clone()
    };
    let result = differential_evolution(|v| objective.value_of_vector(v), &config)?;
    let parameters = problem.decode(&result.best);
    let evaluated = objective.evaluate_parameters(&parameters);
    let overlays = evaluated
        .iter()
        .enumerate()
        .map(|(k, (fit, pool))| objective.overlay(k, fit.fit.as_ref(), pool))
        .collect();
    Ok(CalibrationResult {
        parameters,
        alpha_mode: problem.alpha,
        vector: result.best,
        objective: result.best_value,
        processes: evaluated.into_iter().map(|(f, _)| f).collect(),
        overlays,
        trace: result.trace,
        generations: result.generations,
        evaluations: result.evaluations,
        converged: result.converged,
        budget_exhausted: result.budget_exhausted,
        x0: problem.x0,
    })
}

/// Pooled values of the three processes simulated at `params`, in the
/// layout of ensemble targets (every step of every path, including `t = 0`).
pub fn synthetic_targets(
    params: &SdeParameters,
    x0: [f64; 3],
    steps: usize,
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<PooledParams> {
    let specs = params.specs(x0, dt);
    let mut pools: [Vec<f64>; 3] = Default::default();
    for (k, spec) in specs.iter().enumerate() {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let noise = spec.noise_scale();
        for _ in 0..paths {
            let mut x = spec.x0;
            pools[k].push(x);
            for _ in 0..steps {
                let draw = CmsInput::draw(&mut rng).stable(spec.alpha);
                x = spec.advance(x, draw, noise).0;
                pools[k].push(x);
            }
        }
    }
    let [p_bid, n_shares, vol_pref] = pools;
    Ok(PooledParams {
        p_bid,
        n_shares,
        vol_pref,
    })
}
