//! Period loop for one market run and seeded, order-independent ensembles.
//!
//! Each period runs, in order: stale-order eviction, order generation by every
//! agent (in a freshly shuffled order), one batch cross, settlement of fills,
//! recording, and the selection hook.
//!
//! Run `i` of an ensemble with master seed `s` draws all of its randomness from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`. Streams of the
//! counter-based generator never overlap, so a run's output depends only on
//! `(s, i)` and not on scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentState, ParamPriors};
use crate::analysis::{fit_psd_exponent, psd, FitBand};
use crate::book::{OrderBook, Side, DEFAULT_MAX_AGE, TICK};
use crate::error::{Error, Result};
use crate::selection::{
    maybe_select, Endowment, Injection, MechanismKind, MechanismRegistry, SelectionConfig,
    SelectionEvent, SelectionMechanism,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_agents: usize,
    pub periods_per_day: u64,
    pub days: u64,
    pub selection: SelectionConfig,
    pub priors: ParamPriors,
    pub initial_price: f64,
    pub initial_cash: f64,
    pub initial_shares: i64,
    /// Probability that an agent submits an order in a given period.
    pub p_trade: f64,
    pub max_order_age: u64,
    pub seed: u64,
    pub n_runs: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 100,
            periods_per_day: 24,
            days: 252,
            selection: SelectionConfig::default(),
            priors: ParamPriors::default(),
            initial_price: 100.0,
            initial_cash: 1000.0,
            initial_shares: 100,
            p_trade: 1.0,
            max_order_age: DEFAULT_MAX_AGE,
            seed: 0,
            n_runs: 1,
        }
    }
}

impl SimConfig {
    pub fn periods(&self) -> u64 {
        self.periods_per_day * self.days
    }

    /// Length of one period in days.
    pub fn dt(&self) -> f64 {
        1.0 / self.periods_per_day as f64
    }

    pub fn endowment(&self) -> Endowment {
        Endowment {
            cash: self.initial_cash,
            shares: self.initial_shares,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_agents == 0 {
            return bad("sim.n_agents must be at least 1".into());
        }
        if self.periods_per_day == 0 {
            return bad("sim.periods_per_day must be at least 1".into());
        }
        if self.n_runs == 0 {
            return bad("sim.n_runs must be at least 1".into());
        }
        if !(self.initial_price.is_finite() && self.initial_price >= TICK) {
            return bad(format!(
                "sim.initial_price = {} must be a finite price >= {TICK}",
                self.initial_price
            ));
        }
        if !self.initial_cash.is_finite() {
            return bad("sim.initial_cash must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.p_trade) {
            return bad(format!(
                "sim.p_trade = {} is not a probability",
                self.p_trade
            ));
        }
        self.selection.validate(self.n_agents)?;
        self.priors.validate()
    }

    /// The generator for run `run_index`.
    pub fn run_rng(&self, run_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(run_index as u64);
        rng
    }
}

/// Full time series of one run. Per-period vectors have `T + 1` entries
/// (index 0 is the initial state) except `returns`, which has `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub mechanism: MechanismKind,
    pub price: Vec<f64>,
    /// `log10 X(t) - log10 X(t-1)`.
    pub returns: Vec<f64>,
    pub volume: Vec<u64>,
    pub mean_p_bid: Vec<f64>,
    pub sd_p_bid: Vec<f64>,
    pub mean_n_shares: Vec<f64>,
    pub sd_n_shares: Vec<f64>,
    pub mean_vol_pref: Vec<f64>,
    pub sd_vol_pref: Vec<f64>,
    /// Mean mark-to-market profit over active agents.
    pub mean_profit: Vec<f64>,
    /// Mean profit excluding the endowments handed to replacement agents.
    pub mean_profit_net: Vec<f64>,
    pub events: Vec<SelectionEvent>,
    /// Cumulative portfolio flows caused by replacement.
    pub injection: Injection,
    pub floor_events: u64,
    pub final_agent_ids: Vec<u64>,
}

impl RunRecord {
    pub fn periods(&self) -> usize {
        self.returns.len()
    }
}

/// Running state of one market.
pub struct Market {
    config: SimConfig,
    mechanism: Box<dyn SelectionMechanism>,
    rng: ChaCha8Rng,
    population: Vec<AgentState>,
    /// Population slot of each live agent id; `usize::MAX` for departed ids.
    slot_of: Vec<usize>,
    book: OrderBook,
    price: f64,
    period: u64,
    next_agent_id: u64,
    next_order_id: u64,
    order_sequence: Vec<usize>,
    record: RunRecord,
}

impl Market {
    pub fn new(config: &SimConfig, run_index: usize) -> Result<Self> {
        Self::with_registry(config, run_index, &MechanismRegistry::default())
    }

    pub fn with_registry(
        config: &SimConfig,
        run_index: usize,
        registry: &MechanismRegistry,
    ) -> Result<Self> {
        config.validate()?;
        let mechanism = registry.build_configured(&config.selection)?;
        let mut rng = config.run_rng(run_index);
        let population: Vec<AgentState> = (0..config.n_agents as u64)
            .map(|id| {
                AgentState::new(
                    id,
                    config.priors.sample(&mut rng),
                    config.initial_cash,
                    config.initial_shares,
                    0,
                )
            })
            .collect();
        let t = config.periods() as usize;
        let with_cap = |n: usize| Vec::with_capacity(n);
        let record = RunRecord {
            run_index,
            seed: config.seed,
            mechanism: config.selection.kind,
            price: with_cap(t + 1),
            returns: with_cap(t),
            volume: Vec::with_capacity(t + 1),
            mean_p_bid: with_cap(t + 1),
            sd_p_bid: with_cap(t + 1),
            mean_n_shares: with_cap(t + 1),
            sd_n_shares: with_cap(t + 1),
            mean_vol_pref: with_cap(t + 1),
            sd_vol_pref: with_cap(t + 1),
            mean_profit: with_cap(t + 1),
            mean_profit_net: with_cap(t + 1),
            events: Vec::new(),
            injection: Injection::default(),
            floor_events: 0,
            final_agent_ids: Vec::new(),
        };
        let mut market = Self {
            mechanism,
            rng,
            slot_of: (0..population.len()).collect(),
            next_agent_id: population.len() as u64,
            order_sequence: (0..population.len()).collect(),
            population,
            book: OrderBook::new(config.max_order_age),
            price: config.initial_price,
            period: 0,
            next_order_id: 0,
            record,
            config: config.clone(),
        };
        market.record_period(0);
        Ok(market)
    }

    pub fn population(&self) -> &[AgentState] {
        &self.population
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    /// Advances the market by one period.
    pub fn step(&mut self) -> Result<()> {
        self.period += 1;
        let t = self.period;
        self.book.evict_stale(t);

        self.order_sequence.shuffle(&mut self.rng);
        let mut orders = Vec::with_capacity(self.population.len());
        for &slot in &self.order_sequence {
            if self.config.p_trade < 1.0 && !self.rng.random_bool(self.config.p_trade) {
                continue;
            }
            let agent = &self.population[slot];
            if let Some(order) =
                agent.generate_order(self.price, t, self.next_order_id, &mut self.rng)
            {
                self.next_order_id += 1;
                orders.push(order);
            }
        }
        self.book.submit_batch(orders)?;

        let cleared = self.book.clear_batch(self.price);
        if cleared.floored {
            self.record.floor_events += 1;
        }
        for fill in &cleared.fills {
            let buyer = self.slot_of[fill.buyer as usize];
            let seller = self.slot_of[fill.seller as usize];
            self.population[buyer].settle(Side::Bid, fill.quantity, fill.price);
            self.population[seller].settle(Side::Ask, fill.quantity, fill.price);
        }
        let prev = self.price;
        self.price = cleared.new_price;
        self.record.returns.push(self.price.log10() - prev.log10());
        self.record.volume.push(cleared.executed_volume);
        self.record_period(t);

        let selected = maybe_select(
            &mut self.population,
            self.price,
            t,
            self.mechanism.as_ref(),
            &self.config.selection,
            &self.config.priors,
            self.config.endowment(),
            &mut self.next_agent_id,
            &mut self.rng,
        )?;
        if let Some((event, injection)) = selected {
            self.book.cancel_agents(&event.removed_ids);
            for id in &event.removed_ids {
                self.slot_of[*id as usize] = usize::MAX;
            }
            self.slot_of.resize(self.next_agent_id as usize, usize::MAX);
            for (slot, agent) in self.population.iter().enumerate() {
                self.slot_of[agent.id as usize] = slot;
            }
            let acc = &mut self.record.injection;
            acc.cash_in += injection.cash_in;
            acc.cash_out += injection.cash_out;
            acc.shares_in += injection.shares_in;
            acc.shares_out += injection.shares_out;
            self.record.events.push(event);
        }
        Ok(())
    }

    fn record_period(&mut self, t: u64) {
        let n = self.population.len() as f64;
        let stats = |f: &dyn Fn(&AgentState) -> f64| {
            let mean = self.population.iter().map(f).sum::<f64>() / n;
            let var = self
                .population
                .iter()
                .map(|a| (f(a) - mean).powi(2))
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        };
        let (m, s) = stats(&|a| a.params.p_bid);
        let (mn, sn) = stats(&|a| a.params.n_shares);
        let (mv, sv) = stats(&|a| a.params.vol_pref);
        let price = self.price;
        let profit = self.population.iter().map(|a| a.profit(price)).sum::<f64>() / n;
        let inj = &self.record.injection;
        let gifted = (inj.cash_in + inj.shares_in as f64 * price) / n;

        let r = &mut self.record;
        if t == 0 {
            r.volume.push(0);
        }
        r.price.push(price);
        r.mean_p_bid.push(m);
        r.sd_p_bid.push(s);
        r.mean_n_shares.push(mn);
        r.sd_n_shares.push(sn);
        r.mean_vol_pref.push(mv);
        r.sd_vol_pref.push(sv);
        r.mean_profit.push(profit);
        r.mean_profit_net.push(profit - gifted);
    }

    pub fn finish(mut self) -> RunRecord {
        self.record.final_agent_ids = self.population.iter().map(|a| a.id).collect();
        self.record
    }
}

/// Runs one full simulation of `config.periods()` steps.
pub fn run(config: &SimConfig, run_index: usize) -> Result<RunRecord> {
    let mut market = Market::new(config, run_index)?;
    for _ in 0..config.periods() {
        market.step()?;
    }
    Ok(market.finish())
}

/// Cross-run aggregates. Trajectory means are plain averages over successful
/// runs, accumulated in run-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAggregates {
    pub n_runs: usize,
    pub mean_p_bid: Vec<f64>,
    pub mean_n_shares: Vec<f64>,
    pub mean_vol_pref: Vec<f64>,
    pub mean_profit: Vec<f64>,
    pub mean_profit_net: Vec<f64>,
    /// Price-spectrum exponent of each run (`None` when the series is too short).
    pub gamma: Vec<Option<f64>>,
    /// Running mean of `gamma` over runs in index order.
    pub gamma_running_mean: Vec<f64>,
}

impl EnsembleAggregates {
    pub fn from_runs(runs: &[RunRecord], dt: f64, band: &FitBand) -> Self {
        let avg = |get: &dyn Fn(&RunRecord) -> &Vec<f64>| -> Vec<f64> {
            let Some(first) = runs.first() else {
                return Vec::new();
            };
            let mut acc = vec![0.0; get(first).len()];
            for r in runs {
                for (a, v) in acc.iter_mut().zip(get(r)) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / runs.len() as f64).collect()
        };
        let gamma: Vec<Option<f64>> = runs
            .iter()
            .map(|r| {
                psd(&r.price[1..], dt)
                    .and_then(|p| fit_psd_exponent(&p, band))
                    .ok()
            })
            .collect();
        let mut gamma_running_mean = Vec::new();
        let (mut sum, mut n) = (0.0, 0usize);
        for g in gamma.iter().flatten() {
            sum += g;
            n += 1;
            gamma_running_mean.push(sum / n as f64);
        }
        Self {
            n_runs: runs.len(),
            mean_p_bid: avg(&|r| &r.mean_p_bid),
            mean_n_shares: avg(&|r| &r.mean_n_shares),
            mean_vol_pref: avg(&|r| &r.mean_vol_pref),
            mean_profit: avg(&|r| &r.mean_profit),
            mean_profit_net: avg(&|r| &r.mean_profit_net),
            gamma,
            gamma_running_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub aggregates: EnsembleAggregates,
}

/// Runs `config.n_runs` simulations on the current rayon pool.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let outcomes: Vec<(usize, Result<RunRecord>)> = (0..config.n_runs)
        .into_par_iter()
        .map(|i| (i, run(config, i)))
        .collect();
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (i, outcome) in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(RunFailure {
                run_index: i,
                error: e.to_string(),
            }),
        }
    }
    let aggregates = EnsembleAggregates::from_runs(&runs, config.dt(), &FitBand::default());
    Ok(EnsembleResult {
        runs,
        failures,
        aggregates,
    })
}

/// [`run_ensemble`] on a dedicated pool of `jobs` threads.
pub fn run_ensemble_with_jobs(config: &SimConfig, jobs: usize) -> Result<EnsembleResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_ensemble(config))
}
