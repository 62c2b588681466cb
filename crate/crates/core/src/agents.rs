//! Zero-intelligence traders: portfolio bookkeeping, profit, and random order
//! generation around the last market price.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::book::{Order, Side, TICK};
use crate::error::{Error, Result};

/// The three behavioural parameters of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Probability that an order is a bid.
    pub p_bid: f64,
    /// Poisson mean of the order size.
    pub n_shares: f64,
    /// Volatility preference: half-width of the uniform quote perturbation.
    pub vol_pref: f64,
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p_bid)
            && self.n_shares.is_finite()
            && self.n_shares >= 0.0
            && self.vol_pref.is_finite()
            && self.vol_pref >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "agent parameters out of domain: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: u64,
    pub params: AgentParams,
    /// Cash may go negative.
    pub cash: f64,
    /// Inventory may go negative (short sales).
    pub shares: i64,
    pub born_at: u64,
}

impl AgentState {
    pub fn new(id: u64, params: AgentParams, cash: f64, shares: i64, born_at: u64) -> Self {
        Self {
            id,
            params,
            cash,
            shares,
            born_at,
        }
    }

    /// Mark-to-market fitness: cash plus inventory valued at `price`.
    pub fn profit(&self, price: f64) -> f64 {
        self.cash + self.shares as f64 * price
    }

    /// Draws this period's order, if any.
    ///
    /// Side is a Bernoulli(`p_bid`) draw, size is Poisson(`n_shares`) and the
    /// limit price is `price + vol_pref * u` with `u ~ U[-1, 1]`, floored at
    /// [`TICK`]. A zero-size draw yields no order.
    pub fn generate_order<R: Rng + ?Sized>(
        &self,
        price: f64,
        period: u64,
        order_id: u64,
        rng: &mut R,
    ) -> Option<Order> {
        let side = if rng.random_bool(self.params.p_bid) {
            Side::Bid
        } else {
            Side::Ask
        };
        let quantity = sample_poisson(self.params.n_shares, rng);
        if quantity == 0 {
            return None;
        }
        let u: f64 = rng.random_range(-1.0..=1.0);
        let limit = (price + self.params.vol_pref * u).max(TICK);
        Some(Order {
            id: order_id,
            agent_id: self.id,
            side,
            price: limit,
            quantity,
            submitted_at: period,
        })
    }

    /// Applies one fill from this agent's point of view.
    pub fn settle(&mut self, side: Side, quantity: u64, price: f64) {
        let notional = quantity as f64 * price;
        match side {
            Side::Bid => {
                self.cash -= notional;
                self.shares += quantity as i64;
            }
            Side::Ask => {
                self.cash += notional;
                self.shares -= quantity as i64;
            }
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// A univariate prior for one agent parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Fixed(f64),
    Uniform { low: f64, high: f64 },
    Gamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Prior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Fixed(v) => v,
            Prior::Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            Prior::Gamma { shape, scale } => Gamma::new(shape, scale)
                .map(|d| d.sample(rng))
                .unwrap_or(shape * scale),
            Prior::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map(|d| d.sample(rng))
                .unwrap_or(mu.exp()),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidConfig(format!("prior for {name}: {why}")));
        match *self {
            Prior::Fixed(v) if !v.is_finite() => bad("value must be finite"),
            Prior::Uniform { low, high }
                if !(low.is_finite() && high.is_finite() && low <= high) =>
            {
                bad("uniform bounds must be finite with low <= high")
            }
            Prior::Gamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                bad("gamma shape and scale must be positive")
            }
            Prior::LogNormal { mu, sigma } if !(mu.is_finite() && sigma >= 0.0) => {
                bad("log-normal needs finite mu and sigma >= 0")
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Fixed(v) => write!(f, "fixed({v})"),
            Prior::Uniform { low, high } => write!(f, "uniform({low}, {high})"),
            Prior::Gamma { shape, scale } => write!(f, "gamma({shape}, {scale})"),
            Prior::LogNormal { mu, sigma } => write!(f, "lognormal({mu}, {sigma})"),
        }
    }
}

impl FromStr for Prior {
    type Err = Error;

    /// Parses `fixed(v)`, `uniform(low, high)`, `gamma(shape, scale)` or
    /// `lognormal(mu, sigma)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let err = || Error::InvalidConfig(format!("cannot parse prior `{s}`"));
        let open = s.find('(').ok_or_else(err)?;
        if !s.ends_with(')') {
            return Err(err());
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err())?;
        match (name.as_str(), args.as_slice()) {
            ("fixed", [v]) => Ok(Prior::Fixed(*v)),
            ("uniform", [low, high]) => Ok(Prior::Uniform {
                low: *low,
                high: *high,
            }),
            ("gamma", [shape, scale]) => Ok(Prior::Gamma {
                shape: *shape,
                scale: *scale,
            }),
            ("lognormal", [mu, sigma]) => Ok(Prior::LogNormal {
                mu: *mu,
                sigma: *sigma,
            }),
            _ => Err(err()),
        }
    }
}

/// Stationary distributions used for the initial population and for
/// innovation draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPriors {
    pub p_bid: Prior,
    pub n_shares: Prior,
    pub vol_pref: Prior,
}

impl Default for ParamPriors {
    fn default() -> Self {
        Self {
            p_bid: Prior::Uniform {
                low: 0.0,
                high: 1.0,
            },
            n_shares: Prior::Gamma {
                shape: 2.0,
                scale: 5.0,
            },
            vol_pref: Prior::LogNormal {
                mu: 0.0,
                sigma: 0.5,
            },
        }
    }
}

impl ParamPriors {
    /// Draws a parameter triple; draws are clamped into the parameter domain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentParams {
        let p_bid = self.p_bid.sample(rng).clamp(0.0, 1.0);
        let n_shares = self.n_shares.sample(rng).max(0.0);
        let vol_pref = self.vol_pref.sample(rng).max(0.0);
        AgentParams {
            p_bid,
            n_shares,
            vol_pref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.p_bid.validate("p_bid")?;
        self.n_shares.validate("n_shares")?;
        self.vol_pref.validate("vol_pref")
    }
}
