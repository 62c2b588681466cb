//! Gaussian GARCH(1,1) by maximum likelihood:
//!
//! ```text
//! r(t)       = mu + e(t)
//! e(t)       = sigma(t) z(t),   z ~ N(0, 1)
//! sigma^2(t) = xi + alpha e^2(t-1) + beta sigma^2(t-1)
//! ```
//!
//! The fit runs on standardized returns and maps back afterwards. Parameters
//! are optimized unconstrained as `(mu, ln xi, logit s, logit w)` where
//! `s = alpha + beta` is the persistence and `w = alpha / s`, which keeps
//! `xi > 0`, `alpha, beta >= 0` and `alpha + beta < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{bfgs, BfgsOptions};

pub const MIN_GARCH_LEN: usize = 100;

/// Upper limit on persistence so that the process stays covariance-stationary.
const MAX_PERSISTENCE: f64 = 1.0 - 1e-6;

const STARTS: [(f64, f64); 5] = [
    (0.5, 0.2),
    (0.9, 0.1),
    (0.98, 0.05),
    (0.7, 0.5),
    (0.995, 0.02),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub mu: f64,
    pub xi: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Fitted conditional volatility, one value per return.
    pub sigma: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub mu: f64,
    pub xi: f64,
    pub alpha: f64,
    pub beta: f64,
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
}

/// Conditional variance path; `sigma^2(0)` is the sample variance of `returns`.
pub fn conditional_variance(returns: &[f64], p: &GarchParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len());
    let mut var = sample_variance(returns);
    for (t, r) in returns.iter().enumerate() {
        if t > 0 {
            let e = returns[t - 1] - p.mu;
            var = p.xi + p.alpha * e * e + p.beta * var;
        }
        out.push(var);
        let _ = r;
    }
    out
}

/// Gaussian log-likelihood of `returns` under `p`.
pub fn log_likelihood(returns: &[f64], p: &GarchParams) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut var = sample_variance(returns);
    let mut ll = 0.0;
    let mut prev_e = 0.0;
    for (t, r) in returns.iter().enumerate() {
        if t > 0 {
            var = p.xi + p.alpha * prev_e * prev_e + p.beta * var;
        }
        if !(var > 0.0 && var.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let e = r - p.mu;
        ll -= 0.5 * (ln2pi + var.ln() + e * e / var);
        prev_e = e;
    }
    ll
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn decode(theta: &[f64]) -> GarchParams {
    let s = MAX_PERSISTENCE * logistic(theta[2]);
    let w = logistic(theta[3]);
    GarchParams {
        mu: theta[0],
        xi: theta[1].exp(),
        alpha: s * w,
        beta: s * (1.0 - w),
    }
}

/// Maximum-likelihood GARCH(1,1) with multi-start BFGS.
pub fn garch11_fit(returns: &[f64]) -> Result<GarchFit> {
    if returns.len() < MIN_GARCH_LEN {
        return Err(Error::TooShort {
            needed: MIN_GARCH_LEN,
            got: returns.len(),
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Degenerate("non-finite return".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let sd = sample_variance(returns).sqrt();
    if !(sd > 0.0) || sd / mean.abs().max(f64::MIN_POSITIVE) < 1e-12 {
        return Err(Error::Degenerate("constant return series".into()));
    }
    let z: Vec<f64> = returns.iter().map(|r| (r - mean) / sd).collect();
    let objective = |theta: &[f64]| {
        let ll = log_likelihood(&z, &decode(theta));
        if ll.is_finite() {
            -ll / n
        } else {
            f64::INFINITY
        }
    };

    let opts = BfgsOptions::default();
    let mut best: Option<(GarchParams, f64, bool)> = None;
    for (s, w) in STARTS {
        let x0 = [0.0, (1.0 - s).ln(), logit(s / MAX_PERSISTENCE), logit(w)];
        let m = bfgs(objective, &x0, &opts);
        if best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((decode(&m.x), m.value, m.converged));
        }
    }
    let (mut params, mut value, converged) = best.expect("at least one start");

    // The constant-variance model is the closure of the search space; never
    // return anything worse than it.
    let flat = GarchParams {
        mu: 0.0,
        xi: 1.0,
        alpha: 0.0,
        beta: 0.0,
    };
    let flat_value = -log_likelihood(&z, &flat) / n;
    if flat_value < value {
        params = flat;
        value = flat_value;
    }

    let fitted = GarchParams {
        mu: mean + sd * params.mu,
        xi: params.xi * sd * sd,
        alpha: params.alpha,
        beta: params.beta,
    };
    let sigma = conditional_variance(returns, &fitted)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(GarchFit {
        mu: fitted.mu,
        xi: fitted.xi,
        alpha: fitted.alpha,
        beta: fitted.beta,
        sigma,
        loglik: -value * n - n * sd.ln(),
        converged,
    })
}
