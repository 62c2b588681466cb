//! Maximum-likelihood fits of parametric marginals to pooled samples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{
    ContinuousCDF, LogNormal as LogNormalDist, Normal as NormalDist, StudentsT,
};
use statrs::function::gamma::ln_gamma;

use super::stats::{mean, median, quantile};
use crate::error::{Error, Result};
use crate::optim::{bfgs, BfgsOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const T_NORMAL_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    StudentT,
    LogNormal,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Normal => "normal",
            Family::StudentT => "student_t",
            Family::LogNormal => "lognormal",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Family::Normal),
            "t" | "student_t" | "studentt" => Ok(Family::StudentT),
            "lognormal" | "log_normal" => Ok(Family::LogNormal),
            other => Err(Error::InvalidConfig(format!(
                "unknown distribution family `{other}`"
            ))),
        }
    }
}

/// A fitted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Dist {
    Normal { mu: f64, sigma: f64 },
    StudentT { location: f64, scale: f64, dof: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Dist {
    pub fn family(&self) -> Family {
        match self {
            Dist::Normal { .. } => Family::Normal,
            Dist::StudentT { .. } => Family::StudentT,
            Dist::LogNormal { .. } => Family::LogNormal,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Dist::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * (LN_2PI + z * z) - sigma.ln()
            }
            Dist::StudentT {
                location,
                scale,
                dof,
            } => t_ln_norm(scale, dof) - t_kernel(x, location, scale, dof),
            Dist::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x.ln() - mu) / sigma;
                -0.5 * (LN_2PI + z * z) - sigma.ln() - x.ln()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Dist::Normal { mu, sigma } => NormalDist::new(mu, sigma)
                .map(|d| d.cdf(x))
                .unwrap_or(f64::NAN),
            Dist::StudentT {
                location,
                scale,
                dof,
            } => {
                // statrs loses accuracy for astronomically large dof; the
                // normal limit is within 2e-8 there.
                if dof > T_NORMAL_LIMIT {
                    NormalDist::new(location, scale)
                        .map(|d| d.cdf(x))
                        .unwrap_or(f64::NAN)
                } else {
                    StudentsT::new(location, scale, dof)
                        .map(|d| d.cdf(x))
                        .unwrap_or(f64::NAN)
                }
            }
            Dist::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    LogNormalDist::new(mu, sigma)
                        .map(|d| d.cdf(x))
                        .unwrap_or(f64::NAN)
                }
            }
        }
    }

    /// Parameters as `(name, value)` pairs, for reporting.
    pub fn parameters(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Dist::Normal { mu, sigma } | Dist::LogNormal { mu, sigma } => {
                vec![("mu", mu), ("sigma", sigma)]
            }
            Dist::StudentT {
                location,
                scale,
                dof,
            } => vec![("location", location), ("scale", scale), ("dof", dof)],
        }
    }
}

fn t_ln_norm(scale: f64, dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0))
        - ln_gamma(0.5 * dof)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - scale.ln()
}

fn t_kernel(x: f64, location: f64, scale: f64, dof: f64) -> f64 {
    let z = (x - location) / scale;
    0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistFit {
    pub dist: Dist,
    pub loglik: f64,
    pub n: usize,
}

impl DistFit {
    pub fn family(&self) -> Family {
        self.dist.family()
    }
}

pub fn log_likelihood(dist: &Dist, samples: &[f64]) -> f64 {
    match *dist {
        // Hoist the normalizing constant out of the loop.
        Dist::StudentT {
            location,
            scale,
            dof,
        } => {
            samples.len() as f64 * t_ln_norm(scale, dof)
                - samples
                    .iter()
                    .map(|&x| t_kernel(x, location, scale, dof))
                    .sum::<f64>()
        }
        _ => samples.iter().map(|&x| dist.ln_pdf(x)).sum(),
    }
}

fn check_samples(samples: &[f64], family: Family) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: samples.len(),
        });
    }
    let family_name = match family {
        Family::Normal => "normal",
        Family::StudentT => "student_t",
        Family::LogNormal => "lognormal",
    };
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::OutsideSupport {
            family: family_name,
            detail: format!("non-finite sample {x}"),
        });
    }
    if family == Family::LogNormal {
        if let Some(x) = samples.iter().find(|&&x| x <= 0.0) {
            return Err(Error::OutsideSupport {
                family: family_name,
                detail: format!("non-positive sample {x}"),
            });
        }
    }
    Ok(())
}

fn normal_mle(samples: &[f64]) -> (f64, f64) {
    let mu = mean(samples);
    let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / samples.len() as f64;
    (mu, var.sqrt())
}

/// Maximum-likelihood fit of `family` to `samples`.
///
/// Normal and log-normal fits are closed form. The Student-t fit maximizes
/// the likelihood numerically over `(location, ln scale, ln dof)` from a
/// moment-matched start and a robust start; it is never worse than the
/// moment-matched start.
pub fn fit_marginal(samples: &[f64], family: Family) -> Result<DistFit> {
    fit_with(samples, family, true)
}

/// As [`fit_marginal`], but the Student-t search starts only from the
/// moment-matched point. Cheaper; used inside optimization loops.
pub fn fit_marginal_single_start(samples: &[f64], family: Family) -> Result<DistFit> {
    fit_with(samples, family, false)
}

fn fit_with(samples: &[f64], family: Family, robust_starts: bool) -> Result<DistFit> {
    check_samples(samples, family)?;
    let dist = match family {
        Family::Normal => {
            let (mu, sigma) = normal_mle(samples);
            if sigma <= 0.0 {
                return Err(Error::Degenerate("samples have zero variance".into()));
            }
            Dist::Normal { mu, sigma }
        }
        Family::LogNormal => {
            let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
            let (mu, sigma) = normal_mle(&logs);
            if sigma <= 0.0 {
                return Err(Error::Degenerate("samples have zero log-variance".into()));
            }
            Dist::LogNormal { mu, sigma }
        }
        Family::StudentT => fit_student_t(samples, robust_starts)?,
    };
    Ok(DistFit {
        dist,
        loglik: log_likelihood(&dist, samples),
        n: samples.len(),
    })
}

/// Moment-matched Student-t: degrees of freedom from the excess kurtosis
/// (30 when the sample is not leptokurtic), scale matching the variance.
pub fn moment_matched_t(samples: &[f64]) -> Option<Dist> {
    let (mu, sd) = normal_mle(samples);
    if sd <= 0.0 {
        return None;
    }
    let n = samples.len() as f64;
    let m4 = samples.iter().map(|x| ((x - mu) / sd).powi(4)).sum::<f64>() / n;
    let excess = m4 - 3.0;
    let dof = if excess > 1e-6 {
        (4.0 + 6.0 / excess).min(1e3)
    } else {
        30.0
    };
    let scale = sd * ((dof - 2.0) / dof).sqrt();
    Some(Dist::StudentT {
        location: mu,
        scale,
        dof,
    })
}

fn fit_student_t(samples: &[f64], robust_starts: bool) -> Result<Dist> {
    let start = moment_matched_t(samples)
        .ok_or_else(|| Error::Degenerate("samples have zero variance".into()))?;
    let n = samples.len() as f64;
    let decode = |th: &[f64]| Dist::StudentT {
        location: th[0],
        scale: th[1].exp(),
        dof: th[2].exp(),
    };
    let objective = |th: &[f64]| {
        if !(th[1].abs() < 700.0 && th[2].abs() < 700.0) {
            return f64::INFINITY;
        }
        let v = -log_likelihood(&decode(th), samples) / n;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut starts = Vec::new();
    if let Dist::StudentT {
        location,
        scale,
        dof,
    } = start
    {
        starts.push([location, scale.ln(), dof.ln()]);
    }
    if robust_starts {
        let med = median(samples);
        let mad = quantile(
            &samples.iter().map(|x| (x - med).abs()).collect::<Vec<_>>(),
            0.5,
        );
        if mad > 0.0 {
            starts.push([med, (mad * 1.4826).ln(), 3f64.ln()]);
            starts.push([med, mad.ln(), 1f64.ln()]);
        }
    }

    let opts = BfgsOptions::default();
    let mut best = (start, objective(&starts[0]));
    for s in &starts {
        let m = bfgs(objective, s, &opts);
        if m.value < best.1 {
            best = (decode(&m.x), m.value);
        }
    }
    Ok(best.0)
}
