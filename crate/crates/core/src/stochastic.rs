//! Symmetric alpha-stable variates and Euler-Maruyama paths of the
//! heavy-tailed parameter-evolution models.
//!
//! Increments of the driving stable motion over a step `dt` are
//! `dt^{1/alpha} * S` with `S` a unit-scale symmetric stable draw.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower and upper clamp for bid probabilities in simulated paths.
pub const P_BID_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    /// Tail exponent in `(0, 2]`.
    pub alpha: f64,
    pub scale: f64,
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "stable tail exponent {alpha} outside (0, 2]"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stable scale {scale} must be positive"
            )));
        }
        Ok(Self { alpha, scale })
    }
}

/// The two uniform-derived inputs of the Chambers-Mallows-Stuck construction:
/// an angle in `(-pi/2, pi/2)` and a unit exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmsInput {
    pub angle: f64,
    pub exp: f64,
}

impl CmsInput {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // Open interval: reject the endpoints, where cos(angle) = 0.
        let angle = loop {
            let v = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            if v > -FRAC_PI_2 {
                break v;
            }
        };
        let exp: f64 = Exp1.sample(rng);
        Self { angle, exp }
    }

    /// Unit-scale symmetric stable variate with exponent `alpha`.
    pub fn stable(&self, alpha: f64) -> f64 {
        let v = self.angle;
        if (alpha - 1.0).abs() < 1e-12 {
            return v.tan();
        }
        let w = self.exp.max(f64::MIN_POSITIVE);
        (alpha * v).sin() / v.cos().powf(1.0 / alpha)
            * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
    }
}

/// One symmetric alpha-stable draw (zero location and skew).
///
/// With `alpha = 2` this is Gaussian with standard deviation `scale * sqrt(2)`.
pub fn sample_stable<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> f64 {
    params.scale * CmsInput::draw(rng).stable(params.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeKind {
    /// `dX = sigma dL`.
    PriceLevy,
    /// `dp = theta (p* - p) dt + sigma dL`.
    OuPbid,
    /// `dN = mu dt + sigma dL`.
    RwNshares,
    /// `dnu = nu (mu dt + sigma dL)`.
    GeomVolpref,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub kind: SdeKind,
    /// Mean-reversion rate for [`SdeKind::OuPbid`], drift otherwise.
    pub drift: f64,
    /// Reversion target for [`SdeKind::OuPbid`]; ignored otherwise.
    pub target: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Step in days.
    pub dt: f64,
    pub x0: f64,
    /// Apply the domain clamps (bid probability into its open unit interval,
    /// sizes and volatility preference floored at zero).
    pub clamp: bool,
}

impl SdeSpec {
    pub fn new(kind: SdeKind, drift: f64, sigma: f64, alpha: f64, x0: f64) -> Self {
        Self {
            kind,
            drift,
            target: 0.5,
            sigma,
            alpha,
            dt: 1.0 / 24.0,
            x0,
            clamp: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sde dt {} must be positive",
                self.dt
            )));
        }
        if self.kind == SdeKind::OuPbid && self.drift < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mean-reversion rate {} must be non-negative",
                self.drift
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::InvalidConfig(format!(
                "stable tail exponent {} outside (0, 2]",
                self.alpha
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.x0.is_finite()) {
            return Err(Error::InvalidConfig(
                "sde sigma and x0 must be finite, sigma >= 0".into(),
            ));
        }
        Ok(())
    }

    /// One Euler-Maruyama step given a unit-scale stable draw.
    #[inline]
    pub fn advance(&self, x: f64, unit_draw: f64, noise_scale: f64) -> (f64, bool) {
        let dl = noise_scale * unit_draw;
        let next = match self.kind {
            SdeKind::PriceLevy => x + self.sigma * dl,
            SdeKind::OuPbid => x + self.drift * (self.target - x) * self.dt + self.sigma * dl,
            SdeKind::RwNshares => x + self.drift * self.dt + self.sigma * dl,
            SdeKind::GeomVolpref => x + x * (self.drift * self.dt + self.sigma * dl),
        };
        if !self.clamp {
            return (next, false);
        }
        let clamped = match self.kind {
            SdeKind::PriceLevy => next,
            SdeKind::OuPbid => next.clamp(P_BID_CLAMP.0, P_BID_CLAMP.1),
            SdeKind::RwNshares | SdeKind::GeomVolpref => next.max(0.0),
        };
        (clamped, clamped != next)
    }

    /// `dt^{1/alpha}`: scale of one step of unit stable motion.
    pub fn noise_scale(&self) -> f64 {
        self.dt.powf(1.0 / self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    /// `n_steps + 1` values starting at `x0`.
    pub values: Vec<f64>,
    pub clamp_count: usize,
}

/// Simulates `n_steps` Euler-Maruyama steps.
pub fn simulate_sde<R: Rng + ?Sized>(
    spec: &SdeSpec,
    n_steps: usize,
    rng: &mut R,
) -> Result<SdePath> {
    spec.validate()?;
    let noise = spec.noise_scale();
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut x = spec.x0;
    let mut clamp_count = 0;
    values.push(x);
    for _ in 0..n_steps {
        let draw = if spec.sigma == 0.0 {
            0.0
        } else {
            CmsInput::draw(rng).stable(spec.alpha)
        };
        let (next, clamped) = spec.advance(x, draw, noise);
        clamp_count += clamped as usize;
        x = next;
        values.push(x);
    }
    Ok(SdePath {
        values,
        clamp_count,
    })
}
