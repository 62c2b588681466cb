use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_PSD_LEN: usize = 16;
pub const MIN_BAND_POINTS: usize = 8;

/// Which positive Fourier frequencies enter the power-law fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBand {
    /// Number of lowest positive frequencies dropped.
    pub skip_low: usize,
    /// Fraction of the positive frequencies (counted from the lowest) that may
    /// be used; the rest of the high end is dropped.
    pub upper_fraction: f64,
}

impl Default for FitBand {
    fn default() -> Self {
        Self {
            skip_low: 2,
            upper_fraction: 0.25,
        }
    }
}

impl FitBand {
    /// Index range into the positive-frequency arrays.
    pub fn range(&self, n_freq: usize) -> std::ops::Range<usize> {
        let hi = ((n_freq as f64 * self.upper_fraction).floor() as usize).min(n_freq);
        self.skip_low.min(hi)..hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdFit {
    /// Positive Fourier frequencies `k / (T dt)`, `k = 1..=T/2`, in cycles per day.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub gamma: Option<f64>,
    /// Frequency interval used by the exponent fit.
    pub fit_band: Option<(f64, f64)>,
}

/// `|X(w)|^2` at every Fourier frequency `k = 0..T-1`, with
/// `X(w) = T^{-1/2} sum_t x(t) exp(-i w t) dt`.
pub fn periodogram_full(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = dt * dt / n as f64;
    buf.iter().map(|c| c.norm_sqr() * scale).collect()
}

/// One-sided periodogram at the positive Fourier frequencies.
pub fn psd(series: &[f64], dt: f64) -> Result<PsdFit> {
    let n = series.len();
    if n < MIN_PSD_LEN {
        return Err(Error::TooShort {
            needed: MIN_PSD_LEN,
            got: n,
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite value in series".into()));
    }
    let full = periodogram_full(series, dt);
    let span = n as f64 * dt;
    let frequencies = (1..=n / 2).map(|k| k as f64 / span).collect();
    let power = full[1..=n / 2].to_vec();
    Ok(PsdFit {
        frequencies,
        power,
        gamma: None,
        fit_band: None,
    })
}

/// Least-squares slope of `ln power` on `ln frequency` over `band`, negated.
pub fn fit_psd_exponent(psd: &PsdFit, band: &FitBand) -> Result<f64> {
    let range = band.range(psd.frequencies.len());
    if range.len() < MIN_BAND_POINTS {
        return Err(Error::Degenerate(format!(
            "fit band holds {} frequencies, need {MIN_BAND_POINTS}",
            range.len()
        )));
    }
    let xs: Vec<f64> = psd.frequencies[range.clone()]
        .iter()
        .map(|f| f.ln())
        .collect();
    let ys: Vec<f64> = psd.power[range].iter().map(|p| p.ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Degenerate("zero power inside fit band".into()));
    }
    Ok(-ols_slope(&xs, &ys))
}

/// Periodogram plus fitted exponent.
pub fn psd_with_exponent(series: &[f64], dt: f64, band: &FitBand) -> Result<PsdFit> {
    let mut fit = psd(series, dt)?;
    let gamma = fit_psd_exponent(&fit, band)?;
    let r = band.range(fit.frequencies.len());
    fit.fit_band = Some((fit.frequencies[r.start], fit.frequencies[r.end - 1]));
    fit.gamma = Some(gamma);
    Ok(fit)
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
