//! Estimators applied to simulated series: price spectra, GARCH volatility,
//! rank correlation, kernel densities, marginal fits and KL divergence.

mod garch;
mod kl;
mod marginal;
mod psd;
mod stats;

pub use garch::{
    conditional_variance, garch11_fit, log_likelihood as garch_log_likelihood, GarchFit,
    GarchParams,
};
pub use kl::{empirical_kl, kl_to_model, BinnedSample, KlOptions, DEFAULT_KL_BINS};
pub use marginal::{
    fit_marginal, fit_marginal_single_start, log_likelihood, moment_matched_t, Dist, DistFit,
    Family,
};
pub use psd::{fit_psd_exponent, periodogram_full, psd, psd_with_exponent, FitBand, PsdFit};
pub use stats::{
    average_ranks, kde, kde_grid, mean, median, pearson, quantile, silverman_bandwidth, spearman,
    standardize, std_dev, trapezoid, KdeEstimate,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::simulation::RunRecord;

/// Per-run micro/macro volatility summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub run_index: usize,
    pub gamma: Option<f64>,
    pub garch: Option<GarchSummary>,
    /// Spearman correlation between mean volatility preference and GARCH
    /// volatility; `None` when either series has no rank variance.
    pub rho_spearman: Option<f64>,
    pub rho_pearson: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchSummary {
    pub mu: f64,
    pub xi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub loglik: f64,
    pub converged: bool,
}

impl From<&GarchFit> for GarchSummary {
    fn from(f: &GarchFit) -> Self {
        Self {
            mu: f.mu,
            xi: f.xi,
            alpha: f.alpha,
            beta: f.beta,
            loglik: f.loglik,
            converged: f.converged,
        }
    }
}

/// Runs the spectral, GARCH and correlation estimators on one run.
///
/// The correlation pairs `<nu>(t)` with `sigma(t)` for `t = 1..=T`, i.e. the
/// population mean recorded at the end of each period with the volatility of
/// that period's return.
pub fn analyze_run(record: &RunRecord, dt: f64, band: &FitBand) -> RunAnalysis {
    analyze_run_with_sigma(record, dt, band).0
}

/// [`analyze_run`] that also returns the fitted GARCH volatility path.
pub fn analyze_run_with_sigma(
    record: &RunRecord,
    dt: f64,
    band: &FitBand,
) -> (RunAnalysis, Option<Vec<f64>>) {
    let mut notes = Vec::new();
    let gamma = match psd(&record.price[1..], dt).and_then(|p| fit_psd_exponent(&p, band)) {
        Ok(g) => Some(g),
        Err(e) => {
            notes.push(format!("psd: {e}"));
            None
        }
    };
    let (garch, sigma) = match garch11_fit(&record.returns) {
        Ok(fit) => (Some(GarchSummary::from(&fit)), Some(fit.sigma)),
        Err(e) => {
            notes.push(format!("garch: {e}"));
            (None, None)
        }
    };
    let (mut rho_spearman, mut rho_pearson) = (None, None);
    if let Some(sigma) = &sigma {
        let nu = &record.mean_vol_pref[1..];
        match spearman(nu, sigma) {
            Ok(r) => rho_spearman = Some(r),
            Err(e) => notes.push(format!("spearman: {e}")),
        }
        rho_pearson = pearson(nu, sigma).ok();
    }
    let analysis = RunAnalysis {
        run_index: record.run_index,
        gamma,
        garch,
        rho_spearman,
        rho_pearson,
        notes,
    };
    (analysis, sigma)
}

/// Pooled per-period population means of the three agent parameters over
/// every period of every run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledParams {
    pub p_bid: Vec<f64>,
    pub n_shares: Vec<f64>,
    pub vol_pref: Vec<f64>,
}

impl PooledParams {
    pub fn from_runs<'a>(runs: impl IntoIterator<Item = &'a RunRecord>) -> Self {
        let mut out = Self::default();
        for r in runs {
            out.p_bid.extend_from_slice(&r.mean_p_bid);
            out.n_shares.extend_from_slice(&r.mean_n_shares);
            out.vol_pref.extend_from_slice(&r.mean_vol_pref);
        }
        out
    }
}

/// Fits of one pooled parameter under several families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub parameter: String,
    pub fits: Vec<DistFit>,
}

impl MarginalComparison {
    pub fn fit(parameter: &str, samples: &[f64], families: &[Family]) -> Result<Self> {
        let fits = families
            .iter()
            .map(|&f| fit_marginal(samples, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            parameter: parameter.to_string(),
            fits,
        })
    }

    pub fn loglik(&self, family: Family) -> Option<f64> {
        self.fits
            .iter()
            .find(|f| f.family() == family)
            .map(|f| f.loglik)
    }
}
