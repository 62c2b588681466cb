use std::path::{Path, PathBuf};

use evomarket::analysis::{
    analyze_run_with_sigma, fit_marginal, kde, kde_grid, median, standardize, DistFit, Family,
    FitBand, KdeEstimate, PooledParams, RunAnalysis,
};
use evomarket::calibration::{FAMILIES, PROCESS_NAMES};
use evomarket::simulation::RunRecord;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, fmt_opt, Manifest};
use crate::common::{create_dir, derived_config, prepare_output};
use crate::error::{CliError, CliResult};
use crate::DerivedArgs;

#[derive(Debug, Clone, Serialize)]
pub struct SkippedFile {
    pub file: String,
    pub error: String,
}

/// Runs of an ensemble directory that could be read, plus the ones skipped.
pub struct LoadedRuns {
    pub runs: Vec<RunRecord>,
    pub skipped: Vec<SkippedFile>,
}

pub fn load_runs(
    run_dir: &Path,
    manifest: &Manifest,
    kind: evomarket::selection::MechanismKind,
) -> CliResult<LoadedRuns> {
    let paths = artifacts::list_runs(run_dir)?;
    let loaded: Vec<(PathBuf, Result<RunRecord, String>)> = paths
        .into_par_iter()
        .map(|p| {
            let r = artifacts::read_run(&p, manifest.seed, kind);
            (p, r)
        })
        .collect();
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for (path, r) in loaded {
        match r {
            Ok(r) => runs.push(r),
            Err(error) => {
                eprintln!("warning: skipping {}: {error}", path.display());
                skipped.push(SkippedFile {
                    file: path.display().to_string(),
                    error,
                });
            }
        }
    }
    if runs.is_empty() {
        return Err(CliError::Input(format!(
            "no readable run files in {}",
            run_dir.join(artifacts::RUNS_DIR).display()
        )));
    }
    Ok(LoadedRuns { runs, skipped })
}

#[derive(Debug, Serialize)]
pub struct GammaRow {
    pub run_index: usize,
    pub gamma: Option<f64>,
    pub running_mean: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RhoSummary {
    median_spearman: Option<f64>,
    median_pearson: Option<f64>,
    /// Runs whose correlation is undefined (no rank variance).
    undefined: usize,
    pub kde: Option<KdeEstimate>,
}

#[derive(Debug, Serialize)]
pub struct MarginalSummary {
    pub parameter: String,
    /// Fitted families with their log-likelihoods.
    pub fits: Vec<DistFit>,
    /// Family the parameter is expected to follow.
    pub expected: Family,
    /// Non-positive samples left out of the log-normal fit.
    dropped: usize,
    notes: Vec<String>,
}

#[derive(Debug, Serialize)]
struct AnalysisSummary {
    mechanism: String,
    n_runs: usize,
    skipped_count: usize,
    skipped: Vec<SkippedFile>,
    fit_band: FitBand,
    gamma: Vec<GammaRow>,
    rho: RhoSummary,
    marginals: Vec<MarginalSummary>,
    runs: Vec<RunAnalysis>,
}

pub fn gamma_rows(analyses: &[RunAnalysis]) -> Vec<GammaRow> {
    let (mut sum, mut n) = (0.0, 0usize);
    analyses
        .iter()
        .map(|a| {
            if let Some(g) = a.gamma {
                sum += g;
                n += 1;
            }
            GammaRow {
                run_index: a.run_index,
                gamma: a.gamma,
                running_mean: (n > 0).then(|| sum / n as f64),
            }
        })
        .collect()
}

pub fn rho_summary(analyses: &[RunAnalysis]) -> RhoSummary {
    let spearman: Vec<f64> = analyses.iter().filter_map(|a| a.rho_spearman).collect();
    let pearson: Vec<f64> = analyses.iter().filter_map(|a| a.rho_pearson).collect();
    let kde = kde_grid(&spearman, 256)
        .and_then(|grid| kde(&spearman, &grid))
        .ok();
    RhoSummary {
        median_spearman: (!spearman.is_empty()).then(|| median(&spearman)),
        median_pearson: (!pearson.is_empty()).then(|| median(&pearson)),
        undefined: analyses.len() - spearman.len(),
        kde,
    }
}

fn marginal(parameter: &str, samples: &[f64], expected: Family) -> MarginalSummary {
    let mut notes = Vec::new();
    let mut dropped = 0;
    let mut fits = Vec::new();
    for family in [Family::Normal, expected] {
        let result = if family == Family::LogNormal {
            let positive: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
            dropped = samples.len() - positive.len();
            fit_marginal(&positive, family)
        } else {
            fit_marginal(samples, family)
        };
        match result {
            Ok(f) => fits.push(f),
            Err(e) => notes.push(format!("{family:?}: {e}")),
        }
    }
    MarginalSummary {
        parameter: parameter.to_string(),
        fits,
        expected,
        dropped,
        notes,
    }
}

pub fn marginals(runs: &[RunRecord]) -> Vec<MarginalSummary> {
    let pooled = PooledParams::from_runs(runs);
    let samples = [&pooled.p_bid, &pooled.n_shares, &pooled.vol_pref];
    PROCESS_NAMES
        .iter()
        .zip(FAMILIES)
        .zip(samples)
        .map(|((name, family), s)| marginal(name, s, family))
        .collect()
}

/// Standardized `<nu>(t)` and GARCH `sigma(t)` for `t = 1..=T`.
pub fn write_volatility(path: &Path, record: &RunRecord, sigma: &[f64]) -> CliResult<()> {
    let nu = standardize(&record.mean_vol_pref[1..]);
    let sigma_z = standardize(sigma);
    artifacts::write_table(
        path,
        &["period", "mean_vol_pref_z", "sigma_z", "sigma"],
        (0..sigma.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                format!("{:?}", nu[i]),
                format!("{:?}", sigma_z[i]),
                format!("{:?}", sigma[i]),
            ]
        }),
    )
}

pub fn analyze(args: &DerivedArgs) -> CliResult<()> {
    let (manifest, config) = derived_config(&args.run_dir, &args.config)?;
    let sim = config.sim_config();
    let loaded = load_runs(&args.run_dir, &manifest, sim.selection.kind)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.run_dir.join("analysis"));
    prepare_output(&out, args.force)?;

    let band = config.analysis.band;
    let results: Vec<(RunAnalysis, Option<Vec<f64>>)> = loaded
        .runs
        .par_iter()
        .map(|r| analyze_run_with_sigma(r, sim.dt(), &band))
        .collect();

    let vol_dir = out.join("volatility");
    create_dir(&vol_dir)?;
    for (record, (_, sigma)) in loaded.runs.iter().zip(&results) {
        if let Some(sigma) = sigma {
            write_volatility(
                &vol_dir.join(artifacts::run_file_name(record.run_index)),
                record,
                sigma,
            )?;
        }
    }
    let analyses: Vec<RunAnalysis> = results.into_iter().map(|(a, _)| a).collect();

    let gamma = gamma_rows(&analyses);
    artifacts::write_table(
        &out.join("gamma.csv"),
        &["run", "gamma", "running_mean"],
        gamma.iter().map(|g| {
            vec![
                g.run_index.to_string(),
                fmt_opt(g.gamma),
                fmt_opt(g.running_mean),
            ]
        }),
    )?;
    artifacts::write_table(
        &out.join("runs.csv"),
        &[
            "run",
            "gamma",
            "garch_mu",
            "garch_xi",
            "garch_alpha",
            "garch_beta",
            "garch_loglik",
            "rho_spearman",
            "rho_pearson",
        ],
        analyses.iter().map(|a| {
            let g = a.garch.as_ref();
            vec![
                a.run_index.to_string(),
                fmt_opt(a.gamma),
                fmt_opt(g.map(|g| g.mu)),
                fmt_opt(g.map(|g| g.xi)),
                fmt_opt(g.map(|g| g.alpha)),
                fmt_opt(g.map(|g| g.beta)),
                fmt_opt(g.map(|g| g.loglik)),
                fmt_opt(a.rho_spearman),
                fmt_opt(a.rho_pearson),
            ]
        }),
    )?;
    let rho = rho_summary(&analyses);
    if let Some(k) = &rho.kde {
        artifacts::write_table(
            &out.join("rho_kde.csv"),
            &["rho", "density"],
            k.grid
                .iter()
                .zip(&k.density)
                .map(|(x, d)| vec![format!("{x:?}"), format!("{d:?}")]),
        )?;
    }

    let summary = AnalysisSummary {
        mechanism: sim.selection.kind.name().to_string(),
        n_runs: analyses.len(),
        skipped_count: loaded.skipped.len(),
        skipped: loaded.skipped,
        fit_band: band,
        gamma,
        rho,
        marginals: marginals(&loaded.runs),
        runs: analyses,
    };
    artifacts::write_json(&out.join("analysis.json"), &summary)?;

    let mut m = Manifest::new("analyze", config.seed, &config.render());
    m.digest_files(&out)?;
    artifacts::write_json(&out.join(artifacts::MANIFEST), &m)?;
    eprintln!(
        "analyzed {} runs ({} skipped), written to {}",
        summary.n_runs,
        summary.skipped_count,
        out.display()
    );
    Ok(())
}
