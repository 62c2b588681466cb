//! Figure-ready tables for one ensemble directory.

use std::fs;
use std::path::Path;

use evomarket::analysis::{
    analyze_run_with_sigma, quantile, BinnedSample, PooledParams, RunAnalysis,
};
use evomarket::calibration::PROCESS_NAMES;
use evomarket::simulation::RunRecord;
use rayon::prelude::*;
use serde::Serialize;

use crate::analyze::{gamma_rows, load_runs, marginals, rho_summary, write_volatility};
use crate::artifacts::{self, fmt_opt, Manifest};
use crate::common::{derived_config, prepare_output};
use crate::error::{CliError, CliResult};
use crate::DerivedArgs;

#[derive(Debug, Serialize)]
struct Table {
    file: String,
    description: String,
}

#[derive(Debug, Default, Serialize)]
struct Index {
    mechanism: String,
    n_runs: usize,
    tables: Vec<Table>,
    missing: Vec<String>,
}

impl Index {
    fn add(&mut self, file: &str, description: &str) {
        self.tables.push(Table {
            file: file.to_string(),
            description: description.to_string(),
        });
    }
}

fn series(r: &RunRecord, k: usize) -> &[f64] {
    match k {
        0 => &r.mean_p_bid,
        1 => &r.mean_n_shares,
        _ => &r.mean_vol_pref,
    }
}

/// Per-period ensemble mean, spread across runs and 5%/95% quantiles.
fn write_trajectories(out: &Path, runs: &[RunRecord]) -> CliResult<()> {
    let len = runs.iter().map(|r| r.price.len()).min().unwrap_or(0);
    let mut header = vec!["period".to_string()];
    for name in PROCESS_NAMES {
        for stat in ["mean", "sd_runs", "q05", "q95"] {
            header.push(format!("{name}_{stat}"));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    artifacts::write_table(
        &out.join("parameter_trajectories.csv"),
        &header,
        (0..len).map(|t| {
            let mut row = vec![t.to_string()];
            for k in 0..3 {
                let x: Vec<f64> = runs.iter().map(|r| series(r, k)[t]).collect();
                let n = x.len() as f64;
                let m = x.iter().sum::<f64>() / n;
                let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                for v in [m, sd, quantile(&x, 0.05), quantile(&x, 0.95)] {
                    row.push(format!("{v:?}"));
                }
            }
            row
        }),
    )?;
    for (k, name) in PROCESS_NAMES.iter().enumerate() {
        let mut header = vec!["period".to_string()];
        header.extend(runs.iter().map(|r| format!("run_{:05}", r.run_index)));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        artifacts::write_table(
            &out.join(format!("parameter_runs_{name}.csv")),
            &header,
            (0..len).map(|t| {
                std::iter::once(t.to_string())
                    .chain(runs.iter().map(|r| format!("{:?}", series(r, k)[t])))
                    .collect()
            }),
        )?;
    }
    Ok(())
}

/// Pooled histogram densities with the fitted densities at the bin centers.
fn write_marginals(out: &Path, runs: &[RunRecord], bins: usize) -> CliResult<()> {
    let pooled = PooledParams::from_runs(runs);
    let samples = [&pooled.p_bid, &pooled.n_shares, &pooled.vol_pref];
    let fits = marginals(runs);
    let opts = evomarket::analysis::KlOptions {
        bins,
        smoothing: 0.0,
    };
    let mut rows = Vec::new();
    for (s, m) in samples.iter().zip(&fits) {
        let Some(binned) = BinnedSample::new(s, &opts) else {
            continue;
        };
        let density = binned.density_of(s);
        for (x, d) in binned.centers().iter().zip(density) {
            let mut row = vec![m.parameter.clone(), format!("{x:?}"), format!("{d:?}")];
            for f in &m.fits {
                row.push(format!("{:?}", f.dist.pdf(*x)));
            }
            row.resize(5, String::new());
            rows.push(row);
        }
    }
    artifacts::write_table(
        &out.join("parameter_marginals.csv"),
        &[
            "parameter",
            "x",
            "empirical_density",
            "normal_pdf",
            "fitted_pdf",
        ],
        rows,
    )?;
    artifacts::write_json(&out.join("parameter_fits.json"), &fits)
}

fn write_profit(out: &Path, runs: &[RunRecord]) -> CliResult<()> {
    let len = runs.iter().map(|r| r.mean_profit.len()).min().unwrap_or(0);
    let n = runs.len() as f64;
    artifacts::write_table(
        &out.join("profit.csv"),
        &["period", "mean_profit", "mean_profit_net"],
        (0..len).map(|t| {
            let p = runs.iter().map(|r| r.mean_profit[t]).sum::<f64>() / n;
            let q = runs.iter().map(|r| r.mean_profit_net[t]).sum::<f64>() / n;
            vec![t.to_string(), format!("{p:?}"), format!("{q:?}")]
        }),
    )
}

pub fn report(args: &DerivedArgs) -> CliResult<()> {
    let (manifest, config) = derived_config(&args.run_dir, &args.config)?;
    let sim = config.sim_config();
    let loaded = load_runs(&args.run_dir, &manifest, sim.selection.kind)?;
    let runs = &loaded.runs;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.run_dir.join("report"));
    prepare_output(&out, args.force)?;
    let mut index = Index {
        mechanism: sim.selection.kind.name().to_string(),
        n_runs: runs.len(),
        ..Index::default()
    };

    write_trajectories(&out, runs)?;
    index.add(
        "parameter_trajectories.csv",
        "agent-averaged parameters per period: mean, spread and 5%/95% quantiles across runs",
    );
    index.add(
        "parameter_runs_<parameter>.csv",
        "agent-averaged parameter series of every run",
    );

    write_marginals(&out, runs, config.analysis.kl.bins)?;
    index.add(
        "parameter_marginals.csv",
        "pooled parameter histograms with normal and fitted t / log-normal densities",
    );

    let band = config.analysis.band;
    let results: Vec<(RunAnalysis, Option<Vec<f64>>)> = runs
        .par_iter()
        .map(|r| analyze_run_with_sigma(r, sim.dt(), &band))
        .collect();
    let analyses: Vec<RunAnalysis> = results.iter().map(|(a, _)| a.clone()).collect();
    artifacts::write_table(
        &out.join("psd_convergence.csv"),
        &["run", "gamma", "running_mean"],
        gamma_rows(&analyses).iter().map(|g| {
            vec![
                g.run_index.to_string(),
                fmt_opt(g.gamma),
                fmt_opt(g.running_mean),
            ]
        }),
    )?;
    index.add(
        "psd_convergence.csv",
        "spectral exponent of each run and its running mean",
    );

    write_profit(&out, runs)?;
    index.add(
        "profit.csv",
        "mean agent profit per period averaged over runs",
    );

    match runs
        .iter()
        .zip(&results)
        .find_map(|(r, (_, s))| s.as_ref().map(|s| (r, s)))
    {
        Some((r, sigma)) => {
            write_volatility(&out.join("volatility_montage.csv"), r, sigma)?;
            index.add(
                "volatility_montage.csv",
                &format!(
                    "standardized mean volatility preference and GARCH volatility of run {}",
                    r.run_index
                ),
            );
        }
        None => index
            .missing
            .push("volatility_montage.csv: no run has a GARCH fit".into()),
    }

    match rho_summary(&analyses).kde {
        Some(k) => {
            artifacts::write_table(
                &out.join("rho_kde.csv"),
                &["rho", "density"],
                k.grid
                    .iter()
                    .zip(&k.density)
                    .map(|(x, d)| vec![format!("{x:?}"), format!("{d:?}")]),
            )?;
            index.add(
                "rho_kde.csv",
                "kernel density of the per-run micro-macro volatility correlation",
            );
        }
        None => index
            .missing
            .push("rho_kde.csv: fewer than two runs with a defined correlation".into()),
    }

    let cal_dir = args.run_dir.join("calibration");
    let mut copied = 0;
    if cal_dir.is_dir() {
        for name in PROCESS_NAMES {
            let file = format!("overlay_{name}.csv");
            let src = cal_dir.join(&file);
            if src.is_file() {
                let dst = out.join(format!("calibration_{file}"));
                fs::copy(&src, &dst).map_err(|e| CliError::io(&src, e))?;
                copied += 1;
            }
        }
    }
    if copied > 0 {
        index.add(
            "calibration_overlay_<parameter>.csv",
            "ABM density, fitted density and simulated SDE density per calibrated process",
        );
    } else {
        index
            .missing
            .push("calibration overlays: run `evomarket calibrate` on this directory first".into());
    }

    artifacts::write_json(&out.join("index.json"), &index)?;
    let mut m = Manifest::new("report", config.seed, &config.render());
    m.digest_files(&out)?;
    artifacts::write_json(&out.join(artifacts::MANIFEST), &m)?;
    eprintln!("{} tables written to {}", index.tables.len(), out.display());
    Ok(())
}
