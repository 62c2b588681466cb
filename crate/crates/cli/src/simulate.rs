use std::fs;
use std::path::PathBuf;

use evomarket::config::Config;
use evomarket::selection::Injection;
use evomarket::simulation::{run_ensemble, EnsembleAggregates, RunFailure, RunRecord};
use serde::Serialize;

use crate::artifacts::{self, Manifest, RUNS_DIR};
use crate::common::{create_dir, flag_entry, prepare_output};
use crate::error::{CliError, CliResult};
use crate::SimulateArgs;

#[derive(Debug, Serialize)]
struct RunSummary {
    run_index: usize,
    final_price: f64,
    min_price: f64,
    max_price: f64,
    floor_events: u64,
    selection_events: usize,
    injection: Injection,
    gamma: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    mechanism: String,
    seed: u64,
    n_runs: usize,
    completed: usize,
    periods: u64,
    dt: f64,
    failures: Vec<RunFailure>,
    time_averaged_profit: f64,
    time_averaged_profit_net: f64,
    /// Ensemble means of `p_bid`, `n_shares`, `vol_pref` at `t = 0` and `t = T`.
    initial_means: [f64; 3],
    final_means: [f64; 3],
    gamma_running_mean: Vec<f64>,
    runs: Vec<RunSummary>,
}

fn time_average(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn means_at(agg: &EnsembleAggregates, t: usize) -> [f64; 3] {
    let at = |v: &[f64]| v.get(t).copied().unwrap_or(f64::NAN);
    [
        at(&agg.mean_p_bid),
        at(&agg.mean_n_shares),
        at(&agg.mean_vol_pref),
    ]
}

fn run_summary(r: &RunRecord, gamma: Option<f64>) -> RunSummary {
    RunSummary {
        run_index: r.run_index,
        final_price: *r.price.last().unwrap_or(&f64::NAN),
        min_price: r.price.iter().copied().fold(f64::INFINITY, f64::min),
        max_price: r.price.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        floor_events: r.floor_events,
        selection_events: r.events.len(),
        injection: r.injection,
        gamma,
    }
}

fn resolve(args: &SimulateArgs) -> CliResult<Config> {
    let mut entries = args.config.entries()?;
    if let Some(m) = &args.mechanism {
        entries.push(flag_entry("selection.mechanism", m, "--mechanism"));
    }
    if let Some(n) = args.runs {
        entries.push(flag_entry("sim.n_runs", n, "--runs"));
    }
    let mut config = Config::default();
    config.apply(&entries)?;
    config.validate()?;
    Ok(config)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let config = resolve(args)?;
    let sim = config.sim_config();
    let out: PathBuf = match (&args.out, &config.output_dir) {
        (Some(dir), _) | (None, Some(dir)) => dir.clone(),
        (None, None) => {
            args.output_root
                .join(format!("{}-seed{}", sim.selection.kind.name(), config.seed))
        }
    };
    prepare_output(&out, args.force)?;
    let runs_dir = out.join(RUNS_DIR);
    if runs_dir.is_dir() {
        for path in artifacts::list_runs(&out)? {
            fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
        }
    }
    create_dir(&runs_dir)?;

    let ensemble = run_ensemble(&sim)?;
    let aggregates = EnsembleAggregates::from_runs(&ensemble.runs, sim.dt(), &config.analysis.band);
    for r in &ensemble.runs {
        artifacts::write_run(&runs_dir.join(artifacts::run_file_name(r.run_index)), r)?;
    }
    artifacts::write_events(&out.join("events.csv"), &ensemble.runs)?;
    artifacts::write_ensemble(&out.join("ensemble.csv"), &aggregates)?;
    let config_text = config.render();
    fs::write(out.join("config.txt"), &config_text).map_err(|e| CliError::io(&out, e))?;

    let t_end = aggregates.mean_p_bid.len().saturating_sub(1);
    let summary = Summary {
        mechanism: sim.selection.kind.name().to_string(),
        seed: config.seed,
        n_runs: sim.n_runs,
        completed: ensemble.runs.len(),
        periods: sim.periods(),
        dt: sim.dt(),
        failures: ensemble.failures.clone(),
        time_averaged_profit: time_average(&aggregates.mean_profit),
        time_averaged_profit_net: time_average(&aggregates.mean_profit_net),
        initial_means: means_at(&aggregates, 0),
        final_means: means_at(&aggregates, t_end),
        gamma_running_mean: aggregates.gamma_running_mean.clone(),
        runs: ensemble
            .runs
            .iter()
            .zip(&aggregates.gamma)
            .map(|(r, g)| run_summary(r, *g))
            .collect(),
    };
    artifacts::write_json(&out.join("summary.json"), &summary)?;

    let mut manifest = Manifest::new("simulate", config.seed, &config_text);
    manifest.digest_files(&out)?;
    artifacts::write_json(&out.join(artifacts::MANIFEST), &manifest)?;

    eprintln!(
        "{}: {} of {} runs, T = {}, written to {}",
        summary.mechanism,
        summary.completed,
        summary.n_runs,
        summary.periods,
        out.display()
    );
    for f in &ensemble.failures {
        eprintln!("warning: run {} failed: {}", f.run_index, f.error);
    }
    if ensemble.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialFailure {
            failed: ensemble.failures.len(),
            total: sim.n_runs,
        })
    }
}
