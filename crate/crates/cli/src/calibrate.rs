use evomarket::calibration::{
    self, CalibrationProblem, CalibrationResult, DeConfig, SdeParameters,
};
use serde::Serialize;

use crate::analyze::{load_runs, SkippedFile};
use crate::artifacts::{self, Manifest};
use crate::common::{derived_config, prepare_output};
use crate::error::{CliError, CliResult};
use crate::DerivedArgs;

#[derive(Debug, Serialize)]
struct ProblemSummary {
    n_runs: usize,
    target_samples: usize,
    x0: [f64; 3],
    steps: usize,
    dt: f64,
}

#[derive(Debug, Serialize)]
struct CalibrationOutput<'a> {
    /// The nine SDE parameters by name.
    parameters: &'a SdeParameters,
    problem: ProblemSummary,
    optimizer: &'a DeConfig,
    skipped: Vec<SkippedFile>,
    result: &'a CalibrationResult,
}

pub fn calibrate(args: &DerivedArgs) -> CliResult<()> {
    let (manifest, config) = derived_config(&args.run_dir, &args.config)?;
    let sim = config.sim_config();
    let loaded = load_runs(&args.run_dir, &manifest, sim.selection.kind)?;
    let mut problem = CalibrationProblem::from_runs(&loaded.runs, sim.dt())
        .map_err(|e| CliError::Input(e.to_string()))?;
    config.configure_problem(&mut problem);
    problem
        .validate()
        .map_err(|e| CliError::Input(format!("cannot calibrate: {e}")))?;
    let de = config.de_config(&problem);

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.run_dir.join("calibration"));
    prepare_output(&out, args.force)?;
    let result = calibration::calibrate(&problem, &de)?;

    for o in &result.overlays {
        artifacts::write_table(
            &out.join(format!("overlay_{}.csv", o.parameter)),
            &["x", "abm_density", "fitted_pdf", "simulated_density"],
            (0..o.grid.len()).map(|i| {
                vec![
                    format!("{:?}", o.grid[i]),
                    format!("{:?}", o.abm_density[i]),
                    format!("{:?}", o.fitted_pdf[i]),
                    format!("{:?}", o.simulated_density[i]),
                ]
            }),
        )?;
    }
    artifacts::write_table(
        &out.join("trace.csv"),
        &["generation", "best_objective"],
        result
            .trace
            .iter()
            .enumerate()
            .map(|(g, v)| vec![g.to_string(), format!("{v:?}")]),
    )?;
    let output = CalibrationOutput {
        parameters: &result.parameters,
        problem: ProblemSummary {
            n_runs: loaded.runs.len(),
            target_samples: problem.targets.p_bid.len(),
            x0: problem.x0,
            steps: problem.steps,
            dt: problem.dt,
        },
        optimizer: &de,
        skipped: loaded.skipped,
        result: &result,
    };
    artifacts::write_json(&out.join("calibration.json"), &output)?;

    let mut m = Manifest::new("calibrate", config.seed, &config.render());
    m.digest_files(&out)?;
    artifacts::write_json(&out.join(artifacts::MANIFEST), &m)?;

    let named = result
        .parameters
        .named()
        .iter()
        .map(|(k, v)| format!("{k}={v:.5}"))
        .collect::<Vec<_>>()
        .join(" ");
    eprintln!(
        "objective {:.5} after {} generations ({}): {named}",
        result.objective,
        result.generations,
        if result.converged {
            "converged"
        } else {
            "generation limit"
        }
    );
    Ok(())
}
