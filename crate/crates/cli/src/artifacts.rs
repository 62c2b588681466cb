//! On-disk layout of an ensemble directory.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/config.txt
//! <dir>/summary.json
//! <dir>/ensemble.csv
//! <dir>/events.csv
//! <dir>/runs/run_00000.csv ...
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use evomarket::selection::MechanismKind;
use evomarket::simulation::RunRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";

pub const RUN_COLUMNS: &[&str] = &[
    "period",
    "price",
    "return",
    "volume",
    "mean_p_bid",
    "sd_p_bid",
    "mean_n_shares",
    "sd_n_shares",
    "mean_vol_pref",
    "sd_vol_pref",
    "mean_profit",
    "mean_profit_net",
];

pub const EVENT_COLUMNS: &[&str] = &[
    "run",
    "period",
    "mechanism_used",
    "removed_ids",
    "replacement_ids",
    "innovated",
];

pub const ENSEMBLE_COLUMNS: &[&str] = &[
    "period",
    "mean_p_bid",
    "mean_n_shares",
    "mean_vol_pref",
    "mean_profit",
    "mean_profit_net",
];

/// One row of a run file. Floats are written in shortest round-trip form,
/// so reading a file back reproduces the in-memory series exactly.
#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    period: u64,
    price: f64,
    #[serde(rename = "return")]
    ret: Option<f64>,
    volume: u64,
    mean_p_bid: f64,
    sd_p_bid: f64,
    mean_n_shares: f64,
    sd_n_shares: f64,
    mean_vol_pref: f64,
    sd_vol_pref: f64,
    mean_profit: f64,
    mean_profit_net: f64,
}

#[derive(Debug, Serialize)]
struct EventRow<'a> {
    run: usize,
    period: u64,
    mechanism_used: &'a str,
    removed_ids: String,
    replacement_ids: String,
    innovated: String,
}

#[derive(Debug, Serialize)]
struct EnsembleRow {
    period: usize,
    mean_p_bid: f64,
    mean_n_shares: f64,
    mean_vol_pref: f64,
    mean_profit: f64,
    mean_profit_net: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to regenerate a directory: the full config text, its
/// hash, the seed and the tool version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub schema_version: u32,
    pub schemas: BTreeMap<String, Vec<String>>,
    pub files: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Self {
        let schemas = [
            ("runs/run_*.csv", RUN_COLUMNS),
            ("events.csv", EVENT_COLUMNS),
            ("ensemble.csv", ENSEMBLE_COLUMNS),
        ]
        .into_iter()
        .map(|(k, cols)| (k.to_string(), cols.iter().map(|c| c.to_string()).collect()))
        .collect();
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config: config_text.to_string(),
            schema_version: SCHEMA_VERSION,
            schemas,
            files: Vec::new(),
        }
    }

    /// Records the digest of every file under `dir` except the manifest.
    pub fn digest_files(&mut self, dir: &Path) -> CliResult<()> {
        let mut paths = Vec::new();
        collect_files(dir, &mut paths)?;
        paths.sort();
        self.files = paths
            .iter()
            .filter(|p| p.file_name().is_none_or(|n| n != MANIFEST))
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
                Ok(FileDigest {
                    path: p
                        .strip_prefix(dir)
                        .unwrap_or(p)
                        .to_string_lossy()
                        .replace('\\', "/"),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<CliResult<_>>()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("malformed {}: {e}", path.display())))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run_file_name(run_index: usize) -> String {
    format!("run_{run_index:05}.csv")
}

fn run_index_from_name(path: &Path) -> Option<usize> {
    path.file_name()?
        .to_str()?
        .strip_prefix("run_")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

pub fn write_run(path: &Path, record: &RunRecord) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in 0..record.price.len() {
        w.serialize(RunRow {
            period: t as u64,
            price: record.price[t],
            ret: t.checked_sub(1).map(|i| record.returns[i]),
            volume: record.volume[t],
            mean_p_bid: record.mean_p_bid[t],
            sd_p_bid: record.sd_p_bid[t],
            mean_n_shares: record.mean_n_shares[t],
            sd_n_shares: record.sd_n_shares[t],
            mean_vol_pref: record.mean_vol_pref[t],
            sd_vol_pref: record.sd_vol_pref[t],
            mean_profit: record.mean_profit[t],
            mean_profit_net: record.mean_profit_net[t],
        })?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a run file back into a record. Selection events, injections and
/// agent ids are not part of the file and come back empty.
pub fn read_run(path: &Path, seed: u64, mechanism: MechanismKind) -> Result<RunRecord, String> {
    let run_index =
        run_index_from_name(path).ok_or_else(|| "file name is not run_<index>.csv".to_string())?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(RUN_COLUMNS.iter().copied()) {
        return Err(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        ));
    }
    let mut r = RunRecord {
        run_index,
        seed,
        mechanism,
        price: Vec::new(),
        returns: Vec::new(),
        volume: Vec::new(),
        mean_p_bid: Vec::new(),
        sd_p_bid: Vec::new(),
        mean_n_shares: Vec::new(),
        sd_n_shares: Vec::new(),
        mean_vol_pref: Vec::new(),
        sd_vol_pref: Vec::new(),
        mean_profit: Vec::new(),
        mean_profit_net: Vec::new(),
        events: Vec::new(),
        injection: Default::default(),
        floor_events: 0,
        final_agent_ids: Vec::new(),
    };
    for (i, row) in reader.deserialize::<RunRow>().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        if row.period != i as u64 {
            return Err(format!("row {} has period {}", i + 1, row.period));
        }
        match (i, row.ret) {
            (0, None) => {}
            (0, Some(_)) => return Err("period 0 carries a return".into()),
            (_, Some(x)) => r.returns.push(x),
            (_, None) => return Err(format!("period {i} has no return")),
        }
        if !(row.price.is_finite() && row.price > 0.0) {
            return Err(format!("period {i} has price {}", row.price));
        }
        r.price.push(row.price);
        r.volume.push(row.volume);
        r.mean_p_bid.push(row.mean_p_bid);
        r.sd_p_bid.push(row.sd_p_bid);
        r.mean_n_shares.push(row.mean_n_shares);
        r.sd_n_shares.push(row.sd_n_shares);
        r.mean_vol_pref.push(row.mean_vol_pref);
        r.sd_vol_pref.push(row.sd_vol_pref);
        r.mean_profit.push(row.mean_profit);
        r.mean_profit_net.push(row.mean_profit_net);
    }
    if r.price.is_empty() {
        return Err("no rows".into());
    }
    Ok(r)
}

/// Run files of an ensemble directory in index order.
pub fn list_runs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let runs = dir.join(RUNS_DIR);
    let entries = fs::read_dir(&runs)
        .map_err(|e| CliError::Input(format!("cannot list {}: {e}", runs.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    Ok(paths)
}

fn join_ids<T: ToString>(ids: &[T]) -> String {
    ids.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_events(path: &Path, runs: &[RunRecord]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(EVENT_COLUMNS)?;
    for r in runs {
        for e in &r.events {
            let innovated: Vec<u8> = e.innovated.iter().map(|&b| b as u8).collect();
            w.serialize(EventRow {
                run: r.run_index,
                period: e.period,
                mechanism_used: e.mechanism_used.name(),
                removed_ids: join_ids(&e.removed_ids),
                replacement_ids: join_ids(&e.replacement_ids),
                innovated: join_ids(&innovated),
            })?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_ensemble(
    path: &Path,
    agg: &evomarket::simulation::EnsembleAggregates,
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in 0..agg.mean_p_bid.len() {
        w.serialize(EnsembleRow {
            period: t,
            mean_p_bid: agg.mean_p_bid[t],
            mean_n_shares: agg.mean_n_shares[t],
            mean_vol_pref: agg.mean_vol_pref[t],
            mean_profit: agg.mean_profit[t],
            mean_profit_net: agg.mean_profit_net[t],
        })?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a table with the given header from rows of equal length.
pub fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip text of an optional float; empty when absent.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}
