//! Study execution, the resumable cell ledger and the result table.

use crate::config::{CellGroup, EvalMode, ExperimentConfig};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use vmem_lt::bootstrap::{full_bootstrap_mc_many, warp_speed_mc_many, BootstrapConfig, RejectionReport, TestSpec};
use vmem_lt::{Error, Result};

/// One row of the study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario_id: String,
    pub copula: String,
    /// Copula parameter: the Gaussian correlation or the Clayton θ; 0 under independence.
    pub rho: f64,
    pub statistic: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub kappa: f64,
    pub gamma: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub level: f64,
    pub rejection_rate: f64,
    pub std_error: f64,
    pub failed: usize,
}

pub const STUDY_HEADER: [&str; 13] = [
    "scenario_id",
    "copula",
    "rho",
    "statistic",
    "T",
    "kappa",
    "gamma",
    "M",
    "R",
    "level",
    "rejection_rate",
    "std_error",
    "failed",
];

impl StudyRow {
    fn new(group: &CellGroup, test: &TestSpec, level: f64, report: &RejectionReport) -> Self {
        Self {
            scenario_id: group.scenario.id.clone(),
            copula: group.copula.name().to_string(),
            rho: group.copula.parameter(),
            statistic: test.statistic.label().to_string(),
            t: group.scenario.len,
            kappa: test.weight.kappa(),
            gamma: test.weight.gamma(),
            m: test.statistic.m(),
            r: report.replicates,
            level,
            rejection_rate: report.rejection_rate,
            std_error: report.std_error,
            failed: report.failed,
        }
    }
}

/// A ledger line: one completed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub config_hash: String,
    pub cell: String,
    pub result: StudyRow,
}

/// Completed cells of `config_hash` recorded in the ledger at `path`. A
/// missing file is an empty ledger; unparsable lines (e.g. a write cut short
/// by a crash) are skipped.
pub fn read_ledger(path: &Path, config_hash: &str) -> Result<HashMap<String, StudyRow>> {
    let mut done = HashMap::new();
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LedgerEntry>(&line) {
            Ok(entry) if entry.config_hash == config_hash => {
                done.insert(entry.cell, entry.result);
            }
            Ok(_) => {}
            Err(e) => log::warn!("{}:{}: skipping unreadable ledger line ({e})", path.display(), i + 1),
        }
    }
    Ok(done)
}

fn append_ledger(path: &Path, entries: &[LedgerEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&serde_json::to_string(e).expect("ledger entry serializes"));
        text.push('\n');
    }
    let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    // never glue onto a torn final line
    let len = file.metadata()?.len();
    if len > 0 {
        let mut last = [0u8];
        file.seek(SeekFrom::Start(len - 1))?;
        file.read_exact(&mut last)?;
        if last[0] != b'\n' {
            text.insert(0, '\n');
        }
    }
    file.write_all(text.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    /// Completed cells in config order.
    pub rows: Vec<StudyRow>,
    pub failures: Vec<CellFailure>,
    /// Cells taken from the ledger instead of being computed.
    pub reused: usize,
}

fn run_group(config: &ExperimentConfig, group: &CellGroup, tests: &[TestSpec]) -> Result<Vec<RejectionReport>> {
    match config.mode {
        EvalMode::WarpSpeed => warp_speed_mc_many(&group.scenario, tests, config.r, config.level, group.seed),
        EvalMode::FullBootstrap => {
            let cfg = BootstrapConfig {
                replicates: config.b,
                burn_in: config.burn_in,
                m: 1,
                seed: group.seed,
            };
            full_bootstrap_mc_many(&group.scenario, tests, config.r, &cfg, config.level)
        }
    }
}

/// Runs every cell of `config`. With a ledger, cells already recorded under
/// the same config hash are reused and new cells are appended as each
/// (scenario, T) group finishes. A failing group is logged and skipped.
pub fn run_study(config: &ExperimentConfig, ledger: Option<&Path>) -> Result<StudyOutcome> {
    let groups = config.plan()?;
    let hash = config.hash();
    let mut done = match ledger {
        Some(path) => read_ledger(path, &hash)?,
        None => HashMap::new(),
    };
    let mut failures = Vec::new();
    let mut reused = 0;
    for group in &groups {
        let (cached, pending): (Vec<&TestSpec>, Vec<&TestSpec>) =
            group.tests.iter().partition(|t| done.contains_key(&group.cell_key(t)));
        reused += cached.len();
        if pending.is_empty() {
            continue;
        }
        let tests: Vec<TestSpec> = pending.into_iter().copied().collect();
        log::info!(
            "scenario {} T={}: {} cells, R={}",
            group.scenario.id,
            group.scenario.len,
            tests.len(),
            config.r
        );
        match run_group(config, group, &tests) {
            Ok(reports) => {
                let entries: Vec<LedgerEntry> = tests
                    .iter()
                    .zip(&reports)
                    .map(|(t, rep)| LedgerEntry {
                        config_hash: hash.clone(),
                        cell: group.cell_key(t),
                        result: StudyRow::new(group, t, config.level, rep),
                    })
                    .collect();
                if let Some(path) = ledger {
                    append_ledger(path, &entries)?;
                }
                for e in entries {
                    done.insert(e.cell, e.result);
                }
            }
            Err(e) => {
                log::error!("scenario {} T={} failed: {e}", group.scenario.id, group.scenario.len);
                failures.extend(tests.iter().map(|t| CellFailure {
                    cell: group.cell_key(t),
                    message: e.to_string(),
                }));
            }
        }
    }
    let rows = groups
        .iter()
        .flat_map(|g| g.tests.iter().filter_map(|t| done.get(&g.cell_key(t)).cloned()))
        .collect();
    Ok(StudyOutcome { rows, failures, reused })
}

/// Writes the study table; the header is present even without rows.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(STUDY_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_study_csv<R: Read>(input: R) -> Result<Vec<StudyRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(STUDY_HEADER) {
        return Err(Error::InvalidInput(format!(
            "study table header must be `{}`",
            STUDY_HEADER.join(",")
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<StudyRow>, _>>()?)
}
