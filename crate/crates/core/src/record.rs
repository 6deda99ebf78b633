//! Trial records and their JSON Lines persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convergence::{ConvergenceReport, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::{MetricBundle, TsBand};
use crate::seeding::SeedLedger;
use crate::state::ClaimId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub iteration: usize,
    pub step_distance: f64,
    pub ec: f64,
    pub tp: f64,
    pub ts: f64,
    pub band: TsBand,
    /// Transparency blend in effect for this cycle.
    pub blend: f64,
    pub detections: Vec<ClaimId>,
    pub corrections: Vec<ClaimId>,
    pub reevaluation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    TimedOut,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub trial_index: usize,
    pub config_hash: String,
    pub rng_seed: u64,
    pub status: TrialStatus,
    pub error: Option<String>,
    pub cycles: Vec<CycleRow>,
    pub convergence: Option<ConvergenceReport>,
    pub ledger: SeedLedger,
    pub metrics: Option<MetricBundle>,
    pub excluded_from_rrs: bool,
    pub started_at: String,
    pub finished_at: String,
}

impl TrialRecord {
    /// A record for a trial that never started (e.g. invalid configuration).
    pub fn failed(trial_index: usize, config_hash: String, rng_seed: u64, error: &Error) -> Self {
        let now = crate::runner::timestamp();
        TrialRecord {
            schema_version: SCHEMA_VERSION,
            trial_index,
            config_hash,
            rng_seed,
            status: TrialStatus::Failed,
            error: Some(error.to_string()),
            cycles: Vec::new(),
            convergence: None,
            ledger: SeedLedger::new(),
            metrics: None,
            excluded_from_rrs: true,
            started_at: now.clone(),
            finished_at: now,
        }
    }

    /// Whether the record counts toward batch aggregates.
    pub fn is_valid(&self) -> bool {
        self.status != TrialStatus::Failed && self.metrics.is_some()
    }

    pub fn converged(&self) -> bool {
        self.convergence.as_ref().is_some_and(|c| c.converged)
    }

    /// Indices of non-compliant cycles whose successor did not raise the
    /// blend. A blend already at 1 cannot rise further and is not counted.
    pub fn reevaluation_violations(&self) -> Vec<usize> {
        self.cycles
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].ts < crate::metrics::COMPLIANCE_THRESHOLD && w[0].blend < 1.0)
            .filter(|(_, w)| w[1].blend <= w[0].blend)
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with wall-clock fields blanked, for determinism comparisons.
    pub fn without_timestamps(&self) -> Self {
        TrialRecord {
            started_at: String::new(),
            finished_at: String::new(),
            ..self.clone()
        }
    }
}

pub fn write_log(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<TrialRecord>> {
    parse_log(BufReader::new(File::open(path)?))
}

pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing schema_version".into(),
            })?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaVersionMismatch {
                line: line_no,
                found: version as u32,
                expected: SCHEMA_VERSION,
            });
        }
        records.push(serde_json::from_value(value).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Per-iteration trajectory export row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub step_distance: f64,
    pub ts: Option<f64>,
    pub reeval: Option<bool>,
    pub detections: Vec<ClaimId>,
}

pub fn trajectory_rows(traj: &Trajectory) -> Vec<TrajectoryRow> {
    traj.step_distances
        .iter()
        .enumerate()
        .map(|(i, &step_distance)| {
            let cycle = traj.per_cycle_results.get(i);
            TrajectoryRow {
                t: i + 1,
                step_distance,
                ts: cycle.map(|c| c.ts),
                reeval: cycle.map(|c| c.reevaluation_triggered),
                detections: cycle.map(|c| c.detections.clone()).unwrap_or_default(),
            }
        })
        .collect()
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    for row in trajectory_rows(traj) {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
