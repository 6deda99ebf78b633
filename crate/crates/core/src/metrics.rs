//! Transparency, detection, correction and reliability scores, plus batch
//! aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::TrialRecord;
use crate::seeding::DetectionOutcome;

pub const RRS_WEIGHTS: (f64, f64, f64) = (0.3, 0.4, 0.3);
pub const HIGH_COMPLIANCE: f64 = 0.8;
pub use crate::operators::COMPLIANCE_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsBand {
    High,
    Acceptable,
    Violation,
}

impl TsBand {
    pub fn of(ts: f64) -> TsBand {
        if ts >= HIGH_COMPLIANCE {
            TsBand::High
        } else if ts >= COMPLIANCE_THRESHOLD {
            TsBand::Acceptable
        } else {
            TsBand::Violation
        }
    }
}

fn unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange { name, value })
    }
}

pub fn compute_ts(ec: f64, tp: f64) -> Result<f64> {
    Ok((unit("ec", ec)? + unit("tp", tp)?) / 2.0)
}

pub fn compute_rrs(ts: f64, ddr: f64, csr: f64) -> Result<f64> {
    let (wt, wd, wc) = RRS_WEIGHTS;
    Ok(wt * unit("ts", ts)? + wd * unit("ddr", ddr)? + wc * unit("csr", csr)?)
}

/// Bias diagnostic `1 - TS`. Not used by any other score.
pub fn compute_bias(ts_norm: f64) -> Result<f64> {
    Ok(1.0 - unit("ts_norm", ts_norm)?)
}

pub fn compute_ddr(outcome: &DetectionOutcome) -> Result<f64> {
    if outcome.seeded == 0 {
        return Err(Error::NoSeededContradictions);
    }
    Ok(outcome.true_detections as f64 / outcome.seeded as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Csr {
    pub value: f64,
    /// Set when nothing was detected, so the ratio is vacuous.
    pub no_deviations_detected: bool,
}

pub fn compute_csr(outcome: &DetectionOutcome) -> Csr {
    if outcome.true_detections == 0 {
        return Csr {
            value: 0.0,
            no_deviations_detected: true,
        };
    }
    Csr {
        value: outcome.corrections as f64 / outcome.true_detections as f64,
        no_deviations_detected: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub ec: f64,
    pub tp: f64,
    pub ts: f64,
    pub b: f64,
    /// Absent when nothing was seeded.
    pub ddr: Option<f64>,
    pub csr: f64,
    pub csr_vacuous: bool,
    /// Absent when DDR is undefined.
    pub rrs: Option<f64>,
    pub ts_band: TsBand,
}

impl MetricBundle {
    pub fn compute(ec: f64, tp: f64, outcome: &DetectionOutcome) -> Result<Self> {
        let ts = compute_ts(ec, tp)?;
        let ddr = match compute_ddr(outcome) {
            Ok(v) => Some(v),
            Err(Error::NoSeededContradictions) => None,
            Err(e) => return Err(e),
        };
        let csr = compute_csr(outcome);
        let rrs = ddr.map(|ddr| compute_rrs(ts, ddr, csr.value)).transpose()?;
        Ok(MetricBundle {
            ec,
            tp,
            ts,
            b: compute_bias(ts)?,
            ddr,
            csr: csr.value,
            csr_vacuous: csr.no_deviations_detected,
            rrs,
            ts_band: TsBand::of(ts),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandFractions {
    pub high: f64,
    pub acceptable: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub trial_count: usize,
    pub error_count: usize,
    pub rrs_count: usize,
    pub rrs_mean: Option<f64>,
    pub rrs_sd: Option<f64>,
    pub ts_mean: f64,
    pub ddr_mean: Option<f64>,
    pub csr_mean: f64,
    pub bias_max: f64,
    pub band_counts: [usize; 3],
    pub band_fractions: BandFractions,
    pub converged_count: usize,
    pub convergence_rate: f64,
    pub tconv_mean: Option<f64>,
    pub tconv_sd: Option<f64>,
}

/// Order-independent sum: values are summed in sorted order.
fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(sorted_sum(&mut values.to_vec()) / values.len() as f64)
}

/// Sample standard deviation (n − 1); undefined below two values.
fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let mut sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    Some((sorted_sum(&mut sq) / (values.len() - 1) as f64).sqrt())
}

/// Aggregates valid records; failed records are only counted.
pub fn aggregate(records: &[TrialRecord]) -> Result<BatchAggregate> {
    let valid: Vec<&TrialRecord> = records.iter().filter(|r| r.is_valid()).collect();
    if valid.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = valid.len();
    let metrics: Vec<_> = valid.iter().filter_map(|r| r.metrics.as_ref()).collect();

    let rrs: Vec<f64> = valid
        .iter()
        .filter(|r| !r.excluded_from_rrs)
        .filter_map(|r| r.metrics.as_ref().and_then(|m| m.rrs))
        .collect();
    let ts: Vec<f64> = metrics.iter().map(|m| m.ts).collect();
    let ddr: Vec<f64> = metrics.iter().filter_map(|m| m.ddr).collect();
    let csr: Vec<f64> = metrics.iter().map(|m| m.csr).collect();

    let mut band_counts = [0usize; 3];
    for m in &metrics {
        band_counts[match m.ts_band {
            TsBand::High => 0,
            TsBand::Acceptable => 1,
            TsBand::Violation => 2,
        }] += 1;
    }
    let frac = |c: usize| c as f64 / n as f64;

    let tconv: Vec<f64> = valid
        .iter()
        .filter(|r| r.converged())
        .filter_map(|r| r.convergence.as_ref().map(|c| c.iterations as f64))
        .collect();

    Ok(BatchAggregate {
        trial_count: n,
        error_count: records.len() - n,
        rrs_count: rrs.len(),
        rrs_mean: mean(&rrs),
        rrs_sd: sample_sd(&rrs),
        ts_mean: mean(&ts).unwrap_or(0.0),
        ddr_mean: mean(&ddr),
        csr_mean: mean(&csr).unwrap_or(0.0),
        bias_max: metrics.iter().map(|m| m.b).fold(0.0, f64::max),
        band_counts,
        band_fractions: BandFractions {
            high: frac(band_counts[0]),
            acceptable: frac(band_counts[1]),
            violation: frac(band_counts[2]),
        },
        converged_count: tconv.len(),
        convergence_rate: frac(tconv.len()),
        tconv_mean: mean(&tconv),
        tconv_sd: sample_sd(&tconv),
    })
}

impl BatchAggregate {
    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| match v {
            Some(v) => format!("{v:.digits$}"),
            None => "n/a".to_string(),
        };
        let mut s = String::new();
        let _ = writeln!(s, "trials              {} ({} failed)", self.trial_count, self.error_count);
        let _ = writeln!(
            s,
            "RRS                 {} ± {}  (n = {})",
            opt(self.rrs_mean, 3),
            opt(self.rrs_sd, 3),
            self.rrs_count
        );
        let _ = writeln!(
            s,
            "TS mean             {:.3}    DDR mean {}    CSR mean {:.3}",
            self.ts_mean,
            opt(self.ddr_mean, 3),
            self.csr_mean
        );
        let _ = writeln!(s, "bias B max          {:.3}", self.bias_max);
        let bands = [
            ("TS >= 0.8  (high)", self.band_fractions.high),
            ("0.7 <= TS < 0.8", self.band_fractions.acceptable),
            ("TS < 0.7  (violation)", self.band_fractions.violation),
        ];
        for ((label, f), count) in bands.iter().zip(self.band_counts) {
            let _ = writeln!(s, "{label:<22}{:>6.1}%  ({count})", 100.0 * f);
        }
        let _ = writeln!(
            s,
            "converged           {:.1}%  ({}/{})",
            100.0 * self.convergence_rate,
            self.converged_count,
            self.trial_count
        );
        let _ = writeln!(
            s,
            "t_conv              {} ± {} iterations",
            opt(self.tconv_mean, 1),
            opt(self.tconv_sd, 1)
        );
        s
    }
}
