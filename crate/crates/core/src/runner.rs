//! Trial protocol and batch execution.
//!
//! One trial: initialise `x0`; run the semantic and analytical stages once
//! and audit the result (cycle 1); inject the planned contradictions; keep
//! cycling until the convergence criterion or a cap is hit; finally score
//! the ledger and record the metric bundle. A non-compliant cycle raises the
//! transparency blend for every later cycle.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adapter::AdapterExecutor;
use crate::config::{BatchTemplate, TrialConfig};
use crate::convergence::{Criterion, StopReason, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, BatchAggregate, MetricBundle, TsBand};
use crate::operators::{CycleResult, StageExecutor};
use crate::record::{CycleRow, TrialRecord, TrialStatus, SCHEMA_VERSION};
use crate::seeding::{fresh_claim_id, SeedLedger};
use crate::state::{Claim, ClaimKind, KnowledgeState};

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Initial state: uniform vector in `[-r, r]^d` plus provenance-marked
/// baseline claims.
pub fn initial_state(config: &TrialConfig, rng: &mut impl Rng) -> KnowledgeState {
    let r = config.initial_radius;
    let vector = (0..config.dimension).map(|_| rng.random_range(-r..=r)).collect();
    let mut taken = HashSet::new();
    let claims = (0..config.baseline_claims)
        .map(|i| {
            let id = fresh_claim_id(&taken, rng);
            taken.insert(id.clone());
            let kind = if i % 2 == 0 { ClaimKind::Assertion } else { ClaimKind::Implication };
            let mut claim = Claim::new(id.0, kind, format!("baseline proposition {}", i + 1));
            claim.provenance_marked = true;
            claim
        })
        .collect();
    KnowledgeState::new(vector).with_claims(claims)
}

/// Mutable per-trial bookkeeping shared by the automated runner and the
/// human-bridge session engine.
#[derive(Debug, Clone)]
pub struct TrialProgress {
    pub trajectory: Trajectory,
    pub rows: Vec<CycleRow>,
    pub ledger: SeedLedger,
    pub blend: f64,
}

impl TrialProgress {
    pub fn new(x0: KnowledgeState, blend: f64) -> Self {
        TrialProgress {
            trajectory: Trajectory::start(x0),
            rows: Vec::new(),
            ledger: SeedLedger::new(),
            blend,
        }
    }

    pub fn cycles(&self) -> usize {
        self.rows.len()
    }

    /// Records a finished cycle; `audited` is the state the auditor saw.
    /// Returns the step distance.
    pub fn record_cycle(
        &mut self,
        config: &TrialConfig,
        audited: &KnowledgeState,
        result: CycleResult,
    ) -> Result<f64> {
        self.ledger
            .score_detections(&result.detections, &result.corrections_applied, audited, result.ts)?;
        let row = CycleRow {
            iteration: self.rows.len() + 1,
            step_distance: 0.0,
            ec: result.ec,
            tp: result.tp,
            ts: result.ts,
            band: TsBand::of(result.ts),
            blend: self.blend,
            detections: result.detections.clone(),
            corrections: result.corrections_applied.clone(),
            reevaluation: result.reevaluation_triggered,
        };
        let reevaluate = result.reevaluation_triggered;
        let step = self.trajectory.push(result)?;
        self.rows.push(CycleRow {
            step_distance: step,
            ..row
        });
        if reevaluate {
            self.blend = config.escalate(self.blend);
        }
        Ok(step)
    }

    /// Injects the seeds planned for the cycle just completed.
    pub fn inject_planned(&mut self, config: &TrialConfig, rng: &mut impl Rng) -> Result<usize> {
        let cycle = self.cycles();
        let kinds: Vec<_> = config
            .seed_plan
            .iter()
            .filter(|s| s.iteration == cycle)
            .map(|s| s.kind)
            .collect();
        self.inject(&kinds, cycle, rng)
    }

    pub fn inject(
        &mut self,
        kinds: &[crate::seeding::ContradictionKind],
        cycle: usize,
        rng: &mut impl Rng,
    ) -> Result<usize> {
        for &kind in kinds {
            let current = self.trajectory.last().clone();
            let (seeded, _) = self.ledger.seed(&current, kind, cycle, rng)?;
            *self
                .trajectory
                .states
                .last_mut()
                .expect("trajectory holds a state") = seeded;
        }
        Ok(kinds.len())
    }

    /// Whether the latest cycle satisfies the criterion, given that every
    /// planned seed has been injected.
    pub fn converged(&self, config: &TrialConfig) -> bool {
        let states = &self.trajectory.states;
        if self.cycles() <= config.last_seed_iteration() || states.len() < 2 {
            return false;
        }
        let step = *self.trajectory.step_distances.last().expect("a cycle ran");
        Criterion { epsilon: config.epsilon }.is_met(step, &states[states.len() - 2], &states[states.len() - 1])
    }

    /// Closes the ledger and builds the record.
    #[allow(clippy::too_many_arguments)]
    pub fn finalize(
        mut self,
        config: &TrialConfig,
        trial_index: usize,
        converged: bool,
        stop: StopReason,
        status: TrialStatus,
        error: Option<String>,
        started_at: String,
        finished_at: String,
    ) -> Result<TrialRecord> {
        self.ledger.finalize();
        let metrics = match self.rows.last() {
            Some(last) => Some(MetricBundle::compute(last.ec, last.tp, &self.ledger.outcome())?),
            None => None,
        };
        let excluded_from_rrs = metrics.as_ref().is_none_or(|m| m.rrs.is_none());
        Ok(TrialRecord {
            schema_version: SCHEMA_VERSION,
            trial_index,
            config_hash: config.hash(),
            rng_seed: config.rng_seed.unwrap_or_default(),
            status,
            error,
            convergence: Some(self.trajectory.report(converged, config.epsilon, stop)),
            cycles: self.rows,
            ledger: self.ledger,
            metrics,
            excluded_from_rrs,
            started_at,
            finished_at,
        })
    }
}

/// One cycle through an executor: S, then A, then the T audit.
/// Returns the state the auditor saw alongside the cycle result.
pub fn run_cycle(
    executor: &mut dyn StageExecutor,
    config: &TrialConfig,
    blend: f64,
    state: &KnowledgeState,
    rng: &mut dyn rand::RngCore,
) -> Result<(KnowledgeState, CycleResult)> {
    let ops = config.operators.with_blend(blend);
    let s = executor.transform(&ops.semantic, state.clone(), rng)?;
    let a = executor.transform(&ops.analytical, s, rng)?;
    let report = executor.audit(&ops.transparency, a.clone(), rng)?;
    let mut result = CycleResult::from_audit(report, &ops.transparency)?;
    result.new_state.iteration_index = state.iteration_index + 1;
    Ok((a, result))
}

pub fn run_trial(config: &TrialConfig) -> Result<TrialRecord> {
    run_trial_indexed(config, 0)
}

pub fn run_trial_indexed(config: &TrialConfig, trial_index: usize) -> Result<TrialRecord> {
    config.validate()?;
    let started_at = timestamp();
    let clock = Instant::now();
    let deadline = config.wall_clock_limit();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.expect("validated"));

    // Step 1: initialisation.
    let x0 = initial_state(config, &mut rng);
    let mut progress = TrialProgress::new(x0, config.operators.transparency.blend);

    let mut executor = match AdapterExecutor::spawn(config.operators.stages()) {
        Ok(e) => e,
        Err(e) => {
            let err = Error::from(e);
            return progress.finalize(
                config,
                trial_index,
                false,
                StopReason::OperatorFailure,
                TrialStatus::Failed,
                Some(err.to_string()),
                started_at,
                timestamp(),
            );
        }
    };

    let mut outcome = (false, StopReason::IterationCap, TrialStatus::Completed, None);
    // Steps 2-3 form cycle 1 (synthesis then first audit); step 4 seeds after
    // the configured cycle; step 5 repeats full cycles; step 6 is the
    // criterion check after each cycle.
    while progress.cycles() < config.max_iterations {
        if deadline.is_some_and(|d| clock.elapsed() >= d) {
            outcome = (false, StopReason::Timeout, TrialStatus::TimedOut, Some(Error::Timeout.to_string()));
            break;
        }
        let current = progress.trajectory.last().clone();
        let (audited, result) = match run_cycle(&mut executor, config, progress.blend, &current, &mut rng) {
            Ok(r) => r,
            Err(e @ Error::OperatorFailure(_)) => {
                outcome = (false, StopReason::OperatorFailure, TrialStatus::Failed, Some(e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        };
        if !result.new_state.is_finite() {
            outcome = (false, StopReason::NumericOverflow, TrialStatus::Completed, None);
            break;
        }
        progress.record_cycle(config, &audited, result)?;
        if progress.converged(config) {
            outcome = (true, StopReason::Converged, TrialStatus::Completed, None);
            break;
        }
        progress.inject_planned(config, &mut rng)?;
    }
    executor.shutdown();

    // Step 7: registration.
    let (converged, stop, status, error) = outcome;
    progress.finalize(
        config,
        trial_index,
        converged,
        stop,
        status,
        error,
        started_at,
        timestamp(),
    )
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub records: Vec<TrialRecord>,
    /// `None` when no record is valid.
    pub aggregate: Option<BatchAggregate>,
}

/// Runs configurations independently, preserving their order.
pub fn run_configs(configs: &[TrialConfig], parallelism: usize) -> BatchOutcome {
    let run = |(i, c): (usize, &TrialConfig)| {
        run_trial_indexed(c, i).unwrap_or_else(|e| {
            TrialRecord::failed(i, c.hash(), c.rng_seed.unwrap_or_default(), &e)
        })
    };
    let records: Vec<TrialRecord> = if parallelism <= 1 {
        configs.iter().enumerate().map(run).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(|| configs.par_iter().enumerate().map(run).collect()),
            Err(_) => configs.iter().enumerate().map(run).collect(),
        }
    };
    let aggregate = aggregate(&records).ok();
    BatchOutcome { records, aggregate }
}

/// Runs `count` trials from a template with seeds derived from `master_seed`.
pub fn run_batch(template: &BatchTemplate, count: usize, master_seed: u64, parallelism: usize) -> Result<BatchOutcome> {
    if count == 0 {
        return Err(Error::ConfigInvalid("count must be at least 1".into()));
    }
    let configs = BatchTemplate::trial_seeds(master_seed, count)
        .into_iter()
        .map(|seed| template.instantiate(seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(run_configs(&configs, parallelism))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::stub_operators;
    use crate::seeding::SeedStatus;

    fn config(semantic: f64, analytical: f64, blend: f64, seed: u64) -> TrialConfig {
        let ops = stub_operators(8, semantic, analytical, blend, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut c = TrialConfig::new(ops, 8, seed);
        c.operators.transparency = c.operators.transparency.with_detection(1.0, 0.0, 1.0);
        c
    }

    #[test]
    fn contractive_trial_converges_and_scores_perfectly() {
        let c = config(1.0, 0.8, 0.4, 17);
        let r = run_trial(&c).unwrap();
        let conv = r.convergence.as_ref().unwrap();
        assert!(conv.converged, "{conv:?}");
        assert!(conv.iterations <= 25);
        assert_eq!(r.cycles.len(), conv.iterations);
        let m = r.metrics.as_ref().unwrap();
        assert_eq!(m.ddr, Some(1.0));
        assert_eq!(m.csr, 1.0);
        assert!(!r.excluded_from_rrs);
        assert!(r.ledger.entries.iter().all(|e| e.status == SeedStatus::Corrected));
    }

    #[test]
    fn seeds_are_injected_once_at_the_planned_cycle() {
        let c = config(1.0, 0.8, 0.4, 3);
        let r = run_trial(&c).unwrap();
        assert_eq!(r.ledger.len(), 3);
        assert!(r.ledger.entries.iter().all(|e| e.iteration_injected == 1));
    }

    #[test]
    fn unseeded_trial_has_no_ddr() {
        let mut c = config(1.0, 0.8, 0.4, 5);
        c.seed_plan.clear();
        let r = run_trial(&c).unwrap();
        let m = r.metrics.unwrap();
        assert_eq!(m.ddr, None);
        assert_eq!(m.rrs, None);
        assert!(r.excluded_from_rrs);
    }

    #[test]
    fn reruns_are_identical_except_timestamps() {
        let mut c = config(1.1, 0.9, 0.2, 8);
        c.operators.transparency = c.operators.transparency.with_detection(0.5, 0.1, 0.5);
        let a = run_trial(&c).unwrap();
        let b = run_trial(&c).unwrap();
        assert_eq!(a.without_timestamps(), b.without_timestamps());
    }

    #[test]
    fn invalid_config_is_an_error_not_a_record() {
        let mut c = config(1.0, 0.8, 0.4, 5);
        c.max_iterations = 0;
        assert!(matches!(run_trial(&c), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let t = BatchTemplate::fixed(config(1.0, 0.8, 0.3, 1));
        let a = run_batch(&t, 6, 99, 1).unwrap();
        let b = run_batch(&t, 6, 99, 4).unwrap();
        let strip = |o: &BatchOutcome| o.records.iter().map(TrialRecord::without_timestamps).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.aggregate, b.aggregate);
        assert!(run_batch(&t, 0, 1, 1).is_err());
    }
}
