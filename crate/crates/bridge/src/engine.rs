//! Supervised session state machine.
//!
//! Every hand-off between stages is a pending transfer that only a
//! supervisor decision can release. The engine is pure: given the same
//! configuration, decisions and timestamps it produces the same events and
//! the same final record, which is what log replay relies on.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rks_core::config::{SupervisorPolicy, TrialConfig};
use rks_core::convergence::StopReason;
use rks_core::operators::{CycleResult, OperatorKind, Role, StageExecutor, StubExecutor, COMPLIANCE_THRESHOLD};
use rks_core::record::{CycleRow, TrialRecord, TrialStatus};
use rks_core::runner::{initial_state, TrialProgress};
use rks_core::seeding::ContradictionKind;
use rks_core::state::{Claim, ClaimId, KnowledgeState};

use crate::error::BridgeError;
use crate::prompts::PromptId;

/// Regenerations allowed per boundary; one more reject aborts the session.
pub const MAX_REJECTIONS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Initial state ready to hand to the semantic stage.
    Initialization,
    SemanticToAnalytical,
    /// Audit boundary: the supervisor scores the rubric and flags claims.
    AnalyticalToTransparency,
    /// Contradiction injection after the planned cycle.
    Seeding,
    /// Audited state ready to start the next cycle.
    TransparencyToSemantic,
    Finished,
}

impl Phase {
    pub fn producer(self) -> Participant {
        match self {
            Phase::Initialization | Phase::Seeding | Phase::Finished => Participant::Supervisor,
            Phase::SemanticToAnalytical => Participant::Semantic,
            Phase::AnalyticalToTransparency => Participant::Analytical,
            Phase::TransparencyToSemantic => Participant::Transparency,
        }
    }

    pub fn consumer(self) -> Participant {
        match self {
            Phase::Initialization | Phase::TransparencyToSemantic => Participant::Semantic,
            Phase::SemanticToAnalytical => Participant::Analytical,
            Phase::AnalyticalToTransparency => Participant::Transparency,
            Phase::Seeding | Phase::Finished => Participant::Supervisor,
        }
    }

    pub fn requires_rubric(self) -> bool {
        self == Phase::AnalyticalToTransparency
    }

    /// Boundaries whose producing stage can be asked to regenerate.
    pub fn allows_reject(self) -> bool {
        matches!(self, Phase::SemanticToAnalytical | Phase::AnalyticalToTransparency)
    }

    pub fn prompt(self) -> Option<PromptId> {
        match self {
            Phase::Initialization => Some(PromptId::ContextProvisioning),
            Phase::SemanticToAnalytical => Some(PromptId::AnalyticalConsistency),
            Phase::AnalyticalToTransparency => Some(PromptId::ComplianceAudit),
            Phase::TransparencyToSemantic => Some(PromptId::FinalVerification),
            Phase::Seeding | Phase::Finished => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Participant {
    Supervisor,
    Semantic,
    Analytical,
    Transparency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingDecision,
    Running,
    Converged,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    ApproveWithEdits,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingTransfer {
    pub id: u64,
    pub phase: Phase,
    pub producer: Participant,
    pub consumer: Participant,
    /// Cycle this transfer belongs to (1-based).
    pub cycle: usize,
    pub state: KnowledgeState,
    pub requires_rubric: bool,
    /// Planned contradiction kinds, at the seeding boundary.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub planned_seeds: Vec<ContradictionKind>,
    pub rejections: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub transfer_id: u64,
    pub verdict: Verdict,
    /// Replacement claim set for the transferred state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_claims: Option<Vec<Claim>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<f64>,
    /// Claims the supervisor marks as inconsistent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ClaimId>,
    /// Kinds to inject at the seeding boundary; defaults to the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_kinds: Option<Vec<ContradictionKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Set by the service on receipt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl Decision {
    pub fn approve(transfer_id: u64) -> Self {
        Decision {
            session_id: None,
            transfer_id,
            verdict: Verdict::Approve,
            edited_claims: None,
            ec: None,
            tp: None,
            flags: Vec::new(),
            seed_kinds: None,
            note: None,
            timestamp: None,
        }
    }

    pub fn reject(transfer_id: u64, note: impl Into<String>) -> Self {
        Decision {
            verdict: Verdict::Reject,
            note: Some(note.into()),
            ..Self::approve(transfer_id)
        }
    }

    pub fn audit(transfer_id: u64, ec: f64, tp: f64, flags: Vec<ClaimId>) -> Self {
        Decision {
            ec: Some(ec),
            tp: Some(tp),
            flags,
            ..Self::approve(transfer_id)
        }
    }

    pub fn with_edits(mut self, claims: Vec<Claim>) -> Self {
        self.verdict = Verdict::ApproveWithEdits;
        self.edited_claims = Some(claims);
        self
    }
}

/// Everything the engine emits after a decision. The first event of every
/// decision is a `PhaseChange`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum LogEvent {
    SessionCreated {
        config: TrialConfig,
        transfer: PendingTransfer,
    },
    Decision(Decision),
    PhaseChange {
        from: Phase,
        to: Phase,
        status: SessionStatus,
        /// Why the phase did not move forward, for regenerations.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transfer: Option<PendingTransfer>,
    },
    CycleRecorded {
        row: CycleRow,
    },
    SeedsInjected {
        cycle: usize,
        kinds: Vec<ContradictionKind>,
    },
    SessionFinished {
        record: TrialRecord,
    },
}

impl LogEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            LogEvent::SessionCreated { .. } => "session_created",
            LogEvent::Decision(_) => "decision",
            LogEvent::PhaseChange { .. } => "phase_change",
            LogEvent::CycleRecorded { .. } => "cycle_recorded",
            LogEvent::SeedsInjected { .. } => "seeds_injected",
            LogEvent::SessionFinished { .. } => "session_finished",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionEngine {
    id: String,
    config: TrialConfig,
    created_at: String,
    rng: ChaCha8Rng,
    progress: TrialProgress,
    phase: Phase,
    transfer_id: u64,
    /// Input of the stage that produced the pending state, for regeneration.
    stage_input: KnowledgeState,
    pending: KnowledgeState,
    rejections: u32,
    status: SessionStatus,
    record: Option<TrialRecord>,
}

impl SessionEngine {
    /// Starts a session at the initialization boundary. The configuration
    /// must use the human-bridge policy and carry an rng seed.
    pub fn new(id: impl Into<String>, config: TrialConfig, now: &str) -> Result<(Self, LogEvent), BridgeError> {
        if config.policy != SupervisorPolicy::HumanBridge {
            return Err(BridgeError::ConfigInvalid(
                "sessions need policy human_bridge; automated trials belong to the batch runner".into(),
            ));
        }
        let seed = config
            .rng_seed
            .ok_or_else(|| BridgeError::ConfigInvalid("rng_seed must be set before the session starts".into()))?;
        config.validate().map_err(|e| BridgeError::ConfigInvalid(e.to_string()))?;
        config
            .operators
            .validate(config.dimension)
            .map_err(|e| BridgeError::ConfigInvalid(e.to_string()))?;
        if let Some(spec) = config.operators.stages().into_iter().find(|s| s.kind == OperatorKind::ScriptedExternal) {
            return Err(BridgeError::ConfigInvalid(format!(
                "{} is scripted_external; supervised sessions use stub or human_bridge operators",
                spec.role.as_str()
            )));
        }
        parse_time(now)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = initial_state(&config, &mut rng);
        let progress = TrialProgress::new(x0.clone(), config.operators.transparency.blend);
        let engine = SessionEngine {
            id: id.into(),
            config,
            created_at: now.to_owned(),
            rng,
            progress,
            phase: Phase::Initialization,
            transfer_id: 1,
            stage_input: x0.clone(),
            pending: x0,
            rejections: 0,
            status: SessionStatus::AwaitingDecision,
            record: None,
        };
        let created = LogEvent::SessionCreated {
            config: engine.config.clone(),
            transfer: engine.pending_transfer().expect("fresh session awaits a decision"),
        };
        Ok((engine, created))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn created_at(&self) -> &str {
        &self.created_at
    }

    pub fn cycles(&self) -> &[CycleRow] {
        &self.progress.rows
    }

    pub fn blend(&self) -> f64 {
        self.progress.blend
    }

    pub fn record(&self) -> Option<&TrialRecord> {
        self.record.as_ref()
    }

    pub fn pending_transfer(&self) -> Option<PendingTransfer> {
        if self.status != SessionStatus::AwaitingDecision {
            return None;
        }
        let planned_seeds = if self.phase == Phase::Seeding {
            self.planned_kinds()
        } else {
            Vec::new()
        };
        Some(PendingTransfer {
            id: self.transfer_id,
            phase: self.phase,
            producer: self.phase.producer(),
            consumer: self.phase.consumer(),
            cycle: self.current_cycle(),
            state: self.pending.clone(),
            requires_rubric: self.phase.requires_rubric(),
            planned_seeds,
            rejections: self.rejections,
        })
    }

    fn current_cycle(&self) -> usize {
        match self.phase {
            Phase::Seeding | Phase::Finished => self.progress.cycles().max(1),
            _ => self.progress.cycles() + 1,
        }
    }

    fn planned_kinds(&self) -> Vec<ContradictionKind> {
        let cycle = self.progress.cycles();
        self.config
            .seed_plan
            .iter()
            .filter(|s| s.iteration == cycle)
            .map(|s| s.kind)
            .collect()
    }

    /// Rejects decisions that must not be logged. Nothing is mutated.
    pub fn check(&self, d: &Decision) -> Result<(), BridgeError> {
        if let Some(sid) = &d.session_id {
            if sid != &self.id {
                return Err(BridgeError::InvalidDecision(format!(
                    "decision names session {sid}, not {}",
                    self.id
                )));
            }
        }
        if self.status != SessionStatus::AwaitingDecision {
            return Err(BridgeError::SessionNotAwaiting(self.status));
        }
        if d.transfer_id != self.transfer_id {
            return Err(BridgeError::StaleTransfer {
                expected: self.transfer_id,
                found: d.transfer_id,
            });
        }
        for (name, v) in [("ec", d.ec), ("tp", d.tp)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(BridgeError::InvalidRubric(format!("{name} = {v} is outside [0, 1]")));
                }
            }
        }
        let invalid = |m: &str| Err(BridgeError::InvalidDecision(m.into()));
        match d.verdict {
            Verdict::Reject => {
                if !self.phase.allows_reject() {
                    return invalid("this boundary has no producing stage to regenerate");
                }
                if d.edited_claims.is_some() || d.seed_kinds.is_some() || !d.flags.is_empty() {
                    return invalid("a reject carries only a note");
                }
                return Ok(());
            }
            Verdict::ApproveWithEdits if d.edited_claims.is_none() => {
                return invalid("approve_with_edits requires edited_claims");
            }
            Verdict::Approve if d.edited_claims.is_some() => {
                return invalid("edited_claims require the approve_with_edits verdict");
            }
            _ => {}
        }
        if self.phase.requires_rubric() && (d.ec.is_none() || d.tp.is_none()) {
            return Err(BridgeError::InvalidRubric("the audit boundary requires ec and tp".into()));
        }
        if !self.phase.requires_rubric() && !d.flags.is_empty() {
            return invalid("claims can only be flagged at the audit boundary");
        }
        if self.phase != Phase::Seeding && d.seed_kinds.is_some() {
            return invalid("seed kinds are only accepted at the seeding boundary");
        }
        if self.phase == Phase::Seeding && d.edited_claims.is_some() {
            return invalid("the seeding boundary does not accept edits");
        }
        let known: BTreeSet<&ClaimId> = self.pending.claims.iter().map(|c| &c.id).collect();
        if let Some(unknown) = d.flags.iter().find(|id| !known.contains(id)) {
            return Err(BridgeError::InvalidDecision(format!("flagged claim {unknown} is not in the transfer")));
        }
        if let Some(claims) = &d.edited_claims {
            KnowledgeState::new(self.pending.vector.clone())
                .with_claims(claims.clone())
                .validate()
                .map_err(|e| BridgeError::InvalidDecision(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies a checked decision and returns the events that follow it.
    pub fn apply(&mut self, d: &Decision, now: &str) -> Vec<LogEvent> {
        let from = self.phase;
        self.status = SessionStatus::Running;

        if let Some(limit) = self.config.wall_clock_limit() {
            let elapsed = elapsed_secs(&self.created_at, now);
            if elapsed >= limit.as_secs_f64() {
                return self.finish(from, false, StopReason::Timeout, TrialStatus::TimedOut, Some("session exceeded its wall-clock limit".into()), now);
            }
        }

        let outcome = match d.verdict {
            Verdict::Reject => return self.regenerate(from, d, now),
            Verdict::Approve | Verdict::ApproveWithEdits => self.advance(d, now),
        };
        match outcome {
            Ok(mut events) => {
                if self.status == SessionStatus::Running {
                    self.status = SessionStatus::AwaitingDecision;
                    self.transfer_id += 1;
                    self.rejections = 0;
                    events.insert(0, self.phase_change(from, None));
                }
                events
            }
            Err(e) => self.finish(from, false, StopReason::OperatorFailure, TrialStatus::Failed, Some(e.to_string()), now),
        }
    }

    fn phase_change(&self, from: Phase, reason: Option<String>) -> LogEvent {
        LogEvent::PhaseChange {
            from,
            to: self.phase,
            status: self.status,
            reason,
            transfer: self.pending_transfer(),
        }
    }

    fn regenerate(&mut self, from: Phase, d: &Decision, now: &str) -> Vec<LogEvent> {
        if self.rejections >= MAX_REJECTIONS {
            return self.finish(
                from,
                false,
                StopReason::OperatorFailure,
                TrialStatus::Failed,
                Some(format!("boundary rejected more than {MAX_REJECTIONS} times")),
                now,
            );
        }
        let role = match from {
            Phase::SemanticToAnalytical => Role::Semantic,
            _ => Role::Analytical,
        };
        match self.transform(role, self.stage_input.clone()) {
            Ok(state) => {
                self.pending = state;
                self.rejections += 1;
                self.transfer_id += 1;
                self.status = SessionStatus::AwaitingDecision;
                let reason = d.note.clone().unwrap_or_else(|| "rejected".into());
                vec![self.phase_change(from, Some(format!("regenerate: {reason}")))]
            }
            Err(e) => self.finish(from, false, StopReason::OperatorFailure, TrialStatus::Failed, Some(e.to_string()), now),
        }
    }

    fn transform(&mut self, role: Role, state: KnowledgeState) -> rks_core::Result<KnowledgeState> {
        let ops = self.config.operators.with_blend(self.progress.blend);
        StubExecutor.transform(ops.spec(role), state, &mut self.rng)
    }

    /// Transferred state with the supervisor's edits applied.
    fn edited(&self, d: &Decision) -> KnowledgeState {
        let mut state = self.pending.clone();
        if let Some(claims) = &d.edited_claims {
            state.claims = claims.clone();
            self.progress.ledger.retag(&mut state);
        }
        state
    }

    fn advance(&mut self, d: &Decision, now: &str) -> rks_core::Result<Vec<LogEvent>> {
        match self.phase {
            Phase::Initialization | Phase::TransparencyToSemantic => {
                let input = self.edited(d);
                *self.progress.trajectory.states.last_mut().expect("trajectory holds a state") = input.clone();
                self.pending = self.transform(Role::Semantic, input.clone())?;
                self.stage_input = input;
                self.phase = Phase::SemanticToAnalytical;
                Ok(Vec::new())
            }
            Phase::SemanticToAnalytical => {
                let input = self.edited(d);
                self.pending = self.transform(Role::Analytical, input.clone())?;
                self.stage_input = input;
                self.phase = Phase::AnalyticalToTransparency;
                Ok(Vec::new())
            }
            Phase::AnalyticalToTransparency => self.audit(d, now),
            Phase::Seeding => {
                let kinds = d.seed_kinds.clone().unwrap_or_else(|| self.planned_kinds());
                let cycle = self.progress.cycles();
                self.progress.inject(&kinds, cycle, &mut self.rng)?;
                self.pending = self.progress.trajectory.last().clone();
                self.phase = Phase::TransparencyToSemantic;
                Ok(vec![LogEvent::SeedsInjected { cycle, kinds }])
            }
            Phase::Finished => unreachable!("finished sessions reject decisions in check"),
        }
    }

    fn audit(&mut self, d: &Decision, now: &str) -> rks_core::Result<Vec<LogEvent>> {
        let audited = self.pending.clone();
        let mut next = self.edited(d);
        let kept: BTreeSet<&ClaimId> = next.claims.iter().map(|c| &c.id).collect();
        let corrected: Vec<ClaimId> = audited
            .claims
            .iter()
            .filter(|c| !kept.contains(&c.id))
            .map(|c| c.id.clone())
            .collect();

        let ops = self.config.operators.with_blend(self.progress.blend);
        next.vector = ops.transparency.map_vector(&next.vector)?;
        next.iteration_index = self.progress.trajectory.last().iteration_index + 1;
        let (ec, tp) = (d.ec.expect("checked"), d.tp.expect("checked"));
        let ts = (ec + tp) / 2.0;
        let result = CycleResult {
            new_state: next,
            ts,
            ec,
            tp,
            detections: d.flags.clone(),
            corrections_applied: corrected,
            reevaluation_triggered: ts < COMPLIANCE_THRESHOLD,
        };
        let finite = result.new_state.is_finite();
        if !finite {
            return Ok(self.finish(self.phase, false, StopReason::NumericOverflow, TrialStatus::Completed, None, now));
        }
        self.progress.record_cycle(&self.config, &audited, result)?;
        let row = self.progress.rows.last().expect("cycle recorded").clone();
        let recorded = LogEvent::CycleRecorded { row };

        let from = self.phase;
        let cycle = self.progress.cycles();
        let mut events = if self.progress.converged(&self.config) {
            self.finish(from, true, StopReason::Converged, TrialStatus::Completed, None, now)
        } else if cycle >= self.config.max_iterations {
            self.finish(from, false, StopReason::IterationCap, TrialStatus::Completed, None, now)
        } else {
            self.phase = if self.config.seed_plan.iter().any(|s| s.iteration == cycle) {
                Phase::Seeding
            } else {
                Phase::TransparencyToSemantic
            };
            self.pending = self.progress.trajectory.last().clone();
            Vec::new()
        };
        // The phase change stays directly after the decision.
        let at = usize::from(!events.is_empty());
        events.insert(at, recorded);
        Ok(events)
    }

    fn finish(
        &mut self,
        from: Phase,
        converged: bool,
        stop: StopReason,
        status: TrialStatus,
        error: Option<String>,
        now: &str,
    ) -> Vec<LogEvent> {
        self.phase = Phase::Finished;
        self.status = if converged {
            SessionStatus::Converged
        } else {
            SessionStatus::Aborted
        };
        let record = self
            .progress
            .clone()
            .finalize(&self.config, 0, converged, stop, status, error, self.created_at.clone(), now.to_owned())
            .expect("final metrics come from validated rubric scores");
        self.record = Some(record.clone());
        vec![self.phase_change(from, None), LogEvent::SessionFinished { record }]
    }
}

pub(crate) fn parse_time(t: &str) -> Result<chrono::DateTime<chrono::FixedOffset>, BridgeError> {
    chrono::DateTime::parse_from_rfc3339(t).map_err(|e| BridgeError::InvalidDecision(format!("bad timestamp {t}: {e}")))
}

fn elapsed_secs(from: &str, to: &str) -> f64 {
    match (parse_time(from), parse_time(to)) {
        (Ok(a), Ok(b)) => (b - a).num_milliseconds() as f64 / 1000.0,
        _ => 0.0,
    }
}
