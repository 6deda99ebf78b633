//! Seeded contradictions and the ground-truth ledger used to score audits.

use std::collections::{BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::COMPLIANCE_THRESHOLD;
use crate::state::{Claim, ClaimId, ClaimKind, KnowledgeState, Polarity, TruthId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContradictionKind {
    LogicalContradiction,
    SemanticAmbiguity,
    EthicalViolation,
}

impl ContradictionKind {
    pub const ALL: [ContradictionKind; 3] = [
        ContradictionKind::LogicalContradiction,
        ContradictionKind::SemanticAmbiguity,
        ContradictionKind::EthicalViolation,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContradictionSpec {
    pub kind: ContradictionKind,
    pub injected_claims: Vec<Claim>,
    pub truth_id: TruthId,
}

const TERMS: [&str; 6] = [
    "convergence",
    "auditability",
    "consensus",
    "traceability",
    "fixed point",
    "validation",
];

/// Draws a claim id not present in `taken`.
pub fn fresh_claim_id<R: Rng + ?Sized>(taken: &HashSet<ClaimId>, rng: &mut R) -> ClaimId {
    loop {
        let id = ClaimId(format!("c-{:016x}", rng.random::<u64>()));
        if !taken.contains(&id) {
            return id;
        }
    }
}

impl ContradictionSpec {
    /// Builds the claims for one seeded item. Ids avoid those already in `state`.
    pub fn generate<R: Rng + ?Sized>(
        kind: ContradictionKind,
        truth_id: TruthId,
        state: &KnowledgeState,
        rng: &mut R,
    ) -> Self {
        let mut taken: HashSet<ClaimId> = state.claims.iter().map(|c| c.id.clone()).collect();
        let mut claim = |kind: ClaimKind, subject: String, polarity: Polarity| {
            let id = fresh_claim_id(&taken, rng);
            taken.insert(id.clone());
            Claim {
                id,
                kind,
                subject,
                polarity,
                provenance_marked: false,
                hidden_seed_id: Some(truth_id.clone()),
            }
        };
        let tag = &truth_id.0[truth_id.0.len().saturating_sub(4)..];
        let injected_claims = match kind {
            ContradictionKind::LogicalContradiction => {
                let (a, b) = (format!("P{tag}"), format!("Q{tag}"));
                vec![
                    claim(ClaimKind::Implication, format!("{a} implies {b}"), Polarity::Positive),
                    claim(ClaimKind::Assertion, a, Polarity::Positive),
                    claim(ClaimKind::Assertion, b, Polarity::Negative),
                ]
            }
            ContradictionKind::SemanticAmbiguity => {
                let term = TERMS[truth_id.0.len() % TERMS.len()];
                vec![claim(
                    ClaimKind::Definition,
                    format!("'{term}' denotes any state the system reports ({tag})"),
                    Polarity::Positive,
                )]
            }
            ContradictionKind::EthicalViolation => vec![claim(
                ClaimKind::Assertion,
                format!("initial scope constraints may be waived for throughput ({tag})"),
                Polarity::Positive,
            )],
        };
        ContradictionSpec {
            kind,
            injected_claims,
            truth_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Pending,
    Detected,
    Corrected,
    Missed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub truth_id: TruthId,
    pub kind: ContradictionKind,
    pub iteration_injected: usize,
    pub claim_ids: Vec<ClaimId>,
    pub status: SeedStatus,
}

impl LedgerEntry {
    pub fn is_detected(&self) -> bool {
        matches!(self.status, SeedStatus::Detected | SeedStatus::Corrected)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub seeded: usize,
    pub true_detections: usize,
    pub missed: usize,
    pub false_positives: usize,
    pub corrections: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedLedger {
    pub entries: Vec<LedgerEntry>,
    /// Unseeded claims flagged at any point in the trial.
    pub false_positive_ids: BTreeSet<ClaimId>,
}

impl SeedLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn fresh_truth_id<R: Rng + ?Sized>(&self, rng: &mut R) -> TruthId {
        loop {
            let id = TruthId(format!("sc-{:016x}", rng.random::<u64>()));
            if self.entries.iter().all(|e| e.truth_id != id) {
                return id;
            }
        }
    }

    /// Injects one contradiction of `kind`. The vector part is untouched.
    pub fn seed<R: Rng + ?Sized>(
        &mut self,
        state: &KnowledgeState,
        kind: ContradictionKind,
        iteration: usize,
        rng: &mut R,
    ) -> Result<(KnowledgeState, LedgerEntry)> {
        state.validate()?;
        let truth_id = self.fresh_truth_id(rng);
        let spec = ContradictionSpec::generate(kind, truth_id.clone(), state, rng);
        let entry = LedgerEntry {
            truth_id,
            kind,
            iteration_injected: iteration,
            claim_ids: spec.injected_claims.iter().map(|c| c.id.clone()).collect(),
            status: SeedStatus::Pending,
        };
        let mut next = state.clone();
        next.claims.extend(spec.injected_claims);
        self.entries.push(entry.clone());
        Ok((next, entry))
    }

    pub fn truth_of(&self, id: &ClaimId) -> Option<&TruthId> {
        self.entries
            .iter()
            .find(|e| e.claim_ids.contains(id))
            .map(|e| &e.truth_id)
    }

    /// Restores hidden seed ids on claims that crossed an external boundary.
    pub fn retag(&self, state: &mut KnowledgeState) {
        for claim in &mut state.claims {
            claim.hidden_seed_id = self.truth_of(&claim.id).cloned();
        }
    }

    /// Scores one audit.
    ///
    /// `audited` is the state the auditor inspected; `flagged` and
    /// `corrected` must reference its claims. An entry becomes detected when
    /// any of its claims is flagged, and corrected once none of its claims
    /// survive the correction and the cycle's TS is compliant.
    pub fn score_detections(
        &mut self,
        flagged: &[ClaimId],
        corrected: &[ClaimId],
        audited: &KnowledgeState,
        ts: f64,
    ) -> Result<DetectionOutcome> {
        let present: HashSet<&ClaimId> = audited.claims.iter().map(|c| &c.id).collect();
        if let Some(unknown) = flagged
            .iter()
            .chain(corrected)
            .find(|id| !present.contains(id))
        {
            return Err(Error::UnknownClaimId(unknown.0.clone()));
        }
        let flagged_set: HashSet<&ClaimId> = flagged.iter().collect();
        let removed: HashSet<&ClaimId> = corrected.iter().collect();
        let survives = |id: &ClaimId| present.contains(id) && !removed.contains(id);

        for entry in &mut self.entries {
            if entry.status == SeedStatus::Pending && entry.claim_ids.iter().any(|id| flagged_set.contains(id)) {
                entry.status = SeedStatus::Detected;
            }
            if entry.status == SeedStatus::Detected
                && ts >= COMPLIANCE_THRESHOLD
                && !entry.claim_ids.iter().any(survives)
            {
                entry.status = SeedStatus::Corrected;
            }
        }
        for id in flagged {
            if self.truth_of(id).is_none() {
                self.false_positive_ids.insert(id.clone());
            }
        }
        Ok(self.outcome())
    }

    /// Closes the trial: anything still pending was missed.
    pub fn finalize(&mut self) {
        for entry in &mut self.entries {
            if entry.status == SeedStatus::Pending {
                entry.status = SeedStatus::Missed;
            }
        }
    }

    pub fn outcome(&self) -> DetectionOutcome {
        let count = |f: &dyn Fn(&LedgerEntry) -> bool| self.entries.iter().filter(|e| f(e)).count();
        DetectionOutcome {
            seeded: self.entries.len(),
            true_detections: count(&|e| e.is_detected()),
            missed: count(&|e| matches!(e.status, SeedStatus::Pending | SeedStatus::Missed)),
            false_positives: self.false_positive_ids.len(),
            corrections: count(&|e| e.status == SeedStatus::Corrected),
        }
    }
}
