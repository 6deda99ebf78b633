//! Deterministic stand-in for a human supervisor, for tests and demos.

use rks_core::state::ClaimId;

use crate::engine::{Decision, PendingTransfer, Phase};

/// Approves every hand-off. At the audit boundary it scores `ec`, derives
/// `tp` from the provenance marks, flags every unmarked claim and edits
/// the flagged claims out.
pub fn scripted_decision(transfer: &PendingTransfer, ec: f64) -> Decision {
    if transfer.phase != Phase::AnalyticalToTransparency {
        return Decision::approve(transfer.id);
    }
    let state = &transfer.state;
    let flags: Vec<ClaimId> = state
        .claims
        .iter()
        .filter(|c| !c.provenance_marked)
        .map(|c| c.id.clone())
        .collect();
    let decision = Decision::audit(transfer.id, ec, state.provenance_fraction(), flags.clone());
    if flags.is_empty() {
        return decision;
    }
    let kept = state
        .claims
        .iter()
        .filter(|c| c.provenance_marked)
        .cloned()
        .collect();
    decision.with_edits(kept)
}
