use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rks_core::adapter::{AdapterError, AdapterProcess, Direction, MessageType};
use rks_core::config::{stub_operators, TrialConfig};
use rks_core::convergence::StopReason;
use rks_core::operators::{OperatorSpec, Role};
use rks_core::record::TrialStatus;
use rks_core::runner::run_trial;
use rks_core::seeding::SeedStatus;
use rks_core::state::{Claim, ClaimKind, KnowledgeState};

fn echo(flags: &[&str]) -> Vec<String> {
    let mut cmd = vec![env!("CARGO_BIN_EXE_rks-echo-adapter").to_string()];
    cmd.extend(flags.iter().map(|s| s.to_string()));
    cmd
}

fn state() -> KnowledgeState {
    KnowledgeState::new(vec![0.25, -0.5]).with_claims(vec![Claim::new("c-1", ClaimKind::Assertion, "p")])
}

/// Semantic stage is the echo adapter; the rest are stubs.
fn config_with_semantic(flags: &[&str], timeout_ms: u64) -> TrialConfig {
    let mut ops = stub_operators(8, 1.0, 0.5, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
    let mut semantic = OperatorSpec::scripted(Role::Semantic, echo(flags));
    semantic.timeout_ms = Some(timeout_ms);
    ops.semantic = semantic;
    ops.transparency = ops.transparency.with_detection(1.0, 0.0, 1.0);
    TrialConfig::new(ops, 8, 21)
}

#[test]
fn echo_round_trip_preserves_state_and_sequence() {
    let mut p = AdapterProcess::spawn(&echo(&[]), Duration::from_secs(5)).unwrap();
    for expected in 1..=3 {
        let msg = p.request(MessageType::Transform, Role::Semantic, Some(state()));
        assert_eq!(msg.seq, expected);
        let reply = p.exchange(&msg).unwrap();
        assert_eq!(reply.seq, expected);
        assert_eq!(reply.direction, Direction::Response);
        assert_eq!(reply.kind, MessageType::Transform);
        assert_eq!(reply.state, Some(state()));
    }
    p.shutdown(Role::Semantic);
}

#[test]
fn wrong_sequence_is_a_schema_violation() {
    let mut p = AdapterProcess::spawn(&echo(&["--bad-seq"]), Duration::from_secs(5)).unwrap();
    let msg = p.request(MessageType::Transform, Role::Semantic, Some(state()));
    assert!(matches!(p.exchange(&msg), Err(AdapterError::SchemaViolation(_))));
}

#[test]
fn slow_adapter_times_out() {
    let mut p = AdapterProcess::spawn(&echo(&["--sleep-ms", "2000"]), Duration::from_millis(100)).unwrap();
    let msg = p.request(MessageType::Transform, Role::Semantic, Some(state()));
    assert_eq!(p.exchange(&msg), Err(AdapterError::Timeout(100)));
}

#[test]
fn crashed_adapter_is_reported() {
    let mut p = AdapterProcess::spawn(&echo(&["--crash-after", "1"]), Duration::from_secs(5)).unwrap();
    let first = p.request(MessageType::Transform, Role::Semantic, Some(state()));
    p.exchange(&first).unwrap();
    let second = p.request(MessageType::Transform, Role::Semantic, Some(state()));
    assert!(matches!(p.exchange(&second), Err(AdapterError::Crashed(_))));
    // The process is gone; further calls fail without blocking.
    let third = p.request(MessageType::Transform, Role::Semantic, Some(state()));
    assert!(matches!(p.exchange(&third), Err(AdapterError::Crashed(_))));
}

#[test]
fn missing_program_fails_to_spawn() {
    let cmd = vec!["/nonexistent/rks-adapter".to_string()];
    assert!(matches!(
        AdapterProcess::spawn(&cmd, Duration::from_secs(1)),
        Err(AdapterError::Spawn(_))
    ));
}

#[test]
fn trial_through_external_semantic_stage_converges() {
    let r = run_trial(&config_with_semantic(&[], 5000)).unwrap();
    assert_eq!(r.status, TrialStatus::Completed);
    assert!(r.converged());
    assert_eq!(r.metrics.unwrap().ddr, Some(1.0));
}

#[test]
fn adapter_timeout_becomes_a_failed_record() {
    let r = run_trial(&config_with_semantic(&["--sleep-ms", "2000"], 100)).unwrap();
    assert_eq!(r.status, TrialStatus::Failed);
    assert_eq!(r.convergence.as_ref().unwrap().stop_reason, StopReason::OperatorFailure);
    assert!(r.error.as_deref().unwrap().contains("did not answer"));
    assert!(!r.is_valid());
}

#[test]
fn adapter_crash_mid_trial_keeps_completed_cycles() {
    let r = run_trial(&config_with_semantic(&["--crash-after", "3"], 5000)).unwrap();
    assert_eq!(r.status, TrialStatus::Failed);
    assert_eq!(r.cycles.len(), 3);
    assert!(r.error.as_deref().unwrap().contains("crashed"));
}

#[test]
fn schema_violation_mid_trial_fails_the_trial() {
    let r = run_trial(&config_with_semantic(&["--bad-seq"], 5000)).unwrap();
    assert_eq!(r.status, TrialStatus::Failed);
    assert!(r.cycles.is_empty());
    assert!(r.error.as_deref().unwrap().contains("schema"));
}

#[test]
fn external_auditor_drives_ledger_and_seed_ids_never_leak() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("wire.jsonl");
    let log_arg = log.to_str().unwrap();
    let mut ops = stub_operators(8, 1.0, 0.5, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
    ops.semantic = OperatorSpec::scripted(Role::Semantic, echo(&["--record", log_arg]));
    ops.transparency = OperatorSpec::scripted(Role::Transparency, echo(&["--audit-all", "--record", log_arg]));
    let r = run_trial(&TrialConfig::new(ops, 8, 77)).unwrap();

    assert_eq!(r.status, TrialStatus::Completed);
    assert_eq!(r.ledger.len(), 3);
    assert!(r.ledger.entries.iter().all(|e| e.status == SeedStatus::Corrected));
    let m = r.metrics.unwrap();
    assert_eq!((m.ddr, m.csr), (Some(1.0), 1.0));

    let wire = std::fs::read_to_string(&log).unwrap();
    assert!(wire.lines().count() > 3);
    // Seeded claims did cross the boundary, but their truth tokens did not.
    let seeded_claim = &r.ledger.entries[0].claim_ids[0].0;
    assert!(wire.contains(seeded_claim.as_str()));
    for entry in &r.ledger.entries {
        assert!(!wire.contains(entry.truth_id.0.as_str()));
    }
    assert!(!wire.contains("hidden_seed_id"));
}
