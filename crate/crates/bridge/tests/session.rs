use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rks_bridge::engine::{Decision, LogEvent, Phase, SessionStatus};
use rks_bridge::log::{read_entries, replay, AuditLogEntry};
use rks_bridge::service::Bridge;
use rks_bridge::supervisor::scripted_decision;
use rks_bridge::BridgeError;
use rks_core::config::{stub_operators, SupervisorPolicy, TrialConfig};
use rks_core::operators::{OperatorKind, OperatorSpec, Role};
use rks_core::seeding::SeedStatus;

fn hbo_config(seed: u64) -> TrialConfig {
    let mut ops = stub_operators(6, 1.0, 0.5, 0.3, &mut ChaCha8Rng::seed_from_u64(seed));
    ops.transparency.kind = OperatorKind::HumanBridge;
    let mut c = TrialConfig::new(ops, 6, seed);
    c.policy = SupervisorPolicy::HumanBridge;
    c
}

fn drive(bridge: &Bridge, id: &str) -> usize {
    let mut decisions = 0;
    while let Some(t) = bridge.session(id).unwrap().pending_transfer {
        bridge.submit(id, scripted_decision(&t, 0.9)).unwrap();
        decisions += 1;
        assert!(decisions < 500);
    }
    decisions
}

/// Every phase change sits directly after a decision entry.
fn assert_hbo_order(entries: &[AuditLogEntry]) {
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1);
        if matches!(e.event, LogEvent::PhaseChange { .. }) {
            assert!(matches!(entries[i - 1].event, LogEvent::Decision(_)), "entry {}", e.seq);
        }
    }
}

#[test]
fn creation_logs_exactly_one_entry() {
    let bridge = Bridge::new(None).unwrap();
    let a = bridge.create_session(hbo_config(1)).unwrap();
    let b = bridge.create_session(hbo_config(1)).unwrap();
    assert_ne!(a.id, b.id);
    let entries = bridge.entries(&a.id, 1).unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].event.kind(), "session_created");
    assert_eq!(a.status, SessionStatus::AwaitingDecision);
    assert_eq!(a.phase, Phase::Initialization);
    assert!(a.prompt.is_some());
}

#[test]
fn automated_config_is_refused() {
    let bridge = Bridge::new(None).unwrap();
    let mut c = hbo_config(1);
    c.policy = SupervisorPolicy::Automated;
    assert!(matches!(bridge.create_session(c), Err(BridgeError::ConfigInvalid(_))));
    let mut c = hbo_config(1);
    c.operators.semantic = OperatorSpec::scripted(Role::Semantic, vec!["echo".into()]);
    assert!(matches!(bridge.create_session(c), Err(BridgeError::ConfigInvalid(_))));
}

#[test]
fn approve_logs_decision_then_phase_change() {
    let bridge = Bridge::new(None).unwrap();
    let s = bridge.create_session(hbo_config(2)).unwrap();
    let view = bridge.submit(&s.id, Decision::approve(1)).unwrap();
    assert_eq!(view.phase, Phase::SemanticToAnalytical);
    let entries = bridge.entries(&s.id, 2).unwrap();
    assert!(entries.len() >= 2);
    assert_eq!(entries[0].event.kind(), "decision");
    assert_eq!(entries[1].event.kind(), "phase_change");
    // A second submit against the same transfer changes nothing.
    assert!(matches!(
        bridge.submit(&s.id, Decision::approve(1)),
        Err(BridgeError::StaleTransfer { .. })
    ));
    assert_eq!(bridge.entries(&s.id, 1).unwrap().len(), 3);
    assert!(matches!(bridge.session("missing"), Err(BridgeError::UnknownSession(_))));
}

#[test]
fn scripted_session_converges_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let bridge = Bridge::new(Some(dir.path().to_path_buf())).unwrap();
    let s = bridge.create_session(hbo_config(3)).unwrap();
    drive(&bridge, &s.id);

    let view = bridge.session(&s.id).unwrap();
    assert_eq!(view.status, SessionStatus::Converged);
    let record = view.record.unwrap();
    assert!(record.converged());
    let m = record.metrics.as_ref().unwrap();
    assert_eq!((m.ddr, m.csr), (Some(1.0), 1.0));
    assert!(record.ledger.entries.iter().all(|e| e.status == SeedStatus::Corrected));
    assert!(record.reevaluation_violations().is_empty());

    let entries = read_entries(&dir.path().join(format!("{}.jsonl", s.id))).unwrap();
    let wire = |e: &[AuditLogEntry]| serde_json::to_value(e).unwrap();
    assert_eq!(wire(&entries), wire(&bridge.entries(&s.id, 1).unwrap()));
    assert_hbo_order(&entries);
    let replayed = replay(&entries).unwrap();
    assert_eq!(replayed.record(), Some(&record));

    // A restarted service resumes from the same directory.
    let restarted = Bridge::new(Some(dir.path().to_path_buf())).unwrap();
    assert_eq!(restarted.session(&s.id).unwrap().record, Some(record));
}

#[test]
fn tampered_log_fails_replay() {
    let bridge = Bridge::new(None).unwrap();
    let s = bridge.create_session(hbo_config(4)).unwrap();
    drive(&bridge, &s.id);
    let mut entries = bridge.entries(&s.id, 1).unwrap();

    let mut dropped = entries.clone();
    dropped.remove(3);
    assert!(matches!(replay(&dropped), Err(BridgeError::Replay(_))));

    let audit = entries
        .iter()
        .position(|e| matches!(&e.event, LogEvent::Decision(d) if d.ec.is_some()))
        .unwrap();
    if let LogEvent::Decision(d) = &mut entries[audit].event {
        d.ec = Some(0.1);
    }
    assert!(matches!(replay(&entries), Err(BridgeError::Replay(_))));
}

#[test]
fn low_rubric_scores_escalate_the_blend() {
    let bridge = Bridge::new(None).unwrap();
    let s = bridge.create_session(hbo_config(5)).unwrap();
    let mut audits = 0;
    while let Some(t) = bridge.session(&s.id).unwrap().pending_transfer {
        let ec = if audits < 3 { 0.2 } else { 0.9 };
        if t.phase == Phase::AnalyticalToTransparency {
            audits += 1;
        }
        bridge.submit(&s.id, scripted_decision(&t, ec)).unwrap();
    }
    let view = bridge.session(&s.id).unwrap();
    let record = view.record.unwrap();
    assert!(record.cycles[0].ts < 0.7);
    assert!(record.cycles[1].blend > record.cycles[0].blend);
    assert!(record.reevaluation_violations().is_empty());
}

#[test]
fn seeding_boundary_accepts_supervisor_kinds() {
    use rks_core::seeding::ContradictionKind;
    let bridge = Bridge::new(None).unwrap();
    let s = bridge.create_session(hbo_config(6)).unwrap();
    loop {
        let t = bridge.session(&s.id).unwrap().pending_transfer.unwrap();
        if t.phase == Phase::Seeding {
            assert_eq!(t.planned_seeds.len(), 3);
            let mut d = Decision::approve(t.id);
            d.seed_kinds = Some(vec![ContradictionKind::EthicalViolation]);
            bridge.submit(&s.id, d).unwrap();
            break;
        }
        bridge.submit(&s.id, scripted_decision(&t, 0.9)).unwrap();
    }
    drive(&bridge, &s.id);
    let record = bridge.session(&s.id).unwrap().record.unwrap();
    assert_eq!(record.ledger.len(), 1);
    assert_eq!(record.ledger.entries[0].kind, ContradictionKind::EthicalViolation);
}
