use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rks_core::config::{stub_operators, BatchTemplate, TrialConfig};
use rks_core::convergence::{apriori_iteration_bound, StopReason};
use rks_core::linalg;
use rks_core::lipschitz::estimate_lipschitz;
use rks_core::metrics::aggregate;
use rks_core::operators::{OperatorSpec, Role};
use rks_core::record::{parse_log, read_log, write_log, TrialRecord, TrialStatus};
use rks_core::runner::{run_configs, run_trial};
use rks_core::scenario::run_reference_batch;
use rks_core::seeding::SeedStatus;
use rks_core::Error;

fn config(semantic: f64, analytical: f64, blend: f64, seed: u64) -> TrialConfig {
    let ops = stub_operators(8, semantic, analytical, blend, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut c = TrialConfig::new(ops, 8, seed);
    c.operators.transparency = c.operators.transparency.with_detection(1.0, 0.0, 1.0);
    c
}

#[test]
fn half_contraction_fixture_scores_perfectly() {
    let c = config(1.0, 0.625, 0.2, 31);
    let gamma = estimate_lipschitz(&c.operators, 8, 64, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!((gamma - 0.5).abs() < 1e-6, "{gamma}");

    let r = run_trial(&c).unwrap();
    let conv = r.convergence.as_ref().unwrap();
    assert!(conv.converged);
    assert!(conv.iterations <= 25);
    assert_eq!(r.cycles.len(), conv.iterations);
    // Seeds go in after cycle 1; from the next cycle on the trajectory is a
    // plain contraction, so the count is bounded by the a-priori estimate.
    let d = r.cycles[1].step_distance;
    let bound = apriori_iteration_bound(d, c.epsilon * (1.0 - gamma), gamma).unwrap();
    assert!(conv.iterations <= bound + 2, "{} > {bound} + 2", conv.iterations);
    let m = r.metrics.as_ref().unwrap();
    assert_eq!((m.ddr, m.csr, m.csr_vacuous), (Some(1.0), 1.0, false));
    assert_eq!(r.ledger.len(), 3);
}

#[test]
fn expansive_composite_does_not_converge_but_is_finalized() {
    let mut c = config(1.05, 1.0, 0.0, 12);
    c.operators.transparency.radius = Some(1e9);
    c.operators.analytical.offset = Some(vec![0.1; 8]);
    let gamma = estimate_lipschitz(&c.operators, 8, 64, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!((gamma - 1.05).abs() < 1e-6);

    let r = run_trial(&c).unwrap();
    assert!(!r.converged());
    assert_eq!(r.convergence.as_ref().unwrap().stop_reason, StopReason::IterationCap);
    assert_eq!(r.cycles.len(), 25);
    assert!(r.metrics.is_some());
    assert_eq!(r.status, TrialStatus::Completed);
}

#[test]
fn seedless_trial_is_excluded_from_rrs() {
    let mut c = config(1.0, 0.6, 0.2, 3);
    c.seed_plan.clear();
    let r = run_trial(&c).unwrap();
    assert!(r.converged());
    let m = r.metrics.unwrap();
    assert_eq!((m.ddr, m.rrs), (None, None));
    assert!(r.excluded_from_rrs);
}

#[test]
fn blind_auditor_misses_everything() {
    let mut c = config(1.0, 0.6, 0.2, 3);
    c.operators.transparency = c.operators.transparency.with_detection(0.0, 0.0, 1.0);
    let r = run_trial(&c).unwrap();
    let m = r.metrics.unwrap();
    assert_eq!(m.ddr, Some(0.0));
    assert!(m.csr_vacuous);
    assert!(r.ledger.entries.iter().all(|e| e.status == SeedStatus::Missed));
}

#[test]
fn non_compliant_cycles_escalate_the_blend() {
    // An unprojected stub far from a tiny ball keeps ec low until the blend
    // pulls the state in.
    let mut c = config(1.0, 1.0, 0.0, 4);
    c.operators.transparency.project = false;
    c.operators.transparency.radius = Some(0.01);
    c.initial_radius = 5.0;
    let r = run_trial(&c).unwrap();
    assert!(r.cycles[0].ts < 0.7);
    assert!(r.cycles[0].reevaluation);
    assert!(r.cycles[1].blend > 0.0);
    assert!(r.reevaluation_violations().is_empty());
    let blends: Vec<f64> = r.cycles.iter().map(|c| c.blend).collect();
    assert!(blends.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn batch_isolates_a_failing_adapter() {
    let good = config(1.0, 0.6, 0.2, 1);
    let mut bad = config(1.0, 0.6, 0.2, 2);
    bad.operators.semantic = OperatorSpec::scripted(Role::Semantic, vec!["/nonexistent/adapter".into()]);
    let out = run_configs(&[good.clone(), bad], 2);
    assert_eq!(out.records.len(), 2);
    assert!(out.records[0].is_valid());
    assert_eq!(out.records[1].status, TrialStatus::Failed);
    assert!(out.records[1].error.as_deref().unwrap().contains("could not start"));
    let agg = out.aggregate.unwrap();
    assert_eq!((agg.trial_count, agg.error_count), (1, 1));
    let alone = aggregate(&[run_trial(&good).unwrap()]).unwrap();
    assert_eq!(agg.rrs_mean, alone.rrs_mean);
    assert_eq!(agg.tconv_mean, alone.tconv_mean);
}

#[test]
fn invalid_configs_become_error_records_in_batches() {
    let mut bad = config(1.0, 0.6, 0.2, 2);
    bad.max_iterations = 0;
    let out = run_configs(&[bad], 1);
    assert_eq!(out.records[0].status, TrialStatus::Failed);
    assert!(out.aggregate.is_none());
}

#[test]
fn log_round_trip_is_exact_and_byte_stable() {
    let out = run_reference_batch(2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.jsonl");
    let second = dir.path().join("b.jsonl");
    write_log(&out.records, &first).unwrap();
    let back = read_log(&first).unwrap();
    assert_eq!(back, out.records);
    write_log(&back, &second).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    assert_eq!(aggregate(&back).unwrap(), out.aggregate.unwrap());
    assert!(out.records.iter().all(|r| r.reevaluation_violations().is_empty()));
}

#[test]
fn log_errors_name_the_line() {
    assert!(parse_log(&b""[..]).unwrap().is_empty());
    let record = run_trial(&config(1.0, 0.6, 0.2, 1)).unwrap();
    let good = serde_json::to_string(&record).unwrap();
    let text = format!("{good}\n{{not json\n");
    assert!(matches!(parse_log(text.as_bytes()), Err(Error::Parse { line: 2, .. })));

    let mut old: serde_json::Value = serde_json::from_str(&good).unwrap();
    old["schema_version"] = 0.into();
    let text = format!("{good}\n{good}\n{old}\n");
    assert!(matches!(
        parse_log(text.as_bytes()),
        Err(Error::SchemaVersionMismatch { line: 3, found: 0, .. })
    ));
}

#[test]
fn template_files_round_trip() {
    let t = BatchTemplate::fixed(config(1.0, 0.6, 0.2, 1));
    let json = serde_json::to_string(&t).unwrap();
    assert_eq!(BatchTemplate::from_json(&json).unwrap(), t);
    let m = linalg::random_orthogonal(3, &mut ChaCha8Rng::seed_from_u64(0));
    assert!((linalg::spectral_norm(&m) - 1.0).abs() < 1e-9);
}

#[test]
fn seeds_are_injected_exactly_once_per_plan_item() {
    for seed in 0..20 {
        let mut c = config(1.1, 0.5, 0.1, seed);
        c.seed_plan[2].iteration = 3;
        let r: TrialRecord = run_trial(&c).unwrap();
        let at: Vec<usize> = r.ledger.entries.iter().map(|e| e.iteration_injected).collect();
        assert_eq!(at.len(), 3);
        assert_eq!(at.iter().filter(|&&i| i == 1).count(), 2);
        assert_eq!(at.iter().filter(|&&i| i == 3).count(), 1);
        assert!(r.cycles.len() > 3);
    }
}
