//! Grid search for the bundled 47-trial scenario parameters.
//!
//! With no arguments, prints convergence rate and mean t_conv for each
//! candidate. With `<ag_hi> <slow_weight> <path>`, writes that candidate
//! as a template.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rks_core::config::{stub_operators, BatchTemplate, Profile, Range, TrialConfig};
use rks_core::runner::run_batch;

const COUNT: usize = 47;
const MASTER_SEED: u64 = 20251014;

fn template(ag_hi: f64, slow_weight: f64) -> BatchTemplate {
    let ops = stub_operators(8, 1.0, 0.5, 0.2, &mut ChaCha8Rng::seed_from_u64(0));
    let base = TrialConfig::new(ops, 8, 0);
    BatchTemplate {
        base,
        profiles: vec![
            Profile {
                weight: 1.0 - slow_weight,
                semantic_gain: Some(Range(0.9, 1.2)),
                analytical_gain: Some(Range(0.3, ag_hi)),
                offset_scale: Some(0.5),
                blend: Some(Range(0.1, 0.4)),
                detection_probability: Some(Range(0.6, 1.0)),
                false_positive_rate: Some(Range(0.0, 0.05)),
                correction_strength: Some(Range(0.7, 1.0)),
            },
            Profile {
                weight: slow_weight,
                semantic_gain: Some(Range(1.1, 1.2)),
                analytical_gain: Some(Range(0.95, 1.0)),
                offset_scale: Some(0.5),
                blend: Some(Range(0.0, 0.05)),
                detection_probability: Some(Range(0.6, 1.0)),
                false_positive_rate: Some(Range(0.0, 0.05)),
                correction_strength: Some(Range(0.7, 1.0)),
            },
        ],
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [ag_hi, slow, path] = args.as_slice() {
        let t = template(ag_hi.parse().unwrap(), slow.parse().unwrap());
        std::fs::write(path, serde_json::to_string_pretty(&t).unwrap() + "\n").unwrap();
        return;
    }
    for ag_hi in [0.5, 0.55, 0.6, 0.65, 0.7, 0.75] {
        for slow in [0.0, 0.05, 0.08, 0.11, 0.14] {
            let t = template(ag_hi, slow);
            let outcome = run_batch(&t, COUNT, MASTER_SEED, 4).expect("batch");
            let agg = outcome.aggregate.expect("aggregate");
            let rate = agg.convergence_rate;
            let tconv = agg.tconv_mean.unwrap_or(f64::NAN);
            let hit = (0.84..=0.94).contains(&rate) && (8.6..=16.0).contains(&tconv);
            println!(
                "ag_hi={ag_hi:.2} slow={slow:.2} rate={rate:.3} tconv={tconv:.2} sd={:?} rrs={:?} {}",
                agg.tconv_sd,
                agg.rrs_mean,
                if hit { "HIT" } else { "" }
            );
        }
    }
}
