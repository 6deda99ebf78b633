//! Bundled 47-trial calibration scenario.
//!
//! Parameters were chosen once with `examples/sweep_reference_batch.rs` and are
//! frozen in `fixtures/reference_batch.json` together with the master seed below.

use crate::config::BatchTemplate;
use crate::error::Result;
use crate::runner::{run_batch, BatchOutcome};

pub const REFERENCE_BATCH_TRIALS: usize = 47;
pub const REFERENCE_BATCH_MASTER_SEED: u64 = 20251014;
pub const REFERENCE_BATCH_TEMPLATE: &str = include_str!("../fixtures/reference_batch.json");

pub fn reference_batch_template() -> Result<BatchTemplate> {
    BatchTemplate::from_json(REFERENCE_BATCH_TEMPLATE)
}

pub fn run_reference_batch(parallelism: usize) -> Result<BatchOutcome> {
    run_batch(
        &reference_batch_template()?,
        REFERENCE_BATCH_TRIALS,
        REFERENCE_BATCH_MASTER_SEED,
        parallelism,
    )
}
