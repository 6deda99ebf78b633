//! Fixed-point iteration of the validation operator.
//!
//! `x_{t+1} = V(x_t)` is repeated until the step distance drops to `ε` and
//! the claim set stops changing, or the iteration cap is reached. The
//! contraction constant is estimated afterwards from successive step ratios.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lipschitz::VectorMap;
use crate::operators::{apply_cycle, CycleResult, ValidationOperator};
use crate::state::{distance, KnowledgeState};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationCap,
    NumericOverflow,
    Timeout,
    OperatorFailure,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<KnowledgeState>,
    pub step_distances: Vec<f64>,
    pub per_cycle_results: Vec<CycleResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub gamma_max: Option<f64>,
    pub gamma_median: Option<f64>,
    pub final_step_distance: Option<f64>,
    pub epsilon: f64,
    pub stop_reason: StopReason,
}

/// Vector step at most `ε` and an unchanged claim set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criterion {
    pub epsilon: f64,
}

impl Criterion {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::ConfigInvalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Criterion { epsilon })
    }

    pub fn is_met(&self, step: f64, previous: &KnowledgeState, next: &KnowledgeState) -> bool {
        step <= self.epsilon && previous.same_claims(next)
    }
}

impl Trajectory {
    pub fn start(x0: KnowledgeState) -> Self {
        Trajectory {
            states: vec![x0],
            ..Default::default()
        }
    }

    pub fn last(&self) -> &KnowledgeState {
        self.states.last().expect("trajectory holds at least its start state")
    }

    /// Appends a cycle; returns the step distance.
    pub fn push(&mut self, result: CycleResult) -> Result<f64> {
        let step = self.push_state(result.new_state.clone())?;
        self.per_cycle_results.push(result);
        Ok(step)
    }

    fn push_state(&mut self, state: KnowledgeState) -> Result<f64> {
        let step = distance(self.last(), &state)?;
        self.states.push(state);
        self.step_distances.push(step);
        Ok(step)
    }

    pub fn report(&self, converged: bool, epsilon: f64, stop_reason: StopReason) -> ConvergenceReport {
        let (gamma_max, gamma_median) = match estimate_gamma(self) {
            Ok((max, median)) => (Some(max), Some(median)),
            Err(_) => (None, None),
        };
        ConvergenceReport {
            converged,
            iterations: self.step_distances.len(),
            gamma_max,
            gamma_median,
            final_step_distance: self.step_distances.last().copied(),
            epsilon,
            stop_reason,
        }
    }
}

/// Iterates `v` from `x0` with in-process stubs.
pub fn iterate<R: Rng>(
    v: &ValidationOperator,
    x0: KnowledgeState,
    epsilon: f64,
    max_iterations: usize,
    rng: &mut R,
) -> Result<(Trajectory, ConvergenceReport)> {
    let criterion = Criterion::new(epsilon)?;
    if max_iterations == 0 {
        return Err(Error::ConfigInvalid("max_iterations must be at least 1".into()));
    }
    x0.validate()?;
    v.validate(x0.dimension())?;

    let mut traj = Trajectory::start(x0);
    for _ in 0..max_iterations {
        let result = apply_cycle(v, traj.last(), rng)?;
        if !result.new_state.is_finite() {
            let report = traj.report(false, epsilon, StopReason::NumericOverflow);
            return Ok((traj, report));
        }
        let previous = traj.last().clone();
        let step = traj.push(result)?;
        if criterion.is_met(step, &previous, traj.last()) {
            let report = traj.report(true, epsilon, StopReason::Converged);
            return Ok((traj, report));
        }
    }
    let report = traj.report(false, epsilon, StopReason::IterationCap);
    Ok((traj, report))
}

/// Iterates a bare vector map; claims are carried along unchanged and no
/// per-cycle audit results are recorded.
pub fn iterate_map(
    map: &dyn VectorMap,
    x0: KnowledgeState,
    epsilon: f64,
    max_iterations: usize,
) -> Result<(Trajectory, ConvergenceReport)> {
    let criterion = Criterion::new(epsilon)?;
    if max_iterations == 0 {
        return Err(Error::ConfigInvalid("max_iterations must be at least 1".into()));
    }
    x0.validate()?;
    let mut traj = Trajectory::start(x0);
    for _ in 0..max_iterations {
        let mut next = traj.last().clone();
        next.vector = map.apply(&next.vector)?;
        next.iteration_index += 1;
        if !next.is_finite() {
            let report = traj.report(false, epsilon, StopReason::NumericOverflow);
            return Ok((traj, report));
        }
        let step = traj.push_state(next)?;
        if step <= criterion.epsilon {
            let report = traj.report(true, epsilon, StopReason::Converged);
            return Ok((traj, report));
        }
    }
    let report = traj.report(false, epsilon, StopReason::IterationCap);
    Ok((traj, report))
}

/// Max and median of successive step-distance ratios.
pub fn estimate_gamma(traj: &Trajectory) -> Result<(f64, f64)> {
    gamma_from_steps(&traj.step_distances)
}

pub fn gamma_from_steps(steps: &[f64]) -> Result<(f64, f64)> {
    if steps.len() < 2 {
        return Err(Error::InsufficientTrajectory);
    }
    let mut ratios: Vec<f64> = steps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return Err(Error::AllZeroSteps);
    }
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    let median = if n % 2 == 1 {
        ratios[n / 2]
    } else {
        (ratios[n / 2 - 1] + ratios[n / 2]) / 2.0
    };
    Ok((ratios[n - 1], median))
}

/// A-priori iteration count `ceil(ln(ε/d0) / ln γ)`, at least 1.
///
/// An upper-bound diagnostic: for a contraction with constant `γ`, the step
/// distance after that many iterations is at most `ε` when the first step is
/// `d0`.
pub fn apriori_iteration_bound(d0: f64, epsilon: f64, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    if !(d0 > 0.0 && epsilon > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "d0 ({d0}) and epsilon ({epsilon}) must be positive"
        )));
    }
    let n = ((epsilon / d0).ln() / gamma.ln()).ceil();
    Ok(if n < 1.0 { 1 } else { n as usize })
}
