//! Trial configuration and batch templates.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convergence::{DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{OperatorKind, OperatorSpec, Role, ValidationOperator};
use crate::seeding::ContradictionKind;

pub const DEFAULT_DIMENSION: usize = 8;
pub const DEFAULT_ESCALATION: f64 = 1.5;
/// Blend used when reevaluation triggers while the blend is still zero.
pub const MIN_ESCALATED_BLEND: f64 = 0.05;
pub const HBO_WALL_CLOCK_SECS: u64 = 120 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorPolicy {
    Automated,
    HumanBridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPlanItem {
    pub kind: ContradictionKind,
    /// Injected after this cycle completes.
    #[serde(default = "one")]
    pub iteration: usize,
}

fn one() -> usize {
    1
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_escalation() -> f64 {
    DEFAULT_ESCALATION
}
fn default_initial_radius() -> f64 {
    1.0
}
fn default_baseline_claims() -> usize {
    4
}
fn default_seed_plan() -> Vec<SeedPlanItem> {
    ContradictionKind::ALL
        .iter()
        .map(|&kind| SeedPlanItem { kind, iteration: 1 })
        .collect()
}
fn default_policy() -> SupervisorPolicy {
    SupervisorPolicy::Automated
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub operators: ValidationOperator,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Seconds; `None` means off for automated trials and 120 minutes for
    /// human-bridge sessions.
    #[serde(default)]
    pub wall_clock_limit_secs: Option<u64>,
    #[serde(default = "default_seed_plan")]
    pub seed_plan: Vec<SeedPlanItem>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
    #[serde(default = "default_policy")]
    pub policy: SupervisorPolicy,
    #[serde(default = "default_escalation")]
    pub escalation_factor: f64,
    /// Initial vector entries are drawn from `[-r, r]`.
    #[serde(default = "default_initial_radius")]
    pub initial_radius: f64,
    /// Provenance-marked claims present in the initial state.
    #[serde(default = "default_baseline_claims")]
    pub baseline_claims: usize,
    /// Rejects configurations whose transparency blend is zero.
    #[serde(default)]
    pub require_contractive: bool,
}

impl TrialConfig {
    /// Default automated trial around the given operators.
    pub fn new(operators: ValidationOperator, dimension: usize, rng_seed: u64) -> Self {
        TrialConfig {
            dimension,
            operators,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            wall_clock_limit_secs: None,
            seed_plan: default_seed_plan(),
            rng_seed: Some(rng_seed),
            policy: SupervisorPolicy::Automated,
            escalation_factor: DEFAULT_ESCALATION,
            initial_radius: 1.0,
            baseline_claims: default_baseline_claims(),
            require_contractive: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::ConfigInvalid(m));
        if self.dimension == 0 {
            return invalid("dimension must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return invalid("max_iterations must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.escalation_factor > 1.0 && self.escalation_factor.is_finite()) {
            return invalid(format!(
                "escalation_factor must exceed 1, got {}",
                self.escalation_factor
            ));
        }
        if !(self.initial_radius > 0.0 && self.initial_radius.is_finite()) {
            return invalid("initial_radius must be positive".into());
        }
        if self.policy == SupervisorPolicy::Automated {
            if self.rng_seed.is_none() {
                return invalid("rng_seed is required in automated mode".into());
            }
            if let Some(spec) = self
                .operators
                .stages()
                .into_iter()
                .find(|s| s.kind == OperatorKind::HumanBridge)
            {
                return invalid(format!(
                    "{} is a human_bridge operator; automated trials need stubs or scripted adapters",
                    spec.role.as_str()
                ));
            }
        }
        for item in &self.seed_plan {
            if item.iteration == 0 || item.iteration >= self.max_iterations {
                return invalid(format!(
                    "seed iteration {} must lie in [1, {})",
                    item.iteration, self.max_iterations
                ));
            }
        }
        if self.require_contractive && self.operators.transparency.blend <= 0.0 {
            return invalid("a contractive trial needs a positive transparency blend".into());
        }
        self.operators
            .validate(self.dimension)
            .map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    /// Last cycle after which seeds are injected (0 when nothing is seeded).
    pub fn last_seed_iteration(&self) -> usize {
        self.seed_plan.iter().map(|s| s.iteration).max().unwrap_or(0)
    }

    pub fn wall_clock_limit(&self) -> Option<std::time::Duration> {
        match (self.wall_clock_limit_secs, self.policy) {
            (Some(s), _) => Some(std::time::Duration::from_secs(s)),
            (None, SupervisorPolicy::HumanBridge) => {
                Some(std::time::Duration::from_secs(HBO_WALL_CLOCK_SECS))
            }
            (None, SupervisorPolicy::Automated) => None,
        }
    }

    /// Next transparency blend after a non-compliant cycle.
    pub fn escalate(&self, blend: f64) -> f64 {
        if blend >= 1.0 {
            return 1.0;
        }
        (blend * self.escalation_factor).max(MIN_ESCALATED_BLEND).min(1.0)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Closed interval `[lo, hi]` sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.1 <= self.0 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}

/// One family of per-trial parameter draws.
///
/// Gains replace the semantic/analytical linear parts with a scaled random
/// orthogonal matrix, so each stage's Lipschitz constant equals its gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_gain: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytical_gain: Option<Range>,
    /// Standard deviation of Gaussian offsets added to the analytical stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_probability: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub false_positive_rate: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_strength: Option<Range>,
}

fn unit_weight() -> f64 {
    1.0
}

impl Default for Profile {
    fn default() -> Self {
        Profile {
            weight: 1.0,
            semantic_gain: None,
            analytical_gain: None,
            offset_scale: None,
            blend: None,
            detection_probability: None,
            false_positive_rate: None,
            correction_strength: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTemplate {
    #[serde(flatten)]
    pub base: TrialConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<Profile>,
}

impl BatchTemplate {
    pub fn fixed(base: TrialConfig) -> Self {
        BatchTemplate {
            base,
            profiles: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Per-trial rng seeds derived from the master seed.
    pub fn trial_seeds(master_seed: u64, count: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        (0..count).map(|_| rng.random()).collect()
    }

    /// Materializes the configuration for one trial seed.
    pub fn instantiate(&self, trial_seed: u64) -> Result<TrialConfig> {
        let mut config = self.base.clone();
        config.rng_seed = Some(trial_seed);
        if self.profiles.is_empty() {
            return Ok(config);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        rng.set_stream(1);
        let total: f64 = self.profiles.iter().map(|p| p.weight.max(0.0)).sum();
        if total <= 0.0 {
            return Err(Error::ConfigInvalid("profile weights sum to zero".into()));
        }
        let mut pick = rng.random_range(0.0..total);
        let profile = self
            .profiles
            .iter()
            .find(|p| {
                pick -= p.weight.max(0.0);
                pick < 0.0
            })
            .unwrap_or_else(|| self.profiles.last().expect("non-empty"));

        let d = config.dimension;
        let ops = &mut config.operators;
        if let Some(g) = profile.semantic_gain {
            let gain = g.sample(&mut rng);
            ops.semantic.matrix = Some(linalg::scaled(&linalg::random_orthogonal(d, &mut rng), gain));
            ops.semantic.lipschitz = None;
        }
        if let Some(g) = profile.analytical_gain {
            let gain = g.sample(&mut rng);
            ops.analytical.matrix = Some(linalg::scaled(&linalg::random_orthogonal(d, &mut rng), gain));
            ops.analytical.lipschitz = None;
        }
        if let Some(scale) = profile.offset_scale {
            let offset: Vec<f64> = (0..d)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            ops.analytical.offset = Some(offset);
        }
        let t = &mut ops.transparency;
        if let Some(r) = profile.blend {
            t.blend = r.sample(&mut rng);
        }
        if let Some(r) = profile.detection_probability {
            t.detection_probability = r.sample(&mut rng);
        }
        if let Some(r) = profile.false_positive_rate {
            t.false_positive_rate = r.sample(&mut rng);
        }
        if let Some(r) = profile.correction_strength {
            t.correction_strength = r.sample(&mut rng);
        }
        Ok(config)
    }
}

/// Stub operators for a trial of the given dimension.
pub fn stub_operators(
    dimension: usize,
    semantic_gain: f64,
    analytical_gain: f64,
    blend: f64,
    rng: &mut impl Rng,
) -> ValidationOperator {
    ValidationOperator::new(
        OperatorSpec::affine(
            Role::Semantic,
            Some(linalg::scaled(&linalg::random_orthogonal(dimension, rng), semantic_gain)),
            None,
        ),
        OperatorSpec::affine(
            Role::Analytical,
            Some(linalg::scaled(&linalg::random_orthogonal(dimension, rng), analytical_gain)),
            None,
        ),
        OperatorSpec::transparency(vec![0.0; dimension], 1.0, blend),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TrialConfig {
        let ops = stub_operators(4, 1.0, 0.8, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        TrialConfig::new(ops, 4, 9)
    }

    #[test]
    fn defaults_follow_the_protocol() {
        let json = serde_json::json!({
            "operators": {
                "semantic": {"role": "semantic", "kind": "affine_stub"},
                "analytical": {"role": "analytical", "kind": "affine_stub"},
                "transparency": {"role": "transparency", "kind": "affine_stub",
                                 "center": vec![0.0; 8], "radius": 1.0, "blend": 0.5}
            },
            "rng_seed": 3
        });
        let c = TrialConfig::from_json(&json.to_string()).unwrap();
        assert_eq!(c.dimension, 8);
        assert_eq!(c.max_iterations, 25);
        assert_eq!(c.epsilon, 1e-6);
        assert_eq!(c.seed_plan.len(), 3);
        assert!(c.seed_plan.iter().all(|s| s.iteration == 1));
        assert_eq!(c.wall_clock_limit(), None);
        c.validate().unwrap();
    }

    #[test]
    fn validation_failures() {
        let mut c = base();
        c.rng_seed = None;
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));

        let mut c = base();
        c.max_iterations = 0;
        assert!(c.validate().is_err());

        let mut c = base();
        c.escalation_factor = 1.0;
        assert!(c.validate().is_err());

        let mut c = base();
        c.seed_plan[0].iteration = 25;
        assert!(c.validate().is_err());

        let mut c = base();
        c.operators.transparency.blend = 0.0;
        c.require_contractive = true;
        assert!(c.validate().is_err());

        let mut c = base();
        c.operators.analytical.kind = OperatorKind::HumanBridge;
        assert!(c.validate().is_err());
        c.policy = SupervisorPolicy::HumanBridge;
        c.validate().unwrap();
        assert_eq!(c.wall_clock_limit(), Some(std::time::Duration::from_secs(7200)));
    }

    #[test]
    fn escalation_strictly_increases_until_cap() {
        let c = base();
        assert_eq!(c.escalate(0.0), MIN_ESCALATED_BLEND);
        assert_eq!(c.escalate(0.2), 0.2 * 1.5);
        assert_eq!(c.escalate(0.8), 1.0);
        assert_eq!(c.escalate(1.0), 1.0);
        let mut b = 0.0;
        while b < 1.0 {
            let next = c.escalate(b);
            assert!(next > b);
            b = next;
        }
    }

    #[test]
    fn hash_changes_with_content() {
        let a = base();
        let mut b = base();
        assert_eq!(a.hash(), b.hash());
        b.epsilon = 1e-5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn template_instantiation_is_deterministic() {
        let t = BatchTemplate {
            base: base(),
            profiles: vec![Profile {
                semantic_gain: Some(Range(0.9, 1.2)),
                analytical_gain: Some(Range(0.5, 1.0)),
                blend: Some(Range(0.1, 0.6)),
                ..Default::default()
            }],
        };
        let seeds = BatchTemplate::trial_seeds(42, 5);
        assert_eq!(seeds, BatchTemplate::trial_seeds(42, 5));
        for s in seeds {
            let a = t.instantiate(s).unwrap();
            assert_eq!(a, t.instantiate(s).unwrap());
            a.validate().unwrap();
            let g = a.operators.semantic.linear_norm();
            assert!((0.9 - 1e-9..=1.2 + 1e-9).contains(&g));
        }
    }
}
