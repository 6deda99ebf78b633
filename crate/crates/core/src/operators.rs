//! Module operators and the composite validation operator.
//!
//! Each role (semantic, analytical, transparency) is described by an
//! [`OperatorSpec`]. In-process stubs act on the vector part with an affine
//! map; the transparency stub additionally projects onto its constraint ball,
//! blends toward the ball center, and audits the claim set with configurable
//! detection and correction probabilities.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::state::{ClaimId, KnowledgeState, TruthId};

/// TS threshold below which a cycle triggers reevaluation.
pub const COMPLIANCE_THRESHOLD: f64 = 0.7;

const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Semantic,
    Analytical,
    Transparency,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Semantic, Role::Analytical, Role::Transparency];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Semantic => "semantic",
            Role::Analytical => "analytical",
            Role::Transparency => "transparency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    AffineStub,
    ScriptedExternal,
    HumanBridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub role: Role,
    pub kind: OperatorKind,
    /// Linear part, row-major. Absent means identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Matrix>,
    /// Absent means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    /// Declared Lipschitz constant; checked against the spectral norm when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default)]
    pub blend: f64,
    /// When false the transparency stub only blends; it does not project.
    #[serde(default = "default_true")]
    pub project: bool,
    #[serde(default)]
    pub detection_probability: f64,
    #[serde(default)]
    pub false_positive_rate: f64,
    #[serde(default)]
    pub correction_strength: f64,
    /// Program and arguments for `scripted_external` operators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
}

fn default_true() -> bool {
    true
}

impl OperatorSpec {
    pub fn affine(role: Role, matrix: Option<Matrix>, offset: Option<Vec<f64>>) -> Self {
        OperatorSpec {
            role,
            kind: OperatorKind::AffineStub,
            matrix,
            offset,
            lipschitz: None,
            center: None,
            radius: None,
            blend: 0.0,
            project: true,
            detection_probability: 0.0,
            false_positive_rate: 0.0,
            correction_strength: 0.0,
            command: None,
            timeout_ms: None,
        }
    }

    pub fn identity(role: Role) -> Self {
        Self::affine(role, None, None)
    }

    /// Transparency stub with identity affine part and no claim auditing.
    pub fn transparency(center: Vec<f64>, radius: f64, blend: f64) -> Self {
        OperatorSpec {
            center: Some(center),
            radius: Some(radius),
            blend,
            ..Self::identity(Role::Transparency)
        }
    }

    pub fn with_detection(mut self, p_detect: f64, p_false: f64, correction: f64) -> Self {
        self.detection_probability = p_detect;
        self.false_positive_rate = p_false;
        self.correction_strength = correction;
        self
    }

    pub fn with_blend(&self, blend: f64) -> Self {
        OperatorSpec {
            blend,
            ..self.clone()
        }
    }

    pub fn scripted(role: Role, command: Vec<String>) -> Self {
        OperatorSpec {
            kind: OperatorKind::ScriptedExternal,
            command: Some(command),
            ..Self::identity(role)
        }
    }

    pub fn is_external(&self) -> bool {
        self.kind == OperatorKind::ScriptedExternal
    }

    /// Spectral norm of the linear part (1 for the implicit identity).
    pub fn linear_norm(&self) -> f64 {
        self.matrix.as_ref().map_or(1.0, linalg::spectral_norm)
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.role.as_str())));

        if let Some(m) = &self.matrix {
            if m.len() != dimension || m.iter().any(|row| row.len() != dimension) {
                return invalid(format!("matrix must be {dimension}x{dimension}"));
            }
            if m.iter().flatten().any(|x| !x.is_finite()) {
                return invalid("matrix has non-finite entries".into());
            }
        }
        for (name, v) in [("offset", &self.offset), ("center", &self.center)] {
            if let Some(v) = v {
                if v.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return invalid(format!("{name} has non-finite entries"));
                }
            }
        }
        for (name, p) in [
            ("blend", self.blend),
            ("detection_probability", self.detection_probability),
            ("false_positive_rate", self.false_positive_rate),
            ("correction_strength", self.correction_strength),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return invalid(format!("radius must be positive and finite, got {r}"));
            }
        }

        match self.kind {
            OperatorKind::ScriptedExternal => {
                if self.command.as_ref().is_none_or(|c| c.is_empty()) {
                    return invalid("scripted_external requires a command".into());
                }
                return Ok(());
            }
            OperatorKind::AffineStub | OperatorKind::HumanBridge => {}
        }

        let norm = self.linear_norm();
        if let Some(declared) = self.lipschitz {
            if (declared - norm).abs() > 1e-6 {
                return invalid(format!(
                    "declared lipschitz {declared} does not match spectral norm {norm}"
                ));
            }
        }
        if self.kind == OperatorKind::AffineStub {
            match self.role {
                Role::Semantic if !(0.9 - NORM_TOLERANCE..=1.2 + NORM_TOLERANCE).contains(&norm) => {
                    return invalid(format!("semantic stub Lipschitz {norm} outside [0.9, 1.2]"));
                }
                Role::Analytical if norm > 1.0 + NORM_TOLERANCE => {
                    return invalid(format!("analytical stub Lipschitz {norm} exceeds 1"));
                }
                _ => {}
            }
        }
        if self.role == Role::Transparency && (self.center.is_none() || self.radius.is_none()) {
            return invalid("transparency stub requires center and radius".into());
        }
        Ok(())
    }

    /// Deterministic vector part of the operator.
    pub fn map_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.is_external() {
            return Err(Error::InvalidSpec(format!(
                "{}: scripted_external operators have no in-process vector map",
                self.role.as_str()
            )));
        }
        let mut y = match &self.matrix {
            Some(m) => {
                if m.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: m.len(),
                        found: x.len(),
                    });
                }
                linalg::mat_vec(m, x)
            }
            None => x.to_vec(),
        };
        if let Some(b) = &self.offset {
            if b.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: y.len(),
                    found: b.len(),
                });
            }
            y.iter_mut().zip(b).for_each(|(v, o)| *v += o);
        }
        if self.role == Role::Transparency {
            if let (Some(c), Some(r)) = (&self.center, self.radius) {
                if c.len() != y.len() {
                    return Err(Error::DimensionMismatch {
                        expected: y.len(),
                        found: c.len(),
                    });
                }
                if self.project {
                    y = project_onto_ball(&y, c, r);
                }
                let keep = 1.0 - self.blend;
                y.iter_mut()
                    .zip(c)
                    .for_each(|(v, ci)| *v = keep * *v + self.blend * ci);
            }
        }
        Ok(y)
    }
}

/// Euclidean projection onto the closed ball `B(center, radius)`.
pub fn project_onto_ball(x: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let d = linalg::norm(&x.iter().zip(center).map(|(a, c)| a - c).collect::<Vec<_>>());
    if d <= radius {
        return x.to_vec();
    }
    let s = radius / d;
    x.iter().zip(center).map(|(a, c)| c + s * (a - c)).collect()
}

/// Distance from `x` to the ball `B(center, radius)`; zero inside.
pub fn distance_to_ball(x: &[f64], center: &[f64], radius: f64) -> f64 {
    let d = linalg::norm(&x.iter().zip(center).map(|(a, c)| a - c).collect::<Vec<_>>());
    (d - radius).max(0.0)
}

/// Explainability coefficient: `exp(-dist(x, ball))`.
pub fn explainability(x: &[f64], center: &[f64], radius: f64) -> f64 {
    (-distance_to_ball(x, center, radius)).exp()
}

/// Claims flagged and removed by one audit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub state: KnowledgeState,
    pub flagged: Vec<ClaimId>,
    pub corrected: Vec<ClaimId>,
    /// Rubric values supplied by the auditor itself (external or human).
    pub ec: Option<f64>,
    pub tp: Option<f64>,
}

/// In-process claim audit of the transparency stub.
///
/// Seeded items (claims sharing a hidden seed id) are detected with
/// probability `detection_probability`; a detected item is removed with
/// probability `correction_strength`. Unseeded claims are flagged with
/// probability `false_positive_rate` and left in place.
pub fn audit_claims<R: Rng + ?Sized>(
    spec: &OperatorSpec,
    mut state: KnowledgeState,
    rng: &mut R,
) -> (KnowledgeState, Vec<ClaimId>, Vec<ClaimId>) {
    let mut items: BTreeMap<TruthId, Vec<ClaimId>> = BTreeMap::new();
    for claim in &state.claims {
        if let Some(t) = &claim.hidden_seed_id {
            items.entry(t.clone()).or_default().push(claim.id.clone());
        }
    }
    let mut flagged = Vec::new();
    let mut corrected = Vec::new();
    for ids in items.values() {
        let detected = rng.random::<f64>() < spec.detection_probability;
        let fixed = rng.random::<f64>() < spec.correction_strength;
        if detected {
            flagged.extend(ids.iter().cloned());
            if fixed {
                corrected.extend(ids.iter().cloned());
            }
        }
    }
    for claim in state.claims.iter().filter(|c| !c.is_seeded()) {
        if rng.random::<f64>() < spec.false_positive_rate {
            flagged.push(claim.id.clone());
        }
    }
    state.claims.retain(|c| !corrected.contains(&c.id));
    (state, flagged, corrected)
}

/// Executes single operator stages. The in-process implementation is
/// [`StubExecutor`]; the trial runner swaps in adapter-backed executors for
/// `scripted_external` specs.
pub trait StageExecutor {
    fn transform(
        &mut self,
        spec: &OperatorSpec,
        state: KnowledgeState,
        rng: &mut dyn rand::RngCore,
    ) -> Result<KnowledgeState>;

    fn audit(
        &mut self,
        spec: &OperatorSpec,
        state: KnowledgeState,
        rng: &mut dyn rand::RngCore,
    ) -> Result<AuditReport>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StubExecutor;

impl StageExecutor for StubExecutor {
    fn transform(
        &mut self,
        spec: &OperatorSpec,
        mut state: KnowledgeState,
        _rng: &mut dyn rand::RngCore,
    ) -> Result<KnowledgeState> {
        state.vector = spec.map_vector(&state.vector)?;
        Ok(state)
    }

    fn audit(
        &mut self,
        spec: &OperatorSpec,
        mut state: KnowledgeState,
        rng: &mut dyn rand::RngCore,
    ) -> Result<AuditReport> {
        state.vector = spec.map_vector(&state.vector)?;
        let (state, flagged, corrected) = if spec.kind == OperatorKind::AffineStub {
            audit_claims(spec, state, rng)
        } else {
            (state, Vec::new(), Vec::new())
        };
        Ok(AuditReport {
            state,
            flagged,
            corrected,
            ec: None,
            tp: None,
        })
    }
}

/// Applies one operator to a state.
pub fn apply_operator<R: Rng>(
    spec: &OperatorSpec,
    state: &KnowledgeState,
    rng: &mut R,
) -> Result<KnowledgeState> {
    spec.validate(state.dimension())?;
    if spec.role == Role::Transparency {
        Ok(StubExecutor.audit(spec, state.clone(), rng)?.state)
    } else {
        StubExecutor.transform(spec, state.clone(), rng)
    }
}

/// `M_T ∘ M_A ∘ M_S`, applied in that fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOperator {
    pub semantic: OperatorSpec,
    pub analytical: OperatorSpec,
    pub transparency: OperatorSpec,
}

impl ValidationOperator {
    pub fn new(semantic: OperatorSpec, analytical: OperatorSpec, transparency: OperatorSpec) -> Self {
        ValidationOperator {
            semantic,
            analytical,
            transparency,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        for (expected, spec) in Role::ALL.iter().zip(self.stages()) {
            if spec.role != *expected {
                return Err(Error::InvalidSpec(format!(
                    "stage {} has role {}",
                    expected.as_str(),
                    spec.role.as_str()
                )));
            }
            spec.validate(dimension)?;
        }
        Ok(())
    }

    pub fn stages(&self) -> [&OperatorSpec; 3] {
        [&self.semantic, &self.analytical, &self.transparency]
    }

    pub fn spec(&self, role: Role) -> &OperatorSpec {
        match role {
            Role::Semantic => &self.semantic,
            Role::Analytical => &self.analytical,
            Role::Transparency => &self.transparency,
        }
    }

    pub fn with_blend(&self, blend: f64) -> Self {
        ValidationOperator {
            transparency: self.transparency.with_blend(blend),
            ..self.clone()
        }
    }

    /// Vector part of one full cycle.
    pub fn map_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.semantic.map_vector(x)?;
        let y = self.analytical.map_vector(&y)?;
        self.transparency.map_vector(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    pub new_state: KnowledgeState,
    pub ts: f64,
    pub ec: f64,
    pub tp: f64,
    pub detections: Vec<ClaimId>,
    pub corrections_applied: Vec<ClaimId>,
    pub reevaluation_triggered: bool,
}

impl CycleResult {
    pub fn from_audit(report: AuditReport, transparency: &OperatorSpec) -> Result<Self> {
        let ec = match (report.ec, &transparency.center, transparency.radius) {
            (Some(ec), _, _) => ec,
            (None, Some(c), Some(r)) => explainability(&report.state.vector, c, r),
            (None, _, _) => {
                return Err(Error::InvalidSpec(
                    "audit produced no explainability score and the transparency spec has no constraint ball"
                        .into(),
                ))
            }
        };
        let tp = report.tp.unwrap_or_else(|| report.state.provenance_fraction());
        for (name, v) in [("ec", ec), ("tp", tp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { name, value: v });
            }
        }
        let ts = (ec + tp) / 2.0;
        Ok(CycleResult {
            new_state: report.state,
            ts,
            ec,
            tp,
            detections: report.flagged,
            corrections_applied: report.corrected,
            reevaluation_triggered: ts < COMPLIANCE_THRESHOLD,
        })
    }
}

/// One cross-validation cycle with an explicit executor.
pub fn apply_cycle_with(
    executor: &mut dyn StageExecutor,
    v: &ValidationOperator,
    state: &KnowledgeState,
    rng: &mut dyn rand::RngCore,
) -> Result<CycleResult> {
    let s = executor.transform(&v.semantic, state.clone(), rng)?;
    let a = executor.transform(&v.analytical, s, rng)?;
    let report = executor.audit(&v.transparency, a, rng)?;
    let mut result = CycleResult::from_audit(report, &v.transparency)?;
    result.new_state.iteration_index = state.iteration_index + 1;
    Ok(result)
}

/// One cross-validation cycle using in-process stubs.
pub fn apply_cycle<R: Rng>(
    v: &ValidationOperator,
    state: &KnowledgeState,
    rng: &mut R,
) -> Result<CycleResult> {
    v.validate(state.dimension())?;
    apply_cycle_with(&mut StubExecutor, v, state, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Claim, ClaimKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn identity_cycle(center: Vec<f64>, radius: f64) -> ValidationOperator {
        ValidationOperator::new(
            OperatorSpec::identity(Role::Semantic),
            OperatorSpec::identity(Role::Analytical),
            OperatorSpec {
                project: false,
                ..OperatorSpec::transparency(center, radius, 0.0)
            },
        )
    }

    fn marked_claims(n: usize) -> Vec<Claim> {
        (0..n)
            .map(|i| Claim::new(format!("c{i}"), ClaimKind::Assertion, "s"))
            .collect()
    }

    #[test]
    fn identity_semantic_stub_leaves_state_unchanged() {
        let s = KnowledgeState::new(vec![0.4, -2.0, 7.5]).with_claims(marked_claims(2));
        let out = apply_operator(&OperatorSpec::identity(Role::Semantic), &s, &mut rng()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn full_blend_sends_everything_to_the_center() {
        let spec = OperatorSpec::transparency(vec![0.5, -1.0], 2.0, 1.0);
        for v in [[10.0, 10.0], [0.0, 0.0], [-3.0, 1.0]] {
            let out = apply_operator(&spec, &KnowledgeState::new(v.to_vec()), &mut rng()).unwrap();
            assert_eq!(out.vector, vec![0.5, -1.0]);
        }
    }

    #[test]
    fn radial_projection_onto_unit_ball() {
        let spec = OperatorSpec::transparency(vec![0.0, 0.0], 1.0, 0.0);
        let out = apply_operator(&spec, &KnowledgeState::new(vec![2.0, 0.0]), &mut rng()).unwrap();
        assert_eq!(out.vector, vec![1.0, 0.0]);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let s = KnowledgeState::new(vec![0.0, 0.0]);
        let bad_blend = OperatorSpec::transparency(vec![0.0, 0.0], 1.0, 1.5);
        assert!(matches!(apply_operator(&bad_blend, &s, &mut rng()), Err(Error::InvalidSpec(_))));
        let bad_radius = OperatorSpec::transparency(vec![0.0, 0.0], 0.0, 0.5);
        assert!(matches!(apply_operator(&bad_radius, &s, &mut rng()), Err(Error::InvalidSpec(_))));
        let bad_prob = OperatorSpec::transparency(vec![0.0, 0.0], 1.0, 0.5).with_detection(-0.1, 0.0, 1.0);
        assert!(matches!(apply_operator(&bad_prob, &s, &mut rng()), Err(Error::InvalidSpec(_))));
        let wrong_dim = OperatorSpec::transparency(vec![0.0; 3], 1.0, 0.5);
        assert!(matches!(
            apply_operator(&wrong_dim, &s, &mut rng()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn semantic_and_analytical_norm_bounds() {
        let expansive = OperatorSpec::affine(Role::Semantic, Some(linalg::scaled(&linalg::identity(2), 1.3)), None);
        assert!(expansive.validate(2).is_err());
        let contractive = OperatorSpec::affine(Role::Semantic, Some(linalg::scaled(&linalg::identity(2), 0.5)), None);
        assert!(contractive.validate(2).is_err());
        let mild = OperatorSpec::affine(Role::Semantic, Some(linalg::scaled(&linalg::identity(2), 1.1)), None);
        assert!(mild.validate(2).is_ok());
        let analytical = OperatorSpec::affine(Role::Analytical, Some(linalg::scaled(&linalg::identity(2), 1.01)), None);
        assert!(analytical.validate(2).is_err());
        let declared_wrong = OperatorSpec {
            lipschitz: Some(0.7),
            ..OperatorSpec::identity(Role::Analytical)
        };
        assert!(declared_wrong.validate(2).is_err());
    }

    #[test]
    fn interior_point_with_empty_claims_scores_one() {
        let v = identity_cycle(vec![0.0, 0.0], 5.0);
        let s = KnowledgeState::new(vec![1.0, 1.0]);
        let r = apply_cycle(&v, &s, &mut rng()).unwrap();
        assert_eq!(r.new_state.vector, s.vector);
        assert_eq!(r.new_state.claims, s.claims);
        assert_eq!((r.ec, r.tp, r.ts), (1.0, 1.0, 1.0));
        assert!(!r.reevaluation_triggered);
    }

    #[test]
    fn explainability_half_at_ln2_outside() {
        let v = identity_cycle(vec![0.0, 0.0], 1.0);
        let s = KnowledgeState::new(vec![1.0 + 2f64.ln(), 0.0]).with_claims(marked_claims(3));
        let r = apply_cycle(&v, &s, &mut rng()).unwrap();
        assert!((r.ec - 0.5).abs() < 1e-15);
        assert_eq!(r.tp, 1.0);
        assert!((r.ts - 0.75).abs() < 1e-15);
        assert!(!r.reevaluation_triggered);
    }

    #[test]
    fn explainability_quarter_triggers_reevaluation() {
        let v = identity_cycle(vec![0.0, 0.0], 1.0);
        let s = KnowledgeState::new(vec![0.0, -(1.0 + 4f64.ln())]).with_claims(marked_claims(1));
        let r = apply_cycle(&v, &s, &mut rng()).unwrap();
        assert!((r.ec - 0.25).abs() < 1e-15);
        assert!((r.ts - 0.625).abs() < 1e-15);
        assert!(r.reevaluation_triggered);
    }

    #[test]
    fn audit_removes_detected_seeds_and_flags_false_positives() {
        let mut claims = marked_claims(3);
        let mut seeded = Claim::new("s1", ClaimKind::Definition, "x");
        seeded.hidden_seed_id = Some(TruthId("t1".into()));
        claims.push(seeded);
        let s = KnowledgeState::new(vec![0.0]).with_claims(claims);
        let spec = OperatorSpec::transparency(vec![0.0], 1.0, 0.0).with_detection(1.0, 1.0, 1.0);
        let report = StubExecutor.audit(&spec, s, &mut rng()).unwrap();
        assert_eq!(report.corrected, vec![ClaimId::from("s1")]);
        assert_eq!(report.flagged.len(), 4);
        assert_eq!(report.state.claims.len(), 3);

        let none = OperatorSpec::transparency(vec![0.0], 1.0, 0.0).with_detection(0.0, 0.0, 1.0);
        let report = StubExecutor.audit(&none, report.state, &mut rng()).unwrap();
        assert!(report.flagged.is_empty() && report.corrected.is_empty());
    }

    #[test]
    fn cycle_is_deterministic_for_a_fixed_seed() {
        let mut claims = marked_claims(4);
        for (i, c) in claims.iter_mut().enumerate().take(2) {
            c.hidden_seed_id = Some(TruthId(format!("t{i}")));
        }
        let v = ValidationOperator::new(
            OperatorSpec::affine(Role::Semantic, Some(linalg::scaled(&linalg::identity(3), 1.1)), Some(vec![0.1, 0.2, 0.3])),
            OperatorSpec::identity(Role::Analytical),
            OperatorSpec::transparency(vec![0.0; 3], 1.0, 0.3).with_detection(0.5, 0.2, 0.5),
        );
        let s = KnowledgeState::new(vec![1.0, -2.0, 0.5]).with_claims(claims);
        let a = apply_cycle(&v, &s, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = apply_cycle(&v, &s, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ts, (a.ec + a.tp) / 2.0);
        assert_eq!(a.new_state.iteration_index, 1);
    }

    #[test]
    fn external_spec_has_no_vector_map() {
        let spec = OperatorSpec::scripted(Role::Semantic, vec!["adapter".into()]);
        assert!(spec.validate(2).is_ok());
        assert!(spec.map_vector(&[0.0, 0.0]).is_err());
        let empty = OperatorSpec::scripted(Role::Semantic, vec![]);
        assert!(empty.validate(2).is_err());
    }
}
