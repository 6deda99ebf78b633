//! Knowledge states and the metric on them.
//!
//! A [`KnowledgeState`] pairs a real vector (the point that moves through the
//! metric space under repeated validation) with a symbolic claim set used by
//! contradiction seeding and auditing. Only the vector takes part in the
//! metric; claim-set stability is checked separately by the convergence
//! criterion.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque claim identifier, unique within a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClaimId(pub String);

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClaimId {
    fn from(s: &str) -> Self {
        ClaimId(s.to_owned())
    }
}

/// Ground-truth token linking injected claims to a seed ledger entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TruthId(pub String);

impl fmt::Display for TruthId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Assertion,
    Implication,
    Definition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    pub kind: ClaimKind,
    pub subject: String,
    pub polarity: Polarity,
    pub provenance_marked: bool,
    /// Known only to the seed ledger and the scorer. Never serialized.
    #[serde(skip)]
    pub hidden_seed_id: Option<TruthId>,
}

impl Claim {
    pub fn new(id: impl Into<String>, kind: ClaimKind, subject: impl Into<String>) -> Self {
        Claim {
            id: ClaimId(id.into()),
            kind,
            subject: subject.into(),
            polarity: Polarity::Positive,
            provenance_marked: true,
            hidden_seed_id: None,
        }
    }

    pub fn is_seeded(&self) -> bool {
        self.hidden_seed_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeState {
    pub vector: Vec<f64>,
    #[serde(default)]
    pub claims: Vec<Claim>,
    #[serde(rename = "iteration", default)]
    pub iteration_index: u64,
}

impl KnowledgeState {
    pub fn new(vector: Vec<f64>) -> Self {
        KnowledgeState {
            vector,
            claims: Vec::new(),
            iteration_index: 0,
        }
    }

    pub fn with_claims(mut self, claims: Vec<Claim>) -> Self {
        self.claims = claims;
        self
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }

    /// Checks the state invariants: finite entries and unique claim ids.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidState(format!(
                "vector entry {i} is not finite ({})",
                self.vector[i]
            )));
        }
        let mut seen = HashSet::with_capacity(self.claims.len());
        for claim in &self.claims {
            if !seen.insert(&claim.id) {
                return Err(Error::InvalidState(format!("duplicate claim id `{}`", claim.id)));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.vector.iter().all(|x| x.is_finite())
    }

    pub fn claim(&self, id: &ClaimId) -> Option<&Claim> {
        self.claims.iter().find(|c| &c.id == id)
    }

    pub fn contains_claim(&self, id: &ClaimId) -> bool {
        self.claim(id).is_some()
    }

    pub fn claim_ids(&self) -> Vec<ClaimId> {
        self.claims.iter().map(|c| c.id.clone()).collect()
    }

    /// Claim sets compared by content, ignoring order.
    pub fn same_claims(&self, other: &KnowledgeState) -> bool {
        if self.claims.len() != other.claims.len() {
            return false;
        }
        let mut a: Vec<&Claim> = self.claims.iter().collect();
        let mut b: Vec<&Claim> = other.claims.iter().collect();
        a.sort_by(|x, y| x.id.cmp(&y.id));
        b.sort_by(|x, y| x.id.cmp(&y.id));
        a == b
    }

    /// Fraction of claims carrying a provenance mark; 1 for an empty set.
    pub fn provenance_fraction(&self) -> f64 {
        if self.claims.is_empty() {
            return 1.0;
        }
        let marked = self.claims.iter().filter(|c| c.provenance_marked).count();
        marked as f64 / self.claims.len() as f64
    }
}

/// Euclidean distance between the vector parts of two states.
pub fn distance(a: &KnowledgeState, b: &KnowledgeState) -> Result<f64> {
    vector_distance(&a.vector, &b.vector)
}

pub fn vector_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
