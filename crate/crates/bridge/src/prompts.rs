//! Supervisor prompt texts, served read-only to the console.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptId {
    ContextProvisioning,
    AnalyticalConsistency,
    ComplianceAudit,
    FinalVerification,
}

impl PromptId {
    pub const ALL: [PromptId; 4] = [
        PromptId::ContextProvisioning,
        PromptId::AnalyticalConsistency,
        PromptId::ComplianceAudit,
        PromptId::FinalVerification,
    ];

    pub fn title(self) -> &'static str {
        match self {
            PromptId::ContextProvisioning => "Context provisioning",
            PromptId::AnalyticalConsistency => "Analytical consistency",
            PromptId::ComplianceAudit => "Transparency and compliance audit",
            PromptId::FinalVerification => "Final verification",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            PromptId::ContextProvisioning => include_str!("../fixtures/prompts/context_provisioning.txt"),
            PromptId::AnalyticalConsistency => include_str!("../fixtures/prompts/analytical_consistency.txt"),
            PromptId::ComplianceAudit => include_str!("../fixtures/prompts/compliance_audit.txt"),
            PromptId::FinalVerification => include_str!("../fixtures/prompts/final_verification.txt"),
        }
        .trim_end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: PromptId,
    pub title: String,
    pub text: String,
}

impl From<PromptId> for Prompt {
    fn from(id: PromptId) -> Self {
        Prompt {
            id,
            title: id.title().to_owned(),
            text: id.text().to_owned(),
        }
    }
}

pub fn all() -> Vec<Prompt> {
    PromptId::ALL.into_iter().map(Prompt::from).collect()
}
