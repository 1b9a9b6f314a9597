//! Diagnostics collected along the evaluation pipeline.
//!
//! The engine scores possibly-broken generated papers, so almost nothing is
//! fatal: parse problems, judge degradations, and skipped work all downgrade
//! to diagnostics that travel with the final report.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnbalancedEnvironment,
    EmptyCiteArgument,
    MalformedCite,
    DeepInclude,
    MissingInclude,
    DuplicateBibKey,
    MalformedBibEntry,
    JudgeDegraded,
    JudgeMalformed,
    Unverified,
    VerifierOmittedClaim,
    VerifierMutationAttempt,
    SeverityEscalated,
    RubricTruncated,
    RubricEmptySection,
    RubricOutOfBounds,
    MissingAsset,
    OverviewLength,
    ReadmeHeading,
    EmptyMetricInput,
    UnclassifiedSection,
    AbstractMissing,
    ResolverMiss,
    StageSkipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub stage: String,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(stage: &str, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            stage: stage.to_string(),
            kind,
            message: message.into(),
        }
    }
}

/// Ordered diagnostic sink shared by pipeline stages.
#[derive(Debug, Default, Clone)]
pub struct Diagnostics {
    items: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, diag: Diagnostic) {
        self.items.push(diag);
    }

    pub fn record(&mut self, stage: &str, kind: DiagnosticKind, message: impl Into<String>) {
        self.push(Diagnostic::new(stage, kind, message));
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.items.extend(other.items);
    }

    pub fn items(&self) -> &[Diagnostic] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Diagnostic> {
        self.items
    }

    pub fn has_kind(&self, kind: DiagnosticKind) -> bool {
        self.items.iter().any(|d| d.kind == kind)
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }
}
