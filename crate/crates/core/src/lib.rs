//! Scoring engine for AI-reconstructed LaTeX papers.
//!
//! Compares a generated paper against its ground-truth (GT) original along
//! three axes — rubric-based presentation quality, claim-level hallucination,
//! and citation-set metrics — plus tooling to prepare evaluation bundles and
//! drive a writer agent through a compile-feedback loop.
//!
//! Everything that touches a language model goes through [`judge::JudgeGateway`],
//! which supports deterministic record/replay so a whole evaluation run is a
//! pure function of its file inputs.

pub mod align;
pub mod assets;
pub mod citations;
pub mod claims;
pub mod diag;
pub mod harness;
pub mod judge;
pub mod latex;
pub mod parallel;
pub mod pipeline;
pub mod prep;
pub mod rational;
pub mod report;
pub mod rubric;
pub mod testkit;

pub use align::{CanonicalCategory, SectionMap};
pub use claims::{Claim, ClaimClass, HallucinationReport, Severity};
pub use citations::CitationReport;

pub use diag::{Diagnostic, DiagnosticKind, Diagnostics};
pub use latex::{BibDatabase, FigureBlock, LatexDocument, RawSection, TableBlock};
pub use rational::Rational;
pub use report::EvaluationReport;

pub use rubric::{Rubric, RubricElement, RubricScore, SectionScore};

/// Engine version recorded in report provenance.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
