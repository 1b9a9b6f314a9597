//! Citation-set metrics: precision, recall, F1, and the hallucinated /
//! missing / extra key sets.
//!
//! Key comparison is exact byte equality after whitespace trim — keys come
//! from a shared references.bib, so any drift is agent error, which is the
//! thing being measured.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::latex::{BibDatabase, LatexDocument};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationReport {
    pub gt_keys: BTreeSet<String>,
    pub pred_keys: BTreeSet<String>,
    pub bib_keys: BTreeSet<String>,
    /// pred ∩ gt
    pub valid: BTreeSet<String>,
    /// pred \ bib
    pub hallucinated: BTreeSet<String>,
    /// gt \ pred
    pub missing: BTreeSet<String>,
    /// (pred ∩ bib) \ gt
    pub extra: BTreeSet<String>,
    pub precision: Rational,
    pub recall: Rational,
    pub f1: Rational,
}

impl CitationReport {
    /// Computes every field from the three key sets.
    pub fn from_sets(
        gt: BTreeSet<String>,
        pred: BTreeSet<String>,
        bib: BTreeSet<String>,
    ) -> Self {
        let valid: BTreeSet<String> = pred.intersection(&gt).cloned().collect();
        let hallucinated: BTreeSet<String> = pred.difference(&bib).cloned().collect();
        let missing: BTreeSet<String> = gt.difference(&pred).cloned().collect();
        let extra: BTreeSet<String> = pred
            .intersection(&bib)
            .filter(|k| !gt.contains(*k))
            .cloned()
            .collect();

        let precision = if pred.is_empty() {
            Rational::ZERO
        } else {
            Rational::new(valid.len() as i64, pred.len() as i64)
        };
        let recall = if gt.is_empty() {
            Rational::ZERO
        } else {
            Rational::new(valid.len() as i64, gt.len() as i64)
        };
        let denom = precision + recall;
        let f1 = if denom.is_zero() {
            Rational::ZERO
        } else {
            Rational::from_int(2) * precision * recall / denom
        };

        CitationReport {
            gt_keys: gt,
            pred_keys: pred,
            bib_keys: bib,
            valid,
            hallucinated,
            missing,
            extra,
            precision,
            recall,
            f1,
        }
    }
}

/// Deduplicates key occurrence lists to sets and computes the report.
/// Empty inputs produce zero metrics with a diagnostic flag.
pub fn score_citations(
    gt: &LatexDocument,
    pred: &LatexDocument,
    bib: &BibDatabase,
    diagnostics: &mut Diagnostics,
) -> CitationReport {
    let gt_keys: BTreeSet<String> = gt.cite_keys.iter().map(|c| c.key.trim().to_string()).collect();
    let pred_keys: BTreeSet<String> = pred
        .cite_keys
        .iter()
        .map(|c| c.key.trim().to_string())
        .collect();
    let bib_keys: BTreeSet<String> = bib.keys().map(str::to_string).collect();

    if gt_keys.is_empty() {
        diagnostics.push(Diagnostic::new(
            "citations",
            DiagnosticKind::EmptyMetricInput,
            "GT paper cites no keys; recall is reported as 0",
        ));
    }
    if pred_keys.is_empty() {
        diagnostics.push(Diagnostic::new(
            "citations",
            DiagnosticKind::EmptyMetricInput,
            "generated paper cites no keys; precision is reported as 0",
        ));
    }

    CitationReport::from_sets(gt_keys, pred_keys, bib_keys)
}
