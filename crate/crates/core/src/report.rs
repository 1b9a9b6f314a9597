//! Per-paper report assembly and leaderboard roll-up.
//!
//! All internal arithmetic is exact rational; decimal rendering happens only
//! in the leaderboard tables. Serialization uses stable key order so
//! identical inputs produce byte-identical report.json.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{CanonicalCategory, UnclassifiedSection};
use crate::assets::ExtraTable;
use crate::citations::CitationReport;
use crate::claims::HallucinationReport;
use crate::diag::Diagnostic;
use crate::rational::Rational;
use crate::rubric::SectionScore;

pub const REPORT_SCHEMA: &str = "report/1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("incomplete run: {0} is missing and no diagnostic explains why")]
    IncompleteRun(String),
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("report file error: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgMode {
    /// Mean over the pooled element multiset across sections (default).
    Pooled,
    /// Mean of per-section averages.
    Sectionwise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub judge_backend_id: String,
    pub verifier_backend_id: String,
    pub cassette_hash: String,
    pub prompt_versions: BTreeMap<String, String>,
    pub engine_version: String,
    pub stage_order: Vec<String>,
}

impl Provenance {
    pub fn is_complete(&self) -> bool {
        !self.judge_backend_id.is_empty()
            && !self.cassette_hash.is_empty()
            && !self.prompt_versions.is_empty()
            && !self.engine_version.is_empty()
            && !self.stage_order.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub paper_id: String,
    pub sections: Vec<SectionScore>,
    pub avg_rubric: Rational,
    pub avg_mode: AvgMode,
    pub hallucination: HallucinationReport,
    pub citation: CitationReport,
    pub extra_tables: Vec<ExtraTable>,
    pub unclassified_gt: Vec<UnclassifiedSection>,
    pub unclassified_pred: Vec<UnclassifiedSection>,
    pub diagnostics: Vec<Diagnostic>,
    pub provenance: Provenance,
}

impl EvaluationReport {
    pub fn section(&self, category: CanonicalCategory) -> Option<&SectionScore> {
        self.sections.iter().find(|s| s.section == category)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReportError::File(format!("cannot read {}: {e}", path.display())))?;
        let report: EvaluationReport = serde_json::from_str(&text)
            .map_err(|e| ReportError::File(format!("invalid report {}: {e}", path.display())))?;
        if report.schema != REPORT_SCHEMA {
            return Err(ReportError::SchemaMismatch {
                expected: REPORT_SCHEMA.to_string(),
                found: report.schema,
            });
        }
        Ok(report)
    }
}

/// Every individual element score in one section: text, figure, and table
/// items combined.
fn section_element_scores(section: &SectionScore) -> impl Iterator<Item = i64> + '_ {
    section
        .text_scores
        .iter()
        .map(|s| s.score)
        .chain(section.figure_scores.iter().map(|f| f.score))
        .chain(section.table_scores.iter().map(|t| t.score))
}

/// Assembles the final report. `avg_rubric` pools every element score across
/// sections (not a mean of section means) unless `Sectionwise` is selected.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    paper_id: &str,
    sections: Vec<SectionScore>,
    avg_mode: AvgMode,
    hallucination: HallucinationReport,
    citation: CitationReport,
    extra_tables: Vec<ExtraTable>,
    unclassified_gt: Vec<UnclassifiedSection>,
    unclassified_pred: Vec<UnclassifiedSection>,
    diagnostics: Vec<Diagnostic>,
    provenance: Provenance,
) -> Result<EvaluationReport, ReportError> {
    if sections.is_empty() && diagnostics.is_empty() {
        return Err(ReportError::IncompleteRun("rubric sections".to_string()));
    }
    if !provenance.is_complete() {
        return Err(ReportError::IncompleteRun("provenance".to_string()));
    }

    let avg_rubric = match avg_mode {
        AvgMode::Pooled => {
            Rational::mean_of_ints(sections.iter().flat_map(section_element_scores))
        }
        AvgMode::Sectionwise => Rational::mean(sections.iter().map(|s| s.average)),
    }
    .unwrap_or(Rational::ZERO);

    Ok(EvaluationReport {
        schema: REPORT_SCHEMA.to_string(),
        paper_id: paper_id.to_string(),
        sections,
        avg_rubric,
        avg_mode,
        hallucination,
        citation,
        extra_tables,
        unclassified_gt,
        unclassified_pred,
        diagnostics,
        provenance,
    })
}

/// One leaderboard row: metric means across the reports grouped under an
/// (agent, model) label pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub agent: String,
    pub model: String,
    pub papers: usize,
    /// Mean per-section rubric averages; sections absent from every report
    /// in the group are omitted.
    pub rubric: BTreeMap<CanonicalCategory, Rational>,
    pub rubric_avg: Rational,
    /// Mean major-contradictory count per section (absent sections count 0).
    pub hallucination: BTreeMap<CanonicalCategory, Rational>,
    pub hallucination_total: Rational,
    pub precision: Rational,
    pub recall: Rational,
    pub f1: Rational,
    pub hallucinated_citations: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
}

/// Rolls grouped reports into leaderboard rows; cells are arithmetic means
/// across the contributing reports.
pub fn leaderboard(groups: Vec<((String, String), Vec<EvaluationReport>)>) -> Leaderboard {
    let rows = groups
        .into_iter()
        .map(|((agent, model), reports)| {
            let n = reports.len().max(1) as i64;
            let mean_of = |values: Vec<Rational>| -> Option<Rational> { Rational::mean(values) };

            let mut rubric = BTreeMap::new();
            for category in CanonicalCategory::SCORED {
                let values: Vec<Rational> = reports
                    .iter()
                    .filter_map(|r| r.section(category).map(|s| s.average))
                    .collect();
                if let Some(mean) = mean_of(values) {
                    rubric.insert(category, mean);
                }
            }

            let mut hallucination = BTreeMap::new();
            for category in CanonicalCategory::SCORED {
                let total: i64 = reports
                    .iter()
                    .map(|r| {
                        r.hallucination
                            .per_section
                            .get(&category)
                            .map(|c| c.major_contradictory as i64)
                            .unwrap_or(0)
                    })
                    .sum();
                hallucination.insert(category, Rational::new(total, n));
            }
            let hallucination_total = Rational::new(
                reports.iter().map(|r| r.hallucination.headline as i64).sum(),
                n,
            );

            LeaderboardRow {
                agent,
                model,
                papers: reports.len(),
                rubric,
                rubric_avg: mean_of(reports.iter().map(|r| r.avg_rubric).collect())
                    .unwrap_or(Rational::ZERO),
                hallucination,
                hallucination_total,
                precision: mean_of(reports.iter().map(|r| r.citation.precision).collect())
                    .unwrap_or(Rational::ZERO),
                recall: mean_of(reports.iter().map(|r| r.citation.recall).collect())
                    .unwrap_or(Rational::ZERO),
                f1: mean_of(reports.iter().map(|r| r.citation.f1).collect())
                    .unwrap_or(Rational::ZERO),
                hallucinated_citations: Rational::new(
                    reports
                        .iter()
                        .map(|r| r.citation.hallucinated.len() as i64)
                        .sum(),
                    n,
                ),
            }
        })
        .collect();
    Leaderboard { rows }
}

impl Leaderboard {
    /// Markdown rendering with the three table families. Rubric and citation
    /// precision/recall/F1 cells print two decimals; hallucination counts
    /// print one, matching each table's native precision.
    pub fn render_markdown(&self) -> String {
        let mut out = String::new();

        out.push_str("## Rubric evaluation scores\n\n");
        out.push_str("| Agent | Model | Abs. | Intro. | Rel. | Meth. | Bench. | Exp. | Avg. |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let cells: Vec<String> = CanonicalCategory::SCORED
                .iter()
                .map(|c| {
                    row.rubric
                        .get(c)
                        .map(|v| v.to_decimal(2))
                        .unwrap_or_else(|| "-".to_string())
                })
                .collect();
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                row.agent,
                row.model,
                cells.join(" | "),
                row.rubric_avg.to_decimal(2)
            ));
        }

        out.push_str("\n## Hallucination evaluation\n\n");
        out.push_str("| Agent | Model | Abs. | Intro. | Rel. | Meth. | Bench. | Exp. | Total |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let cells: Vec<String> = CanonicalCategory::SCORED
                .iter()
                .map(|c| {
                    row.hallucination
                        .get(c)
                        .map(|v| v.to_decimal(1))
                        .unwrap_or_else(|| "0.0".to_string())
                })
                .collect();
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                row.agent,
                row.model,
                cells.join(" | "),
                row.hallucination_total.to_decimal(1)
            ));
        }

        out.push_str("\n## Citation evaluation scores\n\n");
        out.push_str("| Agent | Model | Prec. | Recall | F1 | Hal. |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                row.agent,
                row.model,
                row.precision.to_decimal(2),
                row.recall.to_decimal(2),
                row.f1.to_decimal(2),
                row.hallucinated_citations.to_decimal(1)
            ));
        }

        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("leaderboard serializes") + "\n"
    }
}
