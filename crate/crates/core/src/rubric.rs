//! Per-paper rubrics: generation from the GT paper, element-by-element 1-5
//! scoring of generated sections, and folding figure/table scores into
//! section averages.
//!
//! Importance labels are stored but never weighted: the aggregate is a plain
//! mean over the combined score multiset. The rubric lives in a versioned
//! JSON file so human review happens by editing the file, outside this
//! engine.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{CanonicalCategory, SectionMap};
use crate::assets::{FigureScore, TableMatch};
use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::judge::{schema, JudgeGateway, JudgeRequest};
use crate::parallel::bounded_parallel_map;
use crate::rational::Rational;

pub const RUBRIC_SCHEMA: &str = "rubric/1";

/// Bound from the extraction prompt: 5-15 elements per populated section.
pub const MAX_ELEMENTS_PER_SECTION: usize = 15;
pub const MIN_ELEMENTS_PER_SECTION: usize = 5;

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("section {0} has no rubric elements and no asset scores")]
    NoElements(CanonicalCategory),
    #[error("rubric file error: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Importance {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricElement {
    pub section: CanonicalCategory,
    pub name: String,
    pub importance: Importance,
    pub description: String,
    /// Verbatim GT quote backing the expectation.
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    pub schema: String,
    pub paper_id: String,
    pub elements: Vec<RubricElement>,
}

impl Rubric {
    pub fn new(paper_id: &str, elements: Vec<RubricElement>) -> Self {
        Rubric {
            schema: RUBRIC_SCHEMA.to_string(),
            paper_id: paper_id.to_string(),
            elements,
        }
    }

    pub fn elements_for(&self, section: CanonicalCategory) -> Vec<&RubricElement> {
        self.elements.iter().filter(|e| e.section == section).collect()
    }

    /// Sections that have at least one element, in canonical order.
    pub fn populated_sections(&self) -> Vec<CanonicalCategory> {
        CanonicalCategory::SCORED
            .iter()
            .copied()
            .filter(|c| self.elements.iter().any(|e| e.section == *c))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, RubricError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RubricError::File(format!("cannot read {}: {e}", path.display())))?;
        let rubric: Rubric = serde_json::from_str(&text)
            .map_err(|e| RubricError::File(format!("invalid rubric {}: {e}", path.display())))?;
        if rubric.schema != RUBRIC_SCHEMA {
            return Err(RubricError::File(format!(
                "rubric schema '{}' does not match expected '{RUBRIC_SCHEMA}'",
                rubric.schema
            )));
        }
        if rubric.elements.iter().any(|e| e.section == CanonicalCategory::Conclusion) {
            return Err(RubricError::File(
                "rubric contains Conclusion elements; Conclusion is never scored".to_string(),
            ));
        }
        Ok(rubric)
    }

    pub fn save(&self, path: &Path) -> Result<(), RubricError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| RubricError::File(e.to_string()))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| RubricError::File(format!("cannot write {}: {e}", path.display())))
    }

    /// Element-count bounds per populated section as warnings, not errors;
    /// hand-refined rubrics may deliberately prune.
    pub fn check_bounds(&self, diagnostics: &mut Diagnostics) {
        for section in self.populated_sections() {
            let count = self.elements_for(section).len();
            if !(MIN_ELEMENTS_PER_SECTION..=MAX_ELEMENTS_PER_SECTION).contains(&count) {
                diagnostics.push(Diagnostic::new(
                    "rubric",
                    DiagnosticKind::RubricOutOfBounds,
                    format!("{section} has {count} elements, outside the 5-15 band"),
                ));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricScore {
    pub element_name: String,
    pub score: i64,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionScore {
    pub section: CanonicalCategory,
    pub text_scores: Vec<RubricScore>,
    pub figure_scores: Vec<FigureScore>,
    pub table_scores: Vec<TableMatch>,
    /// Mean over the combined multiset of text, figure, and table scores.
    pub average: Rational,
}

/// Generates a rubric from the GT section map, one judge call per scored
/// section. Oversized element lists are truncated to the 5-15 bound with a
/// diagnostic; empty sections yield zero elements with a diagnostic.
pub fn generate_rubric(
    paper_id: &str,
    gt_map: &SectionMap,
    judge: &JudgeGateway,
    parallelism: usize,
    diagnostics: &mut Diagnostics,
) -> Rubric {
    let sections: Vec<(CanonicalCategory, String)> = CanonicalCategory::SCORED
        .iter()
        .filter_map(|&c| gt_map.gt.text_for(c).map(|t| (c, t.to_string())))
        .collect();

    let outcomes = bounded_parallel_map(sections, parallelism, |_, (section, text)| {
        if text.trim().is_empty() {
            return (section, Ok(Vec::new()));
        }
        let request = JudgeRequest {
            task_tag: "rubric_extract".to_string(),
            system_prompt: crate::judge::prompts::render("rubric_extract_system", &[]),
            user_prompt: crate::judge::prompts::render(
                "rubric_extract_user",
                &[
                    ("{section_name}", section.name()),
                    ("{section_content}", text.as_str()),
                ],
            ),
            response_schema: schema::RUBRIC_EXTRACT.to_string(),
        };
        let verdict = judge.submit(&request).map(|response| {
            response.parsed["elements"]
                .as_array()
                .map(|items| {
                    items
                        .iter()
                        .filter_map(|item| {
                            Some(RubricElement {
                                section,
                                name: item["name"].as_str()?.to_string(),
                                importance: match item["importance"].as_str()? {
                                    "high" => Importance::High,
                                    "medium" => Importance::Medium,
                                    _ => Importance::Low,
                                },
                                description: item["description"].as_str()?.to_string(),
                                evidence: item["evidence"].as_str()?.to_string(),
                            })
                        })
                        .collect::<Vec<_>>()
                })
                .unwrap_or_default()
        });
        (section, verdict)
    });

    let mut elements = Vec::new();
    for (section, verdict) in outcomes {
        match verdict {
            Ok(mut list) => {
                if list.is_empty() {
                    diagnostics.push(Diagnostic::new(
                        "rubric",
                        DiagnosticKind::RubricEmptySection,
                        format!("{section} produced zero rubric elements"),
                    ));
                }
                if list.len() > MAX_ELEMENTS_PER_SECTION {
                    diagnostics.push(Diagnostic::new(
                        "rubric",
                        DiagnosticKind::RubricTruncated,
                        format!(
                            "{section} returned {} elements; truncated to {MAX_ELEMENTS_PER_SECTION}",
                            list.len()
                        ),
                    ));
                    list.truncate(MAX_ELEMENTS_PER_SECTION);
                }
                elements.extend(list);
            }
            Err(err) => diagnostics.push(Diagnostic::new(
                "rubric",
                DiagnosticKind::JudgeMalformed,
                format!("{section} omitted from rubric: {err}"),
            )),
        }
    }

    Rubric::new(paper_id, elements)
}

/// Scores one section's elements against the generated text. When the
/// section is absent from the generated paper, every element scores 1
/// without any judge call.
pub fn score_section(
    elements: &[&RubricElement],
    pred_text: Option<&str>,
    asset_context: &str,
    judge: &JudgeGateway,
    diagnostics: &mut Diagnostics,
) -> Vec<RubricScore> {
    if elements.is_empty() {
        return Vec::new();
    }
    let section = elements[0].section;
    debug_assert!(elements.iter().all(|e| e.section == section));

    let Some(pred_text) = pred_text else {
        return elements
            .iter()
            .map(|e| RubricScore {
                element_name: e.name.clone(),
                score: 1,
                reasoning: "section is completely absent from the generated paper".to_string(),
            })
            .collect();
    };

    let rubric_lines: String = elements
        .iter()
        .map(|e| {
            format!(
                "- {} ({}): {}",
                e.name,
                match e.importance {
                    Importance::High => "high",
                    Importance::Medium => "medium",
                    Importance::Low => "low",
                },
                e.description
            )
        })
        .collect::<Vec<_>>()
        .join("\n");

    let request = JudgeRequest {
        task_tag: "rubric_score".to_string(),
        system_prompt: crate::judge::prompts::render("rubric_score_system", &[]),
        user_prompt: crate::judge::prompts::render(
            "rubric_score_user",
            &[
                ("{section_name}", section.name()),
                ("{rubric_elements}", rubric_lines.as_str()),
                ("{pred_content}", pred_text),
                ("{figure_table_context}", asset_context),
            ],
        ),
        response_schema: schema::RUBRIC_SCORE.to_string(),
    };

    match judge.submit(&request) {
        Ok(response) => {
            let returned = response.parsed["scores"].as_array().cloned().unwrap_or_default();
            // one score per element, same order; the judge echoes names but
            // order is the contract
            elements
                .iter()
                .enumerate()
                .map(|(i, e)| match returned.get(i) {
                    Some(item) => RubricScore {
                        element_name: e.name.clone(),
                        score: item["score"].as_i64().unwrap_or(1).clamp(1, 5),
                        reasoning: item["reasoning"].as_str().unwrap_or_default().to_string(),
                    },
                    None => {
                        diagnostics.push(Diagnostic::new(
                            "rubric",
                            DiagnosticKind::JudgeMalformed,
                            format!(
                                "{section}: judge omitted a score for element '{}'; scored 1",
                                e.name
                            ),
                        ));
                        RubricScore {
                            element_name: e.name.clone(),
                            score: 1,
                            reasoning: "no judge verdict for this element".to_string(),
                        }
                    }
                })
                .collect()
        }
        Err(err) => {
            diagnostics.push(Diagnostic::new(
                "rubric",
                DiagnosticKind::JudgeMalformed,
                format!("{section}: scoring failed, all elements scored 1: {err}"),
            ));
            elements
                .iter()
                .map(|e| RubricScore {
                    element_name: e.name.clone(),
                    score: 1,
                    reasoning: "judge unavailable for this section".to_string(),
                })
                .collect()
        }
    }
}

/// Folds text, figure, and table scores attributed to one section into its
/// unweighted average.
pub fn fold_section(
    section: CanonicalCategory,
    text_scores: Vec<RubricScore>,
    figure_scores: Vec<FigureScore>,
    table_scores: Vec<TableMatch>,
) -> Result<SectionScore, RubricError> {
    let combined: Vec<i64> = text_scores
        .iter()
        .map(|s| s.score)
        .chain(figure_scores.iter().map(|f| f.score))
        .chain(table_scores.iter().map(|t| t.score))
        .collect();
    let average =
        Rational::mean_of_ints(combined).ok_or(RubricError::NoElements(section))?;
    Ok(SectionScore {
        section,
        text_scores,
        figure_scores,
        table_scores,
        average,
    })
}

/// Renders the "Figure/Table Context" block for a section's scoring prompt.
pub fn asset_context_for(
    section: CanonicalCategory,
    figures: &[FigureScore],
    tables: &[TableMatch],
) -> String {
    let mut lines = Vec::new();
    for f in figures.iter().filter(|f| f.gt_section == Some(section)) {
        let status = match f.basis {
            crate::assets::FigureBasis::SameSection => "present in the same section".to_string(),
            crate::assets::FigureBasis::JudgeContext => format!(
                "referenced in {} instead",
                f.pred_section.map(|c| c.name()).unwrap_or("front matter")
            ),
            crate::assets::FigureBasis::Unreferenced => "MISSING from the generated paper".to_string(),
        };
        lines.push(format!("Figure {}: {status} (score {})", f.asset_path, f.score));
    }
    for t in tables.iter().filter(|t| t.gt_section == Some(section)) {
        let name = t
            .gt_caption
            .as_deref()
            .or(t.gt_label.as_deref())
            .unwrap_or("(unnamed)");
        let status = if t.pred_index.is_some() {
            format!("matched (score {})", t.score)
        } else {
            "MISSING from the generated paper (score 1)".to_string()
        };
        lines.push(format!("Table '{name}': {status}"));
    }
    if lines.is_empty() {
        "No figures or tables are attributed to this section.".to_string()
    } else {
        lines.join("\n")
    }
}

/// Per-section attribution of figure scores: the GT section that references
/// the asset (first reference wins, which `score_figures` already encodes).
pub fn group_assets_by_section(
    figures: &[FigureScore],
    tables: &[TableMatch],
) -> BTreeMap<CanonicalCategory, (Vec<FigureScore>, Vec<TableMatch>)> {
    let mut grouped: BTreeMap<CanonicalCategory, (Vec<FigureScore>, Vec<TableMatch>)> =
        BTreeMap::new();
    for f in figures {
        if let Some(section) = f.gt_section {
            grouped.entry(section).or_default().0.push(f.clone());
        }
    }
    for t in tables {
        if let Some(section) = t.gt_section {
            grouped.entry(section).or_default().1.push(t.clone());
        }
    }
    grouped
}
