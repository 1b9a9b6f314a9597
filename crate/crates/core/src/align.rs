//! Folds raw sections of both papers into the seven canonical categories and
//! produces matched per-category text pairs.
//!
//! Classification applies keyword rules first; only headings no rule matches
//! are sent to the judge. Depth-2+ sections inherit their depth-1 parent, so
//! only depth-1 headings are ever classified. The resulting [`SectionMap`] is
//! built once and shared by every downstream evaluation stage.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::judge::{schema, JudgeError, JudgeGateway, JudgeRequest};
use crate::latex::{LatexDocument, LatexError};
use crate::parallel::bounded_parallel_map;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum CanonicalCategory {
    Abstract,
    Introduction,
    RelatedWork,
    Method,
    BenchmarkConstruction,
    Experiment,
    /// Classified but excluded from rubric scoring and claim extraction.
    Conclusion,
}

impl CanonicalCategory {
    pub const ALL: [CanonicalCategory; 7] = [
        CanonicalCategory::Abstract,
        CanonicalCategory::Introduction,
        CanonicalCategory::RelatedWork,
        CanonicalCategory::Method,
        CanonicalCategory::BenchmarkConstruction,
        CanonicalCategory::Experiment,
        CanonicalCategory::Conclusion,
    ];

    /// The six categories that participate in rubric scoring and claim
    /// extraction, in report column order.
    pub const SCORED: [CanonicalCategory; 6] = [
        CanonicalCategory::Abstract,
        CanonicalCategory::Introduction,
        CanonicalCategory::RelatedWork,
        CanonicalCategory::Method,
        CanonicalCategory::BenchmarkConstruction,
        CanonicalCategory::Experiment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CanonicalCategory::Abstract => "Abstract",
            CanonicalCategory::Introduction => "Introduction",
            CanonicalCategory::RelatedWork => "Related Work",
            CanonicalCategory::Method => "Method",
            CanonicalCategory::BenchmarkConstruction => "Benchmark Construction",
            CanonicalCategory::Experiment => "Experiment",
            CanonicalCategory::Conclusion => "Conclusion",
        }
    }

    /// Abbreviated column label used in leaderboard tables.
    pub fn short_label(&self) -> &'static str {
        match self {
            CanonicalCategory::Abstract => "Abs.",
            CanonicalCategory::Introduction => "Intro.",
            CanonicalCategory::RelatedWork => "Rel.",
            CanonicalCategory::Method => "Meth.",
            CanonicalCategory::BenchmarkConstruction => "Bench.",
            CanonicalCategory::Experiment => "Exp.",
            CanonicalCategory::Conclusion => "Concl.",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn is_scored(&self) -> bool {
        *self != CanonicalCategory::Conclusion
    }
}

impl fmt::Display for CanonicalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered keyword rule table. First match in table order wins.
#[derive(Debug, Clone)]
pub struct RuleTable {
    rules: Vec<(String, CanonicalCategory)>,
}

const DEFAULT_RULES: &str = include_str!("../data/section_rules.tsv");

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::parse(DEFAULT_RULES).expect("embedded rule table is valid")
    }
}

impl RuleTable {
    /// Parses `keyword<TAB>Category` lines. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut rules = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((keyword, category)) = line.split_once('\t') else {
                return Err(format!("rule line {} has no tab separator", lineno + 1));
            };
            let category = CanonicalCategory::from_name(category.trim())
                .ok_or_else(|| format!("unknown category on rule line {}", lineno + 1))?;
            rules.push((keyword.trim().to_lowercase(), category));
        }
        Ok(RuleTable { rules })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[(String, CanonicalCategory)] {
        &self.rules
    }

    /// Keyword-based classification over a lowercased, punctuation-stripped
    /// heading. Returns `None` when no rule keyword is a substring.
    pub fn classify(&self, heading: &str) -> Option<CanonicalCategory> {
        let normalized = normalize_heading(heading);
        self.rules
            .iter()
            .find(|(keyword, _)| normalized.contains(keyword.as_str()))
            .map(|(_, category)| *category)
    }
}

/// Lowercases and strips punctuation, keeping word boundaries.
pub fn normalize_heading(heading: &str) -> String {
    let lowered: String = heading
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn classify_by_rules(table: &RuleTable, heading: &str) -> Option<CanonicalCategory> {
    table.classify(heading)
}

/// One canonical category's merged content for one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedCategory {
    /// Member section bodies concatenated in document order.
    pub text: String,
    pub headings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnclassifiedSection {
    pub heading: String,
    pub offset: usize,
}

/// Category verdict for one depth-1 section, kept for asset attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionAssignment {
    pub heading: String,
    /// Contiguous byte span: section start to the next depth-1 start.
    pub start: usize,
    pub end: usize,
    pub category: Option<CanonicalCategory>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSections {
    pub categories: BTreeMap<CanonicalCategory, MergedCategory>,
    pub unclassified: Vec<UnclassifiedSection>,
    pub assignments: Vec<SectionAssignment>,
}

impl DocumentSections {
    pub fn text_for(&self, category: CanonicalCategory) -> Option<&str> {
        self.categories.get(&category).map(|m| m.text.as_str())
    }

    /// Category of the section whose span contains `offset`; `None` in front
    /// matter or inside an unclassified section.
    pub fn category_at(&self, offset: usize) -> Option<CanonicalCategory> {
        self.assignments
            .iter()
            .take_while(|a| a.start <= offset)
            .last()
            .and_then(|a| a.category)
    }
}

/// The single classification artifact shared by every downstream stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionMap {
    pub gt: DocumentSections,
    pub pred: DocumentSections,
}

/// Characters of body text shown to the judge for fallback classification.
const JUDGE_BODY_CHARS: usize = 1500;

/// Judge fallback for a heading no rule matched. The judge must answer with
/// exactly one category token; malformed answers are retried by the gateway
/// and the section stays unclassified once the budget is exhausted.
pub fn classify_with_judge(
    heading: &str,
    body: &str,
    judge: &JudgeGateway,
) -> Result<CanonicalCategory, JudgeError> {
    let snippet: String = body.chars().take(JUDGE_BODY_CHARS).collect();
    let request = JudgeRequest {
        task_tag: "classify_section".to_string(),
        system_prompt: crate::judge::prompts::render("classify_section_system", &[]),
        user_prompt: crate::judge::prompts::render(
            "classify_section_user",
            &[("{section_name}", heading), ("{section_content}", &snippet)],
        ),
        response_schema: schema::CLASSIFY_SECTION.to_string(),
    };
    let response = judge.submit(&request)?;
    let token = response.parsed["category"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    CanonicalCategory::from_name(&token).ok_or_else(|| {
        JudgeError::Malformed(format!("judge returned unknown category '{token}'"))
    })
}

/// Builds the shared section map: rules first, judge fallback second, merging
/// per category in document order.
pub fn build_section_map(
    gt: &LatexDocument,
    pred: &LatexDocument,
    rules: &RuleTable,
    judge: &JudgeGateway,
    parallelism: usize,
    diagnostics: &mut Diagnostics,
) -> Result<SectionMap, LatexError> {
    let gt_sections = classify_document(gt, rules, judge, parallelism, "gt", diagnostics);
    let pred_sections = classify_document(pred, rules, judge, parallelism, "pred", diagnostics);
    Ok(SectionMap {
        gt: gt_sections,
        pred: pred_sections,
    })
}

/// Classifies one document's depth-1 sections into categories; exposed for
/// callers that need a GT-only map (rubric generation).
pub fn classify_document(
    doc: &LatexDocument,
    rules: &RuleTable,
    judge: &JudgeGateway,
    parallelism: usize,
    side: &str,
    diagnostics: &mut Diagnostics,
) -> DocumentSections {
    // depth-1 sections with their extents (subsections inherit the parent)
    let tops: Vec<(usize, &crate::latex::RawSection)> = doc
        .sections
        .iter()
        .enumerate()
        .filter(|(_, s)| s.depth == 1)
        .collect();

    let mut assigned: Vec<Option<CanonicalCategory>> = tops
        .iter()
        .map(|(_, s)| rules.classify(&s.heading))
        .collect();

    // judge fallback, bounded-parallel over the unresolved headings
    let pending: Vec<(usize, String, String)> = tops
        .iter()
        .enumerate()
        .filter(|(i, _)| assigned[*i].is_none())
        .map(|(i, (idx, s))| {
            let extent = doc.top_section_extent(*idx).unwrap_or(0..0);
            (i, s.heading.clone(), doc.raw_text[extent].to_string())
        })
        .collect();

    let verdicts = bounded_parallel_map(pending, parallelism, |_, (i, heading, body)| {
        (i, classify_with_judge(&heading, &body, judge))
    });
    for (i, verdict) in verdicts {
        match verdict {
            Ok(category) => assigned[i] = Some(category),
            Err(err) => diagnostics.push(Diagnostic::new(
                "section_map",
                DiagnosticKind::UnclassifiedSection,
                format!(
                    "{side} section '{}' left unclassified: {err}",
                    tops[i].1.heading
                ),
            )),
        }
    }

    let mut categories: BTreeMap<CanonicalCategory, MergedCategory> = BTreeMap::new();
    let mut unclassified = Vec::new();
    let mut assignments = Vec::new();
    for (i, (idx, section)) in tops.iter().enumerate() {
        let span_end = tops
            .get(i + 1)
            .map(|(_, next)| next.byte_range.0)
            .unwrap_or(doc.raw_text.len());
        assignments.push(SectionAssignment {
            heading: section.heading.clone(),
            start: section.byte_range.0,
            end: span_end,
            category: assigned[i],
        });
        match assigned[i] {
            Some(category) => {
                let extent = doc.top_section_extent(*idx).unwrap_or(0..0);
                let merged = categories.entry(category).or_insert_with(|| MergedCategory {
                    text: String::new(),
                    headings: Vec::new(),
                });
                if !merged.text.is_empty() {
                    merged.text.push_str("\n\n");
                }
                merged.text.push_str(doc.raw_text[extent].trim());
                merged.headings.push(section.heading.clone());
            }
            None => unclassified.push(UnclassifiedSection {
                heading: section.heading.clone(),
                offset: section.byte_range.0,
            }),
        }
    }

    DocumentSections {
        categories,
        unclassified,
        assignments,
    }
}
