//! Figure and table alignment between GT and generated papers, and their
//! 1-5 scores, which enter the rubric as additional elements.
//!
//! Figure identity is the asset path: both papers draw on the bundle's shared
//! figures/ directory, so the path is a deterministic primary key. Table
//! matching is hierarchical — exact label, then caption similarity, then a
//! single batched judge pass — and earlier passes always win.

use serde::{Deserialize, Serialize};

use crate::align::{CanonicalCategory, SectionMap};
use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::judge::{schema, JudgeError, JudgeGateway, JudgeRequest};
use crate::latex::{LatexDocument, TableBlock};
use crate::parallel::bounded_parallel_map;
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureBasis {
    SameSection,
    JudgeContext,
    Unreferenced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureScore {
    /// Primary key into the bundle's shared figures/ namespace.
    pub asset_path: String,
    pub gt_caption: Option<String>,
    pub gt_section: Option<CanonicalCategory>,
    pub pred_section: Option<CanonicalCategory>,
    pub score: i64,
    pub basis: FigureBasis,
    pub reasoning: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Label,
    Caption,
    Judge,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMatch {
    pub gt_index: usize,
    pub gt_label: Option<String>,
    pub gt_caption: Option<String>,
    pub gt_section: Option<CanonicalCategory>,
    pub pred_index: Option<usize>,
    pub method: MatchMethod,
    pub score: i64,
    pub reasoning: String,
}

/// Pred tables matched to nothing; reported for inspection, never scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraTable {
    pub pred_index: usize,
    pub label: Option<String>,
    pub caption: Option<String>,
}

/// Scores every GT figure: same-section reference earns the full context
/// score of 5, a reference elsewhere is judged 1-5, and an unreferenced
/// figure scores 1. Total over GT figures regardless of pred content.
pub fn score_figures(
    gt: &LatexDocument,
    pred: &LatexDocument,
    map: &SectionMap,
    judge: &JudgeGateway,
    parallelism: usize,
    diagnostics: &mut Diagnostics,
) -> Vec<FigureScore> {
    struct Pending {
        asset_path: String,
        gt_caption: Option<String>,
        gt_section: Option<CanonicalCategory>,
        pred_section: Option<CanonicalCategory>,
        pred_caption: Option<String>,
        pred_context: String,
    }

    let mut results: Vec<Option<FigureScore>> = Vec::new();
    let mut pending: Vec<(usize, Pending)> = Vec::new();
    let mut seen_assets: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();

    // pred figures whose paths intersect no GT figure must have been renamed;
    // they stay available for the caption fallback
    let renamed_pred: Vec<&crate::latex::FigureBlock> = pred
        .figures
        .iter()
        .filter(|p| {
            !gt.figures
                .iter()
                .any(|g| g.asset_paths.iter().any(|a| p.asset_paths.contains(a)))
        })
        .collect();

    for figure in &gt.figures {
        let asset_path = figure
            .asset_paths
            .first()
            .cloned()
            .unwrap_or_else(|| format!("figure@{}", figure.byte_range.0));
        // an asset referenced by two GT figures is attributed to the first
        if !seen_assets.insert(asset_path.clone()) {
            continue;
        }
        let gt_section = map.gt.category_at(figure.byte_range.0);

        let path_match = pred.figures.iter().find(|candidate| {
            candidate
                .asset_paths
                .iter()
                .any(|p| figure.asset_paths.contains(p))
        });
        // caption fallback only when the path identity fails (renamed assets)
        let pred_figure = path_match.or_else(|| {
            let gt_caption = figure.caption.as_deref()?;
            renamed_pred
                .iter()
                .filter_map(|p| {
                    let pred_caption = p.caption.as_deref()?;
                    let similarity = caption_jaccard(gt_caption, pred_caption);
                    (similarity >= Rational::new(1, 2)).then_some((similarity, *p))
                })
                .max_by(|a, b| a.0.cmp(&b.0))
                .map(|(_, p)| p)
        });

        match pred_figure {
            None => results.push(Some(FigureScore {
                asset_path,
                gt_caption: figure.caption.clone(),
                gt_section,
                pred_section: None,
                score: 1,
                basis: FigureBasis::Unreferenced,
                reasoning: "figure is not referenced by the generated paper".to_string(),
            })),
            Some(p) => {
                let pred_section = map.pred.category_at(p.byte_range.0);
                if pred_section == gt_section {
                    results.push(Some(FigureScore {
                        asset_path,
                        gt_caption: figure.caption.clone(),
                        gt_section,
                        pred_section,
                        score: 5,
                        basis: FigureBasis::SameSection,
                        reasoning: "referenced in the same section by both papers".to_string(),
                    }));
                } else {
                    let raw_start = p.byte_range.0.saturating_sub(400);
                    let boundary = (raw_start..=p.byte_range.0)
                        .find(|&i| pred.raw_text.is_char_boundary(i))
                        .unwrap_or(p.byte_range.0);
                    pending.push((
                        results.len(),
                        Pending {
                            asset_path,
                            gt_caption: figure.caption.clone(),
                            gt_section,
                            pred_section,
                            pred_caption: p.caption.clone(),
                            pred_context: pred.raw_text[boundary..p.byte_range.0].to_string(),
                        },
                    ));
                    results.push(None);
                }
            }
        }
    }

    let judged = bounded_parallel_map(pending, parallelism, |_, (slot, item)| {
        let request = JudgeRequest {
            task_tag: "figure_context".to_string(),
            system_prompt: crate::judge::prompts::render("figure_context_system", &[]),
            user_prompt: crate::judge::prompts::render(
                "figure_context_user",
                &[
                    ("{asset_path}", item.asset_path.as_str()),
                    ("{gt_caption}", item.gt_caption.as_deref().unwrap_or("(none)")),
                    (
                        "{gt_section}",
                        item.gt_section.map(|c| c.name()).unwrap_or("(front matter)"),
                    ),
                    (
                        "{pred_section}",
                        item.pred_section
                            .map(|c| c.name())
                            .unwrap_or("(front matter)"),
                    ),
                    (
                        "{pred_caption}",
                        item.pred_caption.as_deref().unwrap_or("(none)"),
                    ),
                    ("{pred_context}", item.pred_context.as_str()),
                ],
            ),
            response_schema: schema::FIGURE_CONTEXT.to_string(),
        };
        let verdict = judge.submit(&request);
        (slot, item, verdict)
    });

    for (slot, item, verdict) in judged {
        let (score, reasoning) = match verdict {
            Ok(response) => (
                response.parsed["score"].as_i64().unwrap_or(1),
                response.parsed["reasoning"]
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
            ),
            Err(err) => {
                diagnostics.push(Diagnostic::new(
                    "assets",
                    DiagnosticKind::JudgeDegraded,
                    format!(
                        "figure '{}' context scoring degraded to 1: {err}",
                        item.asset_path
                    ),
                ));
                (1, "judge unavailable; conservative context score".to_string())
            }
        };
        results[slot] = Some(FigureScore {
            asset_path: item.asset_path,
            gt_caption: item.gt_caption,
            gt_section: item.gt_section,
            pred_section: item.pred_section,
            score,
            basis: FigureBasis::JudgeContext,
            reasoning,
        });
    }

    results.into_iter().map(|r| r.expect("slot filled")).collect()
}

/// Normalized tokens for caption similarity: lowercase, punctuation stripped
/// inside tokens ("CIFAR-10" becomes "cifar10").
fn caption_tokens(caption: &str) -> std::collections::BTreeSet<String> {
    caption
        .split_whitespace()
        .map(|word| {
            word.chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Exact token-set Jaccard similarity.
pub fn caption_jaccard(a: &str, b: &str) -> Rational {
    let ta = caption_tokens(a);
    let tb = caption_tokens(b);
    if ta.is_empty() && tb.is_empty() {
        return Rational::ZERO;
    }
    let intersection = ta.intersection(&tb).count() as i64;
    let union = ta.union(&tb).count() as i64;
    Rational::new(intersection, union)
}

/// Hierarchical table matching. Every GT table yields exactly one record;
/// matching is injective over pred tables.
pub fn match_tables(
    gt_tables: &[TableBlock],
    pred_tables: &[TableBlock],
    gt_sections: impl Fn(usize) -> Option<CanonicalCategory>,
    judge: &JudgeGateway,
    parallelism: usize,
    diagnostics: &mut Diagnostics,
) -> (Vec<TableMatch>, Vec<ExtraTable>) {
    let threshold = Rational::new(1, 2);
    let mut pred_taken = vec![false; pred_tables.len()];
    let mut matched: Vec<Option<(usize, MatchMethod)>> = vec![None; gt_tables.len()];

    // pass 1: exact label equality
    for (gi, gt) in gt_tables.iter().enumerate() {
        let Some(label) = &gt.label else { continue };
        let hit = pred_tables
            .iter()
            .enumerate()
            .find(|(pi, p)| !pred_taken[*pi] && p.label.as_ref() == Some(label))
            .map(|(pi, _)| pi);
        if let Some(pi) = hit {
            matched[gi] = Some((pi, MatchMethod::Label));
            pred_taken[pi] = true;
        }
    }

    // pass 2: caption similarity, highest first, each table matched at most once
    let mut candidates: Vec<(Rational, usize, usize)> = Vec::new();
    for (gi, gt) in gt_tables.iter().enumerate() {
        if matched[gi].is_some() {
            continue;
        }
        let Some(gt_caption) = &gt.caption else { continue };
        for (pi, p) in pred_tables.iter().enumerate() {
            if pred_taken[pi] {
                continue;
            }
            let Some(pred_caption) = &p.caption else { continue };
            let similarity = caption_jaccard(gt_caption, pred_caption);
            if similarity >= threshold {
                candidates.push((similarity, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, gi, pi) in candidates {
        if matched[gi].is_none() && !pred_taken[pi] {
            matched[gi] = Some((pi, MatchMethod::Caption));
            pred_taken[pi] = true;
        }
    }

    // pass 3: one batched judge call over the leftovers
    let gt_leftover: Vec<usize> = (0..gt_tables.len()).filter(|&i| matched[i].is_none()).collect();
    let pred_leftover: Vec<usize> = (0..pred_tables.len()).filter(|&i| !pred_taken[i]).collect();
    if !gt_leftover.is_empty() && !pred_leftover.is_empty() {
        match judge_match_pass(gt_tables, pred_tables, &gt_leftover, &pred_leftover, judge) {
            Ok(pairs) => {
                for (gi, pi) in pairs {
                    if matched[gi].is_none() && !pred_taken[pi] {
                        matched[gi] = Some((pi, MatchMethod::Judge));
                        pred_taken[pi] = true;
                    }
                }
            }
            Err(err) => diagnostics.push(Diagnostic::new(
                "assets",
                DiagnosticKind::JudgeDegraded,
                format!("judge table-matching pass skipped: {err}"),
            )),
        }
    }

    // score matched pairs; unmatched GT tables score 1
    let to_score: Vec<(usize, usize, MatchMethod)> = matched
        .iter()
        .enumerate()
        .filter_map(|(gi, m)| m.map(|(pi, method)| (gi, pi, method)))
        .collect();
    let scored = bounded_parallel_map(to_score, parallelism, |_, (gi, pi, method)| {
        let verdict = score_table_pair(&gt_tables[gi], &pred_tables[pi], judge);
        (gi, pi, method, verdict)
    });

    let mut results: Vec<TableMatch> = gt_tables
        .iter()
        .enumerate()
        .map(|(gi, gt)| TableMatch {
            gt_index: gi,
            gt_label: gt.label.clone(),
            gt_caption: gt.caption.clone(),
            gt_section: gt_sections(gi),
            pred_index: None,
            method: MatchMethod::None,
            score: 1,
            reasoning: "table missing from the generated paper".to_string(),
        })
        .collect();

    for (gi, pi, method, verdict) in scored {
        let (score, reasoning) = match verdict {
            Ok((score, reasoning)) => (score, reasoning),
            Err(err) => {
                diagnostics.push(Diagnostic::new(
                    "assets",
                    DiagnosticKind::JudgeDegraded,
                    format!("table pair (gt {gi}, pred {pi}) scoring degraded to 1: {err}"),
                ));
                (1, "judge unavailable for table comparison".to_string())
            }
        };
        results[gi].pred_index = Some(pi);
        results[gi].method = method;
        results[gi].score = score;
        results[gi].reasoning = reasoning;
    }

    let extras: Vec<ExtraTable> = pred_tables
        .iter()
        .enumerate()
        .filter(|(pi, _)| !pred_taken[*pi])
        .map(|(pi, p)| ExtraTable {
            pred_index: pi,
            label: p.label.clone(),
            caption: p.caption.clone(),
        })
        .collect();

    (results, extras)
}

/// Judge comparison of one matched pair on numerical accuracy, structural
/// alignment, and content consistency.
pub fn score_table_pair(
    gt: &TableBlock,
    pred: &TableBlock,
    judge: &JudgeGateway,
) -> Result<(i64, String), JudgeError> {
    let request = JudgeRequest {
        task_tag: "table_score".to_string(),
        system_prompt: crate::judge::prompts::render("table_score_system", &[]),
        user_prompt: crate::judge::prompts::render(
            "table_score_user",
            &[
                ("{gt_table}", gt.body_tex.as_str()),
                ("{pred_table}", pred.body_tex.as_str()),
            ],
        ),
        response_schema: schema::TABLE_SCORE.to_string(),
    };
    let response = judge.submit(&request)?;
    Ok((
        response.parsed["score"].as_i64().unwrap_or(1),
        response.parsed["reasoning"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
    ))
}

fn judge_match_pass(
    gt_tables: &[TableBlock],
    pred_tables: &[TableBlock],
    gt_leftover: &[usize],
    pred_leftover: &[usize],
    judge: &JudgeGateway,
) -> Result<Vec<(usize, usize)>, JudgeError> {
    let describe = |tables: &[TableBlock], indices: &[usize]| -> String {
        indices
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let snippet: String = tables[i].body_tex.chars().take(400).collect();
                format!(
                    "{pos}. caption: {} | body: {snippet}",
                    tables[i].caption.as_deref().unwrap_or("(none)")
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    };

    let request = JudgeRequest {
        task_tag: "table_match".to_string(),
        system_prompt: crate::judge::prompts::render("table_match_system", &[]),
        user_prompt: crate::judge::prompts::render(
            "table_match_user",
            &[
                ("{gt_tables}", describe(gt_tables, gt_leftover).as_str()),
                ("{pred_tables}", describe(pred_tables, pred_leftover).as_str()),
            ],
        ),
        response_schema: schema::TABLE_MATCH.to_string(),
    };
    let response = judge.submit(&request)?;
    let mut pairs = Vec::new();
    if let Some(matches) = response.parsed["matches"].as_array() {
        for m in matches {
            let (Some(g), Some(p)) = (m["gt_index"].as_u64(), m["pred_index"].as_u64()) else {
                continue;
            };
            if let (Some(&gi), Some(&pi)) =
                (gt_leftover.get(g as usize), pred_leftover.get(p as usize))
            {
                pairs.push((gi, pi));
            }
        }
    }
    Ok(pairs)
}
