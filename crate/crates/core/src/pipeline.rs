//! Fixed-order evaluation pipeline: parse, section map, assets, rubric,
//! claims, citations, report.
//!
//! The stage order is serialized into report provenance so downstream
//! comparisons are apples-to-apples. Stage timings are returned to the
//! caller for logging but never serialized into report.json, which must be
//! byte-identical across replayed runs.

use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::align::{build_section_map, CanonicalCategory, RuleTable};
use crate::assets::{match_tables, score_figures};
use crate::citations::score_citations;
use crate::claims::{extract_all_claims, tally, verify_claims, ClaimsFile};
use crate::diag::Diagnostics;
use crate::judge::{JudgeGateway, VerifierGateway};
use crate::latex::{parse_bib, LatexDocument, LatexError};
use crate::parallel::bounded_parallel_map;
use crate::prep::PaperBundle;
use crate::report::{assemble, AvgMode, EvaluationReport, Provenance, ReportError};
use crate::rubric::{
    asset_context_for, fold_section, generate_rubric, group_assets_by_section, score_section,
    Rubric, RubricError,
};

pub const STAGE_ORDER: [&str; 7] = [
    "parse",
    "section_map",
    "assets",
    "rubric",
    "claims",
    "citations",
    "report",
];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Latex(#[from] LatexError),
    #[error("rubric.json is missing from the bundle; pass --generate-rubric or add the file")]
    MissingRubric,
    #[error(transparent)]
    Rubric(#[from] RubricError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct EvaluateOptions {
    pub parallelism: usize,
    pub avg_mode: AvgMode,
    /// Generate (and persist) the rubric when the bundle has none.
    pub generate_rubric: bool,
    pub rules: RuleTable,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            parallelism: 4,
            avg_mode: AvgMode::Pooled,
            generate_rubric: false,
            rules: RuleTable::default(),
        }
    }
}

pub struct EvaluateOutput {
    pub report: EvaluationReport,
    pub claims_file: ClaimsFile,
    /// Wall-clock per stage; reported on stderr / timings.json, never inside
    /// report.json.
    pub stage_timings: Vec<(String, Duration)>,
}

/// Full evaluation of one generated paper against its bundle.
pub fn evaluate(
    bundle: &PaperBundle,
    pred_tex: &Path,
    judge: &JudgeGateway,
    verifier: &VerifierGateway,
    options: &EvaluateOptions,
) -> Result<EvaluateOutput, PipelineError> {
    let mut diagnostics = Diagnostics::new();
    let mut timings: Vec<(String, Duration)> = Vec::new();
    let mut clock = Instant::now();
    let lap = |name: &str, clock: &mut Instant, timings: &mut Vec<(String, Duration)>| {
        timings.push((name.to_string(), clock.elapsed()));
        *clock = Instant::now();
    };

    // parse
    let gt = LatexDocument::load(&bundle.gt_tex())?;
    let pred = LatexDocument::load(pred_tex)?;
    diagnostics.extend(gt.diagnostics.clone());
    diagnostics.extend(pred.diagnostics.clone());
    lap("parse", &mut clock, &mut timings);

    // section map, built once and shared by every later stage
    let map = build_section_map(
        &gt,
        &pred,
        &options.rules,
        judge,
        options.parallelism,
        &mut diagnostics,
    )?;
    lap("section_map", &mut clock, &mut timings);

    // assets
    let figure_scores = score_figures(
        &gt,
        &pred,
        &map,
        judge,
        options.parallelism,
        &mut diagnostics,
    );
    let gt_table_sections: Vec<Option<CanonicalCategory>> = gt
        .tables
        .iter()
        .map(|t| map.gt.category_at(t.byte_range.0))
        .collect();
    let (table_matches, extra_tables) = match_tables(
        &gt.tables,
        &pred.tables,
        |gi| gt_table_sections.get(gi).copied().flatten(),
        judge,
        options.parallelism,
        &mut diagnostics,
    );
    lap("assets", &mut clock, &mut timings);

    // rubric: load the reviewed file, or generate and persist it
    let paper_id = bundle
        .root()
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "paper".to_string());
    let rubric: Rubric = if bundle.rubric_json().is_file() {
        Rubric::load(&bundle.rubric_json())?
    } else if options.generate_rubric {
        let generated = generate_rubric(
            &paper_id,
            &map,
            judge,
            options.parallelism,
            &mut diagnostics,
        );
        generated.save(&bundle.rubric_json())?;
        generated
    } else {
        return Err(PipelineError::MissingRubric);
    };
    rubric.check_bounds(&mut diagnostics);

    let assets_by_section = group_assets_by_section(&figure_scores, &table_matches);
    let mut scorable: Vec<CanonicalCategory> = rubric.populated_sections();
    for section in assets_by_section.keys() {
        if section.is_scored() && !scorable.contains(section) {
            scorable.push(*section);
        }
    }
    scorable.sort();

    let section_inputs: Vec<CanonicalCategory> = scorable.clone();
    let scored = bounded_parallel_map(section_inputs, options.parallelism, |_, section| {
        let elements = rubric.elements_for(section);
        let pred_text = map.pred.text_for(section);
        let context = asset_context_for(section, &figure_scores, &table_matches);
        let mut local = Diagnostics::new();
        let text_scores = score_section(&elements, pred_text, &context, judge, &mut local);
        (section, text_scores, local)
    });

    let mut sections = Vec::new();
    for (section, text_scores, local) in scored {
        diagnostics.extend(local);
        let (figures, tables) = assets_by_section
            .get(&section)
            .cloned()
            .unwrap_or_default();
        match fold_section(section, text_scores, figures, tables) {
            Ok(folded) => sections.push(folded),
            Err(RubricError::NoElements(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    lap("rubric", &mut clock, &mut timings);

    // claims: stage 1 per generated section, stage 2 one verifier pass
    let claim_inputs: Vec<(CanonicalCategory, String)> = CanonicalCategory::SCORED
        .iter()
        .filter_map(|&section| {
            map.pred
                .text_for(section)
                .filter(|t| !t.trim().is_empty())
                .map(|t| (section, t.to_string()))
        })
        .collect();
    let stage1 = extract_all_claims(
        claim_inputs,
        gt.full_text(),
        judge,
        options.parallelism,
        &mut diagnostics,
    );
    let (verified, unverified) =
        verify_claims(&stage1, bundle.root(), verifier, &mut diagnostics);
    let hallucination = tally(verified, unverified);
    let claims_file = ClaimsFile::new(stage1, &hallucination);
    lap("claims", &mut clock, &mut timings);

    // citations
    let bib_text = std::fs::read_to_string(bundle.references_bib())?;
    let bib = parse_bib(&bib_text);
    diagnostics.extend(bib.diagnostics.clone());
    let citation = score_citations(&gt, &pred, &bib, &mut diagnostics);
    lap("citations", &mut clock, &mut timings);

    // report
    let cassette_hash = match judge.cassette().path() {
        Some(path) if path.exists() => hash_tree_file(path)?,
        _ => "none".to_string(),
    };
    let provenance = Provenance {
        judge_backend_id: judge.backend_id().to_string(),
        verifier_backend_id: verifier.backend_id().to_string(),
        cassette_hash,
        prompt_versions: crate::judge::prompts::versions(),
        engine_version: crate::ENGINE_VERSION.to_string(),
        stage_order: STAGE_ORDER.iter().map(|s| s.to_string()).collect(),
    };

    let report = assemble(
        &paper_id,
        sections,
        options.avg_mode,
        hallucination,
        citation,
        extra_tables,
        map.gt.unclassified.clone(),
        map.pred.unclassified.clone(),
        diagnostics.into_items(),
        provenance,
    )?;
    lap("report", &mut clock, &mut timings);

    Ok(EvaluateOutput {
        report,
        claims_file,
        stage_timings: timings,
    })
}

fn hash_tree_file(path: &Path) -> std::io::Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
