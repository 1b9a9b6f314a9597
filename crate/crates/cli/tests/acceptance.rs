//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Every tolerance and threshold is pinned here in code.
//!
//! Run with: cargo test -p papereval-cli --test acceptance -- --nocapture

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use papereval_core::align::CanonicalCategory;
use papereval_core::assets::{caption_jaccard, match_tables, score_figures, FigureBasis, MatchMethod};
use papereval_core::citations::CitationReport;
use papereval_core::claims::{tally, verify_claims, Claim, ClaimClass, ClaimStage, Severity};
use papereval_core::harness::run_writeup;
use papereval_core::judge::{CassetteMode, JudgeGateway, VerifierGateway};
use papereval_core::latex::LatexDocument;
use papereval_core::pipeline::{evaluate, EvaluateOptions};
use papereval_core::rational::Rational;
use papereval_core::report::{AvgMode, EvaluationReport, Provenance, REPORT_SCHEMA};
use papereval_core::rubric::SectionScore;
use papereval_core::testkit::{
    agent_tex, broken_agent_tex, fixture_bundle, fixture_gt_tex, install_fake_compiler,
    install_fake_lint, large_fixture_bundle, EchoJudge, ScriptedBackend, ScriptedVerifier,
    ScriptedWriterAgent, ShrinkingWriterAgent,
};
use papereval_core::Diagnostics;

struct Criterion {
    number: u32,
    summary: &'static str,
}

impl Criterion {
    fn new(number: u32, summary: &'static str) -> Self {
        Criterion { number, summary }
    }

    fn pass(&self) {
        println!("[PASS] criterion {}: {}", self.number, self.summary);
    }

    fn fail(&self, detail: &str) -> ! {
        println!("[FAIL] criterion {}: {} ({detail})", self.number, self.summary);
        panic!("criterion {} failed: {detail}", self.number);
    }
}

fn papereval() -> Command {
    Command::new(env!("CARGO_BIN_EXE_papereval"))
}

fn echo_gateway() -> JudgeGateway {
    JudgeGateway::new(Box::new(EchoJudge::new()), CassetteMode::Passthrough, None, 4, 3).unwrap()
}

fn set(keys: &[&str]) -> BTreeSet<String> {
    keys.iter().map(|k| k.to_string()).collect()
}

/// Nested-loop oracle, independent of the set-operation implementation.
fn citation_oracle(
    gt: &BTreeSet<String>,
    pred: &BTreeSet<String>,
    bib: &BTreeSet<String>,
) -> CitationReport {
    let mut valid = BTreeSet::new();
    let mut hallucinated = BTreeSet::new();
    let mut extra = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for p in pred {
        let mut in_gt = false;
        for g in gt {
            if g == p {
                in_gt = true;
            }
        }
        let mut in_bib = false;
        for b in bib {
            if b == p {
                in_bib = true;
            }
        }
        if in_gt {
            valid.insert(p.clone());
        }
        if !in_bib {
            hallucinated.insert(p.clone());
        }
        if in_bib && !in_gt {
            extra.insert(p.clone());
        }
    }
    for g in gt {
        let mut in_pred = false;
        for p in pred {
            if p == g {
                in_pred = true;
            }
        }
        if !in_pred {
            missing.insert(g.clone());
        }
    }
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
    let f1 = if (precision + recall).is_zero() {
        Rational::ZERO
    } else {
        Rational::from_int(2) * precision * recall / (precision + recall)
    };
    CitationReport {
        gt_keys: gt.clone(),
        pred_keys: pred.clone(),
        bib_keys: bib.clone(),
        valid,
        hallucinated,
        missing,
        extra,
        precision,
        recall,
        f1,
    }
}

#[test]
fn criterion_01_citation_metric_oracle_equivalence() {
    let criterion = Criterion::new(1, "citation metrics equal the nested-loop oracle on 200 random instances");
    let started = Instant::now();

    // worked example
    let worked = CitationReport::from_sets(
        set(&["a", "b", "c", "d"]),
        set(&["a", "b", "x"]),
        set(&["a", "b", "c", "d"]),
    );
    if worked.precision != Rational::new(2, 3)
        || worked.recall != Rational::new(1, 2)
        || worked.f1 != Rational::new(4, 7)
        || worked.hallucinated.len() != 1
        || worked.missing.len() != 2
        || !worked.extra.is_empty()
    {
        criterion.fail("worked example mismatch");
    }

    // 200 randomized instances over a 20-key alphabet, uniform membership
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let alphabet: Vec<String> = (0..20).map(|i| format!("k{i:02}")).collect();
    for round in 0..200 {
        let mut gt = BTreeSet::new();
        let mut pred = BTreeSet::new();
        let mut bib = BTreeSet::new();
        for key in &alphabet {
            let roll = next();
            if roll & 1 != 0 {
                gt.insert(key.clone());
            }
            if roll & 2 != 0 {
                pred.insert(key.clone());
            }
            if roll & 4 != 0 {
                bib.insert(key.clone());
            }
        }
        let actual = CitationReport::from_sets(gt.clone(), pred.clone(), bib.clone());
        let expected = citation_oracle(&gt, &pred, &bib);
        if actual != expected {
            criterion.fail(&format!("instance {round} diverges from oracle"));
        }
    }

    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(1) {
        criterion.fail(&format!("runtime {elapsed:?} exceeds 1 s"));
    }
    criterion.pass();
}

#[test]
fn criterion_02_identity_self_evaluation() {
    let criterion = Criterion::new(2, "identity run scores avg 5.00, headline 0, P=R=F1=1.0 in under 5 s");
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let cassette = dir.path().join("identity.jsonl");
    let judge = JudgeGateway::new(
        Box::new(EchoJudge::new()),
        CassetteMode::Record,
        Some(&cassette),
        4,
        3,
    )
    .unwrap();
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    let started = Instant::now();
    let output = evaluate(
        &bundle,
        &bundle.gt_tex(),
        &judge,
        &verifier,
        &EvaluateOptions::default(),
    )
    .unwrap();
    let elapsed = started.elapsed();

    let report = output.report;
    if report.avg_rubric != Rational::from_int(5) {
        criterion.fail(&format!("avg_rubric = {}", report.avg_rubric));
    }
    if report.hallucination.headline != 0 {
        criterion.fail(&format!("headline = {}", report.hallucination.headline));
    }
    if report.citation.precision != Rational::ONE
        || report.citation.recall != Rational::ONE
        || report.citation.f1 != Rational::ONE
    {
        criterion.fail("citation metrics not all 1.0");
    }
    let figures: Vec<_> = report.sections.iter().flat_map(|s| &s.figure_scores).collect();
    if figures.is_empty() || !figures.iter().all(|f| f.basis == FigureBasis::SameSection) {
        criterion.fail("figure bases are not all SameSection");
    }
    let tables: Vec<_> = report.sections.iter().flat_map(|s| &s.table_scores).collect();
    if tables.is_empty()
        || !tables
            .iter()
            .all(|t| t.method == MatchMethod::Label && t.score == 5)
    {
        criterion.fail("table methods are not all Label at score 5");
    }
    if elapsed >= Duration::from_secs(5) {
        criterion.fail(&format!("runtime {elapsed:?} exceeds 5 s"));
    }
    criterion.pass();
}

#[test]
fn criterion_03_replay_determinism() {
    let criterion = Criterion::new(3, "two cmd_evaluate replay runs produce byte-identical report.json and claims.json");
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let cassette = dir.path().join("cas.jsonl");

    // record with the scripted judge through the same pipeline the CLI runs
    {
        let judge = JudgeGateway::new(
            Box::new(EchoJudge::new()),
            CassetteMode::Record,
            Some(&cassette),
            4,
            3,
        )
        .unwrap();
        let verifier = VerifierGateway::unavailable();
        evaluate(
            &bundle,
            &bundle.gt_tex(),
            &judge,
            &verifier,
            &EvaluateOptions::default(),
        )
        .unwrap();
    }

    let run = |out: &Path| {
        let status = papereval()
            .args(["evaluate", "--bundle"])
            .arg(bundle.root())
            .arg("--pred")
            .arg(bundle.gt_tex())
            .args(["--cassette-mode", "replay", "--cassette"])
            .arg(&cassette)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0), "replay run failed");
    };
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    run(&out1);
    run(&out2);

    let report1 = std::fs::read(out1.join("report.json")).unwrap();
    let report2 = std::fs::read(out2.join("report.json")).unwrap();
    if report1 != report2 {
        criterion.fail("report.json differs between runs");
    }
    let claims1 = std::fs::read(out1.join("claims.json")).unwrap();
    let claims2 = std::fs::read(out2.join("claims.json")).unwrap();
    if claims1 != claims2 {
        criterion.fail("claims.json differs between runs");
    }
    criterion.pass();
}

#[test]
fn criterion_04_missing_section_dominance() {
    let criterion = Criterion::new(4, "deleting the Experiment section drops its elements to 1 and shifts the pooled mean exactly");
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let judge = echo_gateway();
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    let gt_text = std::fs::read_to_string(bundle.gt_tex()).unwrap();
    let start = gt_text.find("\\section{Experiments}").unwrap();
    let end = gt_text.find("\\section{Conclusion}").unwrap();
    let pred_path = dir.path().join("pred.tex");
    std::fs::write(&pred_path, format!("{}{}", &gt_text[..start], &gt_text[end..])).unwrap();

    let report = evaluate(&bundle, &pred_path, &judge, &verifier, &EvaluateOptions::default())
        .unwrap()
        .report;

    let experiment = report
        .section(CanonicalCategory::Experiment)
        .unwrap_or_else(|| criterion.fail("Experiment section missing from report"));
    if experiment.text_scores.len() != 5 || !experiment.text_scores.iter().all(|s| s.score == 1) {
        criterion.fail("Experiment rubric elements are not all exactly 1");
    }
    if experiment.table_scores.len() != 2
        || !experiment.table_scores.iter().all(|t| t.score == 1)
    {
        criterion.fail("GT-anchored Experiment tables do not score 1");
    }
    // hand computation on the fixture's known element counts:
    // 25 text at 5 + 5 text at 1 + 2 figures at 5 + 2 tables at 1 over 34
    let expected = Rational::new(25 * 5 + 5 + 2 * 5 + 2, 34);
    if report.avg_rubric != expected {
        criterion.fail(&format!(
            "avg_rubric {} != hand-computed {expected}",
            report.avg_rubric
        ));
    }
    criterion.pass();
}

#[test]
fn criterion_05_asset_rule_conformance() {
    let criterion = Criterion::new(5, "figure matrix yields (5, judge-value, 1) and table hierarchy Label > Caption > Judge > 1");
    // three-figure matrix: same-section / other-section / unreferenced
    let gt = LatexDocument::parse(
        "\\section{Method}\
         \\begin{figure}\\includegraphics{fig_a.jpg}\\caption{A}\\end{figure}\
         \\begin{figure}\\includegraphics{fig_b.jpg}\\caption{B}\\end{figure}\
         \\begin{figure}\\includegraphics{fig_c.jpg}\\caption{C}\\end{figure}\
         m\\section{Experiments}e",
    )
    .unwrap();
    let pred = LatexDocument::parse(
        "\\section{Method}\
         \\begin{figure}\\includegraphics{fig_a.jpg}\\caption{A}\\end{figure}\
         m\\section{Experiments}\
         \\begin{figure}\\includegraphics{fig_b.jpg}\\caption{B}\\end{figure}e",
    )
    .unwrap();
    let judge = JudgeGateway::new(
        Box::new(EchoJudge::new().with_figure_context_score(3)),
        CassetteMode::Passthrough,
        None,
        2,
        3,
    )
    .unwrap();
    let mut diags = Diagnostics::new();
    let map = papereval_core::align::build_section_map(
        &gt,
        &pred,
        &papereval_core::align::RuleTable::default(),
        &judge,
        2,
        &mut diags,
    )
    .unwrap();
    let scores = score_figures(&gt, &pred, &map, &judge, 2, &mut diags);
    let expected = [
        (5, FigureBasis::SameSection),
        (3, FigureBasis::JudgeContext),
        (1, FigureBasis::Unreferenced),
    ];
    for (figure, (score, basis)) in scores.iter().zip(expected) {
        if figure.score != score || figure.basis != basis {
            criterion.fail(&format!(
                "figure {} got ({}, {:?}), expected ({score}, {basis:?})",
                figure.asset_path, figure.score, figure.basis
            ));
        }
    }

    // table hierarchy: Label beats Caption beats Judge; unmatched scores 1
    let table = |label: Option<&str>, caption: Option<&str>, body: &str| {
        papereval_core::latex::TableBlock {
            label: label.map(str::to_string),
            caption: caption.map(str::to_string),
            environment: "table".to_string(),
            body_tex: body.to_string(),
            byte_range: (0, body.len()),
        }
    };
    let gt_tables = vec![
        table(Some("tab:label"), Some("shared caption words here"), "L"),
        table(None, Some("matching caption tokens exactly"), "C"),
        table(None, None, "judge body"),
        table(None, Some("nothing matches this"), "N"),
    ];
    let pred_tables = vec![
        // label match wins even though this caption also matches gt[1]
        table(Some("tab:label"), Some("matching caption tokens exactly"), "L"),
        table(None, Some("matching caption tokens exactly"), "C"),
        table(None, None, "judge body"),
    ];
    let backend = ScriptedBackend::new(vec![
        r#"{"matches": [{"gt_index": 0, "pred_index": 0}]}"#.to_string(),
        r#"{"score": 5, "reasoning": "l"}"#.to_string(),
        r#"{"score": 5, "reasoning": "c"}"#.to_string(),
        r#"{"score": 4, "reasoning": "j"}"#.to_string(),
    ]);
    let judge2 =
        JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 3).unwrap();
    let mut diags2 = Diagnostics::new();
    let (matches, _) = match_tables(&gt_tables, &pred_tables, |_| None, &judge2, 1, &mut diags2);
    let methods: Vec<MatchMethod> = matches.iter().map(|m| m.method).collect();
    if methods
        != [
            MatchMethod::Label,
            MatchMethod::Caption,
            MatchMethod::Judge,
            MatchMethod::None,
        ]
    {
        criterion.fail(&format!("hierarchy got {methods:?}"));
    }
    if matches[3].score != 1 {
        criterion.fail("unmatched GT table does not score 1");
    }
    // the caption threshold itself
    if caption_jaccard("Main results on CIFAR", "Main Results on CIFAR-10") != Rational::new(3, 5)
    {
        criterion.fail("caption Jaccard example mismatch");
    }
    criterion.pass();
}

#[test]
fn criterion_06_hallucination_pipeline_contracts() {
    let criterion = Criterion::new(6, "verifier revises minor->neutral giving (S:2,N:2,major:1,minor:0), one invocation, bundle untouched");
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let hash_before = bundle.content_hash().unwrap();

    let claim = |section, ordinal, class, severity| Claim {
        section,
        ordinal,
        text: format!("claim {ordinal}"),
        classification: class,
        severity,
        evidence: "stage 1".to_string(),
        stage: ClaimStage::Extracted,
    };
    let stage1 = vec![
        claim(CanonicalCategory::Abstract, 0, ClaimClass::Supported, Severity::None),
        claim(CanonicalCategory::Method, 0, ClaimClass::Supported, Severity::None),
        claim(CanonicalCategory::Method, 1, ClaimClass::Neutral, Severity::None),
        claim(CanonicalCategory::Experiment, 0, ClaimClass::Contradictory, Severity::Major),
        claim(CanonicalCategory::Experiment, 1, ClaimClass::Contradictory, Severity::Minor),
    ];

    // scripted verifier: keeps the major, revises the minor to neutral
    let backend = ScriptedVerifier::new(
        r#"{"results": [
            {"classification": "contradictory", "severity": "major", "evidence": "confirmed"},
            {"classification": "neutral", "severity": "none", "evidence": "false positive"}
        ]}"#,
    );
    let calls = backend.calls();
    let verifier = VerifierGateway::new(Box::new(backend));
    let mut diags = Diagnostics::new();
    let (verified, unverified) = verify_claims(&stage1, bundle.root(), &verifier, &mut diags);
    let report = tally(verified, unverified);

    if report.totals.supported != 2
        || report.totals.neutral != 2
        || report.totals.major_contradictory != 1
        || report.totals.minor_contradictory != 0
    {
        criterion.fail(&format!("tally {:?}", report.totals));
    }
    if report.headline != 1 {
        criterion.fail(&format!("headline {}", report.headline));
    }
    if calls.load(std::sync::atomic::Ordering::SeqCst) != 1 {
        criterion.fail("verifier invocation count != 1");
    }

    // zero flagged claims -> zero invocations
    let backend2 = ScriptedVerifier::new(r#"{"results": []}"#);
    let calls2 = backend2.calls();
    let verifier2 = VerifierGateway::new(Box::new(backend2));
    let clean = vec![claim(
        CanonicalCategory::Abstract,
        0,
        ClaimClass::Supported,
        Severity::None,
    )];
    let mut diags2 = Diagnostics::new();
    verify_claims(&clean, bundle.root(), &verifier2, &mut diags2);
    if calls2.load(std::sync::atomic::Ordering::SeqCst) != 0 {
        criterion.fail("verifier invoked with zero flagged claims");
    }

    if bundle.content_hash().unwrap() != hash_before {
        criterion.fail("bundle hash changed during verification");
    }
    criterion.pass();
}

#[test]
fn criterion_07_table_shape_reproduction() {
    let criterion = Criterion::new(7, "leaderboard reproduces the pinned rubric row and the three column families");
    let dir = tempfile::tempdir().unwrap();

    // synthetic report constructed with the pinned section values
    use CanonicalCategory::*;
    let values = [
        (Abstract, Rational::new(400, 100)),
        (Introduction, Rational::new(358, 100)),
        (RelatedWork, Rational::new(232, 100)),
        (Method, Rational::new(289, 100)),
        (BenchmarkConstruction, Rational::new(325, 100)),
        (Experiment, Rational::new(353, 100)),
    ];
    let sections: Vec<SectionScore> = values
        .iter()
        .map(|(section, average)| SectionScore {
            section: *section,
            text_scores: vec![],
            figure_scores: vec![],
            table_scores: vec![],
            average: *average,
        })
        .collect();
    let report = EvaluationReport {
        schema: REPORT_SCHEMA.to_string(),
        paper_id: "synthetic".to_string(),
        sections,
        avg_rubric: Rational::new(326, 100),
        avg_mode: AvgMode::Pooled,
        hallucination: Default::default(),
        citation: CitationReport::from_sets(set(&["a"]), set(&["a"]), set(&["a"])),
        extra_tables: vec![],
        unclassified_gt: vec![],
        unclassified_pred: vec![],
        diagnostics: vec![],
        provenance: Provenance {
            judge_backend_id: "synthetic".to_string(),
            verifier_backend_id: "none".to_string(),
            cassette_hash: "none".to_string(),
            prompt_versions: papereval_core::judge::prompts::versions(),
            engine_version: papereval_core::ENGINE_VERSION.to_string(),
            stage_order: vec!["report".to_string()],
        },
    };
    let report_path = dir.path().join("synthetic.json");
    std::fs::write(&report_path, report.to_json()).unwrap();

    let out = dir.path().join("board");
    let status = papereval()
        .args(["report", "--out"])
        .arg(&out)
        .arg("--row")
        .arg(format!("Codex,GPT5={}", report_path.display()))
        .status()
        .unwrap();
    if status.code() != Some(0) {
        criterion.fail("cmd_report failed");
    }
    let markdown = std::fs::read_to_string(out.join("leaderboard.md")).unwrap();

    if !markdown.contains("| Agent | Model | Abs. | Intro. | Rel. | Meth. | Bench. | Exp. | Avg. |") {
        criterion.fail("rubric column set missing");
    }
    if !markdown.contains("| Agent | Model | Abs. | Intro. | Rel. | Meth. | Bench. | Exp. | Total |")
    {
        criterion.fail("hallucination column set missing");
    }
    if !markdown.contains("| Agent | Model | Prec. | Recall | F1 | Hal. |") {
        criterion.fail("citation column set missing");
    }
    if !markdown.contains("| Codex | GPT5 | 4.00 | 3.58 | 2.32 | 2.89 | 3.25 | 3.53 | 3.26 |") {
        criterion.fail("pinned rubric row not reproduced");
    }
    if !out.join("leaderboard.json").is_file() {
        criterion.fail("leaderboard.json not written");
    }
    criterion.pass();
}

#[test]
fn criterion_08_parser_robustness() {
    let criterion = Criterion::new(8, "extraction invariant under 100 comment/verbatim injections; round-trip slicing holds");
    let base_text = fixture_gt_tex();
    let base = LatexDocument::parse(&base_text).unwrap();
    let fingerprint = |doc: &LatexDocument| {
        (
            doc.sections
                .iter()
                .map(|s| (s.heading.clone(), s.depth))
                .collect::<Vec<_>>(),
            doc.cite_keys.iter().map(|c| c.key.clone()).collect::<Vec<_>>(),
            doc.tables
                .iter()
                .map(|t| (t.label.clone(), t.caption.clone()))
                .collect::<Vec<_>>(),
            doc.figures
                .iter()
                .map(|f| f.asset_paths.clone())
                .collect::<Vec<_>>(),
        )
    };
    let baseline = fingerprint(&base);

    let mut state = 0xDEADBEEFCAFEu64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let lines: Vec<&str> = base_text.lines().collect();
    for round in 0..100 {
        let roll = next();
        let payload = match roll % 3 {
            0 => format!("\\section{{Ghost {round}}}"),
            1 => format!("\\cite{{ghost{round}}}"),
            _ => "\\begin{table}\\caption{Ghost}\\end{table}".to_string(),
        };
        let injected = if roll & 8 == 0 {
            format!("% {payload}\n")
        } else {
            format!("\\begin{{verbatim}}\n{payload}\n\\end{{verbatim}}\n")
        };
        let at = (roll as usize / 16) % (lines.len() + 1);
        let mut mutated = String::new();
        for (i, line) in lines.iter().enumerate() {
            if i == at {
                mutated.push_str(&injected);
            }
            mutated.push_str(line);
            mutated.push('\n');
        }
        if at == lines.len() {
            mutated.push_str(&injected);
        }
        let doc = LatexDocument::parse(&mutated).unwrap();
        if fingerprint(&doc) != baseline {
            criterion.fail(&format!("injection {round} changed extraction output"));
        }

        // round-trip slicing on every mutated fixture
        let mut rebuilt = String::new();
        let mut cursor = 0;
        for section in &doc.sections {
            rebuilt.push_str(&mutated[cursor..section.byte_range.0]);
            rebuilt.push_str(&mutated[section.byte_range.0..section.byte_range.1]);
            cursor = section.byte_range.1;
        }
        rebuilt.push_str(&mutated[cursor..]);
        if rebuilt != mutated {
            criterion.fail(&format!("round-trip slicing broke on injection {round}"));
        }
    }
    criterion.pass();
}

#[test]
fn criterion_09_harness_loop_discipline() {
    let criterion = Criterion::new(9, "scripted agents hit exact iteration counts; page instruction carries the verbatim constraint");
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let compiler = install_fake_compiler(dir.path());
    let lint = install_fake_lint(dir.path());
    let config = |num_page: u32| {
        let mut c = papereval_core::harness::HarnessConfig::new(compiler.clone(), lint.clone());
        c.num_page = num_page;
        c
    };

    // one-turn clean: zero reflection iterations
    let mut clean = ScriptedWriterAgent::new(vec![agent_tex(1)]);
    let outcome = run_writeup(&bundle, &dir.path().join("ws1"), &mut clean, &config(1)).unwrap();
    if outcome.reflection_iterations != 0 || !outcome.compile_success {
        criterion.fail("one-turn clean agent did not finish with zero reflections");
    }

    // two-turn fix: exactly one reflection iteration
    let mut fixer = ScriptedWriterAgent::new(vec![broken_agent_tex(), agent_tex(1)]);
    let outcome = run_writeup(&bundle, &dir.path().join("ws2"), &mut fixer, &config(1)).unwrap();
    if outcome.reflection_iterations != 1 || !outcome.compile_success {
        criterion.fail(&format!(
            "two-turn agent: {} reflections",
            outcome.reflection_iterations
        ));
    }

    // never-fix: budget exhausted at the cap
    let mut stubborn = ScriptedWriterAgent::new(vec![broken_agent_tex()]);
    let outcome = run_writeup(&bundle, &dir.path().join("ws3"), &mut stubborn, &config(1)).unwrap();
    if !outcome.budget_exhausted || outcome.reflection_iterations != 5 {
        criterion.fail("never-fixing agent did not exhaust the reflection cap of 5");
    }

    // page shrink from 9 to 8: the instruction text is pinned
    let mut shrinker = ShrinkingWriterAgent::new(9);
    let outcome = run_writeup(&bundle, &dir.path().join("ws4"), &mut shrinker, &config(8)).unwrap();
    if outcome.page_iterations != 1 || outcome.main_pages != 8 {
        criterion.fail(&format!(
            "9->8 shrink took {} iterations, ended at {} pages",
            outcome.page_iterations, outcome.main_pages
        ));
    }
    let instruction = shrinker
        .instructions
        .iter()
        .find(|i| i.contains("The main text (before 'References')"))
        .unwrap_or_else(|| criterion.fail("page instruction never sent"));
    if !instruction.contains("currently 9 pages") {
        criterion.fail("instruction does not say 'currently 9 pages'");
    }
    if !instruction.contains("Do not add or remove more than 1000 characters") {
        criterion.fail("instruction lacks the 1000-character constraint");
    }

    // exit codes through the binary: clean agent 0, never-fixing agent 5
    let write_script = |name: &str, body: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        use std::os::unix::fs::PermissionsExt;
        let mut perms = std::fs::metadata(&path).unwrap().permissions();
        perms.set_mode(0o755);
        std::fs::set_permissions(&path, perms).unwrap();
        path
    };
    let clean_agent = write_script(
        "clean-agent.sh",
        "#!/bin/sh\ncat > /dev/null\n{ printf '\\\\documentclass{article}\\n\\\\begin{document}\\nContent.\\n'; i=0; while [ $i -lt 30 ]; do echo xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx; i=$((i+1)); done; printf '\\\\bibliography{references}\\n\\\\end{document}\\n'; } > template.tex\n",
    );
    let stubborn_agent = write_script(
        "never-fix-agent.sh",
        "#!/bin/sh\ncat > /dev/null\nprintf '\\\\documentclass{article}\\n\\\\begin{document}\\nCOMPILEERROR\\n\\\\end{document}\\n' > template.tex\n",
    );
    let run_write = |agent: &std::path::Path, ws: &str| {
        papereval()
            .args(["write", "--bundle"])
            .arg(bundle.root())
            .arg("--workspace")
            .arg(dir.path().join(ws))
            .args(["--agent-cmd"])
            .arg(agent)
            .args(["--num-page", "1", "--compiler-cmd"])
            .arg(&compiler.program)
            .args(["--lint-cmd"])
            .arg(&lint.program)
            .status()
            .unwrap()
            .code()
    };
    if run_write(&clean_agent, "ws-exit0") != Some(0) {
        criterion.fail("clean process agent did not exit 0");
    }
    if run_write(&stubborn_agent, "ws-exit5") != Some(5) {
        criterion.fail("never-fixing process agent did not exit 5");
    }
    criterion.pass();
}

#[test]
fn criterion_10_bundle_validation() {
    let criterion = Criterion::new(10, "cmd_prep builds a validating bundle; headings match; summaries biject; augment idempotent; < 5 s");
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("source");
    papereval_core::testkit::write_fixture_source(&source);

    // fixture abstracts for augmentation
    let abstracts = dir.path().join("abstracts.json");
    std::fs::write(
        &abstracts,
        r#"{"doe2024deep": "Scores generated text deeply.", "lee2025bench": "Benchmarks compared."}"#,
    )
    .unwrap();

    let out = dir.path().join("bundle");
    let run_prep = || {
        papereval()
            .args(["prep", "--source"])
            .arg(&source)
            .arg("--abstracts")
            .arg(&abstracts)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
    };
    if run_prep().code() != Some(0) {
        criterion.fail("first prep run failed validation");
    }
    let bundle = papereval_core::prep::PaperBundle::open(&out);
    let hash_first = bundle.content_hash().unwrap();

    // template headings exactly equal GT headings in order
    let gt = LatexDocument::load(&bundle.gt_tex()).unwrap();
    let template = LatexDocument::load(&bundle.template()).unwrap();
    let gt_headings: Vec<(String, u8)> = gt
        .sections
        .iter()
        .map(|s| (s.heading.clone(), s.depth))
        .collect();
    let template_headings: Vec<(String, u8)> = template
        .sections
        .iter()
        .map(|s| (s.heading.clone(), s.depth))
        .collect();
    if gt_headings != template_headings {
        criterion.fail("template headings differ from GT headings");
    }

    // summary lines biject with asset files (validate() checks it, but pin here)
    let validation = bundle.validate();
    if !validation.is_ok() {
        criterion.fail(&format!("validation: {:?}", validation.first_failure()));
    }

    // abstracts actually landed and the bib still parses
    let bib_text = std::fs::read_to_string(bundle.references_bib()).unwrap();
    if !bib_text.contains("abstract = {Scores generated text deeply.}") {
        criterion.fail("abstract augmentation missing from references.bib");
    }

    // double run: idempotent, identical bundle hash
    if run_prep().code() != Some(0) {
        criterion.fail("second prep run failed");
    }
    if bundle.content_hash().unwrap() != hash_first {
        criterion.fail("bundle hash changed across double prep runs");
    }

    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(5) {
        criterion.fail(&format!("runtime {elapsed:?} exceeds 5 s"));
    }
    criterion.pass();
}

#[test]
fn criterion_11_end_to_end_wall_clock() {
    let criterion = Criterion::new(11, "largest fixture evaluates through the CLI in under 10 s with cassette replay");
    let dir = tempfile::tempdir().unwrap();
    let bundle = large_fixture_bundle(dir.path());
    let cassette = dir.path().join("large.jsonl");

    // record once with the echo judge emitting 8 claims per section
    // (five populated categories -> 40 claims)
    {
        let judge = JudgeGateway::new(
            Box::new(EchoJudge::new().with_claims_per_section(8)),
            CassetteMode::Record,
            Some(&cassette),
            4,
            3,
        )
        .unwrap();
        let verifier = VerifierGateway::unavailable();
        let output = evaluate(
            &bundle,
            &bundle.gt_tex(),
            &judge,
            &verifier,
            &EvaluateOptions::default(),
        )
        .unwrap();
        if output.claims_file.stage1.len() != 40 {
            criterion.fail(&format!(
                "large fixture produced {} claims, expected 40",
                output.claims_file.stage1.len()
            ));
        }
        let tables: usize = output
            .report
            .sections
            .iter()
            .map(|s| s.table_scores.len())
            .sum();
        let figures: usize = output
            .report
            .sections
            .iter()
            .map(|s| s.figure_scores.len())
            .sum();
        if tables != 6 || figures != 5 {
            criterion.fail(&format!("fixture has {tables} tables / {figures} figures"));
        }
    }

    let out = dir.path().join("out");
    let started = Instant::now();
    let status = papereval()
        .args(["evaluate", "--bundle"])
        .arg(bundle.root())
        .arg("--pred")
        .arg(bundle.gt_tex())
        .args(["--cassette-mode", "replay", "--cassette"])
        .arg(&cassette)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    let elapsed = started.elapsed();
    if status.code() != Some(0) {
        criterion.fail("replay evaluation failed");
    }
    if elapsed >= Duration::from_secs(10) {
        criterion.fail(&format!("runtime {elapsed:?} exceeds 10 s"));
    }
    criterion.pass();
}
