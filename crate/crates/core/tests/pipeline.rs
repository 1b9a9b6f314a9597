//! End-to-end pipeline runs over the fixture bundle with the faithful echo
//! judge: identity self-evaluation and missing-section arithmetic.

use papereval_core::align::CanonicalCategory;
use papereval_core::assets::{FigureBasis, MatchMethod};
use papereval_core::judge::{CassetteMode, JudgeGateway, VerifierGateway};
use papereval_core::pipeline::{evaluate, EvaluateOptions};
use papereval_core::rational::Rational;
use papereval_core::testkit::{fixture_bundle, EchoJudge, ScriptedVerifier};

fn echo_gateway() -> JudgeGateway {
    JudgeGateway::new(Box::new(EchoJudge::new()), CassetteMode::Passthrough, None, 4, 3).unwrap()
}

#[test]
fn identity_run_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let judge = echo_gateway();
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    let output = evaluate(
        &bundle,
        &bundle.gt_tex(),
        &judge,
        &verifier,
        &EvaluateOptions::default(),
    )
    .unwrap();
    let report = output.report;

    assert_eq!(report.avg_rubric, Rational::from_int(5));
    assert_eq!(report.hallucination.headline, 0);
    assert_eq!(report.citation.precision, Rational::ONE);
    assert_eq!(report.citation.recall, Rational::ONE);
    assert_eq!(report.citation.f1, Rational::ONE);

    // every figure referenced in the same section, every table label-matched at 5
    let all_figures: Vec<_> = report
        .sections
        .iter()
        .flat_map(|s| s.figure_scores.iter())
        .collect();
    assert_eq!(all_figures.len(), 2);
    assert!(all_figures
        .iter()
        .all(|f| f.basis == FigureBasis::SameSection && f.score == 5));
    let all_tables: Vec<_> = report
        .sections
        .iter()
        .flat_map(|s| s.table_scores.iter())
        .collect();
    assert_eq!(all_tables.len(), 2);
    assert!(all_tables
        .iter()
        .all(|t| t.method == MatchMethod::Label && t.score == 5));

    // conclusion never scored
    assert!(report
        .sections
        .iter()
        .all(|s| s.section != CanonicalCategory::Conclusion));
}

#[test]
fn missing_experiment_section_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let judge = echo_gateway();
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    // pred = GT with the whole Experiments section removed
    let gt_text = std::fs::read_to_string(bundle.gt_tex()).unwrap();
    let start = gt_text.find("\\section{Experiments}").unwrap();
    let end = gt_text.find("\\section{Conclusion}").unwrap();
    let pred_text = format!("{}{}", &gt_text[..start], &gt_text[end..]);
    let pred_path = dir.path().join("pred.tex");
    std::fs::write(&pred_path, pred_text).unwrap();

    let output = evaluate(
        &bundle,
        &pred_path,
        &judge,
        &verifier,
        &EvaluateOptions::default(),
    )
    .unwrap();
    let report = output.report;

    // every Experiment rubric element drops to exactly 1
    let experiment = report.section(CanonicalCategory::Experiment).unwrap();
    assert_eq!(experiment.text_scores.len(), 5);
    assert!(experiment.text_scores.iter().all(|s| s.score == 1));
    // GT-anchored tables in that section score 1 (missing from pred)
    assert_eq!(experiment.table_scores.len(), 2);
    assert!(experiment
        .table_scores
        .iter()
        .all(|t| t.score == 1 && t.method == MatchMethod::None));

    // pooled-mean arithmetic, hand-computed on the fixture's known counts:
    // 25 remaining text elements at 5, 5 Experiment elements at 1,
    // 2 figures at 5, 2 tables at 1  ->  (125 + 5 + 10 + 2) / 34
    assert_eq!(report.avg_rubric, Rational::new(142, 34));
    assert_eq!(report.avg_rubric, Rational::new(71, 17));
}

#[test]
fn report_json_stable_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    let first = evaluate(
        &bundle,
        &bundle.gt_tex(),
        &echo_gateway(),
        &verifier,
        &EvaluateOptions::default(),
    )
    .unwrap();
    let second = evaluate(
        &bundle,
        &bundle.gt_tex(),
        &echo_gateway(),
        &verifier,
        &EvaluateOptions::default(),
    )
    .unwrap();
    assert_eq!(first.report.to_json(), second.report.to_json());
    assert_eq!(
        serde_json::to_string(&first.claims_file).unwrap(),
        serde_json::to_string(&second.claims_file).unwrap()
    );
}

#[test]
fn degraded_pred_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let judge = echo_gateway();
    // verifier confirms the single flagged claim
    let backend = papereval_core::testkit::ScriptedVerifier::new(
        r#"{"results": [{"classification": "contradictory", "severity": "major", "evidence": "confirmed against the tables"}]}"#,
    );
    let calls = backend.calls();
    let verifier = VerifierGateway::new(Box::new(backend));

    // degrade the GT: alter one numeric table cell, plant a fabricated-value
    // marker in the Experiments text, add a citation key that is in no bib
    let gt_text = std::fs::read_to_string(bundle.gt_tex()).unwrap();
    let degraded = gt_text
        .replace("ours & 74.5", "ours & 91.2")
        .replace(
            "Numbers match the tables",
            "FABRICATED numbers beat the tables \\cite{ghost2099} and match",
        );
    assert_ne!(degraded, gt_text);
    let pred_path = dir.path().join("pred.tex");
    std::fs::write(&pred_path, degraded).unwrap();

    let report = evaluate(&bundle, &pred_path, &judge, &verifier, &EvaluateOptions::default())
        .unwrap()
        .report;

    // the altered table scores below 5 while its label still matches
    let experiment = report.section(CanonicalCategory::Experiment).unwrap();
    let main_table = experiment
        .table_scores
        .iter()
        .find(|t| t.gt_label.as_deref() == Some("tab:main"))
        .unwrap();
    assert_eq!(main_table.method, MatchMethod::Label);
    assert!(main_table.score < 5);
    let ablation = experiment
        .table_scores
        .iter()
        .find(|t| t.gt_label.as_deref() == Some("tab:ablation"))
        .unwrap();
    assert_eq!(ablation.score, 5);

    // the fabricated claim survives verification as the headline count
    assert_eq!(report.hallucination.headline, 1);
    assert_eq!(report.hallucination.totals.major_contradictory, 1);
    assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 1);

    // the invented key is a hallucinated citation; precision dips, recall holds
    assert!(report.citation.hallucinated.contains("ghost2099"));
    assert_eq!(report.citation.recall, Rational::ONE);
    assert!(report.citation.precision < Rational::ONE);

    // overall average dips below the perfect 5
    assert!(report.avg_rubric < Rational::from_int(5));
}

#[test]
fn output_independent_of_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    let run = |workers: usize| {
        let judge = JudgeGateway::new(
            Box::new(EchoJudge::new()),
            CassetteMode::Passthrough,
            None,
            workers,
            3,
        )
        .unwrap();
        let options = EvaluateOptions {
            parallelism: workers,
            ..EvaluateOptions::default()
        };
        evaluate(&bundle, &bundle.gt_tex(), &judge, &verifier, &options)
            .unwrap()
            .report
            .to_json()
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn sectionwise_average_mode() {
    use papereval_core::report::AvgMode;
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let judge = echo_gateway();
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));

    let gt_text = std::fs::read_to_string(bundle.gt_tex()).unwrap();
    let start = gt_text.find("\\section{Experiments}").unwrap();
    let end = gt_text.find("\\section{Conclusion}").unwrap();
    let pred_path = dir.path().join("pred.tex");
    std::fs::write(&pred_path, format!("{}{}", &gt_text[..start], &gt_text[end..])).unwrap();

    let options = EvaluateOptions {
        avg_mode: AvgMode::Sectionwise,
        ..EvaluateOptions::default()
    };
    let report = evaluate(&bundle, &pred_path, &judge, &verifier, &options)
        .unwrap()
        .report;
    // five sections average 5, the missing Experiment section averages 1
    assert_eq!(report.avg_rubric, Rational::new(26, 6));
    assert_ne!(report.avg_rubric, Rational::new(71, 17));
}

#[test]
fn missing_rubric_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    std::fs::remove_file(bundle.rubric_json()).unwrap();
    let judge = echo_gateway();
    let verifier = VerifierGateway::unavailable();
    let result = evaluate(
        &bundle,
        &bundle.gt_tex(),
        &judge,
        &verifier,
        &EvaluateOptions::default(),
    );
    match result {
        Err(err) => assert!(err.to_string().contains("rubric.json")),
        Ok(_) => panic!("evaluation succeeded without a rubric"),
    }
}

#[test]
fn generate_rubric_flag_creates_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    std::fs::remove_file(bundle.rubric_json()).unwrap();
    let judge = echo_gateway();
    let verifier = VerifierGateway::new(Box::new(ScriptedVerifier::new(r#"{"results": []}"#)));
    let options = EvaluateOptions {
        generate_rubric: true,
        ..EvaluateOptions::default()
    };
    let output = evaluate(&bundle, &bundle.gt_tex(), &judge, &verifier, &options).unwrap();
    assert!(bundle.rubric_json().is_file());
    assert!(!output.report.sections.is_empty());
}

#[test]
fn bundle_validates() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture_bundle(dir.path());
    let validation = bundle.validate();
    assert!(
        validation.is_ok(),
        "failed: {:?}",
        validation.first_failure()
    );
}
