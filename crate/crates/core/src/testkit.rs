//! Scripted backends, a faithful echo judge, and fixture builders shared by
//! this crate's tests, the CLI integration tests, and the benches. Nothing
//! here is part of the evaluation engine itself.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::json;

use crate::align::RuleTable;
use crate::judge::backend::{BackendError, JudgeBackend};
use crate::judge::verifier::{VerifierBackend, VerifierError};
use crate::latex::normalize_ws;

/// Replays a fixed queue of responses (or one response forever) and records
/// every prompt it sees.
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<String>>,
    repeat: Option<String>,
    calls: Arc<AtomicUsize>,
    prompts: Arc<Mutex<Vec<String>>>,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedBackend {
            responses: Mutex::new(responses.into()),
            repeat: None,
            calls: Arc::new(AtomicUsize::new(0)),
            prompts: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn repeating(response: &str) -> Self {
        ScriptedBackend {
            responses: Mutex::new(VecDeque::new()),
            repeat: Some(response.to_string()),
            calls: Arc::new(AtomicUsize::new(0)),
            prompts: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn calls(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.calls)
    }

    pub fn prompts(&self) -> Arc<Mutex<Vec<String>>> {
        Arc::clone(&self.prompts)
    }
}

impl JudgeBackend for ScriptedBackend {
    fn complete(&self, _system: &str, user: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(user.to_string());
        if let Some(next) = self.responses.lock().unwrap().pop_front() {
            return Ok(next);
        }
        match &self.repeat {
            Some(r) => Ok(r.clone()),
            None => Err(BackendError::Transport(
                "scripted backend ran out of responses".to_string(),
            )),
        }
    }

    fn id(&self) -> String {
        "scripted".to_string()
    }
}

/// Returns garbage for the first `failures` calls, then the good response.
pub struct FlakyBackend {
    failures: AtomicUsize,
    good: String,
}

impl FlakyBackend {
    pub fn new(failures: usize, good: &str) -> Self {
        FlakyBackend {
            failures: AtomicUsize::new(failures),
            good: good.to_string(),
        }
    }
}

impl JudgeBackend for FlakyBackend {
    fn complete(&self, _system: &str, _user: &str) -> Result<String, BackendError> {
        let remaining = self.failures.load(Ordering::SeqCst);
        if remaining > 0 {
            self.failures.store(remaining - 1, Ordering::SeqCst);
            Ok("this is not json".to_string())
        } else {
            Ok(self.good.clone())
        }
    }

    fn id(&self) -> String {
        "flaky".to_string()
    }
}

/// Rate-limits the first `limits` calls, then answers normally.
pub struct RateLimitedBackend {
    limits: AtomicUsize,
    good: String,
    calls: Arc<AtomicUsize>,
}

impl RateLimitedBackend {
    pub fn new(limits: usize, good: &str) -> Self {
        RateLimitedBackend {
            limits: AtomicUsize::new(limits),
            good: good.to_string(),
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn calls(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.calls)
    }
}

impl JudgeBackend for RateLimitedBackend {
    fn complete(&self, _system: &str, _user: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let remaining = self.limits.load(Ordering::SeqCst);
        if remaining > 0 {
            self.limits.store(remaining - 1, Ordering::SeqCst);
            Err(BackendError::RateLimited {
                retry_after: Some(std::time::Duration::from_millis(1)),
            })
        } else {
            Ok(self.good.clone())
        }
    }

    fn id(&self) -> String {
        "rate-limited".to_string()
    }
}

/// Instrumented backend that tracks peak in-flight calls.
pub struct CountingBackend {
    response: String,
    sleep_ms: u64,
    inflight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

impl CountingBackend {
    pub fn new(response: &str, sleep_ms: u64) -> Self {
        CountingBackend {
            response: response.to_string(),
            sleep_ms,
            inflight: Arc::new(AtomicUsize::new(0)),
            peak: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn peak(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.peak)
    }
}

impl JudgeBackend for CountingBackend {
    fn complete(&self, _system: &str, _user: &str) -> Result<String, BackendError> {
        let now = self.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(std::time::Duration::from_millis(self.sleep_ms));
        self.inflight.fetch_sub(1, Ordering::SeqCst);
        Ok(self.response.clone())
    }

    fn id(&self) -> String {
        "counting".to_string()
    }
}

/// Scripted verification agent with a call counter and an optional write
/// probe that tries to modify its workspace.
pub struct ScriptedVerifier {
    response: String,
    calls: Arc<AtomicUsize>,
    attempt_write: bool,
}

impl ScriptedVerifier {
    pub fn new(response: &str) -> Self {
        ScriptedVerifier {
            response: response.to_string(),
            calls: Arc::new(AtomicUsize::new(0)),
            attempt_write: false,
        }
    }

    pub fn with_write_attempt(mut self) -> Self {
        self.attempt_write = true;
        self
    }

    pub fn calls(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.calls)
    }
}

impl VerifierBackend for ScriptedVerifier {
    fn verify(
        &self,
        _system: &str,
        _user: &str,
        workspace: &Path,
    ) -> Result<String, VerifierError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.attempt_write {
            // a misconfigured agent trying to edit the bundle
            let _ = std::fs::write(workspace.join("gt_main.tex"), "VANDALIZED");
            let _ = std::fs::write(workspace.join("injected.txt"), "should not persist");
        }
        Ok(self.response.clone())
    }

    fn id(&self) -> String {
        "scripted-verifier".to_string()
    }
}

/// Faithful echo judge: answers every task by comparing the prompt's inputs,
/// so an identity run (GT scored against itself) earns perfect scores without
/// any network access. Responses are derived only from the prompt text.
pub struct EchoJudge {
    rules: RuleTable,
    claims_per_section: usize,
    figure_context_score: i64,
}

impl EchoJudge {
    pub fn new() -> Self {
        EchoJudge {
            rules: RuleTable::default(),
            claims_per_section: 1,
            figure_context_score: 3,
        }
    }

    pub fn with_claims_per_section(mut self, n: usize) -> Self {
        self.claims_per_section = n;
        self
    }

    pub fn with_figure_context_score(mut self, score: i64) -> Self {
        self.figure_context_score = score;
        self
    }

    fn answer_classify(&self, user: &str) -> String {
        let heading = between(user, "**Section name: ", "**").unwrap_or_default();
        let category = self
            .rules
            .classify(&heading)
            .map(|c| c.name())
            .unwrap_or("Method");
        json!({ "category": category }).to_string()
    }

    fn answer_rubric_score(&self, user: &str) -> String {
        let rubric_block = between(
            user,
            "**Rubric (key elements to check):**\n",
            "\n\n**Predicted section content:**",
        )
        .unwrap_or_default();
        let pred = between(
            user,
            "**Predicted section content:**\n",
            "\n\n### Figure/Table Context",
        )
        .unwrap_or_default();
        let pred_norm = normalize_ws(&pred);

        let mut scores = Vec::new();
        for line in rubric_block.lines() {
            let Some(rest) = line.strip_prefix("- ") else {
                continue;
            };
            let Some((name, tail)) = rest.split_once(" (") else {
                continue;
            };
            let description = tail.split_once("): ").map(|(_, d)| d).unwrap_or("");
            let score = if pred_norm.contains(&normalize_ws(description)) {
                5
            } else {
                1
            };
            scores.push(json!({
                "element": name,
                "score": score,
                "reasoning": if score == 5 { "described verbatim" } else { "not found in section" },
            }));
        }
        json!({ "scores": scores }).to_string()
    }

    fn answer_claims(&self, user: &str) -> String {
        let section = between(user, "**Section being evaluated: ", "**").unwrap_or_default();
        let pred = between(
            user,
            "**Predicted section content:**\n",
            "\n\n**Ground Truth full paper",
        )
        .unwrap_or_default();
        let mut claims: Vec<serde_json::Value> = (0..self.claims_per_section)
            .map(|i| {
                json!({
                    "claim": format!("The {section} section restates ground-truth content ({})", i + 1),
                    "classification": "supported",
                    "evidence": "present in the GT paper",
                    "severity": null,
                })
            })
            .collect();
        // fixtures plant this marker to stand in for a fabricated number
        if pred.contains("FABRICATED") {
            claims.push(json!({
                "claim": format!("The {section} section reports a fabricated value"),
                "classification": "contradictory",
                "evidence": "conflicts with the GT tables",
                "severity": "major",
            }));
        }
        json!({ "claims": claims }).to_string()
    }

    fn answer_table_score(&self, user: &str) -> String {
        let gt = fenced_block(user, 0).unwrap_or_default();
        let pred = fenced_block(user, 1).unwrap_or_default();
        let equal = normalize_ws(&gt) == normalize_ws(&pred);
        json!({
            "score": if equal { 5 } else { 2 },
            "reasoning": if equal {
                "numerical accuracy, structural alignment, and content consistency all match"
            } else {
                "numerical accuracy differs from the ground truth"
            },
        })
        .to_string()
    }

    fn answer_rubric_extract(&self, user: &str) -> String {
        let content = between(user, "**Section content:**\n", "\n\nExtract").unwrap_or_default();
        let sentences: Vec<&str> = content
            .split(". ")
            .filter(|s| s.split_whitespace().count() >= 3)
            .take(5)
            .collect();
        let elements: Vec<serde_json::Value> = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                json!({
                    "name": format!("Point {}", i + 1),
                    "importance": "high",
                    "description": normalize_ws(s),
                    "evidence": normalize_ws(s),
                })
            })
            .collect();
        json!({ "elements": elements }).to_string()
    }

    fn answer_overview(&self, user: &str) -> String {
        let structure = between(user, "Follow this structure:\n", "\n\n").unwrap_or_default();
        let mut out = String::new();
        for line in structure.lines() {
            let trimmed = line.trim_start();
            if !trimmed.starts_with('#') {
                continue;
            }
            let concrete = trimmed
                .replace("[Paper Acronym/Name]", "Fixture")
                .replace("[Benchmark Name]", "Fixture")
                .replace("[Component Name]", "Core Component")
                .replace("[Additional Section as needed]", "Additional Notes")
                .replace("[Additional Design Aspect]", "Design Notes");
            let concrete = match concrete.split_once("  (") {
                Some((head, _)) => head.trim_end().to_string(),
                None => concrete,
            };
            let concrete = match concrete.split_once(" (") {
                Some((head, tail)) if tail.ends_with(')') => head.trim_end().to_string(),
                _ => concrete,
            };
            out.push_str(&concrete);
            out.push('\n');
            out.push_str("Filler prose describing this part of the work in enough detail to be useful.\n\n");
        }
        // pad toward the requested length band
        let target = if user.contains("4000-8000") { 4800 } else { 1800 };
        while out.len() < target {
            out.push_str("Additional filler sentences keep the overview within the requested length band.\n");
        }
        out
    }
}

impl Default for EchoJudge {
    fn default() -> Self {
        Self::new()
    }
}

impl JudgeBackend for EchoJudge {
    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let answer = if user.contains("**Section name: ") {
            self.answer_classify(user)
        } else if user.contains("**Rubric (key elements to check):**") {
            self.answer_rubric_score(user)
        } else if user.contains("**Section being evaluated: ") {
            self.answer_claims(user)
        } else if user.contains("**Ground-truth table (verbatim LaTeX):**") {
            self.answer_table_score(user)
        } else if user.contains("**Section content:**") {
            self.answer_rubric_extract(user)
        } else if user.contains("Propose index pairs") {
            json!({ "matches": [] }).to_string()
        } else if user.contains("Score the contextual appropriateness") {
            json!({ "score": self.figure_context_score, "reasoning": "scripted" }).to_string()
        } else if system.contains("research overview") {
            self.answer_overview(user)
        } else {
            return Err(BackendError::Transport(format!(
                "echo judge cannot route prompt: {}",
                user.chars().take(80).collect::<String>()
            )));
        };
        Ok(answer)
    }

    fn id(&self) -> String {
        "echo-judge".to_string()
    }
}

fn between(text: &str, start: &str, end: &str) -> Option<String> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end)? + from;
    Some(text[from..to].to_string())
}

// ---------------------------------------------------------------------------
// Fixture corpus: a small GT paper whose rubric descriptions are verbatim
// sentences, so the echo judge scores an identity run at exactly 5.0.
// ---------------------------------------------------------------------------

use crate::align::CanonicalCategory;
use crate::harness::{CommandSpec, HarnessError, WriterAgent};
use crate::prep::PaperBundle;
use crate::rubric::{Importance, Rubric, RubricElement};

pub fn fixture_sentences(category: CanonicalCategory) -> [&'static str; 5] {
    use CanonicalCategory::*;
    match category {
        Abstract => [
            "We present an engine that scores machine-written papers against their originals",
            "The engine separates presentation quality from factual reliability",
            "Presentation is measured with a per-paper rubric on a five-point scale",
            "Factual reliability is measured by claim-level contradiction counting",
            "Citation usage is compared through key-set precision and recall",
        ],
        Introduction => [
            "Automated paper writing has reached the quality bar where evaluation matters",
            "Existing reviewers reward confident fabrications instead of penalizing them",
            "Our engine compares a generated paper directly against its source of truth",
            "The comparison splits into rubric coverage and contradiction analysis",
            "We release tooling for bundle preparation and agent-driven writing",
        ],
        RelatedWork => [
            "Prior evaluation work leans on holistic reviewer scores",
            "Surface-level citation checks miss substantive contradictions",
            "Rubric grading is established for constrained generation tasks",
            "Claim verification pipelines exist for open-domain fact checking",
            "No prior system grounds verification in the original paper bundle",
        ],
        Method => [
            "Sections from both papers are folded into seven canonical categories",
            "A keyword rule table classifies headings before any model is consulted",
            "Rubric elements are scored one to five against the generated section",
            "Figures earn a full context score when referenced in the matching section",
            "Tables are matched by label first and caption similarity second",
        ],
        BenchmarkConstruction => [
            "Each evaluation bundle is built from an archival source directory",
            "The template keeps every heading while emptying all body text",
            "Reference entries are augmented with abstracts from a metadata service",
            "Asset summaries list each file with the first line of its caption",
            "A structured overview file condenses the paper for the writing agent",
        ],
        Experiment => [
            "We evaluate the engine on papers with deliberately injected errors",
            "Rubric averages track injected omissions with large margins",
            "Contradiction counts isolate fabricated numbers reliably",
            "Citation metrics expose both missing and invented keys",
            "Runtime stays interactive on full-length papers",
        ],
        Conclusion => [
            "The engine provides a reproducible basis for judging machine writing",
            "Scores remain byte-stable under replayed judge traffic",
            "Future revisions will widen the asset matching passes",
            "Rubric refinement stays a human editing step by design",
            "We hope the tooling supports careful deployment decisions",
        ],
    }
}

/// GT fixture source: abstract plus six sections, two figures, two labeled
/// tables, and citations drawn from [`fixture_bib`].
pub fn fixture_gt_tex() -> String {
    let paragraph = |category: CanonicalCategory| -> String {
        fixture_sentences(category)
            .iter()
            .map(|s| format!("{s}."))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "\\documentclass{{article}}\n\
         \\title{{Fixture Paper}}\n\
         \\begin{{document}}\n\
         \\maketitle\n\
         \\begin{{abstract}}\n{abstract}\n\\end{{abstract}}\n\
         \n\
         \\section{{Introduction}}\n{intro}\nEarlier systems struggle here~\\citep{{doe2024deep, smith2023vision}}.\n\
         \n\
         \\section{{Related Work}}\n{related}\nSee also~\\citet{{lee2025bench}}.\n\
         \n\
         \\section{{Method}}\n{method}\n\
         \\begin{{figure}}\n\\includegraphics[width=\\linewidth]{{fig_method.jpg}}\n\\caption{{Method Overview.}}\n\\label{{fig:method}}\n\\end{{figure}}\n\
         \n\
         \\section{{Benchmark Construction}}\n{bench}\n\
         \\begin{{figure}}\n\\includegraphics{{fig_bench.jpg}}\n\\caption{{Bundle layout.}}\n\\label{{fig:bench}}\n\\end{{figure}}\n\
         We follow~\\cite{{chan2024data}}.\n\
         \n\
         \\section{{Experiments}}\n{experiment}\n\
         \\begin{{table}}\n\\caption{{Main results on the injected-error suite.}}\n\\label{{tab:main}}\n\\begin{{tabular}}{{lrr}}\nmodel & score & delta \\\\\nbase & 61.0 & 0.0 \\\\\nours & 74.5 & +13.5 \\\\\n\\end{{tabular}}\n\\end{{table}}\n\
         \\begin{{table}}\n\\caption{{Ablation of matching passes.}}\n\\label{{tab:ablation}}\n\\begin{{tabular}}{{lr}}\npass & f1 \\\\\nlabel only & 0.71 \\\\\nfull & 0.89 \\\\\n\\end{{tabular}}\n\\end{{table}}\n\
         Numbers match the tables~\\citep{{doe2024deep}}.\n\
         \n\
         \\section{{Conclusion}}\n{conclusion}\n\
         \n\
         \\bibliographystyle{{plain}}\n\
         \\bibliography{{references}}\n\
         \\end{{document}}\n",
        abstract = paragraph(CanonicalCategory::Abstract),
        intro = paragraph(CanonicalCategory::Introduction),
        related = paragraph(CanonicalCategory::RelatedWork),
        method = paragraph(CanonicalCategory::Method),
        bench = paragraph(CanonicalCategory::BenchmarkConstruction),
        experiment = paragraph(CanonicalCategory::Experiment),
        conclusion = paragraph(CanonicalCategory::Conclusion),
    )
}

pub fn fixture_bib() -> String {
    "@article{doe2024deep,\n  title = {Deep Scoring of Generated Text},\n  author = {Doe, J.},\n  year = {2024}\n}\n\n\
     @inproceedings{smith2023vision,\n  title = {Vision Benchmarks Revisited},\n  author = {Smith, A.},\n  year = {2023}\n}\n\n\
     @misc{lee2025bench,\n  title = {Benchmarking the Benchmarks},\n  author = {Lee, K.},\n  year = {2025}\n}\n\n\
     @article{chan2024data,\n  title = {Data Bundles for Reproduction},\n  author = {Chan, R.},\n  year = {2024}\n}\n\n\
     @article{unused2022spare,\n  title = {A Spare Reference},\n  author = {Nobody},\n  year = {2022}\n}\n"
        .to_string()
}

/// Rubric whose element descriptions are the fixture sentences verbatim:
/// five elements for each of the six scored sections.
pub fn fixture_rubric() -> Rubric {
    let mut elements = Vec::new();
    for category in CanonicalCategory::SCORED {
        for (i, sentence) in fixture_sentences(category).iter().enumerate() {
            elements.push(RubricElement {
                section: category,
                name: format!("{} point {}", category.name(), i + 1),
                importance: if i == 0 {
                    Importance::High
                } else if i < 3 {
                    Importance::Medium
                } else {
                    Importance::Low
                },
                description: format!("{sentence}."),
                evidence: format!("{sentence}."),
            });
        }
    }
    Rubric::new("fixture-paper", elements)
}

pub fn fixture_overview_md() -> String {
    let mut md = String::from(
        "# Fixture: Research Overview\n\n## Title\n**Fixture Paper**\n\n## 1. Motivation\n\
         Machine-written papers need grounded evaluation.\n\n## 2. Key Insight\n\
         **Key idea:** compare directly against the original bundle.\n\n## 3. Proposed Method\n\
         Rubric scoring plus claim verification over shared resources.\n\n## 4. Experimental Results\n\
         - rubric averages track injected omissions\n- contradiction counts isolate fabrications\n\
         - citation metrics expose invented keys\n\n## 5. Contributions\n\
         - an evaluation engine\n- bundle tooling\n- a writing harness\n\n## 6. Takeaway\n\
         Grounded comparison beats holistic review.\n\n",
    );
    while md.chars().count() < 1500 {
        md.push_str("Additional context keeps the overview inside the requested length band.\n");
    }
    md
}

/// Writes an arXiv-style source directory: main tex, references.bib, figure
/// assets, code/, research_overview.md, and rubric.json.
pub fn write_fixture_source(dir: &Path) {
    std::fs::create_dir_all(dir).expect("fixture source dir");
    std::fs::write(dir.join("main.tex"), fixture_gt_tex()).unwrap();
    std::fs::write(dir.join("references.bib"), fixture_bib()).unwrap();
    std::fs::write(dir.join("fig_method.jpg"), b"JPEGSTUB-method").unwrap();
    std::fs::write(dir.join("fig_bench.jpg"), b"JPEGSTUB-bench").unwrap();
    std::fs::write(dir.join("fixture.sty"), "% fixture style file\n").unwrap();
    std::fs::create_dir_all(dir.join("code")).unwrap();
    std::fs::write(
        dir.join("code/README.md"),
        "# Fixture Code\n\nRun `python run.py` to reproduce.\n",
    )
    .unwrap();
    std::fs::write(dir.join("code/run.py"), "print('fixture')\n").unwrap();
    std::fs::write(dir.join("research_overview.md"), fixture_overview_md()).unwrap();
    fixture_rubric().save(&dir.join("rubric.json")).unwrap();
}

/// Builds a complete fixture bundle under `root/bundle` (source staged at
/// `root/source`).
pub fn fixture_bundle(root: &Path) -> PaperBundle {
    let source = root.join("source");
    let out = root.join("bundle");
    write_fixture_source(&source);
    let mut diags = crate::diag::Diagnostics::new();
    let options = crate::prep::PrepOptions {
        overview: crate::prep::OverviewSource::Auto,
        resolver: None,
    };
    crate::prep::build_bundle(&source, &out, None, &options, &mut diags)
        .expect("fixture bundle builds")
}

/// Large fixture for wall-clock checks: twenty raw sections folding into
/// five scored categories, six tables, five figures.
pub fn write_large_fixture_source(dir: &Path) {
    std::fs::create_dir_all(dir).expect("large fixture dir");
    let filler = "This sentence pads the section body with verifiable prose. ".repeat(40);
    let mut tex = String::from("\\documentclass{article}\n\\begin{document}\n\\maketitle\n");
    tex.push_str(&format!(
        "\\begin{{abstract}}\nLarge fixture overview. {filler}\n\\end{{abstract}}\n"
    ));

    let headings = [
        "Introduction",
        "Introduction Continued",
        "Background Is Not Here Introduction",
        "Method",
        "Methodology Details",
        "Approach Specifics",
        "Preliminaries",
        "Method Extensions",
        "Benchmark Design",
        "Dataset Construction Notes",
        "Benchmark Coverage",
        "Experiments",
        "Results Analysis",
        "Evaluation Setup",
        "Ablation Studies",
        "Experiment Scale",
        "Results Deep Dive",
        "Evaluation Extras",
        "Experiments Continued",
    ];
    for (i, heading) in headings.iter().enumerate() {
        tex.push_str(&format!("\\section{{{heading}}}\n{filler}\n"));
        if i % 4 == 1 {
            let n = i / 4 + 1;
            tex.push_str(&format!(
                "\\begin{{figure}}\n\\includegraphics{{fig_large_{n}.jpg}}\n\\caption{{Large figure {n}.}}\n\\end{{figure}}\n"
            ));
        }
        if i % 3 == 2 {
            let n = i / 3 + 1;
            tex.push_str(&format!(
                "\\begin{{table}}\n\\caption{{Large table {n}.}}\n\\label{{tab:large{n}}}\n\\begin{{tabular}}{{lr}}\nrow & {n} \\\\\n\\end{{tabular}}\n\\end{{table}}\n"
            ));
        }
        tex.push_str(&format!("Cited evidence~\\citep{{large{:02}}}.\n", i % 12));
    }
    tex.push_str("\\section{Conclusion}\nClosing remarks.\n");
    tex.push_str("\\bibliography{references}\n\\end{document}\n");
    std::fs::write(dir.join("main.tex"), tex).unwrap();

    let mut bib = String::new();
    for i in 0..12 {
        bib.push_str(&format!(
            "@article{{large{i:02}, title = {{Large Reference {i}}}, year = {{2025}}}}\n\n"
        ));
    }
    std::fs::write(dir.join("references.bib"), bib).unwrap();
    for n in 1..=5 {
        std::fs::write(dir.join(format!("fig_large_{n}.jpg")), b"JPEGSTUB").unwrap();
    }
    std::fs::write(dir.join("research_overview.md"), fixture_overview_md()).unwrap();

    // rubric: five elements per populated category, descriptions drawn from
    // the filler so the echo judge finds them verbatim
    let mut elements = Vec::new();
    for category in [
        CanonicalCategory::Abstract,
        CanonicalCategory::Introduction,
        CanonicalCategory::Method,
        CanonicalCategory::BenchmarkConstruction,
        CanonicalCategory::Experiment,
    ] {
        for i in 0..5 {
            elements.push(RubricElement {
                section: category,
                name: format!("{} large point {}", category.name(), i + 1),
                importance: Importance::High,
                description: "This sentence pads the section body with verifiable prose."
                    .to_string(),
                evidence: "filler".to_string(),
            });
        }
    }
    Rubric::new("large-fixture", elements)
        .save(&dir.join("rubric.json"))
        .unwrap();
}

pub fn large_fixture_bundle(root: &Path) -> PaperBundle {
    let source = root.join("source");
    let out = root.join("bundle");
    write_large_fixture_source(&source);
    let mut diags = crate::diag::Diagnostics::new();
    let options = crate::prep::PrepOptions {
        overview: crate::prep::OverviewSource::Auto,
        resolver: None,
    };
    crate::prep::build_bundle(&source, &out, None, &options, &mut diags)
        .expect("large fixture bundle builds")
}

// ---------------------------------------------------------------------------
// Writer-agent fixtures and a fake compiler/lint pair for harness tests.
// ---------------------------------------------------------------------------

/// Valid template content for the fake compiler (no COMPILEERROR marker),
/// padded so the byte-count page model lands mid-page.
pub fn agent_tex(pages: u32) -> String {
    let mut text = String::from("\\documentclass{article}\n\\begin{document}\nContent.\n");
    let body_target = (pages.max(1) as usize - 1) * 3000 + 1500;
    while text.len() < body_target {
        text.push_str("xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx\n");
    }
    text.push_str("\\bibliography{references}\n\\end{document}\n");
    text
}

pub fn broken_agent_tex() -> String {
    "\\documentclass{article}\n\\begin{document}\nCOMPILEERROR here\n\\end{document}\n".to_string()
}

/// Plays a fixed sequence of template.tex contents, then repeats the last
/// one. Records every instruction it receives.
pub struct ScriptedWriterAgent {
    turns: std::collections::VecDeque<String>,
    last: Option<String>,
    pub instructions: Vec<String>,
}

impl ScriptedWriterAgent {
    pub fn new(turns: Vec<String>) -> Self {
        ScriptedWriterAgent {
            turns: turns.into(),
            last: None,
            instructions: Vec::new(),
        }
    }
}

impl WriterAgent for ScriptedWriterAgent {
    fn send(&mut self, instruction: &str, workspace: &Path) -> Result<(), HarnessError> {
        self.instructions.push(instruction.to_string());
        let content = match self.turns.pop_front() {
            Some(next) => {
                self.last = Some(next.clone());
                next
            }
            None => self
                .last
                .clone()
                .ok_or_else(|| HarnessError::AgentUnavailable("scripted agent empty".into()))?,
        };
        std::fs::write(workspace.join("template.tex"), content).map_err(|e| {
            HarnessError::AgentUnavailable(format!("scripted agent write: {e}"))
        })?;
        Ok(())
    }
}

/// Writes a paper one page too long at first, then trims one page worth of
/// padding per instruction.
pub struct ShrinkingWriterAgent {
    start_pages: u32,
    written: bool,
    pub instructions: Vec<String>,
}

impl ShrinkingWriterAgent {
    pub fn new(start_pages: u32) -> Self {
        ShrinkingWriterAgent {
            start_pages,
            written: false,
            instructions: Vec::new(),
        }
    }
}

impl WriterAgent for ShrinkingWriterAgent {
    fn send(&mut self, instruction: &str, workspace: &Path) -> Result<(), HarnessError> {
        self.instructions.push(instruction.to_string());
        let template_path = workspace.join("template.tex");
        if !self.written {
            self.written = true;
            std::fs::write(&template_path, agent_tex(self.start_pages)).map_err(|e| {
                HarnessError::AgentUnavailable(format!("shrinking agent write: {e}"))
            })?;
            return Ok(());
        }
        let text = std::fs::read_to_string(&template_path)
            .map_err(|e| HarnessError::AgentUnavailable(e.to_string()))?;
        // drop one page worth of padding lines
        let mut removed = 0usize;
        let kept: Vec<&str> = text
            .lines()
            .filter(|line| {
                if removed < 3000 && line.starts_with("xxxx") {
                    removed += line.len() + 1;
                    false
                } else {
                    true
                }
            })
            .collect();
        std::fs::write(&template_path, kept.join("\n") + "\n")
            .map_err(|e| HarnessError::AgentUnavailable(e.to_string()))?;
        Ok(())
    }
}

/// Installs a fake compiler: fails on a COMPILEERROR marker, otherwise
/// reports success and models pages as bytes/3000 + 1, emitting the aux
/// newlabel needed by the page probe.
pub fn install_fake_compiler(dir: &Path) -> CommandSpec {
    let script = dir.join("fake-tectonic.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nf=\"$1\"\nif grep -q COMPILEERROR \"$f\"; then\n  echo \"! Undefined control sequence. COMPILEERROR\"\n  exit 1\nfi\nbytes=$(wc -c < \"$f\")\npages=$((bytes / 3000 + 1))\naux=\"${f%.tex}.aux\"\nif grep -q 'papereval@main@pages' \"$f\"; then\n  printf '\\\\newlabel{papereval@main@pages}{{}{%s}}\\n' \"$pages\" > \"$aux\"\nelse\n  : > \"$aux\"\nfi\necho \"fake compile ok ($pages pages)\"\n",
    )
    .unwrap();
    make_executable(&script);
    CommandSpec {
        program: script.to_string_lossy().into_owned(),
        args: vec!["{file}".to_string()],
    }
}

/// Installs a fake lint tool: reports a finding only on a LINTWARN marker.
pub fn install_fake_lint(dir: &Path) -> CommandSpec {
    let script = dir.join("fake-chktex.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nf=\"$1\"\nif grep -q LINTWARN \"$f\"; then\n  echo \"Warning 1 in $f: suspicious spacing\"\nfi\nexit 0\n",
    )
    .unwrap();
    make_executable(&script);
    CommandSpec {
        program: script.to_string_lossy().into_owned(),
        args: vec!["{file}".to_string()],
    }
}

fn make_executable(path: &Path) {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mut perms = std::fs::metadata(path).unwrap().permissions();
        perms.set_mode(0o755);
        std::fs::set_permissions(path, perms).unwrap();
    }
}

fn fenced_block(text: &str, index: usize) -> Option<String> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after_open = &rest[open + 3..];
        let lang_end = after_open.find('\n')?;
        let body_start = lang_end + 1;
        let close = after_open[body_start..].find("```")?;
        blocks.push(after_open[body_start..body_start + close].trim().to_string());
        rest = &after_open[body_start + close + 3..];
    }
    blocks.into_iter().nth(index)
}
