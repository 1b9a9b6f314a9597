//! Command-line surface binding the evaluation pipeline together.
//!
//! Exit codes:
//!   0  success
//!   1  unexpected error
//!   2  validation failure (bundle checks, schema versions, missing rubric)
//!   3  evaluation produced an incomplete report without diagnostics
//!   4  judge misconfiguration (backend config, credentials, cassette)
//!   5  writing run exhausted its loop budgets

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use papereval_core::align::RuleTable;
use papereval_core::harness::{CommandSpec, HarnessConfig, ProcessWriterAgent};
use papereval_core::judge::verifier::{ProcessVerifier, ProcessVerifierConfig};
use papereval_core::judge::{
    BackendConfig, CassetteMode, HttpBackend, JudgeGateway, VerifierGateway,
};
use papereval_core::pipeline::{evaluate, EvaluateOptions, PipelineError};
use papereval_core::prep::{
    build_bundle, FileResolver, HttpResolver, OverviewLength, OverviewSource, PaperBundle,
    PaperKind, PrepOptions,
};
use papereval_core::report::{leaderboard, AvgMode, EvaluationReport, ReportError};
use papereval_core::Diagnostics;

const EXIT_VALIDATION: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;
const EXIT_JUDGE_CONFIG: u8 = 4;
const EXIT_BUDGET: u8 = 5;

#[derive(Parser)]
#[command(
    name = "papereval",
    version,
    about = "Score AI-reconstructed LaTeX papers against their originals"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalFlags {
    /// Cassette file for deterministic record/replay of judge traffic.
    #[arg(long, global = true)]
    cassette: Option<PathBuf>,
    /// record, replay, or passthrough.
    #[arg(long, global = true, default_value = "passthrough")]
    cassette_mode: String,
    /// Maximum in-flight judge calls.
    #[arg(long, global = true, default_value_t = 4)]
    parallelism: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory of prompt-template overrides (<name>.txt files).
    #[arg(long, global = true)]
    prompts_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build an evaluation bundle from an arXiv-style source directory.
    Prep {
        /// Source directory containing the GT tex, bib, and assets.
        #[arg(long)]
        source: PathBuf,
        /// JSON map of citation key to abstract, used to augment the bib.
        #[arg(long)]
        abstracts: Option<PathBuf>,
        /// Scholarly-metadata endpoint for abstract lookup by title.
        #[arg(long)]
        abstracts_api: Option<String>,
        /// Politeness bound for the abstracts API, requests per second.
        #[arg(long, default_value_t = 2.0)]
        abstracts_rps: f64,
        /// Copy this file in as research_overview.md.
        #[arg(long)]
        overview_file: Option<PathBuf>,
        /// Generate research_overview.md through the judge.
        #[arg(long)]
        gen_overview: bool,
        /// method, benchmark, or both.
        #[arg(long, default_value = "method")]
        paper_kind: String,
        /// default or long.
        #[arg(long, default_value = "default")]
        overview_length: String,
        /// Judge backend config (needed only with --gen-overview).
        #[arg(long)]
        judge_config: Option<PathBuf>,
    },
    /// Run the full evaluation pipeline over a bundle and a generated paper.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        /// Generated paper (LaTeX) to score.
        #[arg(long)]
        pred: PathBuf,
        /// Judge backend config file.
        #[arg(long)]
        judge_config: Option<PathBuf>,
        /// Generate rubric.json when the bundle has none.
        #[arg(long)]
        generate_rubric: bool,
        /// pooled or sectionwise.
        #[arg(long, default_value = "pooled")]
        avg_mode: String,
        /// Keyword rule table override (keyword<TAB>Category lines).
        #[arg(long)]
        section_rules: Option<PathBuf>,
        /// Stage-2 verification agent command.
        #[arg(long)]
        verifier_cmd: Option<String>,
        #[arg(long, num_args = 0.., value_delimiter = ' ')]
        verifier_args: Vec<String>,
    },
    /// Roll per-paper reports into leaderboard tables.
    Report {
        /// Row spec "AGENT,MODEL=path1,path2"; repeatable.
        #[arg(long = "row")]
        rows: Vec<String>,
        /// Bare report paths grouped under --agent/--model.
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "run")]
        agent: String,
        #[arg(long, default_value = "default")]
        model: String,
    },
    /// Drive a writer agent over a bundle copy.
    Write {
        #[arg(long)]
        bundle: PathBuf,
        /// Workspace directory for the agent's bundle copy.
        #[arg(long)]
        workspace: PathBuf,
        /// Writer agent command (instruction arrives on stdin).
        #[arg(long)]
        agent_cmd: String,
        #[arg(long, num_args = 0.., value_delimiter = ' ')]
        agent_args: Vec<String>,
        #[arg(long, default_value_t = 8)]
        num_page: u32,
        #[arg(long, default_value = "two-column")]
        column_type: String,
        #[arg(long, default_value_t = 5)]
        reflection_cap: u32,
        #[arg(long, default_value_t = 4)]
        page_cap: u32,
        #[arg(long, default_value = "tectonic")]
        compiler_cmd: String,
        #[arg(long, num_args = 0.., value_delimiter = ' ', default_value = "{file}")]
        compiler_args: Vec<String>,
        #[arg(long, default_value = "chktex")]
        lint_cmd: String,
        #[arg(long, num_args = 0.., value_delimiter = ' ', default_value = "{file}")]
        lint_args: Vec<String>,
    },
    /// Generate rubric.json for a bundle from its GT paper.
    RubricGen {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        judge_config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(dir) = &cli.global.prompts_dir {
        if let Err(e) = papereval_core::judge::prompts::load_overrides(dir) {
            eprintln!("error: cannot load prompt overrides: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Prep {
            source,
            abstracts,
            abstracts_api,
            abstracts_rps,
            overview_file,
            gen_overview,
            paper_kind,
            overview_length,
            judge_config,
        } => {
            let out = require_out(&cli.global)?;
            let overview = if let Some(path) = overview_file {
                OverviewSource::CopyFrom(path)
            } else if gen_overview {
                let kind: PaperKind = paper_kind.parse().map_err(anyhow::Error::msg)?;
                let length: OverviewLength =
                    overview_length.parse().map_err(anyhow::Error::msg)?;
                OverviewSource::Generate { kind, length }
            } else {
                OverviewSource::Auto
            };
            let resolver: Option<Box<dyn papereval_core::prep::AbstractResolver>> =
                if let Some(path) = abstracts {
                    Some(Box::new(
                        FileResolver::load(&path).map_err(anyhow::Error::msg)?,
                    ))
                } else {
                    abstracts_api.map(|endpoint| {
                        Box::new(HttpResolver::new(&endpoint, abstracts_rps))
                            as Box<dyn papereval_core::prep::AbstractResolver>
                    })
                };

            let judge = if gen_overview {
                match build_judge(&cli.global, judge_config.as_deref()) {
                    Ok(judge) => Some(judge),
                    Err(e) => return exit_with(EXIT_JUDGE_CONFIG, &e),
                }
            } else {
                None
            };

            let mut diagnostics = Diagnostics::new();
            let options = PrepOptions { overview, resolver };
            let bundle =
                match build_bundle(&source, &out, judge.as_ref(), &options, &mut diagnostics) {
                    Ok(bundle) => bundle,
                    Err(e @ papereval_core::prep::PrepError::Source(_)) => {
                        return exit_with(EXIT_VALIDATION, &e.to_string())
                    }
                    Err(e) => return Err(e.into()),
                };
            print_diagnostics(&diagnostics);

            let validation = bundle.validate();
            for check in &validation.checks {
                println!(
                    "[{}] {}{}",
                    if check.ok { "ok" } else { "FAIL" },
                    check.name,
                    if check.ok {
                        String::new()
                    } else {
                        format!(": {}", check.detail)
                    }
                );
            }
            if validation.is_ok() {
                println!("bundle ready at {}", out.display());
                Ok(ExitCode::SUCCESS)
            } else {
                let failing = validation.first_failure().expect("failure present");
                exit_with(
                    EXIT_VALIDATION,
                    &format!(
                        "bundle validation failed: {}: {}",
                        failing.name, failing.detail
                    ),
                )
            }
        }

        Command::Evaluate {
            bundle,
            pred,
            judge_config,
            generate_rubric,
            avg_mode,
            section_rules,
            verifier_cmd,
            verifier_args,
        } => {
            let out = require_out(&cli.global)?;
            let bundle = PaperBundle::open(&bundle);

            let validation = bundle.validate();
            if let Some(failing) = validation.first_failure() {
                return exit_with(
                    EXIT_VALIDATION,
                    &format!(
                        "bundle validation failed: {}: {}",
                        failing.name, failing.detail
                    ),
                );
            }
            if !bundle.rubric_json().is_file() && !generate_rubric {
                return exit_with(
                    EXIT_VALIDATION,
                    "rubric.json is missing from the bundle; pass --generate-rubric or add the file",
                );
            }

            let judge = match build_judge(&cli.global, judge_config.as_deref()) {
                Ok(judge) => judge,
                Err(e) => return exit_with(EXIT_JUDGE_CONFIG, &e),
            };
            let verifier = build_verifier(&cli.global, verifier_cmd, verifier_args)?;

            let rules = match section_rules {
                Some(path) => RuleTable::load(&path).map_err(anyhow::Error::msg)?,
                None => RuleTable::default(),
            };
            let options = EvaluateOptions {
                parallelism: cli.global.parallelism,
                avg_mode: parse_avg_mode(&avg_mode)?,
                generate_rubric,
                rules,
            };

            let output = match evaluate(&bundle, &pred, &judge, &verifier, &options) {
                Ok(output) => output,
                Err(PipelineError::MissingRubric) => {
                    return exit_with(EXIT_VALIDATION, &PipelineError::MissingRubric.to_string())
                }
                Err(PipelineError::Report(ReportError::IncompleteRun(what))) => {
                    return exit_with(
                        EXIT_INCOMPLETE,
                        &format!("incomplete run: {what} missing without diagnostics"),
                    )
                }
                Err(e) => return Err(e.into()),
            };

            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.json"), output.report.to_json())?;
            let claims_json =
                serde_json::to_string_pretty(&output.claims_file).expect("claims serialize");
            std::fs::write(out.join("claims.json"), claims_json + "\n")?;

            // stage timings: stderr + side file, never inside report.json
            let timings: Vec<serde_json::Value> = output
                .stage_timings
                .iter()
                .map(|(stage, duration)| {
                    serde_json::json!({"stage": stage, "millis": duration.as_millis() as u64})
                })
                .collect();
            std::fs::write(
                out.join("timings.json"),
                serde_json::to_string_pretty(&timings)? + "\n",
            )?;
            for (stage, duration) in &output.stage_timings {
                eprintln!("stage {stage}: {} ms", duration.as_millis());
            }

            println!(
                "avg_rubric {}  hallucinations {}  citation F1 {}",
                output.report.avg_rubric.to_decimal(2),
                output.report.hallucination.headline,
                output.report.citation.f1.to_decimal(2)
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Report {
            rows,
            paths,
            agent,
            model,
        } => {
            let out = require_out(&cli.global)?;
            let mut groups: Vec<((String, String), Vec<EvaluationReport>)> = Vec::new();

            let load_all = |groups: &mut Vec<((String, String), Vec<EvaluationReport>)>,
                                label: (String, String),
                                files: Vec<PathBuf>|
             -> anyhow::Result<Option<ExitCode>> {
                let mut reports = Vec::new();
                for path in files {
                    match EvaluationReport::load(&path) {
                        Ok(report) => reports.push(report),
                        Err(ReportError::SchemaMismatch { expected, found }) => {
                            eprintln!(
                                "error: {} has schema {found}, expected {expected}",
                                path.display()
                            );
                            return Ok(Some(ExitCode::from(EXIT_VALIDATION)));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                if !reports.is_empty() {
                    groups.push((label, reports));
                }
                Ok(None)
            };

            for spec in rows {
                let (label, list) = parse_row_spec(&spec)?;
                if let Some(code) = load_all(&mut groups, label, list)? {
                    return Ok(code);
                }
            }
            if !paths.is_empty() {
                if let Some(code) = load_all(&mut groups, (agent, model), paths)? {
                    return Ok(code);
                }
            }
            if groups.is_empty() {
                anyhow::bail!("no reports given; pass --row specs or report paths");
            }

            let board = leaderboard(groups);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("leaderboard.md"), board.render_markdown())?;
            std::fs::write(out.join("leaderboard.json"), board.to_json())?;
            println!("leaderboard written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Write {
            bundle,
            workspace,
            agent_cmd,
            agent_args,
            num_page,
            column_type,
            reflection_cap,
            page_cap,
            compiler_cmd,
            compiler_args,
            lint_cmd,
            lint_args,
        } => {
            let bundle = PaperBundle::open(&bundle);
            let validation = bundle.validate();
            if let Some(failing) = validation
                .checks
                .iter()
                .find(|c| !c.ok && c.name != "rubric.json loads")
            {
                return exit_with(
                    EXIT_VALIDATION,
                    &format!(
                        "bundle validation failed: {}: {}",
                        failing.name, failing.detail
                    ),
                );
            }

            let mut config = HarnessConfig::new(
                CommandSpec {
                    program: compiler_cmd,
                    args: compiler_args,
                },
                CommandSpec {
                    program: lint_cmd,
                    args: lint_args,
                },
            );
            config.num_page = num_page;
            config.column_type = column_type;
            config.reflection_cap = reflection_cap;
            config.page_cap = page_cap;

            let mut agent = ProcessWriterAgent {
                command: agent_cmd,
                args: agent_args,
            };
            let outcome =
                papereval_core::harness::run_writeup(&bundle, &workspace, &mut agent, &config)?;

            let out = cli.global.out.clone().unwrap_or_else(|| workspace.clone());
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("final.tex"), &outcome.final_tex)?;
            std::fs::write(out.join("transcript.jsonl"), outcome.transcript.to_jsonl())?;

            println!(
                "compile {}  pages {}  reflections {}  page iterations {}",
                if outcome.compile_success {
                    "ok"
                } else {
                    "FAILED"
                },
                outcome.main_pages,
                outcome.reflection_iterations,
                outcome.page_iterations
            );
            if outcome.budget_exhausted {
                return exit_with(EXIT_BUDGET, "loop budget exhausted before convergence");
            }
            if !outcome.compile_success {
                return exit_with(EXIT_BUDGET, "final document does not compile");
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::RubricGen {
            bundle,
            judge_config,
        } => {
            let bundle = PaperBundle::open(&bundle);
            let judge = match build_judge(&cli.global, judge_config.as_deref()) {
                Ok(judge) => judge,
                Err(e) => return exit_with(EXIT_JUDGE_CONFIG, &e),
            };
            let gt = papereval_core::latex::LatexDocument::load(&bundle.gt_tex())?;
            let mut diagnostics = Diagnostics::new();
            let gt_sections = papereval_core::align::classify_document(
                &gt,
                &RuleTable::default(),
                &judge,
                cli.global.parallelism,
                "gt",
                &mut diagnostics,
            );
            let map = papereval_core::align::SectionMap {
                gt: gt_sections,
                pred: Default::default(),
            };
            let rubric = papereval_core::rubric::generate_rubric(
                "rubric",
                &map,
                &judge,
                cli.global.parallelism,
                &mut diagnostics,
            );
            rubric
                .save(&bundle.rubric_json())
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            print_diagnostics(&diagnostics);
            println!("rubric written to {}", bundle.rubric_json().display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn require_out(global: &GlobalFlags) -> anyhow::Result<PathBuf> {
    global
        .out
        .clone()
        .ok_or_else(|| anyhow::anyhow!("--out directory is required for this command"))
}

fn parse_avg_mode(mode: &str) -> anyhow::Result<AvgMode> {
    match mode {
        "pooled" => Ok(AvgMode::Pooled),
        "sectionwise" => Ok(AvgMode::Sectionwise),
        other => anyhow::bail!("unknown avg mode '{other}' (expected pooled or sectionwise)"),
    }
}

/// "AGENT,MODEL=path1,path2" -> ((agent, model), [paths])
fn parse_row_spec(spec: &str) -> anyhow::Result<((String, String), Vec<PathBuf>)> {
    let (label, paths) = spec
        .split_once('=')
        .ok_or_else(|| anyhow::anyhow!("row spec '{spec}' needs AGENT,MODEL=paths"))?;
    let (agent, model) = label
        .split_once(',')
        .ok_or_else(|| anyhow::anyhow!("row label '{label}' needs AGENT,MODEL"))?;
    let files = paths
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| PathBuf::from(p.trim()))
        .collect();
    Ok(((agent.trim().to_string(), model.trim().to_string()), files))
}

/// Builds the judge gateway from global flags. Replay mode needs only the
/// cassette; record and passthrough need a backend config. Credentials come
/// from the environment variable named inside that config, never from flags.
fn build_judge(global: &GlobalFlags, config_path: Option<&Path>) -> Result<JudgeGateway, String> {
    let mode: CassetteMode = global.cassette_mode.parse()?;
    match mode {
        CassetteMode::Replay => {
            let cassette = global
                .cassette
                .as_deref()
                .ok_or_else(|| "replay mode requires --cassette".to_string())?;
            JudgeGateway::replay_only(cassette, global.parallelism).map_err(|e| e.to_string())
        }
        _ => {
            let config_path = config_path.ok_or_else(|| {
                "a judge backend config (--judge-config) is required unless --cassette-mode replay"
                    .to_string()
            })?;
            let config = BackendConfig::load(config_path)?;
            let backend = HttpBackend::new(config)?;
            JudgeGateway::new(
                Box::new(backend),
                mode,
                global.cassette.as_deref(),
                global.parallelism,
                3,
            )
            .map_err(|e| e.to_string())
        }
    }
}

fn build_verifier(
    global: &GlobalFlags,
    command: Option<String>,
    args: Vec<String>,
) -> anyhow::Result<VerifierGateway> {
    let gateway = match command {
        Some(command) => VerifierGateway::new(Box::new(ProcessVerifier::new(
            ProcessVerifierConfig { command, args },
        ))),
        None => VerifierGateway::unavailable(),
    };
    let Some(cassette) = &global.cassette else {
        return Ok(gateway);
    };
    let mode: CassetteMode = global.cassette_mode.parse().map_err(anyhow::Error::msg)?;
    let verifier_cassette = cassette.with_extension("verifier.jsonl");
    let gateway = match mode {
        CassetteMode::Record => gateway
            .with_cassette(CassetteMode::Record, &verifier_cassette)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        CassetteMode::Replay if verifier_cassette.is_file() => gateway
            .with_cassette(CassetteMode::Replay, &verifier_cassette)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        _ => gateway,
    };
    Ok(gateway)
}

fn print_diagnostics(diagnostics: &Diagnostics) {
    for diag in diagnostics.items() {
        eprintln!("[{}] {:?}: {}", diag.stage, diag.kind, diag.message);
    }
}

fn exit_with(code: u8, message: &str) -> anyhow::Result<ExitCode> {
    eprintln!("error: {message}");
    Ok(ExitCode::from(code))
}
