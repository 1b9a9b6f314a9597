//! Drives an external writer agent over a bundle copy: the writeup
//! instruction, the compile/lint reflection loop, then the page-limit
//! adjustment loop.
//!
//! The harness never edits template.tex itself; the agent owns that file.
//! Page counts are measured by compiling a probe copy with a label anchored
//! at the bibliography and reading its page number from the aux output.
//! Transcript timestamps are a logical step counter so a rerun with the same
//! scripted agent produces an identical transcript.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::prompts;
use crate::prep::PaperBundle;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("writer agent unavailable: {0}")]
    AgentUnavailable(String),
    #[error("compiler missing: {0}")]
    CompilerMissing(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An external writing agent. `send` delivers one instruction; the agent
/// edits template.tex inside the workspace before returning.
pub trait WriterAgent {
    fn send(&mut self, instruction: &str, workspace: &Path) -> Result<(), HarnessError>;
}

/// Process-based agent: the command is spawned with the instruction on
/// standard input and the workspace as its working directory.
pub struct ProcessWriterAgent {
    pub command: String,
    pub args: Vec<String>,
}

impl WriterAgent for ProcessWriterAgent {
    fn send(&mut self, instruction: &str, workspace: &Path) -> Result<(), HarnessError> {
        use std::io::Write;
        let mut child = Command::new(&self.command)
            .args(&self.args)
            .current_dir(workspace)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                HarnessError::AgentUnavailable(format!("cannot spawn '{}': {e}", self.command))
            })?;
        if let Some(stdin) = child.stdin.as_mut() {
            stdin
                .write_all(instruction.as_bytes())
                .map_err(|e| HarnessError::AgentUnavailable(format!("agent stdin: {e}")))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| HarnessError::AgentUnavailable(format!("agent wait: {e}")))?;
        if !output.status.success() {
            return Err(HarnessError::AgentUnavailable(format!(
                "agent exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr)
            )));
        }
        Ok(())
    }
}

/// A pluggable command; `{file}` in args is replaced with the target path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl CommandSpec {
    pub fn new(program: &str, args: &[&str]) -> Self {
        CommandSpec {
            program: program.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }

    fn run(&self, workspace: &Path, file: &str) -> Result<(bool, String), HarnessError> {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.replace("{file}", file))
            .collect();
        let output = Command::new(&self.program)
            .args(&args)
            .current_dir(workspace)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    HarnessError::CompilerMissing(format!("'{}' not found", self.program))
                } else {
                    HarnessError::CompilerMissing(format!("'{}': {e}", self.program))
                }
            })?;
        let mut log = String::from_utf8_lossy(&output.stdout).into_owned();
        log.push_str(&String::from_utf8_lossy(&output.stderr));
        Ok((output.status.success(), log))
    }
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub num_page: u32,
    pub column_type: String,
    pub reflection_cap: u32,
    pub page_cap: u32,
    pub compiler: CommandSpec,
    pub lint: CommandSpec,
}

impl HarnessConfig {
    pub fn new(compiler: CommandSpec, lint: CommandSpec) -> Self {
        HarnessConfig {
            num_page: 8,
            column_type: "two-column".to_string(),
            reflection_cap: 5,
            page_cap: 4,
            compiler,
            lint,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileResult {
    pub success: bool,
    pub log: String,
    /// Pages before the References heading; 0 when unmeasurable.
    pub main_pages: u32,
    pub lint_findings: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: String,
    pub content: String,
    /// Logical step counter, not wall time, so reruns are byte-identical.
    pub timestamp: u64,
}

#[derive(Debug, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    fn push(&mut self, role: &str, content: &str) {
        let timestamp = self.entries.len() as u64;
        self.entries.push(TranscriptEntry {
            role: role.to_string(),
            content: content.to_string(),
            timestamp,
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("transcript entry serializes"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

#[derive(Debug)]
pub struct WriteupOutcome {
    pub workspace: PathBuf,
    pub final_tex: String,
    pub transcript: Transcript,
    pub compile_success: bool,
    pub main_pages: u32,
    pub reflection_iterations: u32,
    pub page_iterations: u32,
    pub budget_exhausted: bool,
}

const PAGE_ANCHOR: &str = "papereval@main@pages";

/// Lints and compiles the current template.tex. Findings include a
/// filecontents check: embedding the bibliography is prohibited and keeps
/// the reflection loop going even when the compile is clean.
pub fn check_workspace(
    workspace: &Path,
    config: &HarnessConfig,
) -> Result<CompileResult, HarnessError> {
    let (_lint_ok, mut lint_findings) = config.lint.run(workspace, "template.tex")?;
    let template_path = workspace.join("template.tex");
    let template_text =
        std::fs::read_to_string(&template_path).map_err(io_err(&template_path))?;
    if template_text.contains("\\begin{filecontents}") {
        if !lint_findings.is_empty() && !lint_findings.ends_with('\n') {
            lint_findings.push('\n');
        }
        lint_findings.push_str(
            "Do not use \\begin{filecontents}{references.bib}. All citations must refer to the external references.bib file.\n",
        );
    }

    let (success, log) = config.compiler.run(workspace, "template.tex")?;
    let main_pages = if success {
        measure_main_pages(workspace, config).unwrap_or(1)
    } else {
        0
    };

    Ok(CompileResult {
        success,
        log,
        main_pages,
        lint_findings: lint_findings.trim().to_string(),
    })
}

/// Compiles a probe copy with a `\label` injected directly before the
/// bibliography and reads its page from the probe aux file.
fn measure_main_pages(workspace: &Path, config: &HarnessConfig) -> Option<u32> {
    let template_path = workspace.join("template.tex");
    let text = std::fs::read_to_string(&template_path).ok()?;
    let anchor = format!("\\label{{{PAGE_ANCHOR}}}");
    let insert_before = ["\\bibliography{", "\\printbibliography", "\\begin{thebibliography}"]
        .iter()
        .filter_map(|marker| text.find(marker))
        .min()
        .unwrap_or_else(|| text.find("\\end{document}").unwrap_or(text.len()));
    let probed = format!(
        "{}{}\n{}",
        &text[..insert_before],
        anchor,
        &text[insert_before..]
    );
    let probe_path = workspace.join("__pages_probe.tex");
    std::fs::write(&probe_path, probed).ok()?;
    let result = config.compiler.run(workspace, "__pages_probe.tex");
    let pages = match result {
        Ok((true, _)) => {
            let aux = workspace.join("__pages_probe.aux");
            let aux_text = std::fs::read_to_string(&aux).ok()?;
            parse_anchor_page(&aux_text)
        }
        _ => None,
    };
    let _ = std::fs::remove_file(&probe_path);
    let _ = std::fs::remove_file(workspace.join("__pages_probe.aux"));
    pages
}

/// Finds `\newlabel{anchor}{{..}{PAGE}...}` in aux output.
fn parse_anchor_page(aux_text: &str) -> Option<u32> {
    let marker = format!("\\newlabel{{{PAGE_ANCHOR}}}");
    let pos = aux_text.find(&marker)?;
    let rest = &aux_text[pos + marker.len()..];
    // {{section}{page}...}
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in rest.chars() {
        match c {
            '{' => {
                depth += 1;
                if depth == 2 {
                    current.clear();
                }
            }
            '}' => {
                if depth == 2 {
                    groups.push(current.clone());
                }
                if depth == 1 {
                    break;
                }
                depth = depth.saturating_sub(1);
            }
            _ => {
                if depth >= 2 {
                    current.push(c);
                }
            }
        }
    }
    groups.get(1)?.trim().parse().ok()
}

/// One reflection step: lint + compile, and the agent is invoked only when
/// findings or errors exist.
pub fn reflect_once(
    workspace: &Path,
    agent: &mut dyn WriterAgent,
    config: &HarnessConfig,
    transcript: &mut Transcript,
) -> Result<(CompileResult, bool), HarnessError> {
    let result = check_workspace(workspace, config)?;
    transcript.push("compile", &result.log);
    if result.success && result.lint_findings.is_empty() {
        // no errors reported, no changes necessary
        return Ok((result, false));
    }
    let instruction = prompts::render(
        "reflection",
        &[
            ("{check_output}", result.lint_findings.as_str()),
            ("{compile_output}", result.log.as_str()),
        ],
    );
    transcript.push("instruction", &instruction);
    agent.send(&instruction, workspace)?;
    Ok((result, true))
}

/// Page-limit loop: issues the adjustment instruction until the main text
/// hits the target or the iteration cap. Returns the final result and the
/// number of agent iterations spent.
pub fn adjust_pages(
    workspace: &Path,
    agent: &mut dyn WriterAgent,
    config: &HarnessConfig,
    target_pages: u32,
    transcript: &mut Transcript,
) -> Result<(CompileResult, u32, bool), HarnessError> {
    let mut iterations = 0u32;
    let mut current = check_workspace(workspace, config)?;
    loop {
        if !current.success || current.main_pages == target_pages {
            return Ok((current, iterations, false));
        }
        if iterations >= config.page_cap {
            return Ok((current, iterations, true));
        }
        let (status, action) = if current.main_pages > target_pages {
            ("too long", "shorten it")
        } else {
            ("too short", "expand it")
        };
        let instruction = prompts::render(
            "page_adjust",
            &[
                ("{main_pages}", current.main_pages.to_string().as_str()),
                ("{page_limit}", target_pages.to_string().as_str()),
                ("{status}", status),
                ("{action}", action),
            ],
        );
        transcript.push("instruction", &instruction);
        agent.send(&instruction, workspace)?;
        iterations += 1;
        current = check_workspace(workspace, config)?;
        transcript.push("compile", &current.log);
    }
}

/// Full writing run over an isolated copy of the bundle: initial writeup
/// instruction, reflection loop, then page loop. The original bundle is
/// never touched.
pub fn run_writeup(
    bundle: &PaperBundle,
    workspace: &Path,
    agent: &mut dyn WriterAgent,
    config: &HarnessConfig,
) -> Result<WriteupOutcome, HarnessError> {
    copy_tree(bundle.root(), workspace)?;
    let mut transcript = Transcript::default();

    let overview_path = bundle.research_overview();
    let overview = std::fs::read_to_string(&overview_path).map_err(io_err(&overview_path))?;
    let table_summary =
        std::fs::read_to_string(bundle.table_summary()).unwrap_or_default();
    let figure_summary =
        std::fs::read_to_string(bundle.figure_summary()).unwrap_or_default();

    let initial = prompts::render(
        "writeup",
        &[
            ("{research_overview_text}", overview.as_str()),
            ("{table_descriptions}", table_summary.trim_end()),
            ("{plot_descriptions}", figure_summary.trim_end()),
            ("{num_page}", config.num_page.to_string().as_str()),
            ("{column_type}", config.column_type.as_str()),
        ],
    );
    transcript.push("instruction", &initial);
    agent.send(&initial, workspace)?;

    // reflection loop
    let mut reflection_iterations = 0u32;
    let mut budget_exhausted = false;
    let mut last_result;
    loop {
        let result = check_workspace(workspace, config)?;
        transcript.push("compile", &result.log);
        if result.success && result.lint_findings.is_empty() {
            last_result = result;
            break;
        }
        if reflection_iterations >= config.reflection_cap {
            budget_exhausted = true;
            last_result = result;
            break;
        }
        let instruction = prompts::render(
            "reflection",
            &[
                ("{check_output}", result.lint_findings.as_str()),
                ("{compile_output}", result.log.as_str()),
            ],
        );
        transcript.push("instruction", &instruction);
        agent.send(&instruction, workspace)?;
        reflection_iterations += 1;
    }

    // page loop only makes sense over a compiling document
    let mut page_iterations = 0u32;
    if last_result.success {
        let (result, iterations, exhausted) =
            adjust_pages(workspace, agent, config, config.num_page, &mut transcript)?;
        page_iterations = iterations;
        budget_exhausted = budget_exhausted || exhausted;
        last_result = result;
    }

    let template_path = workspace.join("template.tex");
    let final_tex = std::fs::read_to_string(&template_path).map_err(io_err(&template_path))?;

    Ok(WriteupOutcome {
        workspace: workspace.to_path_buf(),
        final_tex,
        compile_success: last_result.success,
        main_pages: last_result.main_pages,
        transcript,
        reflection_iterations,
        page_iterations,
        budget_exhausted,
    })
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(to).map_err(io_err(to))?;
    for entry in std::fs::read_dir(from).map_err(io_err(from))? {
        let entry = entry.map_err(io_err(from))?;
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target).map_err(io_err(&target))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_page_parsing() {
        let aux = format!(
            "\\relax\n\\newlabel{{{PAGE_ANCHOR}}}{{{{}}{{9}}}}\n\\newlabel{{other}}{{{{1}}{{2}}}}\n"
        );
        assert_eq!(parse_anchor_page(&aux), Some(9));
    }

    #[test]
    fn anchor_page_with_section_group() {
        let aux = format!("\\newlabel{{{PAGE_ANCHOR}}}{{{{3.2}}{{7}}{{title}}}}\n");
        assert_eq!(parse_anchor_page(&aux), Some(7));
    }

    #[test]
    fn page_adjust_instruction_text() {
        let instruction = prompts::render(
            "page_adjust",
            &[
                ("{main_pages}", "9"),
                ("{page_limit}", "8"),
                ("{status}", "too long"),
                ("{action}", "shorten it"),
            ],
        );
        assert!(instruction.contains("currently 9 pages"));
        assert!(instruction.contains("The target is\n8 pages"));
        assert!(instruction.contains("Do NOT move content to or create an Appendix"));
        assert!(instruction.contains("Do not add or remove more than 1000 characters"));
    }

    #[test]
    fn transcript_uses_logical_clock() {
        let mut t = Transcript::default();
        t.push("instruction", "a");
        t.push("compile", "b");
        assert_eq!(t.entries()[0].timestamp, 0);
        assert_eq!(t.entries()[1].timestamp, 1);
        let jsonl = t.to_jsonl();
        assert_eq!(jsonl.lines().count(), 2);
    }
}
