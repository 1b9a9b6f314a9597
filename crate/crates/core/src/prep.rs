//! Evaluation-bundle construction from an arXiv-style source directory:
//! template skeleton, table/figure extraction with summary files, bib
//! abstract augmentation, and research-overview generation.
//!
//! A bundle is a fixed-layout directory: gt_main.tex, template.tex,
//! references.bib, figures/, tables/, code/, figure_summary.txt,
//! table_summary.txt, research_overview.md, rubric.json.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::judge::verifier::hash_tree;
use crate::judge::{JudgeError, JudgeGateway, JudgeRequest, MarkdownContract};
use crate::latex::{parse_bib, scan, BibDatabase, BibEntry, LatexDocument, LatexError};

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("source problem: {0}")]
    Source(String),
    #[error(transparent)]
    Latex(#[from] LatexError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("overview generation failed: {0}")]
    Overview(#[from] JudgeError),
}

#[derive(Debug, Error)]
pub enum ResolverError {
    #[error("abstract resolver unavailable: {0}")]
    Unavailable(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PrepError + '_ {
    move |source| PrepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fixed-layout handle over a bundle directory.
#[derive(Debug, Clone)]
pub struct PaperBundle {
    root: PathBuf,
}

impl PaperBundle {
    pub fn open(root: &Path) -> Self {
        PaperBundle {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn gt_tex(&self) -> PathBuf {
        self.root.join("gt_main.tex")
    }
    pub fn template(&self) -> PathBuf {
        self.root.join("template.tex")
    }
    pub fn references_bib(&self) -> PathBuf {
        self.root.join("references.bib")
    }
    pub fn figures_dir(&self) -> PathBuf {
        self.root.join("figures")
    }
    pub fn tables_dir(&self) -> PathBuf {
        self.root.join("tables")
    }
    pub fn code_dir(&self) -> PathBuf {
        self.root.join("code")
    }
    pub fn figure_summary(&self) -> PathBuf {
        self.root.join("figure_summary.txt")
    }
    pub fn table_summary(&self) -> PathBuf {
        self.root.join("table_summary.txt")
    }
    pub fn research_overview(&self) -> PathBuf {
        self.root.join("research_overview.md")
    }
    pub fn rubric_json(&self) -> PathBuf {
        self.root.join("rubric.json")
    }

    pub fn content_hash(&self) -> std::io::Result<String> {
        hash_tree(&self.root)
    }

    /// Full validation: required files, template/GT heading equality, and
    /// summary-directory bijection. Returns every check so callers can name
    /// the failing one.
    pub fn validate(&self) -> BundleValidation {
        let mut checks = Vec::new();
        let mut check = |name: &str, outcome: Result<(), String>| {
            checks.push(BundleCheck {
                name: name.to_string(),
                ok: outcome.is_ok(),
                detail: outcome.err().unwrap_or_default(),
            });
        };

        for (name, path) in [
            ("gt_main.tex exists", self.gt_tex()),
            ("template.tex exists", self.template()),
            ("references.bib exists", self.references_bib()),
            ("figure_summary.txt exists", self.figure_summary()),
            ("table_summary.txt exists", self.table_summary()),
            ("research_overview.md exists", self.research_overview()),
        ] {
            check(
                name,
                if path.is_file() {
                    Ok(())
                } else {
                    Err(format!("missing {}", path.display()))
                },
            );
        }
        for (name, path) in [
            ("figures/ exists", self.figures_dir()),
            ("tables/ exists", self.tables_dir()),
        ] {
            check(
                name,
                if path.is_dir() {
                    Ok(())
                } else {
                    Err(format!("missing directory {}", path.display()))
                },
            );
        }

        check("references.bib parses", {
            match std::fs::read_to_string(self.references_bib()) {
                Ok(text) => {
                    let db = parse_bib(&text);
                    if db.is_empty() {
                        Err("references.bib contains no entries".to_string())
                    } else {
                        Ok(())
                    }
                }
                Err(e) => Err(e.to_string()),
            }
        });

        check("template headings equal GT headings in order", {
            match (
                LatexDocument::load(&self.gt_tex()),
                LatexDocument::load(&self.template()),
            ) {
                (Ok(gt), Ok(template)) => {
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
                    if gt_headings == template_headings {
                        Ok(())
                    } else {
                        Err(format!(
                            "heading sequences differ: GT {gt_headings:?} vs template {template_headings:?}"
                        ))
                    }
                }
                (Err(e), _) => Err(format!("GT does not parse: {e}")),
                (_, Err(e)) => Err(format!("template does not parse: {e}")),
            }
        });

        check(
            "figure_summary.txt bijects with figures/",
            summary_bijection(&self.figure_summary(), &self.figures_dir()),
        );
        check(
            "table_summary.txt bijects with tables/",
            summary_bijection(&self.table_summary(), &self.tables_dir()),
        );

        if self.rubric_json().is_file() {
            check(
                "rubric.json loads",
                crate::rubric::Rubric::load(&self.rubric_json())
                    .map(|_| ())
                    .map_err(|e| e.to_string()),
            );
        }

        BundleValidation { checks }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleCheck {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleValidation {
    pub checks: Vec<BundleCheck>,
}

impl BundleValidation {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn first_failure(&self) -> Option<&BundleCheck> {
        self.checks.iter().find(|c| !c.ok)
    }
}

fn summary_bijection(summary_path: &Path, dir: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(summary_path).map_err(|e| e.to_string())?;
    let mut listed = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((name, _)) = line.split_once(':') else {
            return Err(format!("summary line without colon: {line:?}"));
        };
        listed.push(name.trim().to_string());
    }
    listed.sort();
    let mut present: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    present.sort();
    if listed == present {
        Ok(())
    } else {
        Err(format!(
            "summary lists {listed:?} but directory holds {present:?}"
        ))
    }
}

/// Template skeleton: preamble preserved, every heading emitted in order
/// with empty bodies, bibliography command pointing at references.bib.
pub fn build_template(gt: &LatexDocument) -> String {
    let raw = &gt.raw_text;
    let scrubbed = scan::scrub(raw);

    let mut out = String::new();
    match scrubbed.find("\\begin{document}") {
        Some(pos) => out.push_str(&raw[..pos + "\\begin{document}".len()]),
        None => out.push_str("\\documentclass{article}\n\\begin{document}"),
    }
    out.push('\n');

    if scrubbed.contains("\\maketitle") {
        out.push_str("\\maketitle\n");
    }

    for section in &gt.sections {
        let is_abstract_env = section.body_start + section.body.len() < section.byte_range.1;
        if is_abstract_env && section.heading == "Abstract" {
            out.push_str("\n\\begin{abstract}\n\\end{abstract}\n");
            continue;
        }
        let command = match section.depth {
            1 => "section",
            2 => "subsection",
            _ => "subsubsection",
        };
        out.push_str(&format!("\n\\{command}{{{}}}\n", section.heading));
    }

    out.push('\n');
    if let Some(pos) = scrubbed.find("\\bibliographystyle") {
        if let Some((inner, _)) = scan::read_braced(
            raw,
            scan::skip_optional_args(&scrubbed, pos + "\\bibliographystyle".len()),
        ) {
            out.push_str(&format!("\\bibliographystyle{{{}}}\n", &raw[inner]));
        }
    }
    out.push_str("\\bibliography{references}\n");
    out.push_str("\n\\end{document}\n");
    out
}

/// First line of the raw (unflattened) caption inside a block, flattened for
/// the summary file.
fn caption_first_line(block_tex: &str) -> Option<String> {
    let scrubbed = scan::scrub(block_tex);
    let mut i = 0;
    while i < scrubbed.len() {
        if scan::command_at(&scrubbed, i, "caption") {
            let mut cursor = i + "\\caption".len();
            if scrubbed[cursor..].starts_with('*') {
                cursor += 1;
            }
            cursor = scan::skip_optional_args(&scrubbed, cursor);
            if let Some((inner, _)) = scan::read_braced(block_tex, cursor) {
                let raw_caption = &block_tex[inner];
                let first_line = raw_caption.split('\n').next().unwrap_or_default();
                let flattened = crate::latex::flatten_commands(first_line);
                if !flattened.is_empty() {
                    return Some(flattened);
                }
            }
        }
        i += 1;
    }
    None
}

fn sanitize_label(label: &str) -> String {
    let stripped = label
        .strip_prefix("tab:")
        .or_else(|| label.strip_prefix("table:"))
        .unwrap_or(label);
    stripped
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

const GRAPHIC_EXTENSIONS: &[&str] = &["pdf", "png", "jpg", "jpeg", "eps"];

fn resolve_graphic(source_dir: &Path, asset: &str) -> Option<PathBuf> {
    let direct = source_dir.join(asset);
    if direct.is_file() {
        return Some(direct);
    }
    if direct.extension().is_none() {
        for ext in GRAPHIC_EXTENSIONS {
            let candidate = direct.with_extension(ext);
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    None
}

/// Writes tables/<name>.tex, copies referenced graphics into figures/, and
/// emits the two summary files ("<file>: <first caption line>"). Never
/// modifies the source directory.
pub fn extract_assets(
    source_dir: &Path,
    gt: &LatexDocument,
    bundle_root: &Path,
    diagnostics: &mut Diagnostics,
) -> Result<(), PrepError> {
    let tables_dir = bundle_root.join("tables");
    let figures_dir = bundle_root.join("figures");
    std::fs::create_dir_all(&tables_dir).map_err(io_err(&tables_dir))?;
    std::fs::create_dir_all(&figures_dir).map_err(io_err(&figures_dir))?;

    let mut table_lines = Vec::new();
    let mut used_names: BTreeMap<String, usize> = BTreeMap::new();
    for (index, table) in gt.tables.iter().enumerate() {
        let base = match &table.label {
            Some(label) => format!("table_{}", sanitize_label(label)),
            None => format!("table_{}", index + 1),
        };
        let count = used_names.entry(base.clone()).or_insert(0);
        *count += 1;
        let name = if *count == 1 {
            format!("{base}.tex")
        } else {
            format!("{base}_{count}.tex")
        };
        let path = tables_dir.join(&name);
        std::fs::write(&path, &table.body_tex).map_err(io_err(&path))?;
        let caption = caption_first_line(&table.body_tex).unwrap_or_else(|| "Table.".to_string());
        table_lines.push(format!("{name}: {caption}"));
    }

    let mut figure_lines = Vec::new();
    let mut copied: BTreeMap<String, ()> = BTreeMap::new();
    for figure in &gt.figures {
        let caption =
            caption_first_line(&gt.raw_text[figure.byte_range.0..figure.byte_range.1])
                .unwrap_or_else(|| "Figure.".to_string());
        for asset in &figure.asset_paths {
            let Some(found) = resolve_graphic(source_dir, asset) else {
                diagnostics.push(Diagnostic::new(
                    "prep",
                    DiagnosticKind::MissingAsset,
                    format!("referenced graphic not found in source: {asset}"),
                ));
                continue;
            };
            let file_name = found
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| asset.replace('/', "_"));
            if copied.contains_key(&file_name) {
                continue; // same asset referenced twice
            }
            let target = figures_dir.join(&file_name);
            std::fs::copy(&found, &target).map_err(io_err(&target))?;
            copied.insert(file_name.clone(), ());
            figure_lines.push(format!("{file_name}: {caption}"));
        }
    }

    let table_summary = bundle_root.join("table_summary.txt");
    std::fs::write(
        &table_summary,
        table_lines.join("\n") + end_newline(&table_lines),
    )
    .map_err(io_err(&table_summary))?;
    let figure_summary = bundle_root.join("figure_summary.txt");
    std::fs::write(
        &figure_summary,
        figure_lines.join("\n") + end_newline(&figure_lines),
    )
    .map_err(io_err(&figure_summary))?;
    Ok(())
}

fn end_newline(lines: &[String]) -> &'static str {
    if lines.is_empty() {
        ""
    } else {
        "\n"
    }
}

/// External lookup for bibliography abstracts. Production backend is a
/// scholarly-metadata HTTP service; tests use a fixture map.
pub trait AbstractResolver {
    fn lookup(&self, entry: &BibEntry) -> Result<Option<String>, ResolverError>;
}

/// Fixture-backed resolver: a JSON object mapping citation key to abstract.
pub struct FileResolver {
    map: BTreeMap<String, String>,
}

impl FileResolver {
    pub fn load(path: &Path) -> Result<Self, ResolverError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ResolverError::Unavailable(format!("{}: {e}", path.display())))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| ResolverError::Unavailable(format!("{}: {e}", path.display())))?;
        Ok(FileResolver { map })
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        FileResolver { map }
    }
}

impl AbstractResolver for FileResolver {
    fn lookup(&self, entry: &BibEntry) -> Result<Option<String>, ResolverError> {
        Ok(self.map.get(&entry.key).cloned())
    }
}

/// HTTP resolver querying a scholarly-metadata endpoint by title. The
/// endpoint receives `?title=<urlencoded>` and must answer
/// `{"abstract": "..."}` or an empty object.
pub struct HttpResolver {
    endpoint: String,
    min_interval: std::time::Duration,
    last_call: std::sync::Mutex<Option<std::time::Instant>>,
}

impl HttpResolver {
    pub fn new(endpoint: &str, requests_per_second: f64) -> Self {
        let min_interval = if requests_per_second > 0.0 {
            std::time::Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            std::time::Duration::ZERO
        };
        HttpResolver {
            endpoint: endpoint.to_string(),
            min_interval,
            last_call: std::sync::Mutex::new(None),
        }
    }

    fn politeness_wait(&self) {
        let mut last = self.last_call.lock().expect("resolver lock poisoned");
        if let Some(previous) = *last {
            let elapsed = previous.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(std::time::Instant::now());
    }
}

impl AbstractResolver for HttpResolver {
    fn lookup(&self, entry: &BibEntry) -> Result<Option<String>, ResolverError> {
        let Some(title) = entry.fields.get("title") else {
            return Ok(None);
        };
        self.politeness_wait();
        let encoded: String = title
            .bytes()
            .flat_map(|b| {
                if b.is_ascii_alphanumeric() {
                    vec![b as char]
                } else {
                    format!("%{b:02X}").chars().collect()
                }
            })
            .collect();
        let url = format!("{}?title={}", self.endpoint, encoded);
        let mut response = ureq::get(&url)
            .call()
            .map_err(|e| ResolverError::Unavailable(e.to_string()))?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ResolverError::Unavailable(e.to_string()))?;
        Ok(value["abstract"].as_str().map(str::to_string))
    }
}

/// Adds an `abstract` field to every entry the resolver can answer for.
/// Entries already holding abstracts are untouched, misses stay
/// byte-identical, and the output re-parses to the same key set. Running
/// twice equals running once.
pub fn augment_bib(
    bib_source: &str,
    db: &BibDatabase,
    resolver: &dyn AbstractResolver,
    diagnostics: &mut Diagnostics,
) -> String {
    struct Insertion {
        offset: usize,
        text: String,
    }
    let mut insertions: Vec<Insertion> = Vec::new();

    for entry in db.entries() {
        if entry.abstract_text().is_some() {
            continue;
        }
        let abstract_text = match resolver.lookup(entry) {
            Ok(Some(text)) => text,
            Ok(None) => continue,
            Err(err) => {
                diagnostics.push(Diagnostic::new(
                    "prep",
                    DiagnosticKind::ResolverMiss,
                    format!("abstract lookup failed for '{}': {err}", entry.key),
                ));
                continue;
            }
        };
        let sanitized = sanitize_abstract(&abstract_text);
        if sanitized.is_empty() {
            continue;
        }
        // insert right after the last non-whitespace byte before the
        // closing brace, adding a separating comma when needed
        let body = &bib_source[entry.byte_range.0..entry.close_offset];
        let trimmed_len = body.trim_end().len();
        let offset = entry.byte_range.0 + trimmed_len;
        let needs_comma = !body.trim_end().ends_with(',');
        let text = format!(
            "{}\n  abstract = {{{sanitized}}},\n",
            if needs_comma { "," } else { "" }
        );
        insertions.push(Insertion { offset, text });
    }

    if insertions.is_empty() {
        return bib_source.to_string();
    }
    insertions.sort_by_key(|i| i.offset);
    let mut out = String::with_capacity(bib_source.len() + 256 * insertions.len());
    let mut cursor = 0;
    for insertion in insertions {
        out.push_str(&bib_source[cursor..insertion.offset]);
        out.push_str(&insertion.text);
        cursor = insertion.offset;
    }
    out.push_str(&bib_source[cursor..]);
    out
}

/// Braces must stay balanced inside a BibTeX field value.
fn sanitize_abstract(text: &str) -> String {
    let mut depth = 0i64;
    let mut balanced = true;
    for c in text.chars() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    balanced = false;
                }
            }
            _ => {}
        }
    }
    if balanced && depth == 0 {
        text.trim().to_string()
    } else {
        text.chars()
            .filter(|c| *c != '{' && *c != '}')
            .collect::<String>()
            .trim()
            .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperKind {
    Method,
    Benchmark,
    Both,
}

impl std::str::FromStr for PaperKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "method" => Ok(PaperKind::Method),
            "benchmark" => Ok(PaperKind::Benchmark),
            "both" => Ok(PaperKind::Both),
            other => Err(format!("unknown paper kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverviewLength {
    Default,
    Long,
}

impl std::str::FromStr for OverviewLength {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(OverviewLength::Default),
            "long" => Ok(OverviewLength::Long),
            other => Err(format!("unknown overview length '{other}'")),
        }
    }
}

/// Mandated heading skeleton for a research-overview variant. H2 names are
/// matched after stripping their "N." prefixes; names must appear in order
/// and numbered headings must ascend.
pub struct OverviewSkeleton {
    pub required_h2: Vec<&'static str>,
    pub required_h3: Vec<&'static str>,
    pub char_band: (usize, usize),
}

impl OverviewSkeleton {
    pub fn for_variant(kind: PaperKind, length: OverviewLength) -> Self {
        use OverviewLength::*;
        use PaperKind::*;
        let required_h2: Vec<&'static str> = match (kind, length) {
            (Method, Default) => vec![
                "Title",
                "Motivation",
                "Key Insight",
                "Proposed Method",
                "Experimental Results",
                "Contributions",
                "Takeaway",
            ],
            (Method, Long) => vec![
                "Title",
                "Motivation",
                "Key Insight",
                "Proposed Method",
                "Experimental Results",
                "Analysis & Insights",
                "Contributions",
                "Limitations & Future Work",
                "Takeaway",
            ],
            (Benchmark, Default) => vec![
                "Title",
                "Motivation",
                "Key Insight",
                "Benchmark Design",
                "Data Construction Pipeline",
                "Key Findings",
                "Contributions",
                "Takeaway",
            ],
            (Benchmark, Long) => vec![
                "Title",
                "Motivation",
                "Key Insight",
                "Benchmark Design",
                "Dataset Statistics",
                "Baseline Evaluation",
                "Analysis & Insights",
                "Contributions",
                "Limitations & Future Work",
                "Takeaway",
            ],
            (Both, Default) => vec![
                "Title",
                "Motivation",
                "Key Insight",
                "Benchmark Design",
                "Data Construction Pipeline",
                "Proposed Method",
                "Key Findings",
                "Contributions",
                "Takeaway",
            ],
            (Both, Long) => vec![
                "Title",
                "Motivation",
                "Key Insight",
                "Benchmark Design",
                "Dataset Statistics",
                "Proposed Method",
                "Experimental Results",
                "Analysis & Insights",
                "Contributions",
                "Limitations & Future Work",
                "Takeaway",
            ],
        };
        let required_h3: Vec<&'static str> = match (kind, length) {
            (Method, Long) => vec!["Overview", "Setup", "Key Findings"],
            (Benchmark, Long) => vec![
                "Overview",
                "Data Collection & Curation",
                "Task Definition & Evaluation Protocol",
                "Evaluated Methods",
                "Key Findings",
            ],
            (Both, Long) => vec![
                "Overview",
                "Data Collection & Curation",
                "Task Definition & Evaluation Protocol",
                "Setup",
                "Key Findings",
            ],
            _ => vec![],
        };
        let char_band = match length {
            Default => (1500, 2500),
            Long => (4000, 8000),
        };
        OverviewSkeleton {
            required_h2,
            required_h3,
            char_band,
        }
    }

    pub fn template_name(kind: PaperKind, length: OverviewLength) -> &'static str {
        match (kind, length) {
            (PaperKind::Method, OverviewLength::Default) => "overview_method_default",
            (PaperKind::Method, OverviewLength::Long) => "overview_method_long",
            (PaperKind::Benchmark, OverviewLength::Default) => "overview_benchmark_default",
            (PaperKind::Benchmark, OverviewLength::Long) => "overview_benchmark_long",
            (PaperKind::Both, OverviewLength::Default) => "overview_both_default",
            (PaperKind::Both, OverviewLength::Long) => "overview_both_long",
        }
    }

    /// Soft character-band check with ±30% slack; out of band is only a
    /// diagnostic, because the prompts say "around".
    pub fn length_in_band(&self, markdown: &str) -> bool {
        let chars = markdown.chars().count();
        let low = self.char_band.0 * 7 / 10;
        let high = self.char_band.1 * 13 / 10;
        (low..=high).contains(&chars)
    }
}

fn strip_number_prefix(heading: &str) -> &str {
    let trimmed = heading.trim();
    let Some(dot) = trimmed.find('.') else {
        return trimmed;
    };
    if dot > 0 && trimmed[..dot].chars().all(|c| c.is_ascii_digit()) {
        trimmed[dot + 1..].trim()
    } else {
        trimmed
    }
}

fn strip_section_number(heading: &str) -> &str {
    // "3.2 Data Collection & Curation" -> "Data Collection & Curation"
    let trimmed = heading.trim();
    match trimmed.find(' ') {
        Some(space)
            if trimmed[..space]
                .chars()
                .all(|c| c.is_ascii_digit() || c == '.') =>
        {
            trimmed[space + 1..].trim()
        }
        _ => trimmed,
    }
}

impl MarkdownContract for OverviewSkeleton {
    fn check(&self, markdown: &str) -> Result<(), String> {
        let first_line = markdown
            .lines()
            .find(|l| !l.trim().is_empty())
            .unwrap_or_default();
        if !first_line.starts_with("# ") {
            return Err("missing title line (expected a leading '# ...' heading)".to_string());
        }

        let h2: Vec<&str> = markdown
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix("## "))
            .collect();
        let mut cursor = 0;
        for required in &self.required_h2 {
            let found = h2[cursor..].iter().position(|h| {
                strip_number_prefix(h).eq_ignore_ascii_case(required)
            });
            match found {
                Some(pos) => cursor += pos + 1,
                None => {
                    return Err(format!(
                        "mandated H2 section '{required}' is missing or out of order"
                    ))
                }
            }
        }

        // numbered H2 prefixes must ascend
        let mut last_number = 0u32;
        for heading in &h2 {
            let trimmed = heading.trim();
            if let Some(dot) = trimmed.find('.') {
                if let Ok(n) = trimmed[..dot].parse::<u32>() {
                    if n <= last_number {
                        return Err(format!("H2 numbering is not ascending at '## {trimmed}'"));
                    }
                    last_number = n;
                }
            }
        }

        let h3: Vec<&str> = markdown
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix("### "))
            .collect();
        let mut h3_cursor = 0;
        for required in &self.required_h3 {
            let found = h3[h3_cursor..]
                .iter()
                .position(|h| strip_section_number(h).eq_ignore_ascii_case(required));
            match found {
                Some(pos) => h3_cursor += pos + 1,
                None => {
                    return Err(format!(
                        "mandated H3 subsection '{required}' is missing or out of order"
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Generates research_overview.md through the judge following the variant's
/// mandated skeleton. Length deviations beyond the soft band are recorded as
/// diagnostics, not failures.
pub fn generate_overview(
    gt_full_text: &str,
    kind: PaperKind,
    length: OverviewLength,
    judge: &JudgeGateway,
    diagnostics: &mut Diagnostics,
) -> Result<String, JudgeError> {
    let skeleton = OverviewSkeleton::for_variant(kind, length);
    let request = JudgeRequest {
        task_tag: "generate_overview".to_string(),
        system_prompt: crate::judge::prompts::render("overview_system", &[]),
        user_prompt: crate::judge::prompts::render(
            OverviewSkeleton::template_name(kind, length),
            &[("{paper_text}", gt_full_text)],
        ),
        response_schema: crate::judge::schema::overview_contract(
            &format!("{kind:?}").to_lowercase(),
            &format!("{length:?}").to_lowercase(),
        ),
    };
    let response = judge.submit_markdown(&request, &skeleton)?;
    let markdown = response.raw_text;
    if !skeleton.length_in_band(&markdown) {
        diagnostics.push(Diagnostic::new(
            "prep",
            DiagnosticKind::OverviewLength,
            format!(
                "overview is {} characters, outside the soft band around {}-{}",
                markdown.chars().count(),
                skeleton.char_band.0,
                skeleton.char_band.1
            ),
        ));
    }
    Ok(markdown)
}

/// Where research_overview.md comes from during bundle construction.
pub enum OverviewSource {
    /// Copy an existing file.
    CopyFrom(PathBuf),
    /// Generate through the judge.
    Generate {
        kind: PaperKind,
        length: OverviewLength,
    },
    /// Use the source dir's own research_overview.md when present.
    Auto,
}

pub struct PrepOptions {
    pub overview: OverviewSource,
    pub resolver: Option<Box<dyn AbstractResolver>>,
}

/// End-to-end bundle construction. Deterministic: building twice from the
/// same inputs yields an identical bundle hash.
pub fn build_bundle(
    source_dir: &Path,
    out_dir: &Path,
    judge: Option<&JudgeGateway>,
    options: &PrepOptions,
    diagnostics: &mut Diagnostics,
) -> Result<PaperBundle, PrepError> {
    let main_tex = find_main_tex(source_dir)?;
    let gt = LatexDocument::load(&main_tex)?;
    for d in gt.diagnostics.items() {
        diagnostics.push(d.clone());
    }

    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let bundle = PaperBundle::open(out_dir);

    // gt_main.tex holds the include-inlined source so the bundle stands alone
    std::fs::write(bundle.gt_tex(), &gt.raw_text).map_err(io_err(&bundle.gt_tex()))?;

    let template = build_template(&gt);
    std::fs::write(bundle.template(), template).map_err(io_err(&bundle.template()))?;

    // references.bib: the file named by \bibliography{...}, else the lone .bib
    let bib_path = find_bib(source_dir, &gt).ok_or_else(|| {
        PrepError::Source(format!(
            "references.bib cannot be produced: no .bib file found in {}",
            source_dir.display()
        ))
    })?;
    let bib_text = std::fs::read_to_string(&bib_path).map_err(io_err(&bib_path))?;
    let bib_db = parse_bib(&bib_text);
    for d in bib_db.diagnostics.items() {
        diagnostics.push(d.clone());
    }
    let final_bib = match &options.resolver {
        Some(resolver) => augment_bib(&bib_text, &bib_db, resolver.as_ref(), diagnostics),
        None => bib_text.clone(),
    };
    std::fs::write(bundle.references_bib(), final_bib)
        .map_err(io_err(&bundle.references_bib()))?;

    extract_assets(source_dir, &gt, out_dir, diagnostics)?;

    // style files adjacent to the GT tex travel with the bundle
    for entry in std::fs::read_dir(source_dir).map_err(io_err(source_dir))? {
        let entry = entry.map_err(io_err(source_dir))?;
        let path = entry.path();
        let is_style = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e, "sty" | "cls" | "bst"))
            .unwrap_or(false);
        if is_style {
            let target = out_dir.join(entry.file_name());
            std::fs::copy(&path, &target).map_err(io_err(&target))?;
        }
    }

    // code/ copied verbatim, with a warning for prose headings in README.md
    let source_code = source_dir.join("code");
    if source_code.is_dir() {
        copy_dir(&source_code, &bundle.code_dir())?;
        let readme = bundle.code_dir().join("README.md");
        if let Ok(text) = std::fs::read_to_string(&readme) {
            for line in text.lines() {
                let lowered = line.trim_start().to_lowercase();
                if lowered.starts_with('#')
                    && (lowered.contains("abstract") || lowered.contains("introduction"))
                {
                    diagnostics.push(Diagnostic::new(
                        "prep",
                        DiagnosticKind::ReadmeHeading,
                        format!("code/README.md contains a paper-like heading: {line:?}"),
                    ));
                }
            }
        }
    }

    match &options.overview {
        OverviewSource::CopyFrom(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            std::fs::write(bundle.research_overview(), text)
                .map_err(io_err(&bundle.research_overview()))?;
        }
        OverviewSource::Generate { kind, length } => {
            let judge = judge.ok_or_else(|| {
                PrepError::Source("overview generation requires a judge backend".to_string())
            })?;
            let markdown = generate_overview(&gt.raw_text, *kind, *length, judge, diagnostics)?;
            std::fs::write(bundle.research_overview(), markdown)
                .map_err(io_err(&bundle.research_overview()))?;
        }
        OverviewSource::Auto => {
            let source_overview = source_dir.join("research_overview.md");
            if source_overview.is_file() {
                let text = std::fs::read_to_string(&source_overview)
                    .map_err(io_err(&source_overview))?;
                std::fs::write(bundle.research_overview(), text)
                    .map_err(io_err(&bundle.research_overview()))?;
            }
        }
    }

    let source_rubric = source_dir.join("rubric.json");
    if source_rubric.is_file() {
        let text = std::fs::read_to_string(&source_rubric).map_err(io_err(&source_rubric))?;
        std::fs::write(bundle.rubric_json(), text).map_err(io_err(&bundle.rubric_json()))?;
    }

    Ok(bundle)
}

fn find_main_tex(source_dir: &Path) -> Result<PathBuf, PrepError> {
    let mut candidates: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(source_dir).map_err(io_err(source_dir))? {
        let entry = entry.map_err(io_err(source_dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("tex") {
            if let Ok(text) = std::fs::read_to_string(&path) {
                if text.contains("\\begin{document}") {
                    candidates.push((text.len() as u64, path));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates
        .into_iter()
        .map(|(_, p)| p)
        .next()
        .ok_or_else(|| {
            PrepError::Source(format!(
                "no .tex file with \\begin{{document}} in {}",
                source_dir.display()
            ))
        })
}

fn find_bib(source_dir: &Path, gt: &LatexDocument) -> Option<PathBuf> {
    let scrubbed = scan::scrub(&gt.raw_text);
    if let Some(pos) = scrubbed.find("\\bibliography{") {
        if let Some((inner, _)) = scan::read_braced(&gt.raw_text, pos + "\\bibliography".len()) {
            let name = gt.raw_text[inner].trim();
            let direct = source_dir.join(format!("{name}.bib"));
            if direct.is_file() {
                return Some(direct);
            }
        }
    }
    let mut bibs: Vec<PathBuf> = std::fs::read_dir(source_dir)
        .ok()?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("bib"))
        .collect();
    bibs.sort();
    bibs.into_iter().next()
}

fn copy_dir(from: &Path, to: &Path) -> Result<(), PrepError> {
    std::fs::create_dir_all(to).map_err(io_err(to))?;
    for entry in std::fs::read_dir(from).map_err(io_err(from))? {
        let entry = entry.map_err(io_err(from))?;
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target).map_err(io_err(&target))?;
        }
    }
    Ok(())
}
