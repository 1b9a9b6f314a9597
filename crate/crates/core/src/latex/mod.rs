//! Structural model of a LaTeX source: section tree, citation keys, table
//! and figure environments, labels, and captions.
//!
//! Parsing is tolerant rather than validating — the engine scores generated
//! papers that may be broken, so problems downgrade to diagnostics and
//! best-effort output. There is no macro expansion and no attempt to compile.

mod bib;
pub mod scan;

pub use bib::{parse_bib, BibDatabase, BibEntry};

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};

#[derive(Debug, Error)]
pub enum LatexError {
    #[error("document has no sections and no abstract")]
    EmptyDocument,
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One sectioning unit: `\section`, `\subsection`, `\subsubsection`, or the
/// abstract environment (captured as a depth-1 section titled "Abstract").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSection {
    pub heading: String,
    pub depth: u8,
    pub body: String,
    /// Byte range in `raw_text`, from the start of the sectioning command to
    /// the start of the next one (or the end of the document body).
    pub byte_range: (usize, usize),
    /// Offset where the body slice starts inside `raw_text`.
    pub body_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableBlock {
    pub label: Option<String>,
    pub caption: Option<String>,
    /// `table`, `table*`, or `tabular` for the bare-tabular fallback.
    pub environment: String,
    pub body_tex: String,
    pub byte_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureBlock {
    pub label: Option<String>,
    pub caption: Option<String>,
    pub asset_paths: Vec<String>,
    pub byte_range: (usize, usize),
}

/// A citation key occurrence, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiteKey {
    pub key: String,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct LatexDocument {
    pub source_path: Option<PathBuf>,
    pub raw_text: String,
    pub sections: Vec<RawSection>,
    pub tables: Vec<TableBlock>,
    pub figures: Vec<FigureBlock>,
    pub cite_keys: Vec<CiteKey>,
    pub diagnostics: Diagnostics,
}

const SECTION_COMMANDS: &[(&str, u8)] = &[
    ("subsubsection", 3),
    ("subsection", 2),
    ("section", 1),
];

const CITE_COMMANDS: &[&str] = &[
    "citeauthor",
    "citealp",
    "citeyear",
    "citep",
    "citet",
    "cite",
];

impl LatexDocument {
    /// Parses LaTeX source text. The source need not compile.
    pub fn parse(source: &str) -> Result<Self, LatexError> {
        let mut diagnostics = Diagnostics::new();
        let scrubbed = scan::scrub(source);
        let body_limit = scrubbed.find("\\end{document}").unwrap_or(source.len());

        let sections = find_sections(source, &scrubbed, body_limit);
        if sections.is_empty() {
            return Err(LatexError::EmptyDocument);
        }

        // all extraction stops at \end{document}, like the section scan
        let active = &scrubbed[..body_limit];
        let figures = find_figures(source, active, &mut diagnostics);
        let figure_spans: Vec<Range<usize>> = figures
            .iter()
            .map(|f| f.byte_range.0..f.byte_range.1)
            .collect();
        let tables = find_tables(source, active, &figure_spans, &mut diagnostics);
        let cite_keys = find_cite_keys(source, active, &mut diagnostics);

        Ok(LatexDocument {
            source_path: None,
            raw_text: source.to_string(),
            sections,
            tables,
            figures,
            cite_keys,
            diagnostics,
        })
    }

    /// Reads a file and parses it, inlining `\input`/`\include` one level
    /// deep relative to the file's directory. Deeper nesting is left in
    /// place and reported as a diagnostic.
    pub fn load(path: &Path) -> Result<Self, LatexError> {
        let raw = std::fs::read_to_string(path).map_err(|e| LatexError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let (inlined, include_diags) = inline_includes(&raw, dir);
        let mut doc = Self::parse(&inlined)?;
        doc.source_path = Some(path.to_path_buf());
        for d in include_diags.into_items() {
            doc.diagnostics.push(d);
        }
        Ok(doc)
    }

    /// Full text of the ground-truth paper, used as reference context for
    /// claim checking.
    pub fn full_text(&self) -> &str {
        &self.raw_text
    }

    /// The depth-1 section (by byte position) containing `offset`, if any.
    pub fn enclosing_top_section(&self, offset: usize) -> Option<&RawSection> {
        self.sections
            .iter()
            .filter(|s| s.depth == 1)
            .take_while(|s| s.byte_range.0 <= offset)
            .last()
    }

    /// Extent of a depth-1 section including its subsections: from the end
    /// of the heading command to the start of the next depth-1 section. The
    /// abstract environment is self-delimiting and yields just its body.
    pub fn top_section_extent(&self, index: usize) -> Option<Range<usize>> {
        let section = self.sections.get(index)?;
        if section.depth != 1 {
            return None;
        }
        if section.body_start + section.body.len() < section.byte_range.1 {
            return Some(section.body_start..section.body_start + section.body.len());
        }
        let end = self
            .sections
            .iter()
            .skip(index + 1)
            .find(|s| s.depth == 1)
            .map(|s| s.byte_range.0)
            .unwrap_or_else(|| {
                self.sections
                    .last()
                    .map(|s| s.byte_range.1)
                    .unwrap_or(self.raw_text.len())
            });
        Some(section.body_start..end.max(section.body_start))
    }
}

/// Ordered list of `(key, offset)` pairs covering `\cite`, `\citep`,
/// `\citet`, `\citealp`, `\citeauthor`, `\citeyear` and starred variants.
/// Duplicates are preserved; deduplication is the metrics layer's job.
pub fn extract_cite_keys(doc: &LatexDocument) -> Vec<(String, usize)> {
    doc.cite_keys
        .iter()
        .map(|c| (c.key.clone(), c.offset))
        .collect()
}

pub fn extract_tables(doc: &LatexDocument) -> Vec<TableBlock> {
    doc.tables.clone()
}

fn find_sections(source: &str, scrubbed: &str, body_limit: usize) -> Vec<RawSection> {
    struct Marker {
        start: usize,
        heading: String,
        depth: u8,
        body_start: usize,
        fixed_end: Option<usize>,
    }
    let mut markers: Vec<Marker> = Vec::new();

    let bytes = scrubbed.as_bytes();
    let mut i = 0;
    while i < body_limit {
        if bytes[i] != b'\\' {
            i += 1;
            continue;
        }
        let mut matched = false;
        for (name, depth) in SECTION_COMMANDS {
            if scan::command_at(scrubbed, i, name) {
                let mut cursor = i + 1 + name.len();
                if scrubbed[cursor..].starts_with('*') {
                    cursor += 1;
                }
                cursor = scan::skip_optional_args(scrubbed, cursor);
                if let Some((range, after)) = scan::read_braced(source, cursor) {
                    let heading = normalize_ws(&source[range]);
                    if !heading.is_empty() {
                        markers.push(Marker {
                            start: i,
                            heading,
                            depth: *depth,
                            body_start: after,
                            fixed_end: None,
                        });
                    }
                    i = after;
                    matched = true;
                }
                break;
            }
        }
        if !matched {
            i += 1;
        }
    }

    for span in scan::find_environments(scrubbed, "abstract") {
        if span.start >= body_limit {
            continue;
        }
        markers.push(Marker {
            start: span.start,
            heading: "Abstract".to_string(),
            depth: 1,
            body_start: span.body.start,
            fixed_end: Some(span.end),
        });
    }

    markers.sort_by_key(|m| m.start);

    let mut sections = Vec::with_capacity(markers.len());
    for (idx, marker) in markers.iter().enumerate() {
        let natural_end = markers
            .get(idx + 1)
            .map(|next| next.start)
            .unwrap_or(body_limit);
        let end = match marker.fixed_end {
            Some(e) => e.min(natural_end.max(marker.body_start)),
            None => natural_end,
        };
        let end = end.max(marker.body_start).min(source.len());
        let body_end = match marker.fixed_end {
            // abstract body stops before \end{abstract}
            Some(_) => end.saturating_sub("\\end{abstract}".len()).max(marker.body_start),
            None => end,
        };
        sections.push(RawSection {
            heading: marker.heading.clone(),
            depth: marker.depth,
            body: source[marker.body_start..body_end].to_string(),
            byte_range: (marker.start, end),
            body_start: marker.body_start,
        });
    }
    sections
}

fn find_tables(
    source: &str,
    scrubbed: &str,
    figure_spans: &[Range<usize>],
    diagnostics: &mut Diagnostics,
) -> Vec<TableBlock> {
    let mut blocks = Vec::new();
    let mut covered: Vec<Range<usize>> = figure_spans.to_vec();

    for env in ["table", "table*"] {
        for span in scan::find_environments(scrubbed, env) {
            if !span.closed {
                diagnostics.push(Diagnostic::new(
                    "latex",
                    DiagnosticKind::UnbalancedEnvironment,
                    format!("\\begin{{{env}}} at byte {} never closes", span.start),
                ));
            }
            covered.push(span.start..span.end);
            blocks.push(TableBlock {
                label: find_label(source, scrubbed, span.start..span.end),
                caption: find_caption(source, scrubbed, span.start..span.end),
                environment: env.to_string(),
                body_tex: source[span.start..span.end.min(source.len())].to_string(),
                byte_range: (span.start, span.end.min(source.len())),
            });
        }
    }

    // bare tabular fallback: only when not already inside a table block
    for span in scan::find_environments(scrubbed, "tabular") {
        if covered.iter().any(|r| r.contains(&span.start)) {
            continue;
        }
        if !span.closed {
            diagnostics.push(Diagnostic::new(
                "latex",
                DiagnosticKind::UnbalancedEnvironment,
                format!("\\begin{{tabular}} at byte {} never closes", span.start),
            ));
        }
        blocks.push(TableBlock {
            label: find_label(source, scrubbed, span.start..span.end),
            caption: find_caption(source, scrubbed, span.start..span.end),
            environment: "tabular".to_string(),
            body_tex: source[span.start..span.end.min(source.len())].to_string(),
            byte_range: (span.start, span.end.min(source.len())),
        });
    }

    blocks.sort_by_key(|b| b.byte_range.0);
    blocks
}

fn find_figures(source: &str, scrubbed: &str, diagnostics: &mut Diagnostics) -> Vec<FigureBlock> {
    let mut blocks = Vec::new();
    for env in ["figure", "figure*"] {
        for span in scan::find_environments(scrubbed, env) {
            if !span.closed {
                diagnostics.push(Diagnostic::new(
                    "latex",
                    DiagnosticKind::UnbalancedEnvironment,
                    format!("\\begin{{{env}}} at byte {} never closes", span.start),
                ));
            }
            let range = span.start..span.end.min(source.len());
            blocks.push(FigureBlock {
                label: find_label(source, scrubbed, range.clone()),
                caption: find_caption(source, scrubbed, range.clone()),
                asset_paths: find_graphics(source, scrubbed, range.clone()),
                byte_range: (range.start, range.end),
            });
        }
    }
    blocks.sort_by_key(|b| b.byte_range.0);
    blocks
}

fn find_label(source: &str, scrubbed: &str, range: Range<usize>) -> Option<String> {
    let mut i = range.start;
    while i < range.end.min(scrubbed.len()) {
        if scan::command_at(scrubbed, i, "label") {
            let cursor = scan::skip_optional_args(scrubbed, i + "\\label".len());
            if let Some((inner, _)) = scan::read_braced(source, cursor) {
                let label = source[inner].trim().to_string();
                if !label.is_empty() && !label.contains(char::is_whitespace) {
                    return Some(label);
                }
            }
        }
        i += 1;
    }
    None
}

fn find_caption(source: &str, scrubbed: &str, range: Range<usize>) -> Option<String> {
    let mut i = range.start;
    while i < range.end.min(scrubbed.len()) {
        if scan::command_at(scrubbed, i, "caption") {
            let mut cursor = i + "\\caption".len();
            if scrubbed[cursor..].starts_with('*') {
                cursor += 1;
            }
            cursor = scan::skip_optional_args(scrubbed, cursor);
            if let Some((inner, _)) = scan::read_braced(source, cursor) {
                let flattened = flatten_commands(&source[inner]);
                if !flattened.is_empty() {
                    return Some(flattened);
                }
            }
        }
        i += 1;
    }
    None
}

fn find_graphics(source: &str, scrubbed: &str, range: Range<usize>) -> Vec<String> {
    let mut paths = Vec::new();
    let mut i = range.start;
    while i < range.end.min(scrubbed.len()) {
        if scan::command_at(scrubbed, i, "includegraphics") {
            let mut cursor = i + "\\includegraphics".len();
            if scrubbed[cursor..].starts_with('*') {
                cursor += 1;
            }
            let cursor = scan::skip_optional_args(scrubbed, cursor);
            if let Some((inner, after)) = scan::read_braced(source, cursor) {
                let path = normalize_asset_path(&source[inner]);
                if !path.is_empty() {
                    paths.push(path);
                }
                i = after;
                continue;
            }
        }
        i += 1;
    }
    paths
}

fn find_cite_keys(source: &str, scrubbed: &str, diagnostics: &mut Diagnostics) -> Vec<CiteKey> {
    let mut keys = Vec::new();
    let bytes = scrubbed.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            i += 1;
            continue;
        }
        let mut advanced = false;
        for name in CITE_COMMANDS {
            if scan::command_at(scrubbed, i, name) {
                let mut cursor = i + 1 + name.len();
                if scrubbed[cursor..].starts_with('*') {
                    cursor += 1;
                }
                cursor = scan::skip_optional_args(scrubbed, cursor);
                match scan::read_braced(source, cursor) {
                    Some((inner, after)) => {
                        let arg = &source[inner.clone()];
                        if arg.trim().is_empty() {
                            diagnostics.push(Diagnostic::new(
                                "latex",
                                DiagnosticKind::EmptyCiteArgument,
                                format!("\\{name} with empty argument at byte {i}"),
                            ));
                        } else {
                            let mut local = inner.start;
                            for part in arg.split(',') {
                                let trimmed = part.trim();
                                if trimmed.is_empty() {
                                    diagnostics.push(Diagnostic::new(
                                        "latex",
                                        DiagnosticKind::EmptyCiteArgument,
                                        format!("empty key in \\{name} at byte {i}"),
                                    ));
                                } else {
                                    let lead = part.len() - part.trim_start().len();
                                    keys.push(CiteKey {
                                        key: trimmed.to_string(),
                                        offset: local + lead,
                                    });
                                }
                                local += part.len() + 1;
                            }
                        }
                        i = after;
                    }
                    None => {
                        diagnostics.push(Diagnostic::new(
                            "latex",
                            DiagnosticKind::MalformedCite,
                            format!("\\{name} without braced argument at byte {i}"),
                        ));
                        i += 1 + name.len();
                    }
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            i += 1;
        }
    }
    keys
}

/// Flattens caption-like text: commands with one brace argument are replaced
/// by the argument text, zero-argument commands are dropped, and whitespace
/// is normalized.
pub fn flatten_commands(text: &str) -> String {
    let mut current = text.to_string();
    for _ in 0..16 {
        let mut next: Vec<u8> = Vec::with_capacity(current.len());
        let bytes = current.as_bytes();
        let mut i = 0;
        let mut changed = false;
        while i < bytes.len() {
            if bytes[i] == b'\\' {
                if i + 1 < bytes.len() && !bytes[i + 1].is_ascii_alphabetic() {
                    // escaped character: \%, \&, \_, ...
                    next.push(bytes[i + 1]);
                    i += 2;
                    changed = true;
                    continue;
                }
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
                    j += 1;
                }
                if j > i + 1 {
                    if j < bytes.len() && bytes[j] == b'*' {
                        j += 1;
                    }
                    let after_opt = scan::skip_optional_args(&current, j);
                    if let Some((inner, end)) = scan::read_braced(&current, after_opt) {
                        next.extend_from_slice(current[inner].as_bytes());
                        i = end;
                    } else {
                        i = j;
                    }
                    changed = true;
                    continue;
                }
            }
            next.push(bytes[i]);
            i += 1;
        }
        // only whole ASCII tokens were removed, so this cannot fail
        current = String::from_utf8(next).expect("flatten preserves utf-8");
        if !changed {
            break;
        }
    }
    let cleaned: String = current
        .chars()
        .filter(|c| *c != '{' && *c != '}' && *c != '$')
        .map(|c| if c == '~' { ' ' } else { c })
        .collect();
    normalize_ws(&cleaned)
}

pub(crate) fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_asset_path(raw: &str) -> String {
    let mut p = raw.trim().to_string();
    while let Some(rest) = p.strip_prefix("./") {
        p = rest.to_string();
    }
    p
}

/// Splices one level of `\input{...}`/`\include{...}` into the source.
fn inline_includes(source: &str, dir: &Path) -> (String, Diagnostics) {
    let mut diagnostics = Diagnostics::new();
    let scrubbed = scan::scrub(source);
    let mut pieces: Vec<(Range<usize>, String)> = Vec::new();

    let bytes = scrubbed.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\'
            && (scan::command_at(&scrubbed, i, "input") || scan::command_at(&scrubbed, i, "include"))
        {
            let name_len = if scan::command_at(&scrubbed, i, "input") {
                "input".len()
            } else {
                "include".len()
            };
            let cursor = scan::skip_optional_args(&scrubbed, i + 1 + name_len);
            if let Some((inner, after)) = scan::read_braced(source, cursor) {
                let target = source[inner].trim();
                let mut candidate = dir.join(target);
                if candidate.extension().is_none() {
                    candidate.set_extension("tex");
                }
                match std::fs::read_to_string(&candidate) {
                    Ok(content) => {
                        let inner_scrub = scan::scrub(&content);
                        if inner_scrub.contains("\\input") || inner_scrub.contains("\\include") {
                            diagnostics.push(Diagnostic::new(
                                "latex",
                                DiagnosticKind::DeepInclude,
                                format!(
                                    "{} contains nested \\input; only one level is inlined",
                                    candidate.display()
                                ),
                            ));
                        }
                        pieces.push((i..after, content));
                    }
                    Err(_) => {
                        diagnostics.push(Diagnostic::new(
                            "latex",
                            DiagnosticKind::MissingInclude,
                            format!("included file not found: {}", candidate.display()),
                        ));
                    }
                }
                i = after;
                continue;
            }
        }
        i += 1;
    }

    if pieces.is_empty() {
        return (source.to_string(), diagnostics);
    }
    let mut out = String::with_capacity(source.len());
    let mut cursor = 0;
    for (range, content) in pieces {
        out.push_str(&source[cursor..range.start]);
        out.push_str(&content);
        cursor = range.end;
    }
    out.push_str(&source[cursor..]);
    (out, diagnostics)
}
