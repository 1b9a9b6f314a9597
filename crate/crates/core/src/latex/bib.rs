//! Tolerant BibTeX parsing: entry keys, fields, and byte spans.
//!
//! `@comment`, `@preamble`, and `@string` blocks are skipped; there is no
//! string expansion. Duplicate keys keep the later entry and record a
//! diagnostic; malformed entries are skipped with a diagnostic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibEntry {
    pub key: String,
    pub entry_type: String,
    pub fields: BTreeMap<String, String>,
    /// Byte span of the whole `@type{...}` block in the source.
    pub byte_range: (usize, usize),
    /// Offset of the entry's closing brace, where new fields are inserted.
    pub close_offset: usize,
}

impl BibEntry {
    pub fn abstract_text(&self) -> Option<&str> {
        self.fields.get("abstract").map(String::as_str)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BibDatabase {
    entries: Vec<BibEntry>,
    index: BTreeMap<String, usize>,
    pub diagnostics: Diagnostics,
}

impl BibDatabase {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&BibEntry> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn entries(&self) -> &[BibEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses BibTeX text into a key-indexed database.
pub fn parse_bib(source: &str) -> BibDatabase {
    let mut db = BibDatabase::default();
    let bytes = source.as_bytes();
    let mut i = 0;

    while i < bytes.len() {
        if bytes[i] == b'%' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if bytes[i] != b'@' {
            i += 1;
            continue;
        }
        let head_start = i;
        let mut j = i + 1;
        while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
            j += 1;
        }
        let entry_type = source[i + 1..j].to_ascii_lowercase();
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        if j >= bytes.len() || (bytes[j] != b'{' && bytes[j] != b'(') {
            i = j.max(i + 1);
            continue;
        }
        let open = bytes[j];
        let close = if open == b'{' { b'}' } else { b')' };
        let body_start = j + 1;
        let Some(body_end) = find_matching(bytes, j, open, close) else {
            db.diagnostics.push(Diagnostic::new(
                "bib",
                DiagnosticKind::MalformedBibEntry,
                format!("unterminated @{entry_type} at byte {head_start}"),
            ));
            break;
        };

        if matches!(entry_type.as_str(), "comment" | "preamble" | "string") {
            i = body_end + 1;
            continue;
        }
        if entry_type.is_empty() {
            db.diagnostics.push(Diagnostic::new(
                "bib",
                DiagnosticKind::MalformedBibEntry,
                format!("@ without entry type at byte {head_start}"),
            ));
            i = body_end + 1;
            continue;
        }

        let body = &source[body_start..body_end];
        let Some(comma) = body.find(',') else {
            db.diagnostics.push(Diagnostic::new(
                "bib",
                DiagnosticKind::MalformedBibEntry,
                format!("@{entry_type} at byte {head_start} has no key"),
            ));
            i = body_end + 1;
            continue;
        };
        let key = body[..comma].trim().to_string();
        if key.is_empty() || key.contains(char::is_whitespace) {
            db.diagnostics.push(Diagnostic::new(
                "bib",
                DiagnosticKind::MalformedBibEntry,
                format!("@{entry_type} at byte {head_start} has a malformed key"),
            ));
            i = body_end + 1;
            continue;
        }

        let fields = parse_fields(&body[comma + 1..]);
        let entry = BibEntry {
            key: key.clone(),
            entry_type,
            fields,
            byte_range: (head_start, body_end + 1),
            close_offset: body_end,
        };

        if let Some(&existing) = db.index.get(&key) {
            db.diagnostics.push(Diagnostic::new(
                "bib",
                DiagnosticKind::DuplicateBibKey,
                format!("duplicate key '{key}'; later entry wins"),
            ));
            db.entries[existing] = entry;
        } else {
            db.index.insert(key, db.entries.len());
            db.entries.push(entry);
        }
        i = body_end + 1;
    }

    db
}

fn find_matching(bytes: &[u8], open_pos: usize, open: u8, close: u8) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = open_pos;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\\' {
            i += 2;
            continue;
        }
        if b == open {
            depth += 1;
        } else if b == close {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        } else if open != b'{' && b == b'{' {
            // braces still nest inside parenthesized entries
            let inner = find_matching(bytes, i, b'{', b'}')?;
            i = inner;
        }
        i += 1;
    }
    None
}

/// Field values may be `{braced}`, `"quoted"`, or bare words/numbers.
fn parse_fields(body: &str) -> BTreeMap<String, String> {
    let mut fields = BTreeMap::new();
    let bytes = body.as_bytes();
    let mut i = 0;

    while i < bytes.len() {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b',') {
            i += 1;
        }
        let name_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'-') {
            i += 1;
        }
        if i == name_start {
            break;
        }
        let name = body[name_start..i].to_ascii_lowercase();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] != b'=' {
            break;
        }
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        let value = match bytes[i] {
            b'{' => {
                let Some(end) = find_matching(bytes, i, b'{', b'}') else {
                    break;
                };
                let v = body[i + 1..end].to_string();
                i = end + 1;
                v
            }
            b'"' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b'"' {
                    if bytes[j] == b'\\' {
                        j += 1;
                    }
                    j += 1;
                }
                let v = body[i + 1..j.min(bytes.len())].to_string();
                i = (j + 1).min(bytes.len());
                v
            }
            _ => {
                let start = i;
                while i < bytes.len() && bytes[i] != b',' && bytes[i] != b'\n' {
                    i += 1;
                }
                body[start..i].trim().to_string()
            }
        };
        fields.insert(name, crate::latex::normalize_ws(&value));
    }
    fields
}
