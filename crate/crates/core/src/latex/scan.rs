//! Low-level source scanning: comment/verbatim masking and balanced-brace
//! argument reading.
//!
//! Structural discovery runs over a "scrubbed" copy of the source in which
//! every byte inside a comment or verbatim region is blanked while offsets
//! are preserved, so anything found in the scrubbed text can be sliced back
//! out of the original verbatim.

/// Environments whose contents are opaque to the parser.
const VERBATIM_ENVS: &[&str] = &[
    "verbatim",
    "verbatim*",
    "Verbatim",
    "lstlisting",
    "minted",
    "alltt",
    "filecontents",
    "filecontents*",
];

/// Returns a same-length copy of `source` with comment and verbatim bytes
/// replaced by spaces (newlines are kept so line structure survives).
pub fn scrub(source: &str) -> String {
    let bytes = source.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;

    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' && !is_escaped(bytes, i) {
            // comment runs to end of line, newline itself stays
            let mut j = i;
            while j < bytes.len() && bytes[j] != b'\n' {
                out[j] = b' ';
                j += 1;
            }
            i = j;
            continue;
        }
        if b == b'\\' {
            if let Some(env) = match_verbatim_begin(source, i) {
                let open_len = format!("\\begin{{{env}}}").len();
                let end_tag = format!("\\end{{{env}}}");
                let close = source[i + open_len..]
                    .find(&end_tag)
                    .map(|p| i + open_len + p + end_tag.len())
                    .unwrap_or(bytes.len());
                for (k, slot) in out.iter_mut().enumerate().take(close).skip(i) {
                    if bytes[k] != b'\n' {
                        *slot = b' ';
                    }
                }
                i = close;
                continue;
            }
            if let Some(after) = match_inline_verb(source, i) {
                for (k, slot) in out.iter_mut().enumerate().take(after).skip(i) {
                    if bytes[k] != b'\n' {
                        *slot = b' ';
                    }
                }
                i = after;
                continue;
            }
            // skip the escaped character so "\%" is not a comment start
            i += 2;
            continue;
        }
        i += 1;
    }

    String::from_utf8(out).expect("scrub preserves utf-8 byte boundaries")
}

fn is_escaped(bytes: &[u8], pos: usize) -> bool {
    let mut backslashes = 0;
    let mut i = pos;
    while i > 0 && bytes[i - 1] == b'\\' {
        backslashes += 1;
        i -= 1;
    }
    backslashes % 2 == 1
}

fn match_verbatim_begin(source: &str, pos: usize) -> Option<&'static str> {
    let rest = &source[pos..];
    if !rest.starts_with("\\begin") {
        return None;
    }
    let after = &rest["\\begin".len()..];
    let after = after.trim_start_matches([' ', '\t']);
    if !after.starts_with('{') {
        return None;
    }
    for env in VERBATIM_ENVS {
        if after[1..].starts_with(env) && after[1 + env.len()..].starts_with('}') {
            return Some(env);
        }
    }
    None
}

/// Matches `\verb<delim>...<delim>` and returns the offset just past the
/// closing delimiter.
fn match_inline_verb(source: &str, pos: usize) -> Option<usize> {
    let rest = &source[pos..];
    let body = rest.strip_prefix("\\verb")?;
    let body = body.strip_prefix('*').unwrap_or(body);
    let delim = body.chars().next()?;
    if delim.is_ascii_alphabetic() || delim == '{' {
        return None; // another command such as \verbatiminput
    }
    let delim_len = delim.len_utf8();
    let close = body[delim_len..].find(delim)?;
    Some(pos + (rest.len() - body.len()) + delim_len + close + delim.len_utf8())
}

/// Reads a `{...}`-delimited argument starting at `open` (which must point at
/// the opening brace). Returns the inner slice range and the offset just past
/// the closing brace. Escaped braces do not affect nesting.
pub fn read_braced(source: &str, open: usize) -> Option<(std::ops::Range<usize>, usize)> {
    let bytes = source.as_bytes();
    if open >= bytes.len() || bytes[open] != b'{' {
        return None;
    }
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 1, // skip escaped char
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((open + 1..i, i + 1));
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Skips whitespace, then an optional `[...]` argument, returning the first
/// offset after it. Used for commands like `\section[short]{long}` and
/// `\cite[p. 3]{key}`.
pub fn skip_optional_args(source: &str, mut pos: usize) -> usize {
    let bytes = source.as_bytes();
    loop {
        while pos < bytes.len() && (bytes[pos] as char).is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'[' {
            let mut depth = 0usize;
            let mut i = pos;
            let mut closed = false;
            while i < bytes.len() {
                match bytes[i] {
                    b'\\' => i += 1,
                    b'[' => depth += 1,
                    b']' => {
                        depth -= 1;
                        if depth == 0 {
                            pos = i + 1;
                            closed = true;
                            break;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
            if !closed {
                return pos;
            }
        } else {
            return pos;
        }
    }
}

/// Finds every occurrence of `\begin{env}` in the scrubbed text, returning
/// `(start, body_range, end)` spans where `end` points just past the matching
/// `\end{env}`. Nested same-name environments stay inside one span. An
/// unclosed environment yields `(start, body.., len)` with `closed = false`.
pub struct EnvSpan {
    pub start: usize,
    pub body: std::ops::Range<usize>,
    pub end: usize,
    pub closed: bool,
}

pub fn find_environments(scrubbed: &str, env: &str) -> Vec<EnvSpan> {
    let begin_tag = format!("\\begin{{{env}}}");
    let end_tag = format!("\\end{{{env}}}");
    let mut spans = Vec::new();
    let mut search_from = 0;

    while let Some(rel) = scrubbed[search_from..].find(&begin_tag) {
        let start = search_from + rel;
        let body_start = start + begin_tag.len();
        let mut depth = 1usize;
        let mut cursor = body_start;
        let mut end = scrubbed.len();
        let mut body_end = scrubbed.len();
        let mut closed = false;
        while cursor < scrubbed.len() {
            let next_begin = scrubbed[cursor..].find(&begin_tag).map(|p| cursor + p);
            let next_end = scrubbed[cursor..].find(&end_tag).map(|p| cursor + p);
            match (next_begin, next_end) {
                (Some(b), Some(e)) if b < e => {
                    depth += 1;
                    cursor = b + begin_tag.len();
                }
                (_, Some(e)) => {
                    depth -= 1;
                    if depth == 0 {
                        body_end = e;
                        end = e + end_tag.len();
                        closed = true;
                        break;
                    }
                    cursor = e + end_tag.len();
                }
                (Some(b), None) => {
                    depth += 1;
                    cursor = b + begin_tag.len();
                }
                (None, None) => break,
            }
        }
        spans.push(EnvSpan {
            start,
            body: body_start..body_end,
            end,
            closed,
        });
        search_from = end.max(start + begin_tag.len());
    }
    spans
}

/// True when the byte at `pos` begins the exact command `\name` (the next
/// character is not a letter, so `\cite` does not match `\citep`).
pub fn command_at(scrubbed: &str, pos: usize, name: &str) -> bool {
    let rest = &scrubbed[pos..];
    if !rest.starts_with('\\') || !rest[1..].starts_with(name) {
        return false;
    }
    match rest[1 + name.len()..].chars().next() {
        Some(c) => !c.is_ascii_alphabetic(),
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scrub_blanks_comments() {
        let src = "a % \\section{Ghost}\nb";
        let s = scrub(src);
        assert_eq!(s.len(), src.len());
        assert!(!s.contains("section"));
        assert!(s.contains('a') && s.contains('b'));
        assert_eq!(s.matches('\n').count(), 1);
    }

    #[test]
    fn scrub_keeps_escaped_percent() {
        let src = r"50\% of cases % real comment";
        let s = scrub(src);
        assert!(s.contains(r"50\%"));
        assert!(!s.contains("real comment"));
    }

    #[test]
    fn scrub_blanks_verbatim() {
        let src = "x\\begin{verbatim}\n\\section{Hidden}\n\\end{verbatim}y";
        let s = scrub(src);
        assert!(!s.contains("Hidden"));
        assert!(s.contains('x') && s.contains('y'));
    }

    #[test]
    fn scrub_handles_inline_verb() {
        let src = r"a \verb|\cite{x}| b";
        let s = scrub(src);
        assert!(!s.contains("cite"));
        assert!(s.ends_with(" b"));
    }

    #[test]
    fn commented_verbatim_open_is_ignored() {
        let src = "% \\begin{verbatim}\n\\section{Real}\n";
        let s = scrub(src);
        assert!(s.contains("\\section{Real}"));
    }

    #[test]
    fn read_braced_handles_nesting() {
        let src = r"\caption{Results \textbf{bold {deep}}} tail";
        let open = src.find('{').unwrap();
        let (range, after) = read_braced(src, open).unwrap();
        assert_eq!(&src[range], r"Results \textbf{bold {deep}}");
        assert_eq!(&src[after..], " tail");
    }

    #[test]
    fn nested_environments_stay_in_one_span() {
        let src = "\\begin{table}\\begin{table}x\\end{table}y\\end{table}";
        let spans = find_environments(src, "table");
        assert_eq!(spans.len(), 1);
        assert!(spans[0].closed);
        assert_eq!(spans[0].end, src.len());
    }

    #[test]
    fn unclosed_environment_flagged() {
        let src = "\\begin{table}never ends";
        let spans = find_environments(src, "table");
        assert_eq!(spans.len(), 1);
        assert!(!spans[0].closed);
    }

    #[test]
    fn command_boundary() {
        let s = r"\citep{a}";
        assert!(command_at(s, 0, "citep"));
        assert!(!command_at(s, 0, "cite"));
    }
}
