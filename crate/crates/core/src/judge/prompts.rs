//! Versioned prompt templates embedded in the binary.
//!
//! Templates are plain text with `{placeholder}` slots. Rendering replaces
//! only the exact named slots it is given, so literal braces elsewhere in a
//! template (LaTeX environments, JSON examples) pass through untouched. A
//! template directory can override any embedded copy by file name.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::sync::RwLock;

/// Bumped when any template text changes; recorded in report provenance.
pub const PROMPTS_VERSION: &str = "1";

macro_rules! embedded {
    ($($name:literal),+ $(,)?) => {
        &[$(($name, include_str!(concat!("../../prompts/", $name, ".txt")))),+]
    };
}

const TEMPLATES: &[(&str, &str)] = embedded![
    "classify_section_system",
    "classify_section_user",
    "rubric_extract_system",
    "rubric_extract_user",
    "rubric_score_system",
    "rubric_score_user",
    "claim_extract_system",
    "claim_extract_user",
    "verify_claims_system",
    "verify_claims_user",
    "figure_context_system",
    "figure_context_user",
    "table_score_system",
    "table_score_user",
    "table_match_system",
    "table_match_user",
    "overview_system",
    "overview_method_default",
    "overview_method_long",
    "overview_benchmark_default",
    "overview_benchmark_long",
    "overview_both_default",
    "overview_both_long",
    "writeup",
    "reflection",
    "page_adjust",
];

static OVERRIDES: OnceLock<RwLock<BTreeMap<String, String>>> = OnceLock::new();

fn overrides() -> &'static RwLock<BTreeMap<String, String>> {
    OVERRIDES.get_or_init(|| RwLock::new(BTreeMap::new()))
}

/// Loads `<name>.txt` overrides from a directory. Unknown file names are
/// ignored; embedded copies remain for anything not overridden.
pub fn load_overrides(dir: &Path) -> std::io::Result<usize> {
    let mut loaded = 0;
    let mut map = overrides().write().expect("prompt overrides poisoned");
    for (name, _) in TEMPLATES {
        let candidate = dir.join(format!("{name}.txt"));
        if candidate.is_file() {
            map.insert((*name).to_string(), std::fs::read_to_string(&candidate)?);
            loaded += 1;
        }
    }
    Ok(loaded)
}

pub fn template(name: &str) -> &'static str {
    TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .unwrap_or_else(|| panic!("unknown prompt template '{name}'"))
}

/// Renders a template, substituting each `(slot, value)` pair literally.
pub fn render(name: &str, slots: &[(&str, &str)]) -> String {
    let over = overrides().read().expect("prompt overrides poisoned");
    let mut text = match over.get(name) {
        Some(t) => t.clone(),
        None => template(name).to_string(),
    };
    drop(over);
    for (slot, value) in slots {
        text = text.replace(slot, value);
    }
    text
}

/// Template names with their versions, recorded in report provenance.
pub fn versions() -> BTreeMap<String, String> {
    TEMPLATES
        .iter()
        .map(|(name, _)| ((*name).to_string(), PROMPTS_VERSION.to_string()))
        .collect()
}
