//! Append-only record/replay store for judge responses.
//!
//! The cassette file is a sequence of JSON lines, one
//! `{idempotency_key, task_tag, raw_text}` record per line. Replay mode
//! performs zero network operations; record mode appends and never
//! overwrites an existing key.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CassetteMode {
    Record,
    Replay,
    /// No recording and no replay; every request goes to the backend.
    Passthrough,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "record" => Ok(CassetteMode::Record),
            "replay" => Ok(CassetteMode::Replay),
            "passthrough" => Ok(CassetteMode::Passthrough),
            other => Err(format!(
                "unknown cassette mode '{other}' (expected record, replay, or passthrough)"
            )),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CassetteLine {
    idempotency_key: String,
    task_tag: String,
    raw_text: String,
}

#[derive(Debug)]
pub struct Cassette {
    mode: CassetteMode,
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

impl Cassette {
    pub fn passthrough() -> Self {
        Cassette {
            mode: CassetteMode::Passthrough,
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    /// Opens a cassette for recording, loading any existing entries so a
    /// resumed recording session stays idempotent.
    pub fn record(path: &Path) -> std::io::Result<Self> {
        let entries = if path.exists() {
            load_entries(path)?
        } else {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            HashMap::new()
        };
        Ok(Cassette {
            mode: CassetteMode::Record,
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    /// Opens an existing cassette for replay. Fails when the file is absent.
    pub fn replay(path: &Path) -> std::io::Result<Self> {
        let entries = load_entries(path)?;
        Ok(Cassette {
            mode: CassetteMode::Replay,
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn lookup(&self, key: &str) -> Option<String> {
        self.entries
            .lock()
            .expect("cassette poisoned")
            .get(key)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a record. Existing keys are left untouched.
    pub fn store(&self, key: &str, task_tag: &str, raw_text: &str) -> std::io::Result<()> {
        if self.mode != CassetteMode::Record {
            return Ok(());
        }
        let mut entries = self.entries.lock().expect("cassette poisoned");
        if entries.contains_key(key) {
            return Ok(());
        }
        entries.insert(key.to_string(), raw_text.to_string());
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&CassetteLine {
                idempotency_key: key.to_string(),
                task_tag: task_tag.to_string(),
                raw_text: raw_text.to_string(),
            })
            .expect("cassette line serializes");
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }
}

fn load_entries(path: &Path) -> std::io::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Ok(record) = serde_json::from_str::<CassetteLine>(line) {
            // append-only file: the first occurrence of a key wins
            entries
                .entry(record.idempotency_key)
                .or_insert(record.raw_text);
        }
    }
    Ok(entries)
}
