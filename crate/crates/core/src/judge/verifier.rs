//! Gateway for the stage-2 verification agent.
//!
//! The verifier is a distinct interface from the judge because stage 2 runs a
//! tool-using agent over the paper bundle. The gateway stages a throwaway
//! read-only mirror of the bundle for the backend, so a misbehaving backend
//! can never touch the real files; any mutation of the mirror is detected and
//! surfaced as a diagnostic. One call per evaluation run, no retries.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::judge::cassette::Cassette;
use crate::judge::CassetteMode;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("verifier unavailable: {0}")]
    Unavailable(String),
}

/// A tool-using verification agent. The workspace it receives is a disposable
/// mirror of the bundle.
pub trait VerifierBackend: Send + Sync {
    fn verify(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        workspace: &Path,
    ) -> Result<String, VerifierError>;

    fn id(&self) -> String;
}

/// Spawns an external agent command with the rendered prompt on stdin and the
/// mirror workspace as its working directory; stdout is the response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessVerifierConfig {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

pub struct ProcessVerifier {
    config: ProcessVerifierConfig,
}

impl ProcessVerifier {
    pub fn new(config: ProcessVerifierConfig) -> Self {
        ProcessVerifier { config }
    }
}

impl VerifierBackend for ProcessVerifier {
    fn verify(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        workspace: &Path,
    ) -> Result<String, VerifierError> {
        use std::io::Write;
        let mut child = Command::new(&self.config.command)
            .args(&self.config.args)
            .current_dir(workspace)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                VerifierError::Unavailable(format!(
                    "cannot spawn verifier '{}': {e}",
                    self.config.command
                ))
            })?;
        if let Some(stdin) = child.stdin.as_mut() {
            let payload = format!("{system_prompt}\n\n{user_prompt}");
            stdin
                .write_all(payload.as_bytes())
                .map_err(|e| VerifierError::Unavailable(format!("verifier stdin: {e}")))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| VerifierError::Unavailable(format!("verifier wait: {e}")))?;
        if !output.status.success() {
            return Err(VerifierError::Unavailable(format!(
                "verifier exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr)
            )));
        }
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    }

    fn id(&self) -> String {
        format!("process:{}", self.config.command)
    }
}

pub struct VerifierGateway {
    backend: Option<Box<dyn VerifierBackend>>,
    cassette: Option<Cassette>,
    // run_verifier is exclusive: one at a time
    lock: Mutex<()>,
    backend_id: String,
}

impl VerifierGateway {
    pub fn new(backend: Box<dyn VerifierBackend>) -> Self {
        let backend_id = backend.id();
        VerifierGateway {
            backend: Some(backend),
            cassette: None,
            lock: Mutex::new(()),
            backend_id,
        }
    }

    /// No backend configured: verification is skipped and stage-1 verdicts
    /// are retained (the report is flagged "unverified").
    pub fn unavailable() -> Self {
        VerifierGateway {
            backend: None,
            cassette: None,
            lock: Mutex::new(()),
            backend_id: "none".to_string(),
        }
    }

    /// Routes verifier traffic through a cassette of its own, keyed the same
    /// way as judge requests.
    pub fn with_cassette(mut self, mode: CassetteMode, path: &Path) -> Result<Self, VerifierError> {
        let cassette = match mode {
            CassetteMode::Record => Cassette::record(path),
            CassetteMode::Replay => Cassette::replay(path),
            CassetteMode::Passthrough => return Ok(self),
        }
        .map_err(|e| VerifierError::Unavailable(format!("verifier cassette: {e}")))?;
        self.cassette = Some(cassette);
        Ok(self)
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    /// One invocation of the verification backend over a read-only view of
    /// the bundle. Returns the raw response plus any access-scope
    /// diagnostics.
    pub fn run_verifier(
        &self,
        request: &crate::judge::JudgeRequest,
        bundle_root: &Path,
    ) -> Result<(String, Diagnostics), VerifierError> {
        let _exclusive = self.lock.lock().expect("verifier lock poisoned");
        let mut diagnostics = Diagnostics::new();
        let key = request.idempotency_key();

        if let Some(cassette) = &self.cassette {
            if let Some(raw) = cassette.lookup(&key) {
                return Ok((raw, diagnostics));
            }
            if cassette.mode() == CassetteMode::Replay {
                return Err(VerifierError::Unavailable(
                    "verifier cassette has no recording for this payload".to_string(),
                ));
            }
        }

        let Some(backend) = self.backend.as_ref() else {
            return Err(VerifierError::Unavailable(
                "no verifier backend configured".to_string(),
            ));
        };

        let mirror = MirrorWorkspace::stage(bundle_root)
            .map_err(|e| VerifierError::Unavailable(format!("cannot stage bundle mirror: {e}")))?;
        let before = hash_tree(mirror.path())
            .map_err(|e| VerifierError::Unavailable(format!("hashing mirror: {e}")))?;

        let result = backend.verify(&request.system_prompt, &request.user_prompt, mirror.path());

        let after = hash_tree(mirror.path())
            .map_err(|e| VerifierError::Unavailable(format!("hashing mirror: {e}")))?;
        if before != after {
            diagnostics.push(Diagnostic::new(
                "verify",
                DiagnosticKind::VerifierMutationAttempt,
                "verifier backend attempted to modify bundle files; changes were confined to the disposable mirror",
            ));
        }

        let raw = result?;
        if let Some(cassette) = &self.cassette {
            cassette
                .store(&key, &request.task_tag, &raw)
                .map_err(|e| VerifierError::Unavailable(format!("cassette write: {e}")))?;
        }
        Ok((raw, diagnostics))
    }
}

struct MirrorWorkspace {
    root: PathBuf,
}

impl MirrorWorkspace {
    fn stage(source: &Path) -> std::io::Result<Self> {
        let root = std::env::temp_dir().join(format!(
            "papereval-verify-{}-{:x}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or_default()
        ));
        copy_tree(source, &root)?;
        set_read_only(&root).ok(); // best effort; mutation detection is the backstop
        Ok(MirrorWorkspace { root })
    }

    fn path(&self) -> &Path {
        &self.root
    }
}

impl Drop for MirrorWorkspace {
    fn drop(&mut self) {
        let _ = restore_writable(&self.root);
        let _ = std::fs::remove_dir_all(&self.root);
    }
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn set_read_only(root: &Path) -> std::io::Result<()> {
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            set_read_only(&entry.path())?;
        } else {
            let mut perms = entry.metadata()?.permissions();
            perms.set_readonly(true);
            std::fs::set_permissions(entry.path(), perms)?;
        }
    }
    Ok(())
}

fn restore_writable(root: &Path) -> std::io::Result<()> {
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            restore_writable(&entry.path())?;
        } else {
            let mut perms = entry.metadata()?.permissions();
            #[allow(clippy::permissions_set_readonly_false)]
            perms.set_readonly(false);
            std::fs::set_permissions(entry.path(), perms)?;
        }
    }
    Ok(())
}

/// Deterministic content hash of a directory tree: sorted relative paths and
/// file bytes.
pub fn hash_tree(root: &Path) -> std::io::Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        let bytes = std::fs::read(root.join(&rel))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            out.push(rel);
        }
    }
    Ok(())
}
