//! Single choke point for all judge traffic: structured-output contract,
//! corrective retries, concurrency bounding, and deterministic record/replay.

pub mod backend;
pub mod cassette;
pub mod prompts;
pub mod schema;
pub mod verifier;

pub use backend::{BackendConfig, BackendError, HttpBackend, JudgeBackend};
pub use cassette::{Cassette, CassetteMode};
pub use verifier::{VerifierError, VerifierGateway};

use std::path::Path;
use std::time::Duration;

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parallel::Semaphore;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
    #[error("judge response malformed after retries: {0}")]
    Malformed(String),
    #[error("judge misconfigured: {0}")]
    Misconfigured(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeRequest {
    /// Short routing tag such as "rubric_score" or "classify_section".
    pub task_tag: String,
    pub system_prompt: String,
    pub user_prompt: String,
    /// JSON-schema text the parsed response must satisfy.
    pub response_schema: String,
}

impl JudgeRequest {
    /// Content hash of the three prompt fields. Identical requests hash
    /// identically; the tag is routing metadata and stays out of the key.
    pub fn idempotency_key(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [&self.system_prompt, &self.user_prompt, &self.response_schema] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct JudgeResponse {
    pub raw_text: String,
    pub parsed: Value,
    pub attempt_count: u32,
}

/// Structural contract for markdown responses (research overviews), checked
/// in place of a JSON schema.
pub trait MarkdownContract: Sync {
    fn check(&self, markdown: &str) -> Result<(), String>;
}

enum Expected<'a> {
    Json,
    Markdown(&'a dyn MarkdownContract),
}

pub struct JudgeGateway {
    backend: Option<Box<dyn JudgeBackend>>,
    cassette: Cassette,
    limiter: Semaphore,
    retry_budget: u32,
    backend_id: String,
}

const MAX_RATE_LIMIT_RETRIES: u32 = 5;

impl JudgeGateway {
    /// Builds a gateway over a backend. `cassette_path` is required for
    /// record and replay modes.
    pub fn new(
        backend: Box<dyn JudgeBackend>,
        mode: CassetteMode,
        cassette_path: Option<&Path>,
        parallelism: usize,
        retry_budget: u32,
    ) -> Result<Self, JudgeError> {
        let backend_id = backend.id();
        let cassette = open_cassette(mode, cassette_path)?;
        Ok(JudgeGateway {
            backend: Some(backend),
            cassette,
            limiter: Semaphore::new(parallelism),
            retry_budget: retry_budget.max(1),
            backend_id,
        })
    }

    /// Replay-only gateway: no backend, zero network operations.
    pub fn replay_only(cassette_path: &Path, parallelism: usize) -> Result<Self, JudgeError> {
        let cassette = open_cassette(CassetteMode::Replay, Some(cassette_path))?;
        Ok(JudgeGateway {
            backend: None,
            cassette,
            limiter: Semaphore::new(parallelism),
            retry_budget: 1,
            backend_id: format!("replay:{}", cassette_path.display()),
        })
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }

    /// Submits a request expecting a schema-valid JSON response.
    pub fn submit(&self, request: &JudgeRequest) -> Result<JudgeResponse, JudgeError> {
        self.submit_inner(request, Expected::Json)
    }

    /// Submits a request expecting markdown that satisfies `contract`.
    pub fn submit_markdown(
        &self,
        request: &JudgeRequest,
        contract: &dyn MarkdownContract,
    ) -> Result<JudgeResponse, JudgeError> {
        self.submit_inner(request, Expected::Markdown(contract))
    }

    fn submit_inner(
        &self,
        request: &JudgeRequest,
        expected: Expected<'_>,
    ) -> Result<JudgeResponse, JudgeError> {
        let key = request.idempotency_key();

        if let Some(raw) = self.cassette.lookup(&key) {
            let parsed = interpret(&raw, &request.response_schema, &expected)
                .map_err(JudgeError::Malformed)?;
            return Ok(JudgeResponse {
                raw_text: raw,
                parsed,
                attempt_count: 1,
            });
        }
        if self.cassette.mode() == CassetteMode::Replay {
            return Err(JudgeError::Unavailable(format!(
                "cassette has no recording for task '{}' (key {})",
                request.task_tag,
                &key[..12.min(key.len())]
            )));
        }
        let Some(backend) = self.backend.as_ref() else {
            return Err(JudgeError::Misconfigured(
                "no judge backend configured and request not in cassette".to_string(),
            ));
        };

        let _permit = self.limiter.acquire();
        let mut user_prompt = request.user_prompt.clone();
        let mut attempts = 0u32;
        let mut rate_limit_hits = 0u32;
        let mut last_error = String::new();
        let mut last_was_schema = false;

        while attempts < self.retry_budget {
            match backend.complete(&request.system_prompt, &user_prompt) {
                Ok(raw) => {
                    attempts += 1;
                    match interpret(&raw, &request.response_schema, &expected) {
                        Ok(parsed) => {
                            self.cassette
                                .store(&key, &request.task_tag, &raw)
                                .map_err(|e| {
                                    JudgeError::Misconfigured(format!("cassette write failed: {e}"))
                                })?;
                            return Ok(JudgeResponse {
                                raw_text: raw,
                                parsed,
                                attempt_count: attempts,
                            });
                        }
                        Err(violation) => {
                            last_was_schema = true;
                            last_error = violation.clone();
                            user_prompt = format!(
                                "{}\n\nYour previous response was invalid: {violation}\nRespond again, following the required output format exactly.",
                                request.user_prompt
                            );
                        }
                    }
                }
                Err(BackendError::RateLimited { retry_after }) => {
                    rate_limit_hits += 1;
                    if rate_limit_hits > MAX_RATE_LIMIT_RETRIES {
                        return Err(JudgeError::Unavailable(
                            "rate limited beyond backoff budget".to_string(),
                        ));
                    }
                    let backoff = retry_after.unwrap_or_else(|| {
                        Duration::from_millis(100u64.saturating_mul(1 << rate_limit_hits.min(6)))
                    });
                    std::thread::sleep(backoff.min(Duration::from_secs(10)));
                    // does not count against the retry budget
                }
                Err(BackendError::Transport(msg)) => {
                    attempts += 1;
                    last_was_schema = false;
                    last_error = msg;
                }
            }
        }

        if last_was_schema {
            Err(JudgeError::Malformed(last_error))
        } else {
            Err(JudgeError::Unavailable(last_error))
        }
    }
}

fn open_cassette(mode: CassetteMode, path: Option<&Path>) -> Result<Cassette, JudgeError> {
    match mode {
        CassetteMode::Passthrough => Ok(Cassette::passthrough()),
        CassetteMode::Record => {
            let path = path.ok_or_else(|| {
                JudgeError::Misconfigured("record mode requires a cassette path".to_string())
            })?;
            Cassette::record(path)
                .map_err(|e| JudgeError::Misconfigured(format!("cannot open cassette: {e}")))
        }
        CassetteMode::Replay => {
            let path = path.ok_or_else(|| {
                JudgeError::Misconfigured("replay mode requires a cassette path".to_string())
            })?;
            Cassette::replay(path).map_err(|e| {
                JudgeError::Misconfigured(format!(
                    "replay mode requires an existing cassette at {}: {e}",
                    path.display()
                ))
            })
        }
    }
}

fn interpret(raw: &str, schema_text: &str, expected: &Expected<'_>) -> Result<Value, String> {
    match expected {
        Expected::Json => {
            let payload = extract_json(raw).ok_or_else(|| {
                "response contains no JSON value (fenced block or bare object expected)".to_string()
            })?;
            let value: Value = serde_json::from_str(&payload)
                .map_err(|e| format!("response is not valid JSON: {e}"))?;
            schema::validate(schema_text, &value)?;
            Ok(value)
        }
        Expected::Markdown(contract) => {
            contract.check(raw)?;
            Ok(Value::String(raw.to_string()))
        }
    }
}

/// Pulls a JSON value out of model output: a ```json fenced block wins, then
/// any fenced block, then the first balanced `{...}`/`[...]` span.
pub fn extract_json(raw: &str) -> Option<String> {
    for fence in ["```json", "```JSON", "```"] {
        if let Some(start) = raw.find(fence) {
            let body_start = start + fence.len();
            if let Some(end) = raw[body_start..].find("```") {
                let candidate = raw[body_start..body_start + end].trim();
                if candidate.starts_with('{') || candidate.starts_with('[') {
                    return Some(candidate.to_string());
                }
            }
        }
    }
    let open = raw.find(['{', '['])?;
    let bytes = raw.as_bytes();
    let open_ch = bytes[open];
    let close_ch = if open_ch == b'{' { b'}' } else { b']' };
    let mut depth = 0usize;
    let mut in_string = false;
    let mut i = open;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            match b {
                b'\\' => i += 1,
                b'"' => in_string = false,
                _ => {}
            }
        } else {
            match b {
                b'"' => in_string = true,
                _ if b == open_ch => depth += 1,
                _ if b == close_ch => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(raw[open..=i].to_string());
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{CountingBackend, FlakyBackend, ScriptedBackend};
    use std::sync::atomic::Ordering;

    fn simple_request() -> JudgeRequest {
        JudgeRequest {
            task_tag: "classify_section".to_string(),
            system_prompt: "classify".to_string(),
            user_prompt: "heading: Odd".to_string(),
            response_schema: schema::CLASSIFY_SECTION.to_string(),
        }
    }

    #[test]
    fn idempotency_key_is_stable_and_content_sensitive() {
        let a = simple_request();
        let mut b = simple_request();
        assert_eq!(a.idempotency_key(), b.idempotency_key());
        b.user_prompt.push('!');
        assert_ne!(a.idempotency_key(), b.idempotency_key());
        // tag does not enter the key
        let mut c = simple_request();
        c.task_tag = "other".to_string();
        assert_eq!(a.idempotency_key(), c.idempotency_key());
    }

    #[test]
    fn fenced_json_extraction() {
        let raw = "Sure, here is the result:\n```json\n{\"category\": \"Method\"}\n```\nDone.";
        assert_eq!(extract_json(raw).unwrap(), "{\"category\": \"Method\"}");
        let raw2 = "prose {\"a\": \"b {nested}\"} tail";
        assert_eq!(extract_json(raw2).unwrap(), "{\"a\": \"b {nested}\"}");
        assert!(extract_json("no json here").is_none());
    }

    #[test]
    fn flaky_backend_counts_attempts() {
        let backend = FlakyBackend::new(2, r#"{"category": "Method"}"#);
        let gateway =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 3).unwrap();
        let response = gateway.submit(&simple_request()).unwrap();
        assert_eq!(response.attempt_count, 3);
        assert_eq!(response.parsed["category"], "Method");
    }

    #[test]
    fn budget_exhaustion_is_malformed() {
        let backend = ScriptedBackend::repeating("not json at all");
        let gateway =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 3).unwrap();
        let err = gateway.submit(&simple_request()).unwrap_err();
        assert!(matches!(err, JudgeError::Malformed(_)));
    }

    #[test]
    fn corrective_retry_appends_violation() {
        let backend = ScriptedBackend::new(vec![
            r#"{"category": "Nope"}"#.to_string(),
            r#"{"category": "Method"}"#.to_string(),
        ]);
        let prompts = backend.prompts();
        let gateway =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 3).unwrap();
        let response = gateway.submit(&simple_request()).unwrap();
        assert_eq!(response.attempt_count, 2);
        let seen = prompts.lock().unwrap();
        assert!(seen[1].contains("previous response was invalid"));
        assert!(seen[1].contains("allowed values"));
    }

    #[test]
    fn record_mode_is_idempotent_per_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cas.jsonl");
        let backend = ScriptedBackend::repeating(r#"{"category": "Method"}"#);
        let calls = backend.calls();
        let gateway = JudgeGateway::new(
            Box::new(backend),
            CassetteMode::Record,
            Some(&path),
            1,
            3,
        )
        .unwrap();
        gateway.submit(&simple_request()).unwrap();
        gateway.submit(&simple_request()).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn replay_mode_never_touches_backend() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cas.jsonl");
        {
            let backend = ScriptedBackend::repeating(r#"{"category": "Method"}"#);
            let gateway = JudgeGateway::new(
                Box::new(backend),
                CassetteMode::Record,
                Some(&path),
                1,
                3,
            )
            .unwrap();
            gateway.submit(&simple_request()).unwrap();
        }
        let backend = ScriptedBackend::repeating("should never be called");
        let calls = backend.calls();
        let gateway = JudgeGateway::new(
            Box::new(backend),
            CassetteMode::Replay,
            Some(&path),
            1,
            3,
        )
        .unwrap();
        let response = gateway.submit(&simple_request()).unwrap();
        assert_eq!(response.parsed["category"], "Method");
        assert_eq!(calls.load(Ordering::SeqCst), 0);

        // a cassette miss is an availability error, still no backend call
        let mut other = simple_request();
        other.user_prompt = "different".to_string();
        assert!(matches!(
            gateway.submit(&other),
            Err(JudgeError::Unavailable(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn rate_limits_back_off_without_consuming_attempts() {
        let backend = crate::testkit::RateLimitedBackend::new(2, r#"{"category": "Method"}"#);
        let calls = backend.calls();
        let gateway =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 1).unwrap();
        // budget of 1 attempt still succeeds: backoff retries are free
        let response = gateway.submit(&simple_request()).unwrap();
        assert_eq!(response.attempt_count, 1);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn concurrency_bound_is_enforced() {
        let backend = CountingBackend::new(r#"{"category": "Method"}"#, 5);
        let peak = backend.peak();
        let gateway =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 2, 3).unwrap();
        std::thread::scope(|scope| {
            for i in 0..8 {
                let gateway = &gateway;
                scope.spawn(move || {
                    let mut req = simple_request();
                    req.user_prompt = format!("prompt {i}");
                    gateway.submit(&req).unwrap();
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
