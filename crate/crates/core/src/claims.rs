//! Two-stage hallucination analysis: extract and classify verifiable claims
//! from each generated section, then re-verify all contradictory claims in
//! one resource-grounded pass.
//!
//! Stage 2 costs exactly one verifier invocation regardless of how many
//! claims were flagged; zero flagged claims means zero invocations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::CanonicalCategory;
use crate::diag::{Diagnostic, DiagnosticKind, Diagnostics};
use crate::judge::{schema, JudgeGateway, JudgeRequest, VerifierGateway};
use crate::parallel::bounded_parallel_map;

pub const CLAIMS_SCHEMA: &str = "claims/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimClass {
    Supported,
    Neutral,
    Contradictory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Major,
    Minor,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStage {
    Extracted,
    Verified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub section: CanonicalCategory,
    /// Ordinal within the section; (section, ordinal) keys the claim through
    /// the batched verification round trip.
    pub ordinal: usize,
    pub text: String,
    pub classification: ClaimClass,
    pub severity: Severity,
    pub evidence: String,
    pub stage: ClaimStage,
}

impl Claim {
    /// severity != None exactly when classification = Contradictory.
    pub fn invariant_holds(&self) -> bool {
        (self.severity != Severity::None) == (self.classification == ClaimClass::Contradictory)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimCounts {
    pub supported: usize,
    pub neutral: usize,
    pub major_contradictory: usize,
    pub minor_contradictory: usize,
}

impl ClaimCounts {
    fn add(&mut self, claim: &Claim) {
        match (claim.classification, claim.severity) {
            (ClaimClass::Supported, _) => self.supported += 1,
            (ClaimClass::Neutral, _) => self.neutral += 1,
            (ClaimClass::Contradictory, Severity::Major) => self.major_contradictory += 1,
            (ClaimClass::Contradictory, _) => self.minor_contradictory += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.supported + self.neutral + self.major_contradictory + self.minor_contradictory
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub per_section: BTreeMap<CanonicalCategory, ClaimCounts>,
    pub totals: ClaimCounts,
    /// Headline "Hallucination Count": total major contradictory claims
    /// after two-stage verification.
    pub headline: usize,
    pub claims: Vec<Claim>,
    /// Set when the verifier was unavailable and stage-1 verdicts stand.
    pub unverified: bool,
}

/// Stage 1: one judge call per generated section, extracting and classifying
/// every concrete verifiable claim.
pub fn extract_claims(
    section: CanonicalCategory,
    pred_text: &str,
    gt_full_text: &str,
    judge: &JudgeGateway,
    diagnostics: &mut Diagnostics,
) -> Vec<Claim> {
    debug_assert!(section.is_scored());
    debug_assert!(!pred_text.is_empty());

    let request = JudgeRequest {
        task_tag: "claim_extract".to_string(),
        system_prompt: crate::judge::prompts::render("claim_extract_system", &[]),
        user_prompt: crate::judge::prompts::render(
            "claim_extract_user",
            &[
                ("{section_name}", section.name()),
                ("{pred_content}", pred_text),
                ("{gt_full_content}", gt_full_text),
            ],
        ),
        response_schema: schema::CLAIM_EXTRACT.to_string(),
    };

    match judge.submit(&request) {
        Ok(response) => {
            let items = response.parsed["claims"].as_array().cloned().unwrap_or_default();
            items
                .iter()
                .enumerate()
                .filter_map(|(ordinal, item)| {
                    let classification = match item["classification"].as_str()? {
                        "supported" => ClaimClass::Supported,
                        "neutral" => ClaimClass::Neutral,
                        "contradictory" => ClaimClass::Contradictory,
                        _ => return None,
                    };
                    let severity = if classification == ClaimClass::Contradictory {
                        match item["severity"].as_str() {
                            Some("minor") => Severity::Minor,
                            // missing severity on a contradiction defaults to
                            // major so nothing slips past verification
                            _ => Severity::Major,
                        }
                    } else {
                        Severity::None
                    };
                    Some(Claim {
                        section,
                        ordinal,
                        text: item["claim"].as_str()?.to_string(),
                        classification,
                        severity,
                        evidence: item["evidence"].as_str().unwrap_or_default().to_string(),
                        stage: ClaimStage::Extracted,
                    })
                })
                .collect()
        }
        Err(err) => {
            // never a silent zero: the empty list always travels with a flag
            diagnostics.push(Diagnostic::new(
                "claims",
                DiagnosticKind::JudgeMalformed,
                format!("{section}: claim extraction failed, zero claims recorded: {err}"),
            ));
            Vec::new()
        }
    }
}

/// Stage-1 extraction across all generated sections, bounded-parallel, in
/// canonical section order.
pub fn extract_all_claims(
    sections: Vec<(CanonicalCategory, String)>,
    gt_full_text: &str,
    judge: &JudgeGateway,
    parallelism: usize,
    diagnostics: &mut Diagnostics,
) -> Vec<Claim> {
    let outcomes = bounded_parallel_map(sections, parallelism, |_, (section, text)| {
        let mut local = Diagnostics::new();
        let claims = extract_claims(section, &text, gt_full_text, judge, &mut local);
        (claims, local)
    });
    let mut all = Vec::new();
    for (claims, local) in outcomes {
        all.extend(claims);
        diagnostics.extend(local);
    }
    all
}

/// Stage 2: aggregates every contradictory claim into one verifier
/// invocation over the bundle. Supported and neutral claims pass through
/// with their stage-1 verdicts untouched. Returns the claims plus an
/// `unverified` flag set when the verifier could not run.
pub fn verify_claims(
    stage1: &[Claim],
    bundle_root: &std::path::Path,
    verifier: &VerifierGateway,
    diagnostics: &mut Diagnostics,
) -> (Vec<Claim>, bool) {
    let flagged: Vec<&Claim> = stage1
        .iter()
        .filter(|c| c.classification == ClaimClass::Contradictory)
        .collect();

    if flagged.is_empty() {
        // zero flagged claims, zero verifier calls
        let verified = stage1
            .iter()
            .cloned()
            .map(|mut c| {
                c.stage = ClaimStage::Verified;
                c
            })
            .collect();
        return (verified, false);
    }

    let claims_block: String = flagged
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "### Claim {}\n- Claim: {}\n- Original evidence: {}\n- Original severity: {}",
                i + 1,
                c.text,
                c.evidence,
                match c.severity {
                    Severity::Major => "major",
                    Severity::Minor => "minor",
                    Severity::None => "none",
                }
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");

    let request = JudgeRequest {
        task_tag: "verify_claims".to_string(),
        system_prompt: crate::judge::prompts::render("verify_claims_system", &[]),
        user_prompt: crate::judge::prompts::render(
            "verify_claims_user",
            &[
                ("{num_claims}", flagged.len().to_string().as_str()),
                ("{claims_block}", claims_block.as_str()),
            ],
        ),
        response_schema: schema::VERIFY_CLAIMS.to_string(),
    };

    let raw = match verifier.run_verifier(&request, bundle_root) {
        Ok((raw, verifier_diags)) => {
            diagnostics.extend(verifier_diags);
            raw
        }
        Err(err) => {
            diagnostics.push(Diagnostic::new(
                "claims",
                DiagnosticKind::Unverified,
                format!("stage-2 verification unavailable; stage-1 verdicts retained: {err}"),
            ));
            return (stage1.to_vec(), true);
        }
    };

    let Some(results) = parse_verifier_results(&raw) else {
        diagnostics.push(Diagnostic::new(
            "claims",
            DiagnosticKind::Unverified,
            "verifier response was not a parseable results array; stage-1 verdicts retained",
        ));
        return (stage1.to_vec(), true);
    };

    // re-key verdicts by (section, ordinal) of the flagged claims, in order
    let mut revisions: BTreeMap<(CanonicalCategory, usize), Verdict> = BTreeMap::new();
    for (i, claim) in flagged.iter().enumerate() {
        match results.get(i) {
            Some(verdict) => {
                revisions.insert((claim.section, claim.ordinal), verdict.clone());
            }
            None => {
                diagnostics.push(Diagnostic::new(
                    "claims",
                    DiagnosticKind::VerifierOmittedClaim,
                    format!(
                        "verifier omitted claim {} ('{}'); stage-1 verdict retained",
                        i + 1,
                        truncate(&claim.text, 60)
                    ),
                ));
            }
        }
    }

    let verified: Vec<Claim> = stage1
        .iter()
        .cloned()
        .map(|mut claim| {
            if claim.classification == ClaimClass::Contradictory {
                if let Some((class, severity, evidence)) =
                    revisions.get(&(claim.section, claim.ordinal))
                {
                    if *class == ClaimClass::Contradictory
                        && claim.severity == Severity::Minor
                        && *severity == Severity::Major
                    {
                        diagnostics.push(Diagnostic::new(
                            "claims",
                            DiagnosticKind::SeverityEscalated,
                            format!(
                                "claim '{}' escalated minor -> major at verification",
                                truncate(&claim.text, 60)
                            ),
                        ));
                    }
                    claim.classification = *class;
                    claim.severity = if *class == ClaimClass::Contradictory {
                        match severity {
                            Severity::None => Severity::Major,
                            s => *s,
                        }
                    } else {
                        Severity::None
                    };
                    if !evidence.is_empty() {
                        claim.evidence = evidence.clone();
                    }
                }
            }
            claim.stage = ClaimStage::Verified;
            claim
        })
        .collect();

    (verified, false)
}

type Verdict = (ClaimClass, Severity, String);

fn parse_verifier_results(raw: &str) -> Option<Vec<Verdict>> {
    let payload = crate::judge::extract_json(raw)?;
    let value: serde_json::Value = serde_json::from_str(&payload).ok()?;
    schema::validate(schema::VERIFY_CLAIMS, &value).ok()?;
    let results = value["results"].as_array()?;
    Some(
        results
            .iter()
            .filter_map(|item| {
                let class = match item["classification"].as_str()? {
                    "supported" => ClaimClass::Supported,
                    "neutral" => ClaimClass::Neutral,
                    "contradictory" => ClaimClass::Contradictory,
                    _ => return None,
                };
                let severity = match item["severity"].as_str() {
                    Some("major") => Severity::Major,
                    Some("minor") => Severity::Minor,
                    _ => Severity::None,
                };
                let evidence = item["evidence"].as_str().unwrap_or_default().to_string();
                Some((class, severity, evidence))
            })
            .collect(),
    )
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        format!("{}...", s.chars().take(max).collect::<String>())
    }
}

/// Counts per section and in total; the headline is the major-contradictory
/// total.
pub fn tally(claims: Vec<Claim>, unverified: bool) -> HallucinationReport {
    let mut per_section: BTreeMap<CanonicalCategory, ClaimCounts> = BTreeMap::new();
    let mut totals = ClaimCounts::default();
    for claim in &claims {
        per_section.entry(claim.section).or_default().add(claim);
        totals.add(claim);
    }
    HallucinationReport {
        headline: totals.major_contradictory,
        per_section,
        totals,
        claims,
        unverified,
    }
}

/// On-disk artifact: stage-1 list, verified list, counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimsFile {
    pub schema: String,
    pub stage1: Vec<Claim>,
    pub verified: Vec<Claim>,
    pub counts: ClaimCounts,
    pub per_section: BTreeMap<CanonicalCategory, ClaimCounts>,
    pub unverified: bool,
}

impl ClaimsFile {
    pub fn new(stage1: Vec<Claim>, report: &HallucinationReport) -> Self {
        ClaimsFile {
            schema: CLAIMS_SCHEMA.to_string(),
            stage1,
            verified: report.claims.clone(),
            counts: report.totals,
            per_section: report.per_section.clone(),
            unverified: report.unverified,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::CassetteMode;
    use crate::testkit::{ScriptedBackend, ScriptedVerifier};
    use std::sync::atomic::Ordering;

    fn claim(
        section: CanonicalCategory,
        ordinal: usize,
        class: ClaimClass,
        severity: Severity,
    ) -> Claim {
        Claim {
            section,
            ordinal,
            text: format!("claim {ordinal} in {section}"),
            classification: class,
            severity,
            evidence: "stage-1 evidence".to_string(),
            stage: ClaimStage::Extracted,
        }
    }

    #[test]
    fn extraction_parses_mixed_claims() {
        let backend = ScriptedBackend::repeating(
            r#"{"claims": [
                {"claim": "metric is 98.3", "classification": "supported", "evidence": "table", "severity": null},
                {"claim": "generic context", "classification": "neutral", "evidence": "absent", "severity": null},
                {"claim": "metric is 99.9", "classification": "contradictory", "evidence": "conflicts", "severity": "major"}
            ]}"#,
        );
        let judge =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 3).unwrap();
        let mut diags = Diagnostics::new();
        let claims = extract_claims(
            CanonicalCategory::Experiment,
            "pred text",
            "gt text",
            &judge,
            &mut diags,
        );
        assert_eq!(claims.len(), 3);
        assert!(claims.iter().all(|c| c.invariant_holds()));
        assert_eq!(claims[2].severity, Severity::Major);
        assert_eq!(claims[0].ordinal, 0);
    }

    #[test]
    fn extraction_failure_is_flagged_never_silent() {
        let backend = ScriptedBackend::repeating("garbage");
        let judge =
            JudgeGateway::new(Box::new(backend), CassetteMode::Passthrough, None, 1, 2).unwrap();
        let mut diags = Diagnostics::new();
        let claims = extract_claims(CanonicalCategory::Method, "pred", "gt", &judge, &mut diags);
        assert!(claims.is_empty());
        assert!(diags.has_kind(DiagnosticKind::JudgeMalformed));
    }

    #[test]
    fn zero_flagged_means_zero_verifier_calls() {
        let stage1 = vec![
            claim(CanonicalCategory::Abstract, 0, ClaimClass::Supported, Severity::None),
            claim(CanonicalCategory::Method, 0, ClaimClass::Neutral, Severity::None),
        ];
        let backend = ScriptedVerifier::new(r#"{"results": []}"#);
        let calls = backend.calls();
        let verifier = VerifierGateway::new(Box::new(backend));
        let dir = tempfile::tempdir().unwrap();
        let mut diags = Diagnostics::new();
        let (verified, unverified) = verify_claims(&stage1, dir.path(), &verifier, &mut diags);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert!(!unverified);
        assert!(verified.iter().all(|c| c.stage == ClaimStage::Verified));
        // verdicts bit-identical apart from the stage marker
        for (before, after) in stage1.iter().zip(&verified) {
            assert_eq!(before.classification, after.classification);
            assert_eq!(before.severity, after.severity);
            assert_eq!(before.text, after.text);
            assert_eq!(before.evidence, after.evidence);
        }
    }

    #[test]
    fn single_invocation_regardless_of_flag_count() {
        let mut stage1 = Vec::new();
        for i in 0..40 {
            stage1.push(claim(
                CanonicalCategory::Experiment,
                i,
                ClaimClass::Contradictory,
                Severity::Major,
            ));
        }
        let results: Vec<String> = (0..40)
            .map(|_| {
                r#"{"classification": "contradictory", "severity": "major", "evidence": "confirmed"}"#
                    .to_string()
            })
            .collect();
        let response = format!(r#"{{"results": [{}]}}"#, results.join(","));
        let backend = ScriptedVerifier::new(&response);
        let calls = backend.calls();
        let verifier = VerifierGateway::new(Box::new(backend));
        let dir = tempfile::tempdir().unwrap();
        let mut diags = Diagnostics::new();
        let (verified, _) = verify_claims(&stage1, dir.path(), &verifier, &mut diags);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(verified.len(), 40);
    }

    #[test]
    fn false_positive_repair_path() {
        let stage1 = vec![claim(
            CanonicalCategory::Method,
            0,
            ClaimClass::Contradictory,
            Severity::Major,
        )];
        let backend = ScriptedVerifier::new(
            r#"{"results": [{"classification": "supported", "severity": "none", "evidence": "present in GT appendix"}]}"#,
        );
        let verifier = VerifierGateway::new(Box::new(backend));
        let dir = tempfile::tempdir().unwrap();
        let mut diags = Diagnostics::new();
        let (verified, _) = verify_claims(&stage1, dir.path(), &verifier, &mut diags);
        assert_eq!(verified[0].classification, ClaimClass::Supported);
        assert_eq!(verified[0].severity, Severity::None);
        assert!(verified[0].invariant_holds());
        assert_eq!(verified[0].evidence, "present in GT appendix");
    }

    #[test]
    fn omitted_claim_keeps_stage1_verdict_with_diagnostic() {
        let stage1 = vec![
            claim(CanonicalCategory::Method, 0, ClaimClass::Contradictory, Severity::Major),
            claim(CanonicalCategory::Method, 1, ClaimClass::Contradictory, Severity::Minor),
        ];
        // response covers only the first claim
        let backend = ScriptedVerifier::new(
            r#"{"results": [{"classification": "neutral", "severity": "none", "evidence": "fp"}]}"#,
        );
        let verifier = VerifierGateway::new(Box::new(backend));
        let dir = tempfile::tempdir().unwrap();
        let mut diags = Diagnostics::new();
        let (verified, unverified) = verify_claims(&stage1, dir.path(), &verifier, &mut diags);
        assert!(!unverified);
        assert_eq!(verified[0].classification, ClaimClass::Neutral);
        assert_eq!(verified[1].classification, ClaimClass::Contradictory);
        assert_eq!(verified[1].severity, Severity::Minor);
        assert!(diags.has_kind(DiagnosticKind::VerifierOmittedClaim));
    }

    #[test]
    fn unavailable_verifier_retains_stage1_flagged() {
        let stage1 = vec![claim(
            CanonicalCategory::Method,
            0,
            ClaimClass::Contradictory,
            Severity::Major,
        )];
        let verifier = VerifierGateway::unavailable();
        let dir = tempfile::tempdir().unwrap();
        let mut diags = Diagnostics::new();
        let (verified, unverified) = verify_claims(&stage1, dir.path(), &verifier, &mut diags);
        assert!(unverified);
        assert_eq!(verified[0].stage, ClaimStage::Extracted);
        assert!(diags.has_kind(DiagnosticKind::Unverified));
    }

    #[test]
    fn escalation_is_flagged() {
        let stage1 = vec![claim(
            CanonicalCategory::Method,
            0,
            ClaimClass::Contradictory,
            Severity::Minor,
        )];
        let backend = ScriptedVerifier::new(
            r#"{"results": [{"classification": "contradictory", "severity": "major", "evidence": "worse than thought"}]}"#,
        );
        let verifier = VerifierGateway::new(Box::new(backend));
        let dir = tempfile::tempdir().unwrap();
        let mut diags = Diagnostics::new();
        let (verified, _) = verify_claims(&stage1, dir.path(), &verifier, &mut diags);
        assert_eq!(verified[0].severity, Severity::Major);
        assert!(diags.has_kind(DiagnosticKind::SeverityEscalated));
    }

    #[test]
    fn tally_example() {
        let claims = vec![
            claim(CanonicalCategory::Abstract, 0, ClaimClass::Supported, Severity::None),
            claim(CanonicalCategory::Abstract, 1, ClaimClass::Supported, Severity::None),
            claim(CanonicalCategory::Method, 0, ClaimClass::Neutral, Severity::None),
            claim(CanonicalCategory::Method, 1, ClaimClass::Contradictory, Severity::Major),
            claim(CanonicalCategory::Experiment, 0, ClaimClass::Contradictory, Severity::Minor),
        ];
        let report = tally(claims, false);
        assert_eq!(report.totals.supported, 2);
        assert_eq!(report.totals.neutral, 1);
        assert_eq!(report.totals.major_contradictory, 1);
        assert_eq!(report.totals.minor_contradictory, 1);
        assert_eq!(report.headline, 1);
        // per-section counts conserve totals
        let sum: usize = report.per_section.values().map(|c| c.total()).sum();
        assert_eq!(sum, report.totals.total());
    }

    #[test]
    fn tally_empty() {
        let report = tally(vec![], false);
        assert_eq!(report.headline, 0);
        assert_eq!(report.totals.total(), 0);
        assert!(report.per_section.is_empty());
    }
}
