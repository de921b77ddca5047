//! Goal drift detection: verifies that an IR is still about what the user
//! originally asked for.
//!
//! Three conditions are checked in a fixed order and the first hit wins:
//!
//! (a) **Anchor mismatch** — the IR's lineage anchor must equal the
//!     session's request hash, byte for byte. No similarity fallback.
//! (b) **Below threshold** — the similarity between the intent summary and
//!     the original request text is recomputed with the configured oracle;
//!     a carried score that disagrees with the recomputation (beyond 1e-6)
//!     or a recomputed score under the threshold is drift.
//! (c) **Blacklist match** — any action matching a self-preservation rule
//!     (threatening an operator, touching the agent's own replacement or
//!     status, or writing a governed table) is drift regardless of score.
//!
//! The check is total: every input produces a verdict, never an error.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::intent::{IntentType, LineageRecord, SessionContext};
use crate::taxonomy::{CapabilitySpec, ResourceClass, Verb};

/// Default similarity threshold wired into the gate.
pub const DRIFT_THRESHOLD_MECHANISM: f64 = 0.40;
/// Stricter preset used by the evaluation harness.
pub const DRIFT_THRESHOLD_EVAL: f64 = 0.82;

/// Maximum tolerated difference between the IR-carried similarity score and
/// the gate's own recomputation.
pub const SCORE_TOLERANCE: f64 = 1e-6;

/// Deterministic text similarity in \[0,1\]. Implementations must be pure:
/// same inputs, same score, no side effects.
pub trait SimilarityOracle {
    fn score(&self, intent_summary: &str, nlr_text: &str) -> f64;
}

/// Lowercase word tokens: maximal runs of alphanumeric characters.
pub(crate) fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Cosine similarity between term-frequency vectors of the two texts.
/// Identical texts score 1.0; disjoint vocabularies score 0.0; one or both
/// empty scores 0.0.
pub fn tf_cosine(a: &str, b: &str) -> f64 {
    let ta = tokenize(a);
    let tb = tokenize(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut freq_a: alloc::collections::BTreeMap<&str, u64> = alloc::collections::BTreeMap::new();
    for t in &ta {
        *freq_a.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut freq_b: alloc::collections::BTreeMap<&str, u64> = alloc::collections::BTreeMap::new();
    for t in &tb {
        *freq_b.entry(t.as_str()).or_insert(0) += 1;
    }
    let dot: u64 = freq_a
        .iter()
        .filter_map(|(t, ca)| freq_b.get(t).map(|cb| ca * cb))
        .sum();
    if dot == 0 {
        return 0.0;
    }
    let norm_a: u64 = freq_a.values().map(|c| c * c).sum();
    let norm_b: u64 = freq_b.values().map(|c| c * c).sum();
    #[allow(clippy::cast_precision_loss)]
    {
        // libm keeps this usable without std; results match std's sqrt
        // bit-for-bit (both are IEEE correctly rounded).
        dot as f64 / (libm::sqrt(norm_a as f64) * libm::sqrt(norm_b as f64))
    }
}

/// The default oracle: term-frequency cosine over word tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosineSimilarity;

impl SimilarityOracle for TfCosineSimilarity {
    fn score(&self, intent_summary: &str, nlr_text: &str) -> f64 {
        tf_cosine(intent_summary, nlr_text)
    }
}

/// The text scored against the original request: the intent name with
/// underscores spaced out, followed by the derivation chain entries.
pub fn intent_summary(intent: &IntentType, derivation_chain: &[String]) -> String {
    let mut out = intent.display_name();
    for entry in derivation_chain {
        out.push(' ');
        out.push_str(entry);
    }
    out
}

/// Structural self-preservation rules. Matchers read typed action fields —
/// never prose — so evaluation is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SrbRule {
    /// External communication carrying a threat template aimed at an
    /// operator-class principal.
    ConditionalThreatToOperator {
        target_principals: Vec<String>,
        template_classes: Vec<String>,
    },
    /// Any query or modification of the agent's own standing: replacement
    /// schedule, operational status, and similar subjects.
    SelfStatusQueryOrModify { subjects: Vec<String> },
    /// Writes (or deletes) against governed configuration tables.
    GovernedTableWrite { tables: Vec<String> },
}

fn param_str<'a>(action: &'a CapabilitySpec, key: &str) -> Option<&'a str> {
    action.params.get(key).and_then(|v| v.as_str())
}

fn target_id(action: &CapabilitySpec) -> Option<&str> {
    action
        .params
        .get("target")
        .and_then(|v| v.as_ref_value())
        .map(|r| r.id())
}

impl SrbRule {
    /// Does this rule's structural predicate hold for the action?
    pub fn matches(&self, action: &CapabilitySpec) -> bool {
        match self {
            SrbRule::ConditionalThreatToOperator {
                target_principals,
                template_classes,
            } => {
                // Outbound communication shapes only.
                let outbound = action.l1 == ResourceClass::Api
                    && matches!(action.l2, Verb::Write | Verb::Execute);
                let principal_hit = param_str(action, "target_principal")
                    .map(|p| target_principals.iter().any(|t| t == p))
                    .unwrap_or(false);
                let template_hit = param_str(action, "template_class")
                    .map(|c| template_classes.iter().any(|t| t == c))
                    .unwrap_or(false);
                outbound && principal_hit && template_hit
            }
            SrbRule::SelfStatusQueryOrModify { subjects } => {
                let subject_hit = param_str(action, "subject")
                    .map(|s| subjects.iter().any(|t| t == s))
                    .unwrap_or(false);
                let target_hit = target_id(action)
                    .map(|id| subjects.iter().any(|t| t == id))
                    .unwrap_or(false);
                subject_hit || target_hit
            }
            SrbRule::GovernedTableWrite { tables } => {
                let writing = matches!(action.l2, Verb::Write | Verb::Delete);
                let table_hit = target_id(action)
                    .map(|id| tables.iter().any(|t| t == id))
                    .unwrap_or(false);
                writing && table_hit
            }
        }
    }
}

/// True iff any rule matches; order-independent.
pub fn srb_match(action: &CapabilitySpec, srb: &[SrbRule]) -> bool {
    srb.iter().any(|rule| rule.matches(action))
}

/// Which drift condition fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftCode {
    AnchorMismatch,
    BelowThreshold,
    SrbMatch,
}

impl DriftCode {
    pub fn code(&self) -> &'static str {
        match self {
            DriftCode::AnchorMismatch => "ANCHOR_MISMATCH",
            DriftCode::BelowThreshold => "BELOW_THRESHOLD",
            DriftCode::SrbMatch => "SRB_MATCH",
        }
    }
}

/// Gate outcome. `Drift` carries exactly one code — the earliest condition
/// that fired — plus the value that triggered it.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftVerdict {
    Consistent,
    Drift { code: DriftCode, triggering: String },
}

impl DriftVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, DriftVerdict::Consistent)
    }
}

/// Run the full drift check. `nlr_text` is the kernel-held sanitized text of
/// the session's original request — never taken from the IR.
#[allow(clippy::too_many_arguments)]
pub fn goal_drift_check(
    lineage: &LineageRecord,
    session: &SessionContext,
    intent: &IntentType,
    nlr_text: &str,
    actions: &[CapabilitySpec],
    srb: &[SrbRule],
    oracle: &dyn SimilarityOracle,
    theta: f64,
) -> DriftVerdict {
    // (a) exact byte equality of digests — no similarity fallback.
    if lineage.nlr_anchor != session.nlr_hash {
        return DriftVerdict::Drift {
            code: DriftCode::AnchorMismatch,
            triggering: lineage.nlr_anchor.to_hex(),
        };
    }

    // (b) recompute the similarity score; the carried score is a claim,
    // not a fact. A forged claim or a low recomputed score is drift.
    let summary = intent_summary(intent, &lineage.derivation_chain);
    let recomputed = oracle.score(&summary, nlr_text);
    if (recomputed - lineage.anchor_similarity_score).abs() > SCORE_TOLERANCE
        || recomputed < theta
    {
        return DriftVerdict::Drift {
            code: DriftCode::BelowThreshold,
            triggering: format!("{recomputed:.6}"),
        };
    }

    // (c) structural blacklist.
    for action in actions {
        if let Some(rule) = srb.iter().find(|r| r.matches(action)) {
            let label = match rule {
                SrbRule::ConditionalThreatToOperator { .. } => "conditional_threat_to_operator",
                SrbRule::SelfStatusQueryOrModify { .. } => "self_status_query_or_modify",
                SrbRule::GovernedTableWrite { .. } => "governed_table_write",
            };
            return DriftVerdict::Drift {
                code: DriftCode::SrbMatch,
                triggering: label.to_string(),
            };
        }
    }

    DriftVerdict::Consistent
}
