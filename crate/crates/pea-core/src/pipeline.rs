//! The authorization kernel: eight ordered gates between a policy proposal
//! and a capability token.
//!
//! `authorize` runs the gates strictly in order and fails closed at the
//! first rejection — a later gate can never resurrect a request an earlier
//! gate killed, and the advisory gate (step 5) can deny but never grant
//! past the deterministic ones. Token issuance happens only as the final
//! step, holding the [`IssuanceGuard`] that no other call site can
//! construct, so every live token traces back to a fully passed pipeline.
//!
//! Gate order and their rejection codes:
//!
//! | step | gate                        | rejection code           |
//! |------|-----------------------------|--------------------------|
//! | 0    | intent–capability consistency | `INTENT_MISMATCH`      |
//! | 0a   | goal drift                  | `GOAL_DRIFT_DETECTED`    |
//! | 1    | control-token deny scan     | `CONTROL_BLOCK`          |
//! | 2    | human approval (if required)| `APPROVAL_DENIED`        |
//! | 3    | constraint evaluation       | `CONSTRAINT_FAIL`        |
//! | 4    | context invariants          | `STATE_VERSION_MISMATCH` |
//! | 5    | advisory risk score         | `SOFT_AUTH_REJECT`       |
//! | 6    | hard-auth veto rules        | `HARD_AUTH_VETO`         |
//! | 7    | token issuance              | — (cannot reject)        |

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::audit::{AuditEventKind, AuditLog, Principal};
use crate::constraints::{eval_atom, eval_constraints, ConstraintExpr, ConstraintVerdict};
use crate::crypto::{hmac_sign, hmac_verify, Digest32, SigningKey};
use crate::drift::{goal_drift_check, DriftVerdict, SimilarityOracle, SrbRule};
use crate::intent::{PolicyIR, SessionContext};
use crate::policy::{ivl_check, IntentPolicy, IvlVerdict, PolicyContext};
use crate::taxonomy::{scope_leq, CapabilitySpec, ParamMap, ParamValue, ResourceClass, Scope, Verb};
use crate::token::{CapabilityToken, IssuanceGuard, TokenSpec, TokenStore, TTL_MAX, TTL_MIN};

/// Advisory score floor for step 5. Scores below it deny; scores above it
/// merely shorten token lifetime. Configurable per deployment.
pub const SOFT_AUTH_ADVISORY_THRESHOLD: f64 = 0.5;

const UNIT_SEP: u8 = 0x1F;

// ---------------------------------------------------------------------------
// Steps, codes, decisions
// ---------------------------------------------------------------------------

/// Pipeline gates in execution order. The derived ordering matches
/// execution order, so "no step later than X" is a plain comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StepId {
    Ivl,
    Drift,
    ControlScan,
    Approval,
    Constraints,
    ContextInvariants,
    SoftAuth,
    HardAuth,
}

impl StepId {
    pub fn label(&self) -> &'static str {
        match self {
            StepId::Ivl => "0",
            StepId::Drift => "0a",
            StepId::ControlScan => "1",
            StepId::Approval => "2",
            StepId::Constraints => "3",
            StepId::ContextInvariants => "4",
            StepId::SoftAuth => "5",
            StepId::HardAuth => "6",
        }
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Wire-stable rejection identifiers, one per gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectionCode {
    IntentMismatch,
    GoalDriftDetected,
    ControlBlock,
    ApprovalDenied,
    ConstraintFail,
    StateVersionMismatch,
    SoftAuthReject,
    HardAuthVeto,
}

impl RejectionCode {
    pub fn code(&self) -> &'static str {
        match self {
            RejectionCode::IntentMismatch => "INTENT_MISMATCH",
            RejectionCode::GoalDriftDetected => "GOAL_DRIFT_DETECTED",
            RejectionCode::ControlBlock => "CONTROL_BLOCK",
            RejectionCode::ApprovalDenied => "APPROVAL_DENIED",
            RejectionCode::ConstraintFail => "CONSTRAINT_FAIL",
            RejectionCode::StateVersionMismatch => "STATE_VERSION_MISMATCH",
            RejectionCode::SoftAuthReject => "SOFT_AUTH_REJECT",
            RejectionCode::HardAuthVeto => "HARD_AUTH_VETO",
        }
    }
}

impl fmt::Display for RejectionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Verdict recorded for one executed gate.
#[derive(Debug, Clone, PartialEq)]
pub enum StepVerdict {
    Pass,
    Reject { code: RejectionCode, detail: String },
}

/// One line of the decision trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub step: StepId,
    pub verdict: StepVerdict,
}

/// Outcome of a full pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub enum AuthOutcome {
    Approved { token: CapabilityToken },
    Rejected { step: StepId, code: RejectionCode },
}

/// What `authorize` returns: the outcome plus the ordered gate trace. A
/// rejection trace never contains a gate later than the rejecting one.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthDecision {
    pub outcome: AuthOutcome,
    pub trace: Vec<TraceEntry>,
}

impl AuthDecision {
    pub fn is_approved(&self) -> bool {
        matches!(self.outcome, AuthOutcome::Approved { .. })
    }

    pub fn token(&self) -> Option<&CapabilityToken> {
        match &self.outcome {
            AuthOutcome::Approved { token } => Some(token),
            AuthOutcome::Rejected { .. } => None,
        }
    }

    pub fn rejection(&self) -> Option<(StepId, RejectionCode)> {
        match &self.outcome {
            AuthOutcome::Rejected { step, code } => Some((*step, *code)),
            AuthOutcome::Approved { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Control tokens: signed deny assertions, checked before any grant
// ---------------------------------------------------------------------------

/// A negative capability: while active, any proposal matching its pattern
/// is blocked at step 1 regardless of what later gates would say. Pattern
/// fields are conjunctive; an absent field matches anything, so an
/// all-empty pattern is a deliberate global freeze.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlToken {
    pub id: String,
    /// Session the denial targets; absent = every session.
    #[serde(default)]
    pub principal: Option<String>,
    /// Intent name the denial targets; absent = every intent.
    #[serde(default)]
    pub intent: Option<String>,
    #[serde(default)]
    pub l1: Option<ResourceClass>,
    #[serde(default)]
    pub l2: Option<Verb>,
    #[serde(default)]
    pub l3: Option<Scope>,
    pub active: bool,
    /// Lowercase hex HMAC-SHA256 over the canonical pattern encoding.
    pub signature: String,
}

impl ControlToken {
    fn canonical(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"control");
        for part in [
            self.id.as_str(),
            self.principal.as_deref().unwrap_or("\u{2205}"),
            self.intent.as_deref().unwrap_or("\u{2205}"),
            self.l1.map(|v| v.as_str()).unwrap_or("\u{2205}"),
            self.l2.map(|v| v.as_str()).unwrap_or("\u{2205}"),
            self.l3.map(|v| v.as_str()).unwrap_or("\u{2205}"),
            if self.active { "1" } else { "0" },
        ] {
            out.push(UNIT_SEP);
            out.extend_from_slice(part.as_bytes());
        }
        out
    }

    /// Build and sign an entry in one step (fixture/operator path).
    #[allow(clippy::too_many_arguments)]
    pub fn signed(
        id: &str,
        principal: Option<&str>,
        intent: Option<&str>,
        l1: Option<ResourceClass>,
        l2: Option<Verb>,
        l3: Option<Scope>,
        active: bool,
        key: &SigningKey,
    ) -> ControlToken {
        let mut token = ControlToken {
            id: id.into(),
            principal: principal.map(String::from),
            intent: intent.map(String::from),
            l1,
            l2,
            l3,
            active,
            signature: String::new(),
        };
        token.signature = hex::encode(hmac_sign(key, &token.canonical()));
        token
    }

    pub fn verify(&self, key: &SigningKey) -> bool {
        let Ok(tag) = hex::decode(&self.signature) else {
            return false;
        };
        hmac_verify(key, &self.canonical(), &tag)
    }

    /// Does this entry deny the given proposal? Inactive entries never
    /// match; pattern fields that are present must all hold.
    pub fn matches(&self, ir: &PolicyIR, session: &SessionContext) -> bool {
        if !self.active {
            return false;
        }
        if let Some(p) = &self.principal {
            if p != &session.session_id {
                return false;
            }
        }
        if let Some(i) = &self.intent {
            if i != ir.intent.as_str() {
                return false;
            }
        }
        if self.l1.is_none() && self.l2.is_none() && self.l3.is_none() {
            return true;
        }
        ir.actions.iter().any(|a| {
            self.l1.is_none_or(|v| a.l1 == v)
                && self.l2.is_none_or(|v| a.l2 == v)
                && self.l3.is_none_or(|v| a.l3 == v)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlLoadError {
    #[error("UNSIGNED_CONTROL_TOKEN: entry {0} failed signature verification")]
    BadSignature(String),
}

/// The loaded deny set. Construction verifies every signature; the
/// registry is immutable afterwards, so nothing can inject a denial (or
/// sneak one out) at runtime.
#[derive(Debug, Default)]
pub struct ControlRegistry {
    entries: Vec<ControlToken>,
}

impl ControlRegistry {
    pub fn empty() -> ControlRegistry {
        ControlRegistry::default()
    }

    pub fn load(entries: Vec<ControlToken>, key: &SigningKey) -> Result<ControlRegistry, ControlLoadError> {
        for entry in &entries {
            if !entry.verify(key) {
                return Err(ControlLoadError::BadSignature(entry.id.clone()));
            }
        }
        Ok(ControlRegistry { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First matching active entry, if any.
    pub fn scan(&self, ir: &PolicyIR, session: &SessionContext) -> Option<&ControlToken> {
        self.entries.iter().find(|e| e.matches(ir, session))
    }
}

// ---------------------------------------------------------------------------
// Human approval: queue plus scripted resolution oracles
// ---------------------------------------------------------------------------

/// How a pending approval ended. Timeouts resolve to deny.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Resolution {
    Approve,
    Deny,
    Timeout,
}

/// One queued approval request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalEntry {
    pub entry_id: u64,
    pub ir_digest: Digest32,
    pub approver_role: String,
    pub created_at_ms: i64,
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QueueError {
    #[error("UNKNOWN_ENTRY")]
    UnknownEntry,
    #[error("ALREADY_RESOLVED")]
    AlreadyResolved,
}

/// Pending approvals. Entries resolve exactly once; an unresolved entry
/// never lets the pipeline proceed.
#[derive(Debug, Default)]
pub struct ApprovalQueue {
    entries: Vec<ApprovalEntry>,
}

impl ApprovalQueue {
    pub fn new() -> ApprovalQueue {
        ApprovalQueue::default()
    }

    pub fn enqueue(&mut self, ir_digest: Digest32, approver_role: &str, now_ms: i64) -> u64 {
        let entry_id = self.entries.len() as u64;
        self.entries.push(ApprovalEntry {
            entry_id,
            ir_digest,
            approver_role: approver_role.into(),
            created_at_ms: now_ms,
            resolution: None,
        });
        entry_id
    }

    pub fn resolve(&mut self, entry_id: u64, resolution: Resolution) -> Result<(), QueueError> {
        let entry = self
            .entries
            .get_mut(entry_id as usize)
            .ok_or(QueueError::UnknownEntry)?;
        if entry.resolution.is_some() {
            return Err(QueueError::AlreadyResolved);
        }
        entry.resolution = Some(resolution);
        Ok(())
    }

    /// Resolve every entry older than `timeout_ms` to `Timeout` (which
    /// denies). Returns how many entries were swept.
    pub fn expire(&mut self, now_ms: i64, timeout_ms: i64) -> usize {
        let mut swept = 0;
        for entry in &mut self.entries {
            if entry.resolution.is_none() && now_ms - entry.created_at_ms >= timeout_ms {
                entry.resolution = Some(Resolution::Timeout);
                swept += 1;
            }
        }
        swept
    }

    pub fn entry(&self, entry_id: u64) -> Option<&ApprovalEntry> {
        self.entries.get(entry_id as usize)
    }

    pub fn entries(&self) -> &[ApprovalEntry] {
        &self.entries
    }

    pub fn pending(&self) -> impl Iterator<Item = &ApprovalEntry> {
        self.entries.iter().filter(|e| e.resolution.is_none())
    }
}

/// Scripted stand-in for a human approver. Receives only the proposal —
/// no audit access, no session internals.
pub trait ApprovalPolicy {
    fn resolve(&self, ir: &PolicyIR) -> Resolution;
}

pub struct AlwaysApprove;

impl ApprovalPolicy for AlwaysApprove {
    fn resolve(&self, _ir: &PolicyIR) -> Resolution {
        Resolution::Approve
    }
}

pub struct AlwaysDeny;

impl ApprovalPolicy for AlwaysDeny {
    fn resolve(&self, _ir: &PolicyIR) -> Resolution {
        Resolution::Deny
    }
}

/// Approves the listed intent names, denies everything else.
pub struct ApproveIntents(pub BTreeSet<String>);

impl ApprovalPolicy for ApproveIntents {
    fn resolve(&self, ir: &PolicyIR) -> Resolution {
        if self.0.contains(ir.intent.as_str()) {
            Resolution::Approve
        } else {
            Resolution::Deny
        }
    }
}

// ---------------------------------------------------------------------------
// Soft auth: advisory scoring
// ---------------------------------------------------------------------------

/// Advisory risk assessor. Sees only the proposal (never the audit log or
/// session secrets); its score can deny at step 5 and shorten token
/// lifetime, but cannot override steps 0, 0a, 1, or 6. The kernel's
/// guarantees must hold for *every* implementation of this trait,
/// including adversarial ones.
pub trait SoftAuthOracle {
    fn assess(&self, ir: &PolicyIR) -> f64;
}

/// Default heuristic: a configured allow-list boost plus a justification
/// term. Deliberately simple — it exists to exercise the advisory slot,
/// not to be clever.
pub fn soft_auth_default(ir: &PolicyIR, allowlist: &BTreeSet<String>) -> f64 {
    let boost = if allowlist.contains(ir.intent.as_str()) {
        0.4
    } else {
        0.0
    };
    let justification = 0.15 * (ir.justification.len().min(4) as f64);
    (boost + justification).clamp(0.0, 1.0)
}

pub struct DefaultSoftAuth {
    pub allowlist: BTreeSet<String>,
}

impl SoftAuthOracle for DefaultSoftAuth {
    fn assess(&self, ir: &PolicyIR) -> f64 {
        soft_auth_default(ir, &self.allowlist)
    }
}

/// Fixed-score oracle, used to model compromised or degenerate assessors.
pub struct ConstantSoftAuth(pub f64);

impl SoftAuthOracle for ConstantSoftAuth {
    fn assess(&self, _ir: &PolicyIR) -> f64 {
        self.0
    }
}

// ---------------------------------------------------------------------------
// Hard auth: deterministic veto rules with no override path
// ---------------------------------------------------------------------------

/// Why a rule exists: a direct operator veto, or a structural red line
/// delegated from the drift layer's registry. Both veto identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardAuthClass {
    Veto,
    SrbDelegated,
}

/// A declarative veto predicate over a proposal and its session. Present
/// fields are conjunctive conditions; empty collections and `None` fields
/// don't constrain. A rule with no conditions at all vetoes everything —
/// legitimate as a deliberate freeze, so it is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardAuthRule {
    pub label: String,
    pub class: HardAuthClass,
    /// Intent names this rule vetoes; empty = any intent.
    #[serde(default)]
    pub deny_intents: BTreeSet<String>,
    /// Session ids this rule applies to; empty = every session.
    #[serde(default)]
    pub deny_principals: BTreeSet<String>,
    #[serde(default)]
    pub deny_l1: Option<ResourceClass>,
    #[serde(default)]
    pub deny_l2: Option<Verb>,
    /// Fires on actions at this scope *or wider*.
    #[serde(default)]
    pub min_l3: Option<Scope>,
    /// Danger-shape atoms: the rule fires only if all of them evaluate
    /// true against the action's parameter environment.
    #[serde(default)]
    pub deny_params: Vec<ConstraintExpr>,
}

impl HardAuthRule {
    pub fn fires(&self, ir: &PolicyIR, session: &SessionContext) -> bool {
        if !self.deny_principals.is_empty() && !self.deny_principals.contains(&session.session_id) {
            return false;
        }
        if !self.deny_intents.is_empty() && !self.deny_intents.contains(ir.intent.as_str()) {
            return false;
        }
        let constrains_actions = self.deny_l1.is_some()
            || self.deny_l2.is_some()
            || self.min_l3.is_some()
            || !self.deny_params.is_empty();
        if !constrains_actions {
            return true;
        }
        ir.actions.iter().any(|action| {
            if self.deny_l1.is_some_and(|v| action.l1 != v) {
                return false;
            }
            if self.deny_l2.is_some_and(|v| action.l2 != v) {
                return false;
            }
            if self.min_l3.is_some_and(|min| !scope_leq(min, action.l3)) {
                return false;
            }
            if self.deny_params.is_empty() {
                return true;
            }
            let env = action_env(ir, action, session);
            self.deny_params.iter().all(|atom| eval_atom(atom, &env).is_ok())
        })
    }
}

// ---------------------------------------------------------------------------
// Kernel configuration and input bundles
// ---------------------------------------------------------------------------

/// Kernel knobs. The `enable_*` switches exist for controlled
/// degradation studies; production keeps them all on.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Drift similarity floor (step 0a).
    pub drift_threshold: f64,
    /// Advisory score floor (step 5).
    pub soft_auth_floor: f64,
    /// Queue age after which unresolved approvals sweep to `Timeout`.
    pub approval_timeout_ms: i64,
    pub enable_ivl: bool,
    pub enable_drift: bool,
    pub enable_hard_auth: bool,
}

impl Default for KernelConfig {
    fn default() -> KernelConfig {
        KernelConfig {
            drift_threshold: crate::drift::DRIFT_THRESHOLD_MECHANISM,
            soft_auth_floor: SOFT_AUTH_ADVISORY_THRESHOLD,
            approval_timeout_ms: 30 * 60 * 1000,
            enable_ivl: true,
            enable_drift: true,
            enable_hard_auth: true,
        }
    }
}

/// The kernel's immutable rule stores, loaded before any request runs.
#[derive(Debug, Default)]
pub struct RuleSet {
    pub control: ControlRegistry,
    pub hard_auth: Vec<HardAuthRule>,
    pub srb: Vec<SrbRule>,
}

impl RuleSet {
    pub fn empty() -> RuleSet {
        RuleSet::default()
    }
}

/// The three replaceable assessors. Each sees only what its trait
/// signature passes — none can reach the audit log or the token store.
pub struct Oracles<'a> {
    pub similarity: &'a dyn SimilarityOracle,
    pub soft_auth: &'a dyn SoftAuthOracle,
    pub approval: &'a dyn ApprovalPolicy,
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// Parameter environment for one action: intent params, overlaid with the
/// action's own params, overlaid with kernel session facts (which always
/// win — a proposal cannot spoof `state_version`).
fn action_env(ir: &PolicyIR, action: &CapabilitySpec, session: &SessionContext) -> ParamMap {
    let mut env = ir.intent_params.clone();
    for (k, v) in &action.params {
        env.insert(k.clone(), v.clone());
    }
    env.insert(
        "state_version".into(),
        ParamValue::Str(session.state_version.to_hex()),
    );
    env
}

fn audit_kernel(audit: &mut AuditLog, kind: AuditEventKind, payload: &str, now_ms: i64) {
    audit
        .append(Principal::Kernel, kind, payload, now_ms)
        .expect("kernel principal may always append");
}

fn record_pass(trace: &mut Vec<TraceEntry>, audit: &mut AuditLog, step: StepId, now_ms: i64) {
    audit_kernel(
        audit,
        AuditEventKind::StepVerdict,
        &serde_json::json!({ "step": step.label(), "verdict": "PASS" }).to_string(),
        now_ms,
    );
    trace.push(TraceEntry {
        step,
        verdict: StepVerdict::Pass,
    });
}

fn reject_at(
    mut trace: Vec<TraceEntry>,
    audit: &mut AuditLog,
    step: StepId,
    code: RejectionCode,
    detail: &str,
    now_ms: i64,
) -> AuthDecision {
    audit_kernel(
        audit,
        AuditEventKind::StepVerdict,
        &serde_json::json!({
            "step": step.label(),
            "verdict": "REJECT",
            "code": code.code(),
            "detail": detail,
        })
        .to_string(),
        now_ms,
    );
    trace.push(TraceEntry {
        step,
        verdict: StepVerdict::Reject {
            code,
            detail: detail.into(),
        },
    });
    AuthDecision {
        outcome: AuthOutcome::Rejected { step, code },
        trace,
    }
}

/// Scale the policy's base lifetime by the advisory score, staying inside
/// the issuable window and never exceeding the base.
pub fn risk_adjusted_ttl(base_seconds: u32, score: f64) -> u32 {
    let base = base_seconds.clamp(TTL_MIN, TTL_MAX);
    let scaled = libm::round(f64::from(base) * score.clamp(0.0, 1.0)) as u32;
    scaled.clamp(TTL_MIN, base)
}

/// Token shape for a fully passed proposal: the first declared action's
/// capability at its declared scope, carrying the proposal's constraint
/// conjunction and the policy's numeric ceiling for `amount` (if any).
fn token_spec_for(ir: &PolicyIR, policy: &IntentPolicy) -> TokenSpec {
    let action = &ir.actions[0];
    TokenSpec {
        action: action.triple().action_name(),
        scope: action.l3,
        limit: policy
            .param_bounds
            .get("amount")
            .map(|b| b.max.max(0) as u64),
        constraints: ir.constraints.clone(),
    }
}

/// Run the full gate sequence over one typed proposal.
///
/// `ir` must already have passed schema validation; `nlr_text` is the
/// kernel-held text of the session's originating request (never taken
/// from the proposal itself). The only state this function mutates is the
/// token store (step 7), the approval queue (step 2), and the audit log.
#[allow(clippy::too_many_arguments)]
pub fn authorize(
    ir: &PolicyIR,
    nlr_text: &str,
    session: &SessionContext,
    ctx: &PolicyContext,
    rules: &RuleSet,
    oracles: &Oracles<'_>,
    tokens: &mut TokenStore,
    approvals: &mut ApprovalQueue,
    audit: &mut AuditLog,
    key: &SigningKey,
    config: &KernelConfig,
    now_ms: i64,
) -> AuthDecision {
    let mut trace: Vec<TraceEntry> = Vec::new();
    let ir_digest = ir.digest();
    audit_kernel(
        audit,
        AuditEventKind::IrReceived,
        &serde_json::json!({
            "intent": ir.intent.as_str(),
            "ir_digest": ir_digest.to_hex(),
        })
        .to_string(),
        now_ms,
    );

    // The policy table entry backs steps 0, 2, 3 and 7; a missing entry is
    // a configuration hole and denies immediately, toggles notwithstanding.
    let policy = match ctx.intent_policy(&ir.intent) {
        Ok(p) => p,
        Err(e) => {
            return reject_at(
                trace,
                audit,
                StepId::Ivl,
                RejectionCode::IntentMismatch,
                &e.to_string(),
                now_ms,
            )
        }
    };
    if ir.actions.is_empty() {
        return reject_at(
            trace,
            audit,
            StepId::Ivl,
            RejectionCode::IntentMismatch,
            "proposal declares no actions",
            now_ms,
        );
    }

    // Step 0: every declared action inside the intent's minimal set.
    if config.enable_ivl {
        match ivl_check(&ir.intent, &ir.actions, &ir.intent_params, ctx) {
            Err(e) => {
                return reject_at(
                    trace,
                    audit,
                    StepId::Ivl,
                    RejectionCode::IntentMismatch,
                    &e.to_string(),
                    now_ms,
                )
            }
            Ok(IvlVerdict::Divergent { why, .. }) => {
                return reject_at(
                    trace,
                    audit,
                    StepId::Ivl,
                    RejectionCode::IntentMismatch,
                    &why,
                    now_ms,
                )
            }
            Ok(IvlVerdict::Consistent) => record_pass(&mut trace, audit, StepId::Ivl, now_ms),
        }
    }

    // Step 0a: lineage anchored to the original request, similarity above
    // threshold, no structural red line.
    if config.enable_drift {
        match goal_drift_check(
            &ir.lineage,
            session,
            &ir.intent,
            nlr_text,
            &ir.actions,
            &rules.srb,
            oracles.similarity,
            config.drift_threshold,
        ) {
            DriftVerdict::Drift { code, triggering } => {
                return reject_at(
                    trace,
                    audit,
                    StepId::Drift,
                    RejectionCode::GoalDriftDetected,
                    &format!("{}: {triggering}", code.code()),
                    now_ms,
                )
            }
            DriftVerdict::Consistent => record_pass(&mut trace, audit, StepId::Drift, now_ms),
        }
    }

    // Step 1: signed deny assertions outrank every grant path.
    if let Some(hit) = rules.control.scan(ir, session) {
        return reject_at(
            trace,
            audit,
            StepId::ControlScan,
            RejectionCode::ControlBlock,
            &format!("control token {}", hit.id),
            now_ms,
        );
    }
    record_pass(&mut trace, audit, StepId::ControlScan, now_ms);

    // Step 2: human approval, only where the policy demands it. Every
    // request/resolution pair lands in the queue for the record.
    if policy.approval_required {
        let entry_id = approvals.enqueue(ir_digest, "human-operator", now_ms);
        let resolution = oracles.approval.resolve(ir);
        approvals
            .resolve(entry_id, resolution)
            .expect("entry was just enqueued unresolved");
        match resolution {
            Resolution::Approve => record_pass(&mut trace, audit, StepId::Approval, now_ms),
            Resolution::Deny | Resolution::Timeout => {
                let detail = match resolution {
                    Resolution::Deny => "approver denied",
                    _ => "approval timed out",
                };
                return reject_at(
                    trace,
                    audit,
                    StepId::Approval,
                    RejectionCode::ApprovalDenied,
                    detail,
                    now_ms,
                );
            }
        }
    }

    // Step 3: the proposal's constraint conjunction must hold for every
    // declared action's environment.
    for action in &ir.actions {
        let env = action_env(ir, action, session);
        if let ConstraintVerdict::Fail { atom, reason } = eval_constraints(&ir.constraints, &env) {
            return reject_at(
                trace,
                audit,
                StepId::Constraints,
                RejectionCode::ConstraintFail,
                &format!("{} ({reason:?})", atom.canonical_text()),
                now_ms,
            );
        }
    }
    record_pass(&mut trace, audit, StepId::Constraints, now_ms);

    // Step 4: the proposal must target the world the kernel is actually
    // in, and every session invariant must carry a valid signature.
    if ir.declared_state_version != session.state_version {
        return reject_at(
            trace,
            audit,
            StepId::ContextInvariants,
            RejectionCode::StateVersionMismatch,
            &format!(
                "declared {} but session is at {}",
                ir.declared_state_version.to_hex(),
                session.state_version.to_hex()
            ),
            now_ms,
        );
    }
    for invariant in &session.context_invariants {
        if !invariant.verify(key) {
            return reject_at(
                trace,
                audit,
                StepId::ContextInvariants,
                RejectionCode::StateVersionMismatch,
                &format!("invariant {} failed signature verification", invariant.key),
                now_ms,
            );
        }
    }
    record_pass(&mut trace, audit, StepId::ContextInvariants, now_ms);

    // Step 5: advisory. A hostile oracle can deny (fail closed, including
    // NaN) but its ceiling of influence is this one gate plus the TTL.
    let raw_score = oracles.soft_auth.assess(ir);
    let score = if raw_score.is_finite() {
        raw_score.clamp(0.0, 1.0)
    } else {
        0.0
    };
    if score < config.soft_auth_floor {
        return reject_at(
            trace,
            audit,
            StepId::SoftAuth,
            RejectionCode::SoftAuthReject,
            &format!("advisory score {score:.3} below floor {:.3}", config.soft_auth_floor),
            now_ms,
        );
    }
    record_pass(&mut trace, audit, StepId::SoftAuth, now_ms);

    // Step 6: the veto gate. No oracle output can reverse a hit here.
    if config.enable_hard_auth {
        if let Some(rule) = rules.hard_auth.iter().find(|r| r.fires(ir, session)) {
            return reject_at(
                trace,
                audit,
                StepId::HardAuth,
                RejectionCode::HardAuthVeto,
                &rule.label,
                now_ms,
            );
        }
        record_pass(&mut trace, audit, StepId::HardAuth, now_ms);
    }

    // Step 7: mint the capability. TTL scales with the advisory score but
    // stays within the issuable window, so issuance cannot fail.
    let ttl = risk_adjusted_ttl(policy.token_ttl_seconds, score);
    let token = tokens
        .issue(
            &IssuanceGuard::pipeline_only(),
            token_spec_for(ir, policy),
            session,
            key,
            ttl,
            now_ms,
        )
        .expect("risk-adjusted ttl is clamped into the issuable window");
    audit_kernel(
        audit,
        AuditEventKind::TokenIssued,
        &serde_json::json!({
            "token_id": token.id.as_str(),
            "action": token.action,
            "ttl": token.ttl_seconds,
        })
        .to_string(),
        now_ms,
    );
    AuthDecision {
        outcome: AuthOutcome::Approved { token },
        trace,
    }
}
