//! The execution layer: dispatches actions gated exclusively by capability
//! tokens, and reports back through a feedback type that is structurally
//! incapable of leaking tool output.
//!
//! `dispatch` trusts nobody: it validates the token against the request,
//! redeems it atomically, and only then lets the mock environment record an
//! effect. A lost redemption race downgrades a VALID verdict to DENIED —
//! double execution is impossible by construction. All outcomes are audited.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;

use crate::audit::{AuditEventKind, AuditLog, Principal};
use crate::crypto::SigningKey;
use crate::intent::SessionContext;
use crate::taxonomy::{ParamMap, ResourceRef, Scope};
use crate::token::{CapabilityToken, RedeemOutcome, TokenId, TokenStore, ValidationVerdict};

/// A concrete action the execution layer is asked to perform. Carries
/// exactly one token reference; dispatch refuses a request whose token
/// reference names a different credential than the one presented.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRequest {
    /// Dotted action name, e.g. `payment.transfer`.
    pub capability: String,
    pub scope: Scope,
    pub target: ResourceRef,
    pub params: ParamMap,
    pub token_id: TokenId,
}

/// Outcome class of a dispatch. The numeric codes are a stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecStatus {
    Ok,
    Denied,
    ToolError,
}

impl ExecStatus {
    pub fn status_code(&self) -> u8 {
        match self {
            ExecStatus::Ok => 0,
            ExecStatus::Denied => 1,
            ExecStatus::ToolError => 2,
        }
    }
}

/// What the execution layer knows about an attempt. Deliberately has no
/// payload field: there is nothing here to leak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub status_code: u8,
}

impl ExecutionResult {
    pub fn new(status: ExecStatus) -> ExecutionResult {
        ExecutionResult {
            status,
            status_code: status.status_code(),
        }
    }
}

/// The only thing the policy side ever sees about an execution: a status
/// code. The type has exactly one field, so serialized feedback cannot
/// carry tool output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeedbackSignal {
    pub status_code: u8,
}

/// Reduce an execution result to its policy-visible feedback.
pub fn feedback(result: &ExecutionResult) -> FeedbackSignal {
    FeedbackSignal {
        status_code: result.status_code,
    }
}

/// One recorded side effect in the mock environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectRecord {
    pub capability: String,
    pub target_id: String,
    pub amount: Option<i64>,
}

/// In-memory tool environment: an effect ledger plus per-capability
/// counters. Targets listed in `failing_targets` simulate tool failures
/// (the action is attempted but records no effect).
#[derive(Debug, Default)]
pub struct MockEnv {
    pub effects: Vec<EffectRecord>,
    pub counters: BTreeMap<String, u64>,
    pub failing_targets: BTreeSet<String>,
}

impl MockEnv {
    pub fn new() -> MockEnv {
        MockEnv::default()
    }

    pub fn effect_count(&self) -> usize {
        self.effects.len()
    }

    fn execute(&mut self, req: &ActionRequest) -> Result<(), ()> {
        let target_id = req.target.id().to_string();
        if self.failing_targets.contains(&target_id) {
            return Err(());
        }
        self.effects.push(EffectRecord {
            capability: req.capability.clone(),
            target_id,
            amount: req.params.get("amount").and_then(|v| v.as_int()),
        });
        *self.counters.entry(req.capability.clone()).or_insert(0) += 1;
        Ok(())
    }
}

/// Validate, redeem, then execute — in that order, failing closed at every
/// edge. The environment is untouched unless the token survived both the
/// validation verdict and the redemption race.
#[allow(clippy::too_many_arguments)]
pub fn dispatch(
    req: &ActionRequest,
    token: &CapabilityToken,
    env: &mut MockEnv,
    store: &TokenStore,
    session: &SessionContext,
    key: &SigningKey,
    audit: &mut AuditLog,
    now_ms: i64,
) -> ExecutionResult {
    let audit_outcome = |audit: &mut AuditLog, outcome: &str| {
        let payload = format!(
            "{{\"event\":\"dispatch\",\"token_id\":\"{}\",\"capability\":\"{}\",\"outcome\":\"{}\"}}",
            token.id, req.capability, outcome
        );
        audit
            .append(Principal::Kernel, AuditEventKind::Dispatch, &payload, now_ms)
            .expect("kernel may append");
    };

    // The request must reference the very token being presented.
    if req.token_id != token.id {
        audit_outcome(audit, "DENIED:TOKEN_MISMATCH");
        return ExecutionResult::new(ExecStatus::Denied);
    }

    match store.validate(token, req, now_ms, session, key) {
        ValidationVerdict::Invalid(code) => {
            audit_outcome(audit, &format!("DENIED:{}", code.code()));
            ExecutionResult::new(ExecStatus::Denied)
        }
        ValidationVerdict::Valid => match store.redeem(&token.id) {
            Ok(RedeemOutcome::Redeemed) => match env.execute(req) {
                Ok(()) => {
                    audit_outcome(audit, "OK:REDEEMED");
                    ExecutionResult::new(ExecStatus::Ok)
                }
                Err(()) => {
                    audit_outcome(audit, "TOOL_ERROR");
                    ExecutionResult::new(ExecStatus::ToolError)
                }
            },
            // Lost the race or the store forgot the token: deny, never
            // execute twice.
            Ok(RedeemOutcome::AlreadyRedeemed) | Err(_) => {
                audit_outcome(audit, "DENIED:ALREADY_REDEEMED");
                ExecutionResult::new(ExecStatus::Denied)
            }
        },
    }
}
