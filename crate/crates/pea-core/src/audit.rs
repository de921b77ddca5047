//! Tamper-evident audit log: an append-only hash chain with
//! principal-scoped access.
//!
//! Only the kernel may append; only the auditor may read. The policy side
//! has no accessor at all — handing a policy-principal handle to any method
//! returns `ACCESS_DENIED`, so the feedback loop cannot mine the log.
//! Each record commits to its predecessor, so mutating any stored record
//! breaks verification at that sequence number.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crypto::{sha256, sha256_chain, Digest32};

/// Who is holding the interface handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principal {
    Kernel,
    Policy,
    Auditor,
}

/// What kind of event a record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditEventKind {
    IrReceived,
    StepVerdict,
    TokenIssued,
    Dispatch,
    OsgVerdict,
    Delivery,
}

impl AuditEventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuditEventKind::IrReceived => "IR_RECEIVED",
            AuditEventKind::StepVerdict => "STEP_VERDICT",
            AuditEventKind::TokenIssued => "TOKEN_ISSUED",
            AuditEventKind::Dispatch => "DISPATCH",
            AuditEventKind::OsgVerdict => "OSG_VERDICT",
            AuditEventKind::Delivery => "DELIVERY",
        }
    }
}

/// One link of the chain. The record commits to the event payload by
/// digest; payload text is stored beside the chain, not inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp_ms: i64,
    pub kind: AuditEventKind,
    pub payload_digest: Digest32,
    pub prev_hash: Digest32,
    pub this_hash: Digest32,
}

/// Bytes the chain hash covers, besides the previous hash itself.
fn record_preimage(seq: u64, timestamp_ms: i64, kind: AuditEventKind, payload: &Digest32) -> Vec<u8> {
    let mut out = Vec::with_capacity(96);
    out.extend_from_slice(itoa_u64(seq).as_bytes());
    out.push(0x1E);
    out.extend_from_slice(itoa_i64(timestamp_ms).as_bytes());
    out.push(0x1E);
    out.extend_from_slice(kind.as_str().as_bytes());
    out.push(0x1E);
    out.extend_from_slice(payload.to_hex().as_bytes());
    out
}

fn itoa_u64(v: u64) -> String {
    alloc::format!("{v}")
}

fn itoa_i64(v: i64) -> String {
    alloc::format!("{v}")
}

fn chain_hash(prev: &Digest32, seq: u64, ts: i64, kind: AuditEventKind, payload: &Digest32) -> Digest32 {
    sha256_chain(&[prev.as_bytes(), &record_preimage(seq, ts, kind, payload)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("ACCESS_DENIED: principal lacks {0} access")]
pub struct AccessDenied(pub &'static str);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("CHAIN_BROKEN at seq {seq}")]
    Broken { seq: u64 },
}

/// The in-memory log. Records and their payload texts grow in lockstep.
#[derive(Debug, Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    payloads: Vec<String>,
}

impl AuditLog {
    pub fn new() -> AuditLog {
        AuditLog::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Append one event. Kernel principal only.
    pub fn append(
        &mut self,
        principal: Principal,
        kind: AuditEventKind,
        payload: &str,
        now_ms: i64,
    ) -> Result<&AuditRecord, AccessDenied> {
        if principal != Principal::Kernel {
            return Err(AccessDenied("append"));
        }
        let seq = self.records.len() as u64;
        let prev_hash = self
            .records
            .last()
            .map(|r| r.this_hash)
            .unwrap_or(Digest32::ZERO);
        let payload_digest = sha256(payload.as_bytes());
        let this_hash = chain_hash(&prev_hash, seq, now_ms, kind, &payload_digest);
        self.records.push(AuditRecord {
            seq,
            timestamp_ms: now_ms,
            kind,
            payload_digest,
            prev_hash,
            this_hash,
        });
        self.payloads.push(String::from(payload));
        Ok(self.records.last().expect("just pushed"))
    }

    /// Read the chain. Auditor principal only — in particular, the policy
    /// side gets nothing.
    pub fn read(&self, principal: Principal) -> Result<&[AuditRecord], AccessDenied> {
        match principal {
            Principal::Auditor => Ok(&self.records),
            _ => Err(AccessDenied("read")),
        }
    }

    /// Read event payload texts (aligned with `read`). Auditor only.
    pub fn read_payloads(&self, principal: Principal) -> Result<&[String], AccessDenied> {
        match principal {
            Principal::Auditor => Ok(&self.payloads),
            _ => Err(AccessDenied("read")),
        }
    }
}

/// Replay a record sequence and confirm every link. Works on records from
/// any source (memory or a parsed log file).
pub fn verify_chain(records: &[AuditRecord]) -> Result<(), ChainError> {
    let mut prev = Digest32::ZERO;
    for (i, r) in records.iter().enumerate() {
        let expected_seq = i as u64;
        if r.seq != expected_seq
            || r.prev_hash != prev
            || chain_hash(&prev, r.seq, r.timestamp_ms, r.kind, &r.payload_digest) != r.this_hash
        {
            return Err(ChainError::Broken { seq: expected_seq });
        }
        prev = r.this_hash;
    }
    Ok(())
}
