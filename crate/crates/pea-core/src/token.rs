//! Capability tokens: the only credential the execution layer accepts.
//!
//! A token is signed (HMAC-SHA256 over a canonical byte serialization),
//! TTL-bound, single-use, and versioned against the kernel's state. The
//! store tracks issuance, redemption, and revocation; redemption is an
//! atomic test-and-set so exactly one of any number of concurrent redeemers
//! wins. Attenuation derives strictly narrower child tokens; revoking a
//! parent revokes every transitive descendant.
//!
//! Root issuance requires an [`IssuanceGuard`], which only the
//! authorization pipeline (and this crate's tests) can construct — there is
//! no other path to a fresh token.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Serialize, Serializer};

use crate::constraints::{canonical_conjunction, eval_constraints, ConstraintExpr};
use crate::crypto::{hmac_sign, hmac_verify, Digest32, SigningKey};
use crate::exec::ActionRequest;
use crate::intent::{format_timestamp_ms, SessionContext};
use crate::taxonomy::{scope_leq, Scope};

/// Inclusive token-lifetime window, seconds.
pub const TTL_MIN: u32 = 30;
pub const TTL_MAX: u32 = 300;

/// Field separator in canonical token bytes.
const RECORD_SEP: u8 = 0x1E;
/// Rendering of an absent optional field in canonical bytes.
const ABSENT: &str = "\u{2205}";

/// Opaque token identifier: ordinal plus an unguessable suffix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TokenId(String);

impl TokenId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Always `single`: every token dies on first redemption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UseMode {
    Single,
}

fn serialize_issued_at<S: Serializer>(ms: &i64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_timestamp_ms(*ms))
}

/// A signed execution credential for exactly one action shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapabilityToken {
    pub id: TokenId,
    /// Dotted action name, e.g. `payment.transfer`.
    pub action: String,
    pub scope: Scope,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
    #[serde(rename = "ttl")]
    pub ttl_seconds: u32,
    #[serde(rename = "issued_at", serialize_with = "serialize_issued_at")]
    pub issued_at_ms: i64,
    pub version: Digest32,
    #[serde(rename = "use")]
    pub use_mode: UseMode,
    pub constraints: Vec<ConstraintExpr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<TokenId>,
    /// `hmac-sha256:<hex>` over [`canonical_bytes`].
    pub signature: String,
}

impl CapabilityToken {
    pub fn expires_at_ms(&self) -> i64 {
        self.issued_at_ms + i64::from(self.ttl_seconds) * 1000
    }
}

/// The byte string the signature covers. Fixed field order; `name=value`
/// segments joined by 0x1E; absent optionals rendered as `name=∅`. Any
/// change here invalidates every signed token, so the layout is frozen by
/// golden-vector tests.
pub fn canonical_bytes(token: &CapabilityToken) -> Vec<u8> {
    let mut segments: Vec<String> = Vec::with_capacity(9);
    segments.push(format!("action={}", token.action));
    segments.push(format!("scope={}", token.scope));
    segments.push(match token.limit {
        Some(l) => format!("limit={l}"),
        None => format!("limit={ABSENT}"),
    });
    segments.push(format!("ttl={}", token.ttl_seconds));
    segments.push(format!(
        "issued_at={}",
        format_timestamp_ms(token.issued_at_ms)
    ));
    segments.push(format!("version={}", token.version.to_hex()));
    segments.push("use=single".to_string());
    segments.push(format!(
        "constraints={}",
        canonical_conjunction(&token.constraints)
    ));
    segments.push(match &token.parent_id {
        Some(p) => format!("parent_id={p}"),
        None => format!("parent_id={ABSENT}"),
    });

    let mut out = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 {
            out.push(RECORD_SEP);
        }
        out.extend_from_slice(seg.as_bytes());
    }
    out
}

/// Sign canonical bytes into the wire signature form.
pub fn sign_bytes(key: &SigningKey, canonical: &[u8]) -> String {
    format!("hmac-sha256:{}", hex::encode(hmac_sign(key, canonical)))
}

fn verify_signature(key: &SigningKey, canonical: &[u8], signature: &str) -> bool {
    let Some(hexpart) = signature.strip_prefix("hmac-sha256:") else {
        return false;
    };
    let Ok(tag) = hex::decode(hexpart) else {
        return false;
    };
    hmac_verify(key, canonical, &tag)
}

/// Credential proving the caller is the authorization pipeline. Cannot be
/// constructed outside this crate.
pub struct IssuanceGuard {
    _private: (),
}

impl IssuanceGuard {
    pub(crate) fn pipeline_only() -> IssuanceGuard {
        IssuanceGuard { _private: () }
    }
}

/// What the pipeline wants a token to say.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSpec {
    pub action: String,
    pub scope: Scope,
    pub limit: Option<u64>,
    pub constraints: Vec<ConstraintExpr>,
}

/// Requested shape of an attenuated child token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationSpec {
    pub action: String,
    pub scope: Scope,
    pub limit: Option<u64>,
    pub ttl_seconds: u32,
    pub constraints: Vec<ConstraintExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidCode {
    BadSignature,
    Expired,
    StaleVersion,
    AlreadyRedeemed,
    Revoked,
    NotAllowed,
}

impl InvalidCode {
    pub fn code(&self) -> &'static str {
        match self {
            InvalidCode::BadSignature => "BAD_SIGNATURE",
            InvalidCode::Expired => "EXPIRED",
            InvalidCode::StaleVersion => "STALE_VERSION",
            InvalidCode::AlreadyRedeemed => "ALREADY_REDEEMED",
            InvalidCode::Revoked => "REVOKED",
            InvalidCode::NotAllowed => "NOT_ALLOWED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationVerdict {
    Valid,
    Invalid(InvalidCode),
}

impl ValidationVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidationVerdict::Valid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum IssueError {
    #[error("TTL_OUT_OF_RANGE: ttl {0} outside [{TTL_MIN}, {TTL_MAX}]")]
    TtlOutOfRange(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("UNKNOWN_TOKEN")]
pub struct UnknownToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedeemOutcome {
    Redeemed,
    AlreadyRedeemed,
}

/// Which bound an attempted attenuation tried to widen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttenuationDimension {
    Action,
    Scope,
    Limit,
    Constraints,
    Expiry,
}

impl AttenuationDimension {
    pub fn name(&self) -> &'static str {
        match self {
            AttenuationDimension::Action => "action",
            AttenuationDimension::Scope => "scope",
            AttenuationDimension::Limit => "limit",
            AttenuationDimension::Constraints => "constraints",
            AttenuationDimension::Expiry => "expiry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AttenuateError {
    #[error("ATTENUATION_VIOLATION{{{}}}", .0.name())]
    Violation(AttenuationDimension),
    /// The parent failed the validity checks (expired, redeemed, revoked,
    /// bad signature, unknown).
    #[error("parent invalid: {}", .0.code())]
    ParentInvalid(InvalidCode),
    #[error("TTL_OUT_OF_RANGE: ttl {0} below {TTL_MIN}")]
    TtlOutOfRange(u32),
}

/// Fixed-size growable bitmap over atomic words; set-once semantics.
struct AtomicBitmap {
    words: Vec<AtomicU64>,
}

impl AtomicBitmap {
    fn new() -> AtomicBitmap {
        AtomicBitmap { words: Vec::new() }
    }

    /// Ensure capacity for `bits` bits. Requires `&mut`: growth happens only
    /// under the store's write path (issuance).
    fn grow_to(&mut self, bits: usize) {
        let words_needed = bits / 64 + 1;
        while self.words.len() < words_needed {
            self.words.push(AtomicU64::new(0));
        }
    }

    fn get(&self, bit: u64) -> bool {
        let word = (bit / 64) as usize;
        let mask = 1u64 << (bit % 64);
        self.words
            .get(word)
            .map(|w| w.load(Ordering::SeqCst) & mask != 0)
            .unwrap_or(false)
    }

    /// Atomically set the bit; true iff this call changed it (the caller
    /// won the race).
    fn test_and_set(&self, bit: u64) -> bool {
        let word = (bit / 64) as usize;
        let mask = 1u64 << (bit % 64);
        let prev = self.words[word].fetch_or(mask, Ordering::SeqCst);
        prev & mask == 0
    }
}

struct StoredToken {
    ordinal: u64,
    canonical: Vec<u8>,
    children: Vec<TokenId>,
}

/// Issuance ledger plus redemption/revocation bitmaps. Writes (issue,
/// attenuate, revoke) need `&mut`; validate and redeem are `&self` and safe
/// under concurrency — redeem is a linearizable test-and-set.
pub struct TokenStore {
    entries: BTreeMap<TokenId, StoredToken>,
    next_ordinal: u64,
    redeemed: AtomicBitmap,
    revoked: AtomicBitmap,
}

impl Default for TokenStore {
    fn default() -> Self {
        Self::new()
    }
}

impl TokenStore {
    pub fn new() -> TokenStore {
        TokenStore {
            entries: BTreeMap::new(),
            next_ordinal: 0,
            redeemed: AtomicBitmap::new(),
            revoked: AtomicBitmap::new(),
        }
    }

    pub fn issued_count(&self) -> u64 {
        self.next_ordinal
    }

    fn mint_id(&self, key: &SigningKey, ordinal: u64, issued_at_ms: i64) -> TokenId {
        // Deterministic given the key, yet unguessable without it.
        let mut preimage = Vec::with_capacity(24);
        preimage.extend_from_slice(b"token-id");
        preimage.extend_from_slice(&ordinal.to_le_bytes());
        preimage.extend_from_slice(&issued_at_ms.to_le_bytes());
        let tag = hmac_sign(key, &preimage);
        TokenId(format!("cap-{ordinal}-{}", &hex::encode(tag)[..16]))
    }

    fn record(&mut self, token: &CapabilityToken, ordinal: u64) {
        self.redeemed.grow_to(ordinal as usize + 1);
        self.revoked.grow_to(ordinal as usize + 1);
        self.entries.insert(
            token.id.clone(),
            StoredToken {
                ordinal,
                canonical: canonical_bytes(token),
                children: Vec::new(),
            },
        );
    }

    /// Mint and record a fresh root token. Only reachable with the
    /// pipeline's issuance guard.
    pub fn issue(
        &mut self,
        _guard: &IssuanceGuard,
        spec: TokenSpec,
        session: &SessionContext,
        key: &SigningKey,
        risk_ttl: u32,
        now_ms: i64,
    ) -> Result<CapabilityToken, IssueError> {
        if !(TTL_MIN..=TTL_MAX).contains(&risk_ttl) {
            return Err(IssueError::TtlOutOfRange(risk_ttl));
        }
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        let mut token = CapabilityToken {
            id: self.mint_id(key, ordinal, now_ms),
            action: spec.action,
            scope: spec.scope,
            limit: spec.limit,
            ttl_seconds: risk_ttl,
            issued_at_ms: now_ms,
            version: session.state_version,
            use_mode: UseMode::Single,
            constraints: spec.constraints,
            parent_id: None,
            signature: String::new(),
        };
        token.signature = sign_bytes(key, &canonical_bytes(&token));
        self.record(&token, ordinal);
        Ok(token)
    }

    fn ordinal_of(&self, id: &TokenId) -> Option<u64> {
        self.entries.get(id).map(|e| e.ordinal)
    }

    /// Checks shared by validation and attenuation: the token must carry a
    /// good signature over bytes this store actually issued, be unexpired,
    /// unredeemed, and unrevoked.
    fn check_live(
        &self,
        token: &CapabilityToken,
        now_ms: i64,
        key: &SigningKey,
    ) -> Result<(), InvalidCode> {
        let canonical = canonical_bytes(token);
        if !verify_signature(key, &canonical, &token.signature) {
            return Err(InvalidCode::BadSignature);
        }
        // Identity binding: the id must name a stored token with exactly
        // these canonical bytes. A well-signed token this store never
        // issued is indistinguishable from a forgery.
        let Some(entry) = self.entries.get(&token.id) else {
            return Err(InvalidCode::BadSignature);
        };
        if entry.canonical != canonical {
            return Err(InvalidCode::BadSignature);
        }
        if now_ms >= token.expires_at_ms() {
            return Err(InvalidCode::Expired);
        }
        if self.redeemed.get(entry.ordinal) {
            return Err(InvalidCode::AlreadyRedeemed);
        }
        if self.revoked.get(entry.ordinal) {
            return Err(InvalidCode::Revoked);
        }
        Ok(())
    }

    /// Full validation against a concrete action request.
    pub fn validate(
        &self,
        token: &CapabilityToken,
        req: &ActionRequest,
        now_ms: i64,
        session: &SessionContext,
        key: &SigningKey,
    ) -> ValidationVerdict {
        let canonical = canonical_bytes(token);
        if !verify_signature(key, &canonical, &token.signature) {
            return ValidationVerdict::Invalid(InvalidCode::BadSignature);
        }
        let Some(entry) = self.entries.get(&token.id) else {
            return ValidationVerdict::Invalid(InvalidCode::BadSignature);
        };
        if entry.canonical != canonical {
            return ValidationVerdict::Invalid(InvalidCode::BadSignature);
        }
        if now_ms >= token.expires_at_ms() {
            return ValidationVerdict::Invalid(InvalidCode::Expired);
        }
        if token.version != session.state_version {
            return ValidationVerdict::Invalid(InvalidCode::StaleVersion);
        }
        if self.redeemed.get(entry.ordinal) {
            return ValidationVerdict::Invalid(InvalidCode::AlreadyRedeemed);
        }
        if self.revoked.get(entry.ordinal) {
            return ValidationVerdict::Invalid(InvalidCode::Revoked);
        }
        if !allows(token, req) {
            return ValidationVerdict::Invalid(InvalidCode::NotAllowed);
        }
        ValidationVerdict::Valid
    }

    /// Atomic single-use redemption: exactly one caller per token ever gets
    /// `Redeemed`.
    pub fn redeem(&self, id: &TokenId) -> Result<RedeemOutcome, UnknownToken> {
        let ordinal = self.ordinal_of(id).ok_or(UnknownToken)?;
        if self.redeemed.test_and_set(ordinal) {
            Ok(RedeemOutcome::Redeemed)
        } else {
            Ok(RedeemOutcome::AlreadyRedeemed)
        }
    }

    /// Derive a strictly narrower child token from a live parent.
    pub fn attenuate(
        &mut self,
        parent: &CapabilityToken,
        child_spec: AttenuationSpec,
        key: &SigningKey,
        now_ms: i64,
    ) -> Result<CapabilityToken, AttenuateError> {
        self.check_live(parent, now_ms, key)
            .map_err(AttenuateError::ParentInvalid)?;

        if child_spec.action != parent.action {
            return Err(AttenuateError::Violation(AttenuationDimension::Action));
        }
        if !scope_leq(child_spec.scope, parent.scope) {
            return Err(AttenuateError::Violation(AttenuationDimension::Scope));
        }
        match (parent.limit, child_spec.limit) {
            (Some(pl), Some(cl)) if cl <= pl => {}
            (Some(_), _) => return Err(AttenuateError::Violation(AttenuationDimension::Limit)),
            (None, _) => {}
        }
        // The child must carry every parent constraint (it may add more).
        for atom in &parent.constraints {
            if !child_spec.constraints.contains(atom) {
                return Err(AttenuateError::Violation(
                    AttenuationDimension::Constraints,
                ));
            }
        }
        if child_spec.ttl_seconds > parent.ttl_seconds {
            return Err(AttenuateError::Violation(AttenuationDimension::Expiry));
        }
        if child_spec.ttl_seconds < TTL_MIN {
            return Err(AttenuateError::TtlOutOfRange(child_spec.ttl_seconds));
        }

        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        let mut child = CapabilityToken {
            id: self.mint_id(key, ordinal, now_ms),
            action: child_spec.action,
            scope: child_spec.scope,
            limit: child_spec.limit,
            ttl_seconds: child_spec.ttl_seconds,
            // The child inherits the parent's clock: its lifetime is a
            // suffix-truncation of the parent's, never an extension.
            issued_at_ms: parent.issued_at_ms,
            version: parent.version,
            use_mode: UseMode::Single,
            constraints: child_spec.constraints,
            parent_id: Some(parent.id.clone()),
            signature: String::new(),
        };
        child.signature = sign_bytes(key, &canonical_bytes(&child));
        self.record(&child, ordinal);
        self.entries
            .get_mut(&parent.id)
            .expect("parent checked live")
            .children
            .push(child.id.clone());
        Ok(child)
    }

    /// Revoke a token and every transitively attenuated descendant.
    pub fn revoke(&mut self, id: &TokenId) -> Result<(), UnknownToken> {
        if !self.entries.contains_key(id) {
            return Err(UnknownToken);
        }
        let mut queue: Vec<TokenId> = alloc::vec![id.clone()];
        while let Some(current) = queue.pop() {
            if let Some(entry) = self.entries.get(&current) {
                self.revoked.test_and_set(entry.ordinal);
                queue.extend(entry.children.iter().cloned());
            }
        }
        Ok(())
    }
}

/// Does the token cover this request? Action name equal, request scope at
/// most token scope, amount within limit, and all token constraints
/// satisfied by the request parameters. A limited token demands an explicit
/// in-range `amount`: absent or non-numeric fails closed.
fn allows(token: &CapabilityToken, req: &ActionRequest) -> bool {
    if req.capability != token.action {
        return false;
    }
    if !scope_leq(req.scope, token.scope) {
        return false;
    }
    if let Some(limit) = token.limit {
        match req.params.get("amount").and_then(|v| v.as_int()) {
            Some(amount) if amount >= 0 && (amount as u64) <= limit => {}
            _ => return false,
        }
    }
    eval_constraints(&token.constraints, &req.params).is_pass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::CmpOp;
    use crate::crypto::sha256;
    use crate::taxonomy::{ParamMap, ParamValue, ResourceRef};
    use alloc::vec;
    use std::sync::Arc;

    fn dev_key() -> SigningKey {
        SigningKey::from_hex("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f")
            .unwrap()
    }

    fn session() -> SessionContext {
        SessionContext {
            session_id: "s-1".into(),
            nlr_hash: sha256(b"nlr"),
            state_version: sha256(b"fixture-state"),
            context_invariants: vec![],
        }
    }

    fn payment_spec() -> TokenSpec {
        TokenSpec {
            action: "payment.transfer".into(),
            scope: Scope::SessionScope,
            limit: Some(500),
            constraints: vec![ConstraintExpr::int("amount", CmpOp::Le, 500)],
        }
    }

    fn request_for(token: &CapabilityToken, amount: i64) -> ActionRequest {
        let mut params = ParamMap::new();
        params.insert("amount".into(), ParamValue::Int(amount));
        ActionRequest {
            capability: "payment.transfer".into(),
            scope: Scope::OwnData,
            target: ResourceRef::Account {
                account_id: "acct-1".into(),
            },
            params,
            token_id: token.id.clone(),
        }
    }

    fn issue_fixture(store: &mut TokenStore) -> CapabilityToken {
        store
            .issue(
                &IssuanceGuard::pipeline_only(),
                payment_spec(),
                &session(),
                &dev_key(),
                120,
                1_737_021_600_000,
            )
            .unwrap()
    }

    /// Golden vector: canonical bytes of the fixture token, frozen from an
    /// independent implementation of the layout rules.
    #[test]
    fn canonical_bytes_golden_vector() {
        let token = CapabilityToken {
            id: TokenId("cap-0-test".into()),
            action: "payment.transfer".into(),
            scope: Scope::SessionScope,
            limit: Some(500),
            ttl_seconds: 120,
            issued_at_ms: 1_737_021_600_000,
            version: sha256(b"fixture-state"),
            use_mode: UseMode::Single,
            constraints: vec![ConstraintExpr::int("amount", CmpOp::Le, 500)],
            parent_id: None,
            signature: String::new(),
        };
        let bytes = canonical_bytes(&token);
        assert_eq!(bytes.len(), 218);
        assert_eq!(
            hex::encode(&bytes),
            concat!(
                "616374696f6e3d7061796d656e742e7472616e736665721e73636f70653d7365",
                "7373696f6e5f73636f70651e6c696d69743d3530301e74746c3d3132301e6973",
                "737565645f61743d323032352d30312d31365431303a30303a30302e3030305a",
                "1e76657273696f6e3d6239616434383934346638326339353734333462326236",
                "3835663834646261303732636333663337346366306262306463333730393933",
                "3134363637363538301e7573653d73696e676c651e636f6e73747261696e7473",
                "3d616d6f756e743c3d3530301e706172656e745f69643de28885"
            )
        );
    }

    /// Golden vector: HMAC-SHA256 of the canonical bytes under the dev key,
    /// computed independently and frozen.
    #[test]
    fn signature_golden_vector() {
        let token = CapabilityToken {
            id: TokenId("cap-0-test".into()),
            action: "payment.transfer".into(),
            scope: Scope::SessionScope,
            limit: Some(500),
            ttl_seconds: 120,
            issued_at_ms: 1_737_021_600_000,
            version: sha256(b"fixture-state"),
            use_mode: UseMode::Single,
            constraints: vec![ConstraintExpr::int("amount", CmpOp::Le, 500)],
            parent_id: None,
            signature: String::new(),
        };
        let sig = sign_bytes(&dev_key(), &canonical_bytes(&token));
        assert_eq!(
            sig,
            "hmac-sha256:fd3f1e023602e39a07411aa3942ab919f90d41257329d7aef261af23d2048c44"
        );
    }

    #[test]
    fn canonical_bytes_deterministic_and_field_sensitive() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        assert_eq!(canonical_bytes(&token), canonical_bytes(&token));
        let mut other = token.clone();
        other.limit = Some(400);
        assert_ne!(canonical_bytes(&token), canonical_bytes(&other));
    }

    #[test]
    fn ttl_bounds_inclusive() {
        let mut store = TokenStore::new();
        let guard = IssuanceGuard::pipeline_only();
        for bad in [0u32, 29, 301, 10_000] {
            let err = store
                .issue(&guard, payment_spec(), &session(), &dev_key(), bad, 0)
                .unwrap_err();
            assert_eq!(err, IssueError::TtlOutOfRange(bad));
        }
        for good in [30u32, 300] {
            assert!(store
                .issue(&guard, payment_spec(), &session(), &dev_key(), good, 0)
                .is_ok());
        }
    }

    #[test]
    fn fresh_token_validates_and_redeems_once() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let now = token.issued_at_ms + 1000;
        assert!(store
            .validate(&token, &request_for(&token, 450), now, &session(), &dev_key())
            .is_valid());
        assert_eq!(store.redeem(&token.id).unwrap(), RedeemOutcome::Redeemed);
        assert_eq!(
            store.redeem(&token.id).unwrap(),
            RedeemOutcome::AlreadyRedeemed
        );
        assert_eq!(
            store.validate(&token, &request_for(&token, 450), now, &session(), &dev_key()),
            ValidationVerdict::Invalid(InvalidCode::AlreadyRedeemed)
        );
    }

    #[test]
    fn flipped_signature_byte_rejected() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let mut forged = token.clone();
        // Flip one hex nibble in the signature.
        let mut sig = forged.signature.into_bytes();
        let last = sig.len() - 1;
        sig[last] = if sig[last] == b'0' { b'1' } else { b'0' };
        forged.signature = String::from_utf8(sig).unwrap();
        assert_eq!(
            store.validate(&forged, &request_for(&token, 450), 0, &session(), &dev_key()),
            ValidationVerdict::Invalid(InvalidCode::BadSignature)
        );
    }

    #[test]
    fn token_never_issued_by_store_rejected() {
        let store = TokenStore::new();
        let mut foreign = CapabilityToken {
            id: TokenId("cap-99-deadbeef".into()),
            action: "payment.transfer".into(),
            scope: Scope::OwnData,
            limit: None,
            ttl_seconds: 60,
            issued_at_ms: 0,
            version: sha256(b"fixture-state"),
            use_mode: UseMode::Single,
            constraints: vec![],
            parent_id: None,
            signature: String::new(),
        };
        // Correctly signed, but the store has no record of it.
        foreign.signature = sign_bytes(&dev_key(), &canonical_bytes(&foreign));
        assert_eq!(
            store.validate(&foreign, &request_for(&foreign, 1), 0, &session(), &dev_key()),
            ValidationVerdict::Invalid(InvalidCode::BadSignature)
        );
    }

    #[test]
    fn expiry_boundary_is_exclusive() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let end = token.expires_at_ms();
        assert!(store
            .validate(&token, &request_for(&token, 450), end - 1, &session(), &dev_key())
            .is_valid());
        assert_eq!(
            store.validate(&token, &request_for(&token, 450), end, &session(), &dev_key()),
            ValidationVerdict::Invalid(InvalidCode::Expired)
        );
    }

    #[test]
    fn stale_state_version_rejected() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let mut changed = session();
        changed.state_version = sha256(b"policy-was-updated");
        assert_eq!(
            store.validate(
                &token,
                &request_for(&token, 450),
                token.issued_at_ms + 1,
                &changed,
                &dev_key()
            ),
            ValidationVerdict::Invalid(InvalidCode::StaleVersion)
        );
    }

    #[test]
    fn allows_checks_action_scope_limit_constraints() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let now = token.issued_at_ms + 1;
        let sess = session();
        let key = dev_key();

        let mut wrong_action = request_for(&token, 450);
        wrong_action.capability = "file.read".into();
        assert_eq!(
            store.validate(&token, &wrong_action, now, &sess, &key),
            ValidationVerdict::Invalid(InvalidCode::NotAllowed)
        );

        let mut too_broad = request_for(&token, 450);
        too_broad.scope = Scope::OrgScope;
        assert_eq!(
            store.validate(&token, &too_broad, now, &sess, &key),
            ValidationVerdict::Invalid(InvalidCode::NotAllowed)
        );

        assert_eq!(
            store.validate(&token, &request_for(&token, 501), now, &sess, &key),
            ValidationVerdict::Invalid(InvalidCode::NotAllowed)
        );

        // A limited token requires an explicit amount.
        let mut missing_amount = request_for(&token, 450);
        missing_amount.params.remove("amount");
        assert_eq!(
            store.validate(&token, &missing_amount, now, &sess, &key),
            ValidationVerdict::Invalid(InvalidCode::NotAllowed)
        );

        assert!(store
            .validate(&token, &request_for(&token, 500), now, &sess, &key)
            .is_valid());
    }

    #[test]
    fn attenuation_narrows_every_dimension() {
        let mut store = TokenStore::new();
        let parent = issue_fixture(&mut store);
        let key = dev_key();
        let now = parent.issued_at_ms + 1;

        let child = store
            .attenuate(
                &parent,
                AttenuationSpec {
                    action: "payment.transfer".into(),
                    scope: Scope::OwnData,
                    limit: Some(100),
                    ttl_seconds: 60,
                    constraints: vec![
                        ConstraintExpr::int("amount", CmpOp::Le, 500),
                        ConstraintExpr::int("amount", CmpOp::Le, 100),
                    ],
                },
                &key,
                now,
            )
            .unwrap();
        assert_eq!(child.parent_id.as_ref(), Some(&parent.id));
        assert_eq!(child.issued_at_ms, parent.issued_at_ms);
        assert!(child.expires_at_ms() <= parent.expires_at_ms());

        // Each widening dimension is rejected with its own label.
        let cases: Vec<(AttenuationSpec, AttenuationDimension)> = vec![
            (
                AttenuationSpec {
                    action: "file.read".into(),
                    scope: Scope::OwnData,
                    limit: Some(100),
                    ttl_seconds: 60,
                    constraints: parent.constraints.clone(),
                },
                AttenuationDimension::Action,
            ),
            (
                AttenuationSpec {
                    action: "payment.transfer".into(),
                    scope: Scope::OrgScope,
                    limit: Some(100),
                    ttl_seconds: 60,
                    constraints: parent.constraints.clone(),
                },
                AttenuationDimension::Scope,
            ),
            (
                AttenuationSpec {
                    action: "payment.transfer".into(),
                    scope: Scope::OwnData,
                    limit: Some(600),
                    ttl_seconds: 60,
                    constraints: parent.constraints.clone(),
                },
                AttenuationDimension::Limit,
            ),
            (
                AttenuationSpec {
                    action: "payment.transfer".into(),
                    scope: Scope::OwnData,
                    limit: Some(100),
                    ttl_seconds: 60,
                    constraints: vec![],
                },
                AttenuationDimension::Constraints,
            ),
            (
                AttenuationSpec {
                    action: "payment.transfer".into(),
                    scope: Scope::OwnData,
                    limit: Some(100),
                    ttl_seconds: 121,
                    constraints: parent.constraints.clone(),
                },
                AttenuationDimension::Expiry,
            ),
        ];
        for (spec, dim) in cases {
            assert_eq!(
                store.attenuate(&parent, spec, &key, now).unwrap_err(),
                AttenuateError::Violation(dim)
            );
        }
    }

    #[test]
    fn attenuating_a_redeemed_parent_fails() {
        let mut store = TokenStore::new();
        let parent = issue_fixture(&mut store);
        store.redeem(&parent.id).unwrap();
        let err = store
            .attenuate(
                &parent,
                AttenuationSpec {
                    action: "payment.transfer".into(),
                    scope: Scope::OwnData,
                    limit: Some(100),
                    ttl_seconds: 60,
                    constraints: parent.constraints.clone(),
                },
                &dev_key(),
                parent.issued_at_ms + 1,
            )
            .unwrap_err();
        assert_eq!(
            err,
            AttenuateError::ParentInvalid(InvalidCode::AlreadyRedeemed)
        );
    }

    #[test]
    fn revocation_cascades_to_descendants() {
        let mut store = TokenStore::new();
        let parent = issue_fixture(&mut store);
        let key = dev_key();
        let now = parent.issued_at_ms + 1;
        let narrow = |ttl: u32| AttenuationSpec {
            action: "payment.transfer".into(),
            scope: Scope::OwnData,
            limit: Some(100),
            ttl_seconds: ttl,
            constraints: parent.constraints.clone(),
        };
        let child = store.attenuate(&parent, narrow(100), &key, now).unwrap();
        let grandchild = store.attenuate(&child, narrow(60), &key, now).unwrap();

        store.revoke(&parent.id).unwrap();
        for t in [&parent, &child, &grandchild] {
            let mut req = request_for(t, 50);
            req.scope = Scope::OwnData;
            assert_eq!(
                store.validate(t, &req, now, &session(), &key),
                ValidationVerdict::Invalid(InvalidCode::Revoked),
                "token {} should be revoked",
                t.id
            );
        }
        assert_eq!(store.revoke(&TokenId("cap-404-x".into())), Err(UnknownToken));
    }

    #[test]
    fn concurrent_redeem_has_exactly_one_winner() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let store = Arc::new(store);
        let id = Arc::new(token.id.clone());
        let mut handles = Vec::new();
        for _ in 0..100 {
            let store = Arc::clone(&store);
            let id = Arc::clone(&id);
            handles.push(std::thread::spawn(move || store.redeem(&id).unwrap()));
        }
        let outcomes: Vec<RedeemOutcome> =
            handles.into_iter().map(|h| h.join().unwrap()).collect();
        let wins = outcomes
            .iter()
            .filter(|o| **o == RedeemOutcome::Redeemed)
            .count();
        assert_eq!(wins, 1);
        assert_eq!(outcomes.len(), 100);
    }

    #[test]
    fn wire_json_shape() {
        let mut store = TokenStore::new();
        let token = issue_fixture(&mut store);
        let js = serde_json::to_value(&token).unwrap();
        assert_eq!(js["action"], "payment.transfer");
        assert_eq!(js["scope"], "session_scope");
        assert_eq!(js["limit"], 500);
        assert_eq!(js["ttl"], 120);
        assert_eq!(js["use"], "single");
        assert_eq!(js["issued_at"], "2025-01-16T10:00:00.000Z");
        assert!(js["signature"]
            .as_str()
            .unwrap()
            .starts_with("hmac-sha256:"));
        assert!(js.get("parent_id").is_none());
    }
}
