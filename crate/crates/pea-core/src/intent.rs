//! The intent model: raw requests, session anchors, and the typed
//! intermediate representation (IR) every authorization decision runs over.
//!
//! A `NaturalLanguageRequest` is untrusted text and never a security object.
//! The security object is [`PolicyIR`], which only comes into existence
//! through [`parse_ir`]: a closed-schema validator that rejects unknown
//! intents, out-of-taxonomy capability triples, malformed lineage, and
//! untyped resource references. A rejected document yields a [`TypeError`]
//! value — a different type than `PolicyIR` — so ill-typed input cannot flow
//! into the pipeline by construction.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

use crate::constraints::{CmpOp, ConstraintExpr, Operand, Scalar};
use crate::crypto::{hmac_sign, hmac_verify, sha256, Digest32, SigningKey};
use crate::taxonomy::{CapabilitySpec, ParamMap, ParamValue, ResourceClass, ResourceRef, Scope, Verb};

/// Separator byte between hash preimage segments.
const UNIT_SEP: u8 = 0x1F;

/// Earliest / latest milliseconds renderable as a four-digit-year RFC 3339
/// timestamp. Values outside are clamped so formatting stays total.
const MIN_FORMATTABLE_MS: i64 = -62_135_596_800_000; // 0001-01-01T00:00:00.000Z
const MAX_FORMATTABLE_MS: i64 = 253_402_300_799_999; // 9999-12-31T23:59:59.999Z

/// Raw user text plus session routing data. Untrusted input; the only thing
/// the kernel ever derives from it is the session anchor hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalLanguageRequest {
    pub text: String,
    pub session_id: String,
    /// Arrival time, milliseconds since the Unix epoch (UTC).
    pub received_at_ms: i64,
}

impl NaturalLanguageRequest {
    pub fn new(text: &str, session_id: &str, received_at_ms: i64) -> NaturalLanguageRequest {
        NaturalLanguageRequest {
            text: text.to_string(),
            session_id: session_id.to_string(),
            received_at_ms,
        }
    }
}

/// Normalize untrusted text before hashing: Unicode NFC, trim outer
/// whitespace, collapse inner whitespace runs to one character, drop control
/// characters other than newline. A run containing a newline collapses to a
/// single newline (structure is worth keeping); any other run collapses to a
/// single space. Idempotent.
pub fn sanitize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending: Option<char> = None;
    for ch in text.nfc() {
        if ch == '\n' {
            pending = Some('\n');
        } else if ch.is_whitespace() {
            pending.get_or_insert(' ');
        } else if ch.is_control() {
            // dropped entirely; does not break a whitespace run
        } else {
            if let Some(ws) = pending.take() {
                if !out.is_empty() {
                    out.push(ws);
                }
            }
            out.push(ch);
        }
    }
    out
}

/// Render epoch milliseconds as RFC 3339 with millisecond precision and a
/// `Z` suffix, e.g. `2025-01-16T10:00:00.000Z`. Total: out-of-range values
/// clamp to the representable range.
pub fn format_timestamp_ms(ms: i64) -> String {
    let clamped = ms.clamp(MIN_FORMATTABLE_MS, MAX_FORMATTABLE_MS);
    let dt = DateTime::<Utc>::from_timestamp_millis(clamped).expect("clamped to range");
    dt.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum NlrError {
    #[error("EMPTY_NLR: request text is empty after sanitization")]
    EmptyNlr,
}

/// The session anchor: SHA-256 over `sanitize(text)`, the session id, and
/// the formatted arrival timestamp, separated by 0x1F. Everything derived
/// later must trace back to this digest.
pub fn compute_nlr_hash(nlr: &NaturalLanguageRequest) -> Result<Digest32, NlrError> {
    let clean = sanitize(&nlr.text);
    if clean.is_empty() {
        return Err(NlrError::EmptyNlr);
    }
    let ts = format_timestamp_ms(nlr.received_at_ms);
    let mut preimage = Vec::with_capacity(clean.len() + nlr.session_id.len() + ts.len() + 2);
    preimage.extend_from_slice(clean.as_bytes());
    preimage.push(UNIT_SEP);
    preimage.extend_from_slice(nlr.session_id.as_bytes());
    preimage.push(UNIT_SEP);
    preimage.extend_from_slice(ts.as_bytes());
    Ok(sha256(&preimage))
}

/// A named assertion about session state, signed by the kernel so the
/// authorization pipeline can detect tampering between runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextInvariant {
    pub key: String,
    pub value: String,
    /// Lowercase hex HMAC-SHA256 over the canonical key/value encoding.
    pub signature: String,
}

impl ContextInvariant {
    fn canonical(key: &str, value: &str) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(key.len() + value.len() + 11);
        bytes.extend_from_slice(b"invariant");
        bytes.push(UNIT_SEP);
        bytes.extend_from_slice(key.as_bytes());
        bytes.push(UNIT_SEP);
        bytes.extend_from_slice(value.as_bytes());
        bytes
    }

    pub fn sign(key: &str, value: &str, signing_key: &SigningKey) -> ContextInvariant {
        let tag = hmac_sign(signing_key, &Self::canonical(key, value));
        ContextInvariant {
            key: key.to_string(),
            value: value.to_string(),
            signature: hex::encode(tag),
        }
    }

    pub fn verify(&self, signing_key: &SigningKey) -> bool {
        let Ok(tag) = hex::decode(&self.signature) else {
            return false;
        };
        hmac_verify(signing_key, &Self::canonical(&self.key, &self.value), &tag)
    }
}

/// Kernel-held session state: the immutable request anchor, the current
/// state version (policy + hard-auth rules + schema), and signed invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionContext {
    pub session_id: String,
    pub nlr_hash: Digest32,
    pub state_version: Digest32,
    pub context_invariants: Vec<ContextInvariant>,
}

/// An intent name known to the deployment vocabulary. Values of this type
/// exist only for vocabulary members: the sole constructor is
/// [`IntentVocabulary::intern`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct IntentType(String);

impl IntentType {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Human-ish rendering used for similarity scoring: underscores become
    /// spaces (`payment_transfer` → `payment transfer`).
    pub fn display_name(&self) -> String {
        self.0.replace('_', " ")
    }
}

impl fmt::Display for IntentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The closed set of intent names a deployment accepts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntentVocabulary {
    names: BTreeSet<String>,
}

impl IntentVocabulary {
    pub fn from_names<I, S>(names: I) -> IntentVocabulary
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        IntentVocabulary {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    /// The only way to obtain an [`IntentType`]: `None` for unknown names.
    pub fn intern(&self, name: &str) -> Option<IntentType> {
        self.names.get(name).map(|n| IntentType(n.clone()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Provenance of an IR: the anchor digest of the originating request, up to
/// five short derivation steps, and the similarity score claimed by the
/// producer (always recomputed by the drift gate, never trusted).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineageRecord {
    pub nlr_anchor: Digest32,
    pub derivation_chain: Vec<String>,
    pub anchor_similarity_score: f64,
}

impl LineageRecord {
    pub const MAX_CHAIN_ENTRIES: usize = 5;
    pub const MAX_ENTRY_CHARS: usize = 100;
}

/// The typed intermediate representation the pipeline authorizes. Exists
/// only as the success result of [`parse_ir`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyIR {
    pub intent: IntentType,
    pub intent_params: ParamMap,
    pub justification: Vec<String>,
    pub lineage: LineageRecord,
    pub actions: Vec<CapabilitySpec>,
    pub constraints: Vec<ConstraintExpr>,
    pub declared_state_version: Digest32,
}

impl PolicyIR {
    /// Canonical JSON bytes (struct field order, sorted map keys).
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("PolicyIR serializes")
    }

    /// Digest of the canonical JSON; identifies the IR in queues and audit
    /// payloads.
    pub fn digest(&self) -> Digest32 {
        sha256(&self.to_json_bytes())
    }
}

/// Why a document failed schema validation. `code()` values are a stable
/// contract; `detail` is diagnostic prose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub detail: String,
}

impl TypeError {
    fn new(kind: TypeErrorKind, detail: impl Into<String>) -> TypeError {
        TypeError {
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.code(), self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TypeErrorKind {
    UnknownIntent,
    BadCapabilityTriple,
    LineageShape,
    MissingField,
    BadResourceRef,
    SchemaVersionMismatch,
    /// Bytes that are not a JSON object of the expected shape at all.
    MalformedDocument,
}

impl TypeErrorKind {
    pub fn code(&self) -> &'static str {
        match self {
            TypeErrorKind::UnknownIntent => "UNKNOWN_INTENT",
            TypeErrorKind::BadCapabilityTriple => "BAD_CAPABILITY_TRIPLE",
            TypeErrorKind::LineageShape => "LINEAGE_SHAPE",
            TypeErrorKind::MissingField => "MISSING_FIELD",
            TypeErrorKind::BadResourceRef => "BAD_RESOURCE_REF",
            TypeErrorKind::SchemaVersionMismatch => "SCHEMA_VERSION_MISMATCH",
            TypeErrorKind::MalformedDocument => "MALFORMED_DOCUMENT",
        }
    }
}

/// Digest naming the wire schema this parser implements. Documents may
/// declare the schema they were produced under via an optional top-level
/// `schema_version` field; a declared digest that differs from the parser's
/// is rejected before any field validation.
pub fn ir_schema_digest() -> Digest32 {
    sha256(b"pea-ir-schema-v1")
}

const TOP_LEVEL_FIELDS: [&str; 7] = [
    "intent",
    "intent_params",
    "justification",
    "lineage",
    "actions",
    "constraints",
    "declared_state_version",
];

/// Validate raw bytes against the closed IR schema. Returns a well-typed
/// [`PolicyIR`] or the first violated rule as a [`TypeError`] — never
/// panics, whatever the input. Validation order: document shape, declared
/// schema version, unknown fields, then each required field in wire order.
pub fn parse_ir(
    raw: &[u8],
    vocab: &IntentVocabulary,
    schema_version: &Digest32,
) -> Result<PolicyIR, TypeError> {
    let doc: Value = serde_json::from_slice(raw).map_err(|e| {
        TypeError::new(TypeErrorKind::MalformedDocument, format!("not valid JSON: {e}"))
    })?;
    let obj = doc.as_object().ok_or_else(|| {
        TypeError::new(TypeErrorKind::MalformedDocument, "top level is not an object")
    })?;

    if let Some(declared) = obj.get("schema_version") {
        let hexstr = declared.as_str().ok_or_else(|| {
            TypeError::new(
                TypeErrorKind::SchemaVersionMismatch,
                "schema_version is not a string",
            )
        })?;
        match Digest32::from_hex(hexstr) {
            Ok(d) if d == *schema_version => {}
            _ => {
                return Err(TypeError::new(
                    TypeErrorKind::SchemaVersionMismatch,
                    format!("document declares schema {hexstr}"),
                ))
            }
        }
    }
    for key in obj.keys() {
        if key != "schema_version" && !TOP_LEVEL_FIELDS.contains(&key.as_str()) {
            return Err(TypeError::new(
                TypeErrorKind::SchemaVersionMismatch,
                format!("field {key} is not part of this schema"),
            ));
        }
    }

    let require = |name: &str| -> Result<&Value, TypeError> {
        obj.get(name)
            .ok_or_else(|| TypeError::new(TypeErrorKind::MissingField, name.to_string()))
    };

    // intent
    let intent_raw = require("intent")?;
    let intent_name = intent_raw.as_str().ok_or_else(|| {
        TypeError::new(TypeErrorKind::MalformedDocument, "intent is not a string")
    })?;
    let intent = vocab.intern(intent_name).ok_or_else(|| {
        TypeError::new(TypeErrorKind::UnknownIntent, intent_name.to_string())
    })?;

    // intent_params
    let intent_params = parse_params(require("intent_params")?, "intent_params")?;

    // justification
    let just_raw = require("justification")?;
    let just_arr = just_raw.as_array().ok_or_else(|| {
        TypeError::new(
            TypeErrorKind::MalformedDocument,
            "justification is not a list",
        )
    })?;
    if just_arr.is_empty() {
        return Err(TypeError::new(
            TypeErrorKind::MissingField,
            "justification must be non-empty",
        ));
    }
    let mut justification = Vec::with_capacity(just_arr.len());
    for j in just_arr {
        let s = j.as_str().ok_or_else(|| {
            TypeError::new(
                TypeErrorKind::MalformedDocument,
                "justification entry is not a string",
            )
        })?;
        justification.push(s.to_string());
    }

    // lineage
    let lineage = parse_lineage(require("lineage")?)?;

    // actions
    let actions_raw = require("actions")?;
    let actions_arr = actions_raw.as_array().ok_or_else(|| {
        TypeError::new(TypeErrorKind::MalformedDocument, "actions is not a list")
    })?;
    if actions_arr.is_empty() {
        return Err(TypeError::new(
            TypeErrorKind::MissingField,
            "actions must be non-empty",
        ));
    }
    let mut actions = Vec::with_capacity(actions_arr.len());
    for a in actions_arr {
        actions.push(parse_action(a)?);
    }

    // constraints
    let constraints_raw = require("constraints")?;
    let constraints_arr = constraints_raw.as_array().ok_or_else(|| {
        TypeError::new(
            TypeErrorKind::MalformedDocument,
            "constraints is not a list",
        )
    })?;
    let mut constraints = Vec::with_capacity(constraints_arr.len());
    for c in constraints_arr {
        constraints.push(parse_constraint(c)?);
    }

    // declared_state_version
    let dsv_raw = require("declared_state_version")?;
    let dsv_str = dsv_raw.as_str().ok_or_else(|| {
        TypeError::new(
            TypeErrorKind::MalformedDocument,
            "declared_state_version is not a string",
        )
    })?;
    let declared_state_version = Digest32::from_hex(dsv_str).map_err(|e| {
        TypeError::new(
            TypeErrorKind::MalformedDocument,
            format!("declared_state_version: {e}"),
        )
    })?;

    Ok(PolicyIR {
        intent,
        intent_params,
        justification,
        lineage,
        actions,
        constraints,
        declared_state_version,
    })
}

fn parse_params(raw: &Value, field: &str) -> Result<ParamMap, TypeError> {
    let obj = raw.as_object().ok_or_else(|| {
        TypeError::new(
            TypeErrorKind::MalformedDocument,
            format!("{field} is not an object"),
        )
    })?;
    let mut out = ParamMap::new();
    for (k, v) in obj {
        out.insert(k.clone(), parse_param_value(v, field, k)?);
    }
    Ok(out)
}

fn parse_param_value(v: &Value, field: &str, key: &str) -> Result<ParamValue, TypeError> {
    match v {
        Value::Number(n) => n.as_i64().map(ParamValue::Int).ok_or_else(|| {
            TypeError::new(
                TypeErrorKind::MalformedDocument,
                format!("{field}.{key} must be an integer"),
            )
        }),
        Value::Bool(b) => Ok(ParamValue::Bool(*b)),
        Value::String(s) => Ok(ParamValue::Str(s.clone())),
        Value::Object(_) => parse_resource_ref(v, field, key).map(ParamValue::Ref),
        _ => Err(TypeError::new(
            TypeErrorKind::MalformedDocument,
            format!("{field}.{key} has an unsupported value shape"),
        )),
    }
}

fn parse_resource_ref(v: &Value, field: &str, key: &str) -> Result<ResourceRef, TypeError> {
    let bad = |why: &str| {
        TypeError::new(
            TypeErrorKind::BadResourceRef,
            format!("{field}.{key}: {why}"),
        )
    };
    let obj = v.as_object().ok_or_else(|| bad("not an object"))?;
    let kind = obj
        .get("ref")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing ref discriminator"))?;
    let (id_key, build): (&str, fn(String) -> ResourceRef) = match kind {
        "file" => ("path", |s| ResourceRef::File { path: s }),
        "account" => ("account_id", |s| ResourceRef::Account { account_id: s }),
        "api_endpoint" => ("endpoint", |s| ResourceRef::ApiEndpoint { endpoint: s }),
        other => return Err(bad(&format!("unknown ref kind {other}"))),
    };
    if obj.len() != 2 {
        return Err(bad("exactly ref + identifier fields required"));
    }
    let id = obj
        .get(id_key)
        .and_then(Value::as_str)
        .ok_or_else(|| bad(&format!("missing {id_key}")))?;
    Ok(build(id.to_string()))
}

fn parse_lineage(raw: &Value) -> Result<LineageRecord, TypeError> {
    let bad = |why: &str| TypeError::new(TypeErrorKind::LineageShape, why.to_string());
    let obj = raw.as_object().ok_or_else(|| bad("lineage is not an object"))?;
    for key in obj.keys() {
        if !matches!(
            key.as_str(),
            "nlr_anchor" | "derivation_chain" | "anchor_similarity_score"
        ) {
            return Err(bad(&format!("unknown lineage field {key}")));
        }
    }
    let anchor_str = obj
        .get("nlr_anchor")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("nlr_anchor missing or not a string"))?;
    let nlr_anchor =
        Digest32::from_hex(anchor_str).map_err(|e| bad(&format!("nlr_anchor: {e}")))?;

    let chain_raw = obj
        .get("derivation_chain")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("derivation_chain missing or not a list"))?;
    if chain_raw.len() > LineageRecord::MAX_CHAIN_ENTRIES {
        return Err(bad(&format!(
            "derivation_chain has {} entries, max {}",
            chain_raw.len(),
            LineageRecord::MAX_CHAIN_ENTRIES
        )));
    }
    let mut derivation_chain = Vec::with_capacity(chain_raw.len());
    for entry in chain_raw {
        let s = entry
            .as_str()
            .ok_or_else(|| bad("derivation_chain entry is not a string"))?;
        let chars = s.chars().count();
        if chars > LineageRecord::MAX_ENTRY_CHARS {
            return Err(bad(&format!(
                "derivation_chain entry has {chars} chars, max {}",
                LineageRecord::MAX_ENTRY_CHARS
            )));
        }
        derivation_chain.push(s.to_string());
    }

    let score = obj
        .get("anchor_similarity_score")
        .and_then(Value::as_f64)
        .ok_or_else(|| bad("anchor_similarity_score missing or not a number"))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(bad(&format!(
            "anchor_similarity_score {score} outside [0,1]"
        )));
    }

    Ok(LineageRecord {
        nlr_anchor,
        derivation_chain,
        anchor_similarity_score: score,
    })
}

fn parse_action(raw: &Value) -> Result<CapabilitySpec, TypeError> {
    let bad = |why: String| TypeError::new(TypeErrorKind::BadCapabilityTriple, why);
    let obj = raw
        .as_object()
        .ok_or_else(|| bad("action is not an object".to_string()))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "l1" | "l2" | "l3" | "params") {
            return Err(bad(format!("unknown action field {key}")));
        }
    }
    let l1: ResourceClass = field_enum(obj.get("l1"), "l1")?;
    let l2: Verb = field_enum(obj.get("l2"), "l2")?;
    let l3: Scope = field_enum(obj.get("l3"), "l3")?;
    let params = match obj.get("params") {
        Some(p) => parse_params(p, "action.params")?,
        None => ParamMap::new(),
    };
    Ok(CapabilitySpec { l1, l2, l3, params })
}

fn field_enum<T: serde::de::DeserializeOwned>(
    v: Option<&Value>,
    name: &str,
) -> Result<T, TypeError> {
    let v = v.ok_or_else(|| {
        TypeError::new(
            TypeErrorKind::BadCapabilityTriple,
            format!("missing {name}"),
        )
    })?;
    serde_json::from_value(v.clone()).map_err(|_| {
        TypeError::new(
            TypeErrorKind::BadCapabilityTriple,
            format!("{name} value {v} not in taxonomy"),
        )
    })
}

fn parse_constraint(raw: &Value) -> Result<ConstraintExpr, TypeError> {
    let bad = |why: &str| {
        TypeError::new(
            TypeErrorKind::MalformedDocument,
            format!("constraint: {why}"),
        )
    };
    let obj = raw.as_object().ok_or_else(|| bad("not an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "path" | "op" | "value") {
            return Err(bad(&format!("unknown field {key}")));
        }
    }
    let path = obj
        .get("path")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("path missing or not a string"))?;
    let op_str = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("op missing or not a string"))?;
    let op = match op_str {
        "<" => CmpOp::Lt,
        "<=" => CmpOp::Le,
        "=" => CmpOp::Eq,
        ">=" => CmpOp::Ge,
        ">" => CmpOp::Gt,
        "in_set" => CmpOp::InSet,
        other => return Err(bad(&format!("unknown op {other}"))),
    };
    let value_raw = obj.get("value").ok_or_else(|| bad("value missing"))?;
    let value = match (op, value_raw) {
        (CmpOp::InSet, Value::Array(items)) => {
            let mut set = Vec::with_capacity(items.len());
            for item in items {
                set.push(parse_scalar(item).ok_or_else(|| bad("set entry not a scalar"))?);
            }
            Operand::Set(set)
        }
        (CmpOp::InSet, _) => return Err(bad("in_set requires a list value")),
        (_, Value::Array(_)) => return Err(bad("comparison requires a scalar value")),
        (_, v) => Operand::Scalar(parse_scalar(v).ok_or_else(|| bad("value not a scalar"))?),
    };
    Ok(ConstraintExpr {
        path: path.to_string(),
        op,
        value,
    })
}

fn parse_scalar(v: &Value) -> Option<Scalar> {
    match v {
        Value::Number(n) => n.as_i64().map(Scalar::Int),
        Value::Bool(b) => Some(Scalar::Bool(*b)),
        Value::String(s) => Some(Scalar::Str(s.clone())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn vocab() -> IntentVocabulary {
        IntentVocabulary::from_names(["summarize_emails", "payment_transfer", "file_export"])
    }

    fn valid_ir_json(anchor: &Digest32, version: &Digest32) -> String {
        format!(
            concat!(
                "{{\"intent\":\"payment_transfer\",",
                "\"intent_params\":{{\"amount\":450,\"destination\":{{\"ref\":\"account\",\"account_id\":\"acct-9\"}}}},",
                "\"justification\":[\"user asked to pay rent\"],",
                "\"lineage\":{{\"nlr_anchor\":\"{}\",\"derivation_chain\":[\"transfer rent payment\"],\"anchor_similarity_score\":0.91}},",
                "\"actions\":[{{\"l1\":\"payment\",\"l2\":\"execute\",\"l3\":\"own_data\",\"params\":{{\"amount\":450}}}}],",
                "\"constraints\":[{{\"path\":\"amount\",\"op\":\"<=\",\"value\":500}}],",
                "\"declared_state_version\":\"{}\"}}"
            ),
            anchor.to_hex(),
            version.to_hex()
        )
    }

    #[test]
    fn sanitize_collapses_whitespace() {
        assert_eq!(sanitize("  hello   world "), "hello world");
    }

    #[test]
    fn sanitize_drops_control_chars() {
        assert_eq!(sanitize("a\u{0000}b"), "ab");
        assert_eq!(sanitize("a\u{0007}\u{0008}b"), "ab");
    }

    #[test]
    fn sanitize_keeps_clean_strings() {
        assert_eq!(sanitize("already clean"), "already clean");
    }

    #[test]
    fn sanitize_is_idempotent_on_samples() {
        for s in [
            "  hello   world ",
            "line one\n\n line two",
            "tabs\tand\r\nreturns",
            "ünïcode  text",
        ] {
            let once = sanitize(s);
            assert_eq!(sanitize(&once), once);
        }
    }

    #[test]
    fn sanitize_preserves_newlines_as_run_collapse() {
        assert_eq!(sanitize("line one \n  line two"), "line one\nline two");
    }

    #[test]
    fn timestamp_formatting_golden() {
        assert_eq!(format_timestamp_ms(0), "1970-01-01T00:00:00.000Z");
        assert_eq!(format_timestamp_ms(1_737_021_600_000), "2025-01-16T10:00:00.000Z");
    }

    #[test]
    fn nlr_hash_golden_vectors() {
        // Frozen values computed with an independent SHA-256 implementation
        // over sanitize(text) ++ 0x1F ++ session_id ++ 0x1F ++ timestamp.
        let nlr = NaturalLanguageRequest::new("summarize my inbox", "s-001", 0);
        assert_eq!(
            compute_nlr_hash(&nlr).unwrap().to_hex(),
            "091381b759abc8801f3a829ea3f73c7726a56b74d67aea11bd3b07910048f74c"
        );
        let nlr2 = NaturalLanguageRequest::new("summarize my inbox", "s-001", 1_737_021_600_000);
        assert_eq!(
            compute_nlr_hash(&nlr2).unwrap().to_hex(),
            "add297ec203b4d4233366c644cba87b02a97e9793c6db66179d2b4e90b0d69e8"
        );
    }

    #[test]
    fn nlr_hash_varies_with_session() {
        let a = compute_nlr_hash(&NaturalLanguageRequest::new("same text", "s-1", 0)).unwrap();
        let b = compute_nlr_hash(&NaturalLanguageRequest::new("same text", "s-2", 0)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn nlr_hash_rejects_empty_after_sanitize() {
        let nlr = NaturalLanguageRequest::new(" \t \u{0000} ", "s-1", 0);
        assert_eq!(compute_nlr_hash(&nlr), Err(NlrError::EmptyNlr));
    }

    #[test]
    fn context_invariant_sign_verify() {
        let key = SigningKey::new(vec![9u8; 32]).unwrap();
        let inv = ContextInvariant::sign("region", "eu", &key);
        assert!(inv.verify(&key));
        let mut tampered = inv.clone();
        tampered.value = "us".into();
        assert!(!tampered.verify(&key));
        let other = SigningKey::new(vec![10u8; 32]).unwrap();
        assert!(!inv.verify(&other));
    }

    #[test]
    fn vocabulary_is_the_only_intent_constructor() {
        let v = vocab();
        assert!(v.intern("payment_transfer").is_some());
        assert!(v.intern("prevent_shutdown").is_none());
        assert_eq!(
            v.intern("summarize_emails").unwrap().display_name(),
            "summarize emails"
        );
    }

    #[test]
    fn parse_round_trip() {
        let anchor = sha256(b"anchor");
        let version = sha256(b"version");
        let raw = valid_ir_json(&anchor, &version);
        let ir = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap();
        assert_eq!(ir.intent.as_str(), "payment_transfer");
        assert_eq!(ir.actions.len(), 1);
        assert_eq!(ir.lineage.nlr_anchor, anchor);
        assert_eq!(ir.declared_state_version, version);
        // Serialize back out and parse again: fixed point.
        let re = parse_ir(&ir.to_json_bytes(), &vocab(), &ir_schema_digest()).unwrap();
        assert_eq!(re, ir);
    }

    #[test]
    fn unknown_intent_rejected() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v"))
            .replace("payment_transfer", "prevent_shutdown");
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::UnknownIntent);
        assert_eq!(err.kind.code(), "UNKNOWN_INTENT");
    }

    #[test]
    fn six_entry_chain_rejected() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v")).replace(
            "[\"transfer rent payment\"]",
            "[\"a\",\"b\",\"c\",\"d\",\"e\",\"f\"]",
        );
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::LineageShape);
    }

    #[test]
    fn overlong_chain_entry_rejected() {
        let long = "x".repeat(101);
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v"))
            .replace("transfer rent payment", &long);
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::LineageShape);
        // Exactly 100 characters is fine.
        let ok = valid_ir_json(&sha256(b"a"), &sha256(b"v"))
            .replace("transfer rent payment", &"x".repeat(100));
        assert!(parse_ir(ok.as_bytes(), &vocab(), &ir_schema_digest()).is_ok());
    }

    #[test]
    fn similarity_score_bounds_enforced() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v")).replace("0.91", "1.2");
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::LineageShape);
    }

    #[test]
    fn out_of_taxonomy_triple_rejected() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v"))
            .replace("\"l1\":\"payment\"", "\"l1\":\"network\"");
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::BadCapabilityTriple);
    }

    #[test]
    fn raw_string_resource_ref_shapes_rejected() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v")).replace(
            "{\"ref\":\"account\",\"account_id\":\"acct-9\"}",
            "{\"ref\":\"account\"}",
        );
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::BadResourceRef);
        let raw2 = valid_ir_json(&sha256(b"a"), &sha256(b"v")).replace(
            "{\"ref\":\"account\",\"account_id\":\"acct-9\"}",
            "{\"ref\":\"ledger\",\"account_id\":\"acct-9\"}",
        );
        let err2 = parse_ir(raw2.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err2.kind, TypeErrorKind::BadResourceRef);
    }

    #[test]
    fn missing_fields_reported_in_wire_order() {
        let err = parse_ir(b"{}", &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::MissingField);
        assert_eq!(err.detail, "intent");
        let raw = "{\"intent\":\"payment_transfer\"}";
        let err2 = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err2.detail, "intent_params");
    }

    #[test]
    fn empty_justification_and_actions_rejected() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v"))
            .replace("[\"user asked to pay rent\"]", "[]");
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::MissingField);
    }

    #[test]
    fn schema_version_mismatch_detected() {
        let base = valid_ir_json(&sha256(b"a"), &sha256(b"v"));
        let declared = sha256(b"some-other-schema").to_hex();
        let raw = format!("{{\"schema_version\":\"{declared}\",{}", &base[1..]);
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::SchemaVersionMismatch);
        // Matching declared schema is accepted.
        let good = format!(
            "{{\"schema_version\":\"{}\",{}",
            ir_schema_digest().to_hex(),
            &base[1..]
        );
        assert!(parse_ir(good.as_bytes(), &vocab(), &ir_schema_digest()).is_ok());
    }

    #[test]
    fn unknown_top_level_field_is_schema_skew() {
        let base = valid_ir_json(&sha256(b"a"), &sha256(b"v"));
        let raw = format!("{{\"extra_field\":1,{}", &base[1..]);
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::SchemaVersionMismatch);
    }

    #[test]
    fn garbage_bytes_yield_typed_error() {
        let err = parse_ir(b"\xff\xfe not json", &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::MalformedDocument);
        let err2 = parse_ir(b"[1,2,3]", &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err2.kind, TypeErrorKind::MalformedDocument);
    }

    #[test]
    fn float_params_rejected() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v")).replace(
            "\"amount\":450,",
            "\"amount\":450.5,",
        );
        let err = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap_err();
        assert_eq!(err.kind, TypeErrorKind::MalformedDocument);
    }

    #[test]
    fn ir_digest_is_stable() {
        let raw = valid_ir_json(&sha256(b"a"), &sha256(b"v"));
        let ir = parse_ir(raw.as_bytes(), &vocab(), &ir_schema_digest()).unwrap();
        assert_eq!(ir.digest(), ir.digest());
        let mut other = ir.clone();
        other.justification.push("second thought".into());
        assert_ne!(ir.digest(), other.digest());
    }
}
