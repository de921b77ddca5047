//! Randomized invariant checks over the public API. Each property states
//! something the kernel promises for *all* inputs, not just fixtures.

use std::collections::BTreeMap;

use proptest::prelude::*;

use pea_core::constraints::{eval_constraints, CmpOp, ConstraintExpr, Operand, Scalar};
use pea_core::crypto::{sha256, SigningKey};
use pea_core::intent::{
    compute_nlr_hash, sanitize, IntentVocabulary, NaturalLanguageRequest, SessionContext,
};
use pea_core::osg::{risk_score, Influence, KipVector, Knowledge, OsgConfig, Pressure};
use pea_core::pipeline::risk_adjusted_ttl;
use pea_core::taxonomy::{ParamValue, Scope};
use pea_core::token::{TTL_MAX, TTL_MIN};

fn dev_key() -> SigningKey {
    SigningKey::from_hex("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f")
        .unwrap()
}

fn arb_scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        any::<i64>().prop_map(Scalar::Int),
        any::<bool>().prop_map(Scalar::Bool),
        "[a-z]{0,8}".prop_map(Scalar::Str),
    ]
}

fn arb_operand() -> impl Strategy<Value = Operand> {
    prop_oneof![
        arb_scalar().prop_map(Operand::Scalar),
        proptest::collection::vec(arb_scalar(), 0..4).prop_map(Operand::Set),
    ]
}

fn arb_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Eq),
        Just(CmpOp::Ge),
        Just(CmpOp::Gt),
        Just(CmpOp::InSet),
    ]
}

fn arb_param() -> impl Strategy<Value = ParamValue> {
    prop_oneof![
        any::<i64>().prop_map(ParamValue::Int),
        any::<bool>().prop_map(ParamValue::Bool),
        "[a-z]{0,8}".prop_map(ParamValue::Str),
    ]
}

proptest! {
    /// Sanitizing twice is the same as sanitizing once, and the result
    /// never keeps control characters other than newline or any edge
    /// whitespace.
    #[test]
    fn sanitize_is_idempotent_and_clean(text in "\\PC{0,64}") {
        let once = sanitize(&text);
        prop_assert_eq!(sanitize(&once), once.clone());
        prop_assert!(!once.starts_with(char::is_whitespace));
        prop_assert!(!once.ends_with(char::is_whitespace));
        prop_assert!(once.chars().all(|c| c == '\n' || !c.is_control()));
    }

    /// Request hashing is stable under whitespace shape but sensitive to
    /// session and timestamp.
    #[test]
    fn nlr_hash_binds_session_and_time(
        text in "[a-z]{1,12}( [a-z]{1,12}){0,5}",
        session in "[a-z0-9-]{1,10}",
        ts in 0i64..4_102_444_800_000,
    ) {
        let base = compute_nlr_hash(&NaturalLanguageRequest::new(&text, &session, ts)).unwrap();
        let spaced = format!("  {}  ", text.replace(' ', "\t"));
        let same = compute_nlr_hash(&NaturalLanguageRequest::new(&spaced, &session, ts)).unwrap();
        prop_assert_eq!(base, same);
        let other_session =
            compute_nlr_hash(&NaturalLanguageRequest::new(&text, &format!("{session}x"), ts)).unwrap();
        prop_assert_ne!(base, other_session);
        let other_time =
            compute_nlr_hash(&NaturalLanguageRequest::new(&text, &session, ts + 1)).unwrap();
        prop_assert_ne!(base, other_time);
    }

    /// Constraint evaluation is total: any atom against any environment
    /// returns a verdict instead of panicking, and an environment missing
    /// the path always fails.
    #[test]
    fn constraint_evaluation_is_total_and_fails_closed(
        path in "[a-z]{1,6}",
        op in arb_op(),
        value in arb_operand(),
        env_value in proptest::option::of(arb_param()),
    ) {
        let atom = ConstraintExpr { path: path.clone(), op, value };
        let mut env = BTreeMap::new();
        if let Some(v) = env_value.clone() {
            env.insert(path, v);
        }
        let verdict = eval_constraints(std::slice::from_ref(&atom), &env);
        if env_value.is_none() {
            prop_assert!(!verdict.is_pass(), "missing path must fail closed");
        }
    }

    /// The composite risk score is monotone in each ordinal for any
    /// non-negative weight assignment.
    #[test]
    fn risk_score_monotone_under_random_weights(
        w1 in 0.0f64..1.0,
        w2 in 0.0f64..1.0,
        w3 in 0.0f64..1.0,
        k in 0usize..3,
        i in 0usize..3,
        p in 0usize..3,
    ) {
        let cfg = OsgConfig { w1, w2, w3, ..OsgConfig::default() };
        let ks = [Knowledge::Low, Knowledge::Medium, Knowledge::High];
        let is_ = [Influence::None, Influence::Weak, Influence::Strong];
        let ps = [Pressure::None, Pressure::Implicit, Pressure::Explicit];
        let score = |k: Knowledge, i: Influence, p: Pressure| {
            risk_score(&KipVector { k, i, p, evidence: vec![] }, &cfg)
        };
        let base = score(ks[k], is_[i], ps[p]);
        if k + 1 < 3 { prop_assert!(score(ks[k + 1], is_[i], ps[p]) >= base); }
        if i + 1 < 3 { prop_assert!(score(ks[k], is_[i + 1], ps[p]) >= base); }
        if p + 1 < 3 { prop_assert!(score(ks[k], is_[i], ps[p + 1]) >= base); }
    }

    /// Risk-scaled lifetimes always land inside the issuable window and
    /// never exceed the policy base.
    #[test]
    fn risk_ttl_always_issuable(base in 0u32..10_000, score in proptest::num::f64::ANY) {
        let ttl = risk_adjusted_ttl(base, score);
        prop_assert!((TTL_MIN..=TTL_MAX).contains(&ttl));
        prop_assert!(ttl <= base.clamp(TTL_MIN, TTL_MAX));
    }

    /// Scope comparison is a total order consistent with its ordinals.
    #[test]
    fn scope_order_total(a in 0usize..4, b in 0usize..4) {
        let scopes = [Scope::OwnData, Scope::SessionScope, Scope::OrgScope, Scope::Global];
        let (sa, sb) = (scopes[a], scopes[b]);
        prop_assert_eq!(pea_core::taxonomy::scope_leq(sa, sb), a <= b);
        prop_assert!(
            pea_core::taxonomy::scope_leq(sa, sb) || pea_core::taxonomy::scope_leq(sb, sa)
        );
    }

    /// Arbitrary byte garbage never panics the schema gate and never
    /// yields a typed proposal unless it is structurally valid JSON of
    /// the right shape (which random bytes essentially never are).
    #[test]
    fn parser_is_total_over_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let vocab = IntentVocabulary::from_names(["summarize_emails"]);
        let schema = pea_core::intent::ir_schema_digest();
        let _ = pea_core::intent::parse_ir(&bytes, &vocab, &schema);
    }

    /// Session invariants verify only under the signing key that made
    /// them, and any value tamper kills verification.
    #[test]
    fn context_invariants_bind_key_and_value(
        key_name in "[a-z]{1,8}",
        value in "[a-z0-9]{1,12}",
        tamper in "[A-Z]{1,4}",
    ) {
        use pea_core::intent::ContextInvariant;
        let inv = ContextInvariant::sign(&key_name, &value, &dev_key());
        prop_assert!(inv.verify(&dev_key()));
        let other = SigningKey::from_hex(
            "ffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff",
        ).unwrap();
        prop_assert!(!inv.verify(&other));
        let mut forged = inv.clone();
        forged.value.push_str(&tamper);
        prop_assert!(!forged.verify(&dev_key()));
    }
}

/// Deterministic cross-check kept beside the properties: the session hash
/// must match its frozen value so the randomized tests above are anchored
/// to a known-good implementation.
#[test]
fn anchor_golden_vector_holds() {
    let h = compute_nlr_hash(&NaturalLanguageRequest::new("summarize my inbox", "s-001", 0)).unwrap();
    assert_eq!(
        h.to_hex(),
        "091381b759abc8801f3a829ea3f73c7726a56b74d67aea11bd3b07910048f74c"
    );
    assert_eq!(sha256(b"fixture-state").to_hex(), {
        "b9ad48944f82c957434b2b685f84dba072cc3f374cf0bb0dc370993146676580"
    });
}

/// SessionContext is exercised here so the property file compiles it in:
/// hashing the same request twice yields the same anchor.
#[test]
fn session_anchor_is_reproducible() {
    let nlr = NaturalLanguageRequest::new("pay the invoice", "s-002", 1_737_021_600_000);
    let session = SessionContext {
        session_id: nlr.session_id.clone(),
        nlr_hash: compute_nlr_hash(&nlr).unwrap(),
        state_version: sha256(b"fixture-state"),
        context_invariants: vec![],
    };
    assert_eq!(session.nlr_hash, compute_nlr_hash(&nlr).unwrap());
}
