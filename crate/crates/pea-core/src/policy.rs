//! Policy contexts: the declarative per-intent capability tables the kernel
//! enforces, and the consistency gate that compares a proposed action list
//! against them.
//!
//! A policy is data, never code: swapping one policy for another changes
//! which triples are admissible but not a single enforcement code path.
//! Missing table entries fail closed — an intent the policy does not map
//! has no capabilities at all.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crypto::Digest32;
use crate::intent::{IntentType, IntentVocabulary};
use crate::taxonomy::{scope_leq, CapabilitySpec, CapabilityTriple, ParamMap, Scope};

/// Inclusive numeric bounds for one named parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericBounds {
    pub min: i64,
    pub max: i64,
}

impl NumericBounds {
    pub fn contains(&self, v: i64) -> bool {
        self.min <= v && v <= self.max
    }

    /// Interval containment: every value this bound admits, `other` admits.
    pub fn within(&self, other: &NumericBounds) -> bool {
        self.min >= other.min && self.max <= other.max
    }
}

/// Everything the policy says about one intent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentPolicy {
    pub triples: BTreeSet<CapabilityTriple>,
    pub max_scope: Scope,
    pub param_bounds: BTreeMap<String, NumericBounds>,
    pub approval_required: bool,
    /// Token lifetime for this intent, seconds. Risk-tiered by the policy
    /// author; must stay within the token layer's [30, 300] window.
    pub token_ttl_seconds: u32,
}

/// An organization's capability table: per intent, the admissible triples,
/// the scope ceiling, and numeric parameter bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyContext {
    pub name: String,
    pub version: Digest32,
    pub intents: BTreeMap<IntentType, IntentPolicy>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    /// The intent is in the deployment vocabulary but the policy has no
    /// entry for it — a completeness violation, handled fail-closed.
    #[error("UNKNOWN_INTENT_IN_POLICY: no table entry for {0}")]
    UnknownIntentInPolicy(String),
    /// Two policies cannot be compared because they cover different
    /// intent sets.
    #[error("VOCAB_MISMATCH: policies cover different intent sets")]
    VocabMismatch,
}

impl PolicyContext {
    /// Table lookup, no inference: the capability set for one intent.
    pub fn minimal_cap_set(
        &self,
        intent: &IntentType,
    ) -> Result<&BTreeSet<CapabilityTriple>, PolicyError> {
        self.intents
            .get(intent)
            .map(|p| &p.triples)
            .ok_or_else(|| PolicyError::UnknownIntentInPolicy(intent.as_str().into()))
    }

    pub fn intent_policy(&self, intent: &IntentType) -> Result<&IntentPolicy, PolicyError> {
        self.intents
            .get(intent)
            .ok_or_else(|| PolicyError::UnknownIntentInPolicy(intent.as_str().into()))
    }

    /// Every intent of the vocabulary must have a table entry; anything
    /// less is a configuration error surfaced at load time.
    pub fn check_complete(&self, vocab: &IntentVocabulary) -> Result<(), PolicyError> {
        for name in vocab.names() {
            if !self.intents.keys().any(|i| i.as_str() == name) {
                return Err(PolicyError::UnknownIntentInPolicy(name.into()));
            }
        }
        Ok(())
    }

    /// Union of all per-intent capability sets.
    pub fn capability_union(&self) -> BTreeSet<CapabilityTriple> {
        self.intents
            .values()
            .flat_map(|p| p.triples.iter().copied())
            .collect()
    }
}

/// Verdict of the intent–capability consistency gate.
#[derive(Debug, Clone, PartialEq)]
pub enum IvlVerdict {
    Consistent,
    Divergent {
        /// Always `INTENT_MISMATCH`; kept explicit because it crosses the
        /// wire into rejection traces.
        code: &'static str,
        offending: CapabilitySpec,
        why: String,
    },
}

impl IvlVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, IvlVerdict::Consistent)
    }

    fn divergent(offending: &CapabilitySpec, why: String) -> IvlVerdict {
        IvlVerdict::Divergent {
            code: "INTENT_MISMATCH",
            offending: offending.clone(),
            why,
        }
    }
}

fn params_within_bounds(
    params: &ParamMap,
    bounds: &BTreeMap<String, NumericBounds>,
) -> Result<(), String> {
    for (key, value) in params {
        if let (Some(v), Some(b)) = (value.as_int(), bounds.get(key)) {
            if !b.contains(v) {
                return Err(format!(
                    "param {key}={v} outside bounds [{}, {}]",
                    b.min, b.max
                ));
            }
        }
    }
    Ok(())
}

/// The consistency gate: every proposed action's triple must be in the
/// intent's capability set, its scope must not exceed the intent's ceiling,
/// and every bounded numeric parameter must be in range. First offending
/// action wins; an unmapped intent propagates as a policy error.
pub fn ivl_check(
    intent: &IntentType,
    actions: &[CapabilitySpec],
    intent_params: &ParamMap,
    ctx: &PolicyContext,
) -> Result<IvlVerdict, PolicyError> {
    let policy = ctx.intent_policy(intent)?;
    if let Some(first) = actions.first() {
        if let Err(why) = params_within_bounds(intent_params, &policy.param_bounds) {
            return Ok(IvlVerdict::divergent(first, why));
        }
    }
    for action in actions {
        let triple = action.triple();
        if !policy.triples.contains(&triple) {
            return Ok(IvlVerdict::divergent(
                action,
                format!("{triple} not in capability set for {intent}"),
            ));
        }
        if !scope_leq(action.l3, policy.max_scope) {
            return Ok(IvlVerdict::divergent(
                action,
                format!("scope {} exceeds ceiling {}", action.l3, policy.max_scope),
            ));
        }
        if let Err(why) = params_within_bounds(&action.params, &policy.param_bounds) {
            return Ok(IvlVerdict::divergent(action, why));
        }
    }
    Ok(IvlVerdict::Consistent)
}

/// `p1` admits no more than `p2`: for every intent, `p1`'s triples are a
/// subset, its scope ceiling is lower or equal, and its parameter intervals
/// are contained. Policies over different intent sets are incomparable.
pub fn policy_refines(p1: &PolicyContext, p2: &PolicyContext) -> Result<bool, PolicyError> {
    let keys1: Vec<&IntentType> = p1.intents.keys().collect();
    let keys2: Vec<&IntentType> = p2.intents.keys().collect();
    if keys1 != keys2 {
        return Err(PolicyError::VocabMismatch);
    }
    for (intent, pol1) in &p1.intents {
        let pol2 = &p2.intents[intent];
        if !pol1.triples.is_subset(&pol2.triples) {
            return Ok(false);
        }
        if !scope_leq(pol1.max_scope, pol2.max_scope) {
            return Ok(false);
        }
        // Every interval p2 constrains, p1 must constrain at least as
        // tightly; a bound present only in p1 restricts further and is fine.
        for (key, b2) in &pol2.param_bounds {
            match pol1.param_bounds.get(key) {
                Some(b1) if b1.within(b2) => {}
                _ => return Ok(false),
            }
        }
    }
    Ok(true)
}

/// The actions both the structural enforcement boundary and the policy
/// admit: plain set intersection with the policy's capability union.
pub fn safe_actions(
    ctx: &PolicyContext,
    enforcement: &BTreeSet<CapabilityTriple>,
) -> BTreeSet<CapabilityTriple> {
    ctx.capability_union()
        .intersection(enforcement)
        .copied()
        .collect()
}
