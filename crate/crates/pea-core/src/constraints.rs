//! Constraint expressions: the declarative comparisons an intent carries and
//! a capability token enforces.
//!
//! A [`ConstraintExpr`] is one atomic comparison — `path op constant`. A list
//! of them is a conjunction: every atom must hold. Evaluation is total and
//! fail-closed: an unresolved path or a type mismatch is a failure, never a
//! panic and never a silent pass.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{ParamMap, ParamValue};

/// Comparison operator. Wire form is the mathematical symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "in_set")]
    InSet,
}

impl CmpOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::InSet => "in_set",
        }
    }
}

/// A scalar a constraint can mention.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Bool(v) => write!(f, "{v}"),
            Scalar::Str(v) => f.write_str(v),
        }
    }
}

/// Right-hand side of a comparison: a scalar, or a finite set for `in_set`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Scalar(Scalar),
    Set(Vec<Scalar>),
}

/// One atomic comparison over the evaluation environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintExpr {
    pub path: String,
    pub op: CmpOp,
    pub value: Operand,
}

impl ConstraintExpr {
    pub fn int(path: &str, op: CmpOp, v: i64) -> ConstraintExpr {
        ConstraintExpr {
            path: path.to_string(),
            op,
            value: Operand::Scalar(Scalar::Int(v)),
        }
    }

    pub fn str_eq(path: &str, v: &str) -> ConstraintExpr {
        ConstraintExpr {
            path: path.to_string(),
            op: CmpOp::Eq,
            value: Operand::Scalar(Scalar::Str(v.to_string())),
        }
    }

    pub fn in_set(path: &str, values: Vec<Scalar>) -> ConstraintExpr {
        ConstraintExpr {
            path: path.to_string(),
            op: CmpOp::InSet,
            value: Operand::Set(values),
        }
    }

    /// Canonical text form, e.g. `amount<=500` or `region in_set{eu,us}`.
    /// This is the form committed into signed token bytes, so it must stay
    /// stable.
    pub fn canonical_text(&self) -> String {
        match &self.value {
            Operand::Scalar(s) => format!("{}{}{}", self.path, self.op.as_str(), s),
            Operand::Set(items) => {
                let mut joined = String::new();
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        joined.push(',');
                    }
                    joined.push_str(&item.to_string());
                }
                format!("{} {}{{{}}}", self.path, self.op.as_str(), joined)
            }
        }
    }
}

/// Canonical text of a conjunction: atoms joined by `&`, empty list renders
/// as the empty string.
pub fn canonical_conjunction(atoms: &[ConstraintExpr]) -> String {
    let mut out = String::new();
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            out.push('&');
        }
        out.push_str(&a.canonical_text());
    }
    out
}

/// Outcome of evaluating a conjunction of constraint atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintVerdict {
    Pass,
    /// The first atom (in list order) that failed, with the reason.
    Fail {
        atom: ConstraintExpr,
        reason: ConstraintFailure,
    },
}

impl ConstraintVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, ConstraintVerdict::Pass)
    }
}

/// Why an atom failed. Unresolved and mismatched cases exist so evaluation
/// is total: malformed inputs deny, they do not abort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFailure {
    /// The path names no value in the environment.
    UnresolvedPath,
    /// The value exists but its type does not fit the operator or constant.
    TypeMismatch,
    /// The comparison itself is false.
    NotSatisfied,
}

fn scalar_of_param(v: &ParamValue) -> Option<Scalar> {
    match v {
        ParamValue::Int(i) => Some(Scalar::Int(*i)),
        ParamValue::Bool(b) => Some(Scalar::Bool(*b)),
        ParamValue::Str(s) => Some(Scalar::Str(s.clone())),
        // Resource refs compare by their identifying string.
        ParamValue::Ref(r) => Some(Scalar::Str(r.id().to_string())),
    }
}

fn compare(op: CmpOp, left: &Scalar, right: &Scalar) -> Option<bool> {
    match (left, right) {
        (Scalar::Int(a), Scalar::Int(b)) => Some(match op {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
            CmpOp::InSet => return None,
        }),
        (Scalar::Str(a), Scalar::Str(b)) => match op {
            CmpOp::Eq => Some(a == b),
            _ => None,
        },
        (Scalar::Bool(a), Scalar::Bool(b)) => match op {
            CmpOp::Eq => Some(a == b),
            _ => None,
        },
        _ => None,
    }
}

/// Evaluate one atom against an environment.
pub fn eval_atom(atom: &ConstraintExpr, env: &ParamMap) -> Result<(), ConstraintFailure> {
    let Some(value) = env.get(&atom.path) else {
        return Err(ConstraintFailure::UnresolvedPath);
    };
    let Some(left) = scalar_of_param(value) else {
        return Err(ConstraintFailure::TypeMismatch);
    };
    match (&atom.op, &atom.value) {
        (CmpOp::InSet, Operand::Set(items)) => {
            // Membership compares with `=` semantics per element; any
            // element of a different type is simply not a match.
            if items.iter().any(|i| compare(CmpOp::Eq, &left, i) == Some(true)) {
                Ok(())
            } else {
                Err(ConstraintFailure::NotSatisfied)
            }
        }
        (CmpOp::InSet, Operand::Scalar(_)) => Err(ConstraintFailure::TypeMismatch),
        (_, Operand::Set(_)) => Err(ConstraintFailure::TypeMismatch),
        (op, Operand::Scalar(right)) => match compare(*op, &left, right) {
            Some(true) => Ok(()),
            Some(false) => Err(ConstraintFailure::NotSatisfied),
            None => Err(ConstraintFailure::TypeMismatch),
        },
    }
}

/// Evaluate a conjunction. Atoms are checked in list order and the first
/// failure is reported.
pub fn eval_constraints(atoms: &[ConstraintExpr], env: &ParamMap) -> ConstraintVerdict {
    for atom in atoms {
        if let Err(reason) = eval_atom(atom, env) {
            return ConstraintVerdict::Fail {
                atom: atom.clone(),
                reason,
            };
        }
    }
    ConstraintVerdict::Pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn env(pairs: &[(&str, ParamValue)]) -> ParamMap {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn numeric_comparisons() {
        let e = env(&[("amount", ParamValue::Int(450))]);
        assert!(eval_constraints(&[ConstraintExpr::int("amount", CmpOp::Le, 500)], &e).is_pass());
        assert!(eval_constraints(&[ConstraintExpr::int("amount", CmpOp::Lt, 450)], &e)
            == ConstraintVerdict::Fail {
                atom: ConstraintExpr::int("amount", CmpOp::Lt, 450),
                reason: ConstraintFailure::NotSatisfied,
            });
        assert!(eval_constraints(&[ConstraintExpr::int("amount", CmpOp::Ge, 450)], &e).is_pass());
    }

    #[test]
    fn unresolved_path_fails_closed() {
        let e = env(&[]);
        let atom = ConstraintExpr::int("amount", CmpOp::Le, 500);
        match eval_constraints(&[atom], &e) {
            ConstraintVerdict::Fail { reason, .. } => {
                assert_eq!(reason, ConstraintFailure::UnresolvedPath)
            }
            other => panic!("expected fail, got {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_fails_closed() {
        let e = env(&[("amount", ParamValue::Str("lots".into()))]);
        match eval_constraints(&[ConstraintExpr::int("amount", CmpOp::Le, 500)], &e) {
            ConstraintVerdict::Fail { reason, .. } => {
                assert_eq!(reason, ConstraintFailure::TypeMismatch)
            }
            other => panic!("expected fail, got {other:?}"),
        }
        // Ordering comparison on strings is also a type mismatch.
        let e2 = env(&[("region", ParamValue::Str("eu".into()))]);
        let atom = ConstraintExpr {
            path: "region".into(),
            op: CmpOp::Lt,
            value: Operand::Scalar(Scalar::Str("us".into())),
        };
        match eval_constraints(&[atom], &e2) {
            ConstraintVerdict::Fail { reason, .. } => {
                assert_eq!(reason, ConstraintFailure::TypeMismatch)
            }
            other => panic!("expected fail, got {other:?}"),
        }
    }

    #[test]
    fn in_set_membership() {
        let e = env(&[("region", ParamValue::Str("eu".into()))]);
        let atom = ConstraintExpr::in_set(
            "region",
            vec![Scalar::Str("eu".into()), Scalar::Str("us".into())],
        );
        assert!(eval_constraints(core::slice::from_ref(&atom), &e).is_pass());
        let e2 = env(&[("region", ParamValue::Str("apac".into()))]);
        assert!(!eval_constraints(&[atom], &e2).is_pass());
    }

    #[test]
    fn first_failing_atom_reported() {
        let e = env(&[("amount", ParamValue::Int(900))]);
        let a1 = ConstraintExpr::int("amount", CmpOp::Le, 500);
        let a2 = ConstraintExpr::int("missing", CmpOp::Eq, 1);
        match eval_constraints(&[a1.clone(), a2], &e) {
            ConstraintVerdict::Fail { atom, .. } => assert_eq!(atom, a1),
            other => panic!("expected fail, got {other:?}"),
        }
    }

    #[test]
    fn canonical_text_forms() {
        assert_eq!(
            ConstraintExpr::int("amount", CmpOp::Le, 500).canonical_text(),
            "amount<=500"
        );
        assert_eq!(
            ConstraintExpr::in_set(
                "region",
                vec![Scalar::Str("eu".into()), Scalar::Str("us".into())]
            )
            .canonical_text(),
            "region in_set{eu,us}"
        );
        assert_eq!(
            canonical_conjunction(&[
                ConstraintExpr::int("amount", CmpOp::Le, 500),
                ConstraintExpr::str_eq("currency", "usd"),
            ]),
            "amount<=500&currency=usd"
        );
        assert_eq!(canonical_conjunction(&[]), "");
    }

    #[test]
    fn wire_round_trip() {
        let atom = ConstraintExpr::int("amount", CmpOp::Le, 500);
        let js = serde_json::to_string(&atom).unwrap();
        assert_eq!(js, "{\"path\":\"amount\",\"op\":\"<=\",\"value\":500}");
        let back: ConstraintExpr = serde_json::from_str(&js).unwrap();
        assert_eq!(back, atom);
    }
}
