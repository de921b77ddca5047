//! Capability taxonomy: the three-level action vocabulary the kernel
//! authorizes against.
//!
//! A capability triple is `(resource class, verb, scope)`. The universe is
//! the full cross product — five resource classes by five verbs by four
//! scopes — and scope forms a total order from narrowest (`own_data`) to
//! broadest (`global`). Policies select subsets of this universe per intent.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Level-1 label: what kind of resource an action touches.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ResourceClass {
    File,
    Database,
    Api,
    Payment,
    Credential,
}

impl ResourceClass {
    pub const ALL: [ResourceClass; 5] = [
        ResourceClass::File,
        ResourceClass::Database,
        ResourceClass::Api,
        ResourceClass::Payment,
        ResourceClass::Credential,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ResourceClass::File => "file",
            ResourceClass::Database => "database",
            ResourceClass::Api => "api",
            ResourceClass::Payment => "payment",
            ResourceClass::Credential => "credential",
        }
    }
}

/// Level-2 label: the operation performed on the resource.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Read,
    Write,
    Execute,
    Delete,
    Export,
}

impl Verb {
    pub const ALL: [Verb; 5] = [
        Verb::Read,
        Verb::Write,
        Verb::Execute,
        Verb::Delete,
        Verb::Export,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Verb::Read => "read",
            Verb::Write => "write",
            Verb::Execute => "execute",
            Verb::Delete => "delete",
            Verb::Export => "export",
        }
    }
}

/// Level-3 label: how far the action reaches. Totally ordered; the derived
/// `Ord` follows declaration order, narrowest first.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    OwnData,
    SessionScope,
    OrgScope,
    Global,
}

impl Scope {
    pub const ALL: [Scope; 4] = [
        Scope::OwnData,
        Scope::SessionScope,
        Scope::OrgScope,
        Scope::Global,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::OwnData => "own_data",
            Scope::SessionScope => "session_scope",
            Scope::OrgScope => "org_scope",
            Scope::Global => "global",
        }
    }
}

/// `a` is at most as broad as `b`.
pub fn scope_leq(a: Scope, b: Scope) -> bool {
    a <= b
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One point in the capability universe.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct CapabilityTriple {
    pub l1: ResourceClass,
    pub l2: Verb,
    pub l3: Scope,
}

impl CapabilityTriple {
    pub fn new(l1: ResourceClass, l2: Verb, l3: Scope) -> CapabilityTriple {
        CapabilityTriple { l1, l2, l3 }
    }

    /// Dotted action name (`l1.l2`), the form tokens carry.
    pub fn action_name(&self) -> String {
        let mut s = String::new();
        s.push_str(self.l1.as_str());
        s.push('.');
        s.push_str(self.l2.as_str());
        s
    }
}

impl fmt::Display for CapabilityTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.l1, self.l2, self.l3)
    }
}

/// Every triple in the universe, in lexicographic declaration order.
pub fn all_triples() -> impl Iterator<Item = CapabilityTriple> {
    ResourceClass::ALL.into_iter().flat_map(|l1| {
        Verb::ALL.into_iter().flat_map(move |l2| {
            Scope::ALL
                .into_iter()
                .map(move |l3| CapabilityTriple { l1, l2, l3 })
        })
    })
}

/// A typed handle naming the concrete resource an action touches.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(tag = "ref", rename_all = "snake_case")]
pub enum ResourceRef {
    File { path: String },
    Account { account_id: String },
    ApiEndpoint { endpoint: String },
}

impl ResourceRef {
    /// The identifying string, whichever variant carries it.
    pub fn id(&self) -> &str {
        match self {
            ResourceRef::File { path } => path,
            ResourceRef::Account { account_id } => account_id,
            ResourceRef::ApiEndpoint { endpoint } => endpoint,
        }
    }
}

/// A parameter value attached to an intent or an action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Bool(bool),
    Str(String),
    Ref(ResourceRef),
}

impl ParamValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_ref_value(&self) -> Option<&ResourceRef> {
        match self {
            ParamValue::Ref(r) => Some(r),
            _ => None,
        }
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

/// A capability triple plus the concrete parameters of the proposed action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilitySpec {
    pub l1: ResourceClass,
    pub l2: Verb,
    pub l3: Scope,
    #[serde(default)]
    pub params: ParamMap,
}

impl CapabilitySpec {
    pub fn triple(&self) -> CapabilityTriple {
        CapabilityTriple {
            l1: self.l1,
            l2: self.l2,
            l3: self.l3,
        }
    }
}
