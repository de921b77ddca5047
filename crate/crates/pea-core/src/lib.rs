//! Deterministic authorization kernel for tool-using agents.
//!
//! The kernel separates three concerns that must never trust each other:
//! *policy* proposes typed intents, *authorization* decides, and *execution*
//! acts only on signed capability tokens. Everything in this crate is
//! deterministic — clocks, similarity oracles, and approval decisions are
//! injected — so every security property is testable bit-for-bit.
//!
//! Module map:
//! - [`crypto`]: SHA-256 / HMAC-SHA256 primitives and the signing key.
//! - [`taxonomy`]: the closed (resource, verb, scope) capability universe.
//! - [`intent`]: requests, session anchors, and the typed IR parser.
//! - [`constraints`]: quantifier-free comparison constraints, fail-closed.
//! - [`policy`]: per-intent capability tables and the consistency gate.
//! - [`drift`]: lineage anchoring, similarity scoring, and drift detection.
//! - [`token`]: capability token signing, validation, redemption,
//!   attenuation, and revocation.
//! - [`pipeline`]: the ordered authorization pipeline — sole token issuer.
//! - [`exec`]: token-gated dispatch and status-code-only feedback.
//! - [`audit`]: hash-chained, principal-scoped audit log.
//! - [`osg`]: output gate — structural pattern match plus coercion calculus.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `std`
//! feature to plug into `std`-based hosts.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod audit;
pub mod constraints;
pub mod crypto;
pub mod drift;
pub mod exec;
pub mod intent;
pub mod osg;
pub mod pipeline;
pub mod policy;
pub mod taxonomy;
pub mod token;
