//! Adversarial harness for the authorization kernel: deterministic attack
//! corpora, a case runner with selectable defense layers, experiment
//! drivers with built-in assertions, and a small operator CLI.
//!
//! Everything is reproducible. A corpus is a pure function of an attack
//! class, a seed, and a deployment; runs execute sequentially over injected
//! clocks; reports serialize byte-identically for the same configuration
//! fingerprint. No experiment talks to a network or consults a wall clock.

pub mod cli;
pub mod corpus;
pub mod experiments;
pub mod fixtures;
pub mod formats;
pub mod keys;
pub mod metrics;
pub mod report;
pub mod scenario;
