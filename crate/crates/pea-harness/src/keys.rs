//! Signing-key resolution for experiments and the CLI.
//!
//! Order of precedence: an explicit key file, then the `PEA_SIGNING_KEY`
//! environment variable, then the fixed development key. The development
//! key is fine for experiments — every run re-derives all signatures from
//! scratch — but a real deployment provisions its own.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use pea_core::crypto::{hmac_sign, SigningKey};

/// 32-byte development key, hex.
pub const DEV_KEY_HEX: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

/// Environment variable consulted when no key file is given.
pub const KEY_ENV_VAR: &str = "PEA_SIGNING_KEY";

pub fn dev_key() -> SigningKey {
    SigningKey::from_hex(DEV_KEY_HEX).expect("development key is valid")
}

/// Resolve the signing key: `key_file` if given, else `PEA_SIGNING_KEY`,
/// else the development key. File and environment values are hex,
/// surrounding whitespace ignored.
pub fn resolve_key(key_file: Option<&Path>) -> Result<SigningKey> {
    if let Some(path) = key_file {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading key file {}", path.display()))?;
        return SigningKey::from_hex(text.trim())
            .map_err(|e| anyhow!("key file {}: {e}", path.display()));
    }
    if let Ok(value) = std::env::var(KEY_ENV_VAR) {
        return SigningKey::from_hex(value.trim()).map_err(|e| anyhow!("{KEY_ENV_VAR}: {e}"));
    }
    Ok(dev_key())
}

/// Short non-reversible tag identifying a key in fingerprints and reports.
/// An HMAC over a fixed label, truncated: enough to tell keys apart, not
/// enough to say anything about the key.
pub fn key_tag(key: &SigningKey) -> String {
    hex::encode(&hmac_sign(key, b"pea-key-tag")[..8])
}
