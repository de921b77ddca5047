//! SHA-256 / HMAC-SHA256 primitives shared by the kernel.
//!
//! Everything here is deterministic and side-effect free. Digests are fixed
//! 32-byte values rendered as lowercase hex on every wire surface.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use hmac::{Hmac, Mac};
use sha2::{Digest as _, Sha256};

type HmacSha256 = Hmac<Sha256>;

/// A 32-byte SHA-256 digest. Lowercase hex everywhere it is serialized.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Digest32, DigestParseError> {
        if s.len() != 64 {
            return Err(DigestParseError::Length(s.len()));
        }
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(DigestParseError::NotLowercase);
        }
        let raw = hex::decode(s).map_err(|_| DigestParseError::NotHex)?;
        let mut out = [0u8; 32];
        out.copy_from_slice(&raw);
        Ok(Digest32(out))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_hex())
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DigestParseError {
    #[error("digest hex must be 64 chars, got {0}")]
    Length(usize),
    #[error("digest hex must be lowercase")]
    NotLowercase,
    #[error("digest is not valid hex")]
    NotHex,
}

impl serde::Serialize for Digest32 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> serde::Deserialize<'de> for Digest32 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        Digest32::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of a byte string.
pub fn sha256(bytes: &[u8]) -> Digest32 {
    let mut h = Sha256::new();
    h.update(bytes);
    Digest32(h.finalize().into())
}

/// SHA-256 over a sequence of byte strings hashed in order.
pub fn sha256_chain(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest32(h.finalize().into())
}

/// Kernel signing key. At least 32 bytes, never logged or serialized.
#[derive(Clone)]
pub struct SigningKey(Vec<u8>);

impl SigningKey {
    pub const MIN_LEN: usize = 32;

    pub fn new(bytes: Vec<u8>) -> Result<SigningKey, KeyError> {
        if bytes.len() < Self::MIN_LEN {
            return Err(KeyError::TooShort(bytes.len()));
        }
        Ok(SigningKey(bytes))
    }

    pub fn from_hex(s: &str) -> Result<SigningKey, KeyError> {
        let raw = hex::decode(s.trim()).map_err(|_| KeyError::NotHex)?;
        SigningKey::new(raw)
    }

    fn mac(&self) -> HmacSha256 {
        // HMAC accepts any key length; MIN_LEN is enforced at construction.
        HmacSha256::new_from_slice(&self.0).expect("hmac key")
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey(<{} bytes>)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("signing key must be at least 32 bytes, got {0}")]
    TooShort(usize),
    #[error("signing key is not valid hex")]
    NotHex,
}

/// HMAC-SHA256 tag over `bytes`.
pub fn hmac_sign(key: &SigningKey, bytes: &[u8]) -> [u8; 32] {
    let mut mac = key.mac();
    mac.update(bytes);
    mac.finalize().into_bytes().into()
}

/// Constant-time HMAC verification.
pub fn hmac_verify(key: &SigningKey, bytes: &[u8], tag: &[u8]) -> bool {
    let mut mac = key.mac();
    mac.update(bytes);
    mac.verify_slice(tag).is_ok()
}
