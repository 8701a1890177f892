//! Key digest `H(k)`: a 256-bit cryptographic hash stretched to the template
//! length by counter-mode re-hashing.
//!
//! `H(k, n)` is the first `n` bits of `D_0 || D_1 || ...` where
//! `D_j = Hash(k || be32(j))`. Digest bytes are read most-significant bit
//! first. The construction is prefix-stable: `H(k, n)` is a prefix of
//! `H(k, m)` for `n <= m`.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256, Sha512_256};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Underlying 256-bit hash. Persisted with every template so old records
/// stay verifiable if the default changes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HashId {
    #[default]
    Sha256,
    Sha512_256,
}

impl HashId {
    pub fn as_str(self) -> &'static str {
        match self {
            HashId::Sha256 => "sha256",
            HashId::Sha512_256 => "sha512-256",
        }
    }

    fn digest(self, key: &[u8], counter: u32) -> [u8; 32] {
        fn run<D: Digest>(key: &[u8], counter: u32) -> [u8; 32] {
            let mut h = D::new();
            h.update(key);
            h.update(counter.to_be_bytes());
            let out = h.finalize();
            let mut block = [0u8; 32];
            block.copy_from_slice(&out);
            block
        }
        match self {
            HashId::Sha256 => run::<Sha256>(key, counter),
            HashId::Sha512_256 => run::<Sha512_256>(key, counter),
        }
    }
}

impl fmt::Display for HashId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HashId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sha256" => Ok(HashId::Sha256),
            "sha512-256" => Ok(HashId::Sha512_256),
            other => Err(Error::UnknownHash(other.to_string())),
        }
    }
}

/// The user's memorized secret. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(Error::InvalidParameter("secret key must not be empty".into()));
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

/// `H(k)` expanded to a specific template length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyDigest {
    bits: BitString,
}

impl KeyDigest {
    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn into_bits(self) -> BitString {
        self.bits
    }
}

pub fn hash_key(key: &SecretKey, n: usize, hash: HashId) -> Result<KeyDigest> {
    Ok(KeyDigest {
        bits: expand(key.as_bytes(), n, hash)?,
    })
}

/// Counter-mode expansion over raw bytes. Also used to derive the
/// pseudorandom streams behind the baseline transforms.
pub(crate) fn expand(input: &[u8], n: usize, hash: HashId) -> Result<BitString> {
    if n == 0 {
        return Err(Error::InvalidParameter("digest length must be at least one bit".into()));
    }
    let blocks = n.div_ceil(256);
    if blocks > u32::MAX as usize {
        return Err(Error::OutOfRange(format!("digest length {n} exceeds the counter range")));
    }
    let mut bits = BitString::with_capacity(blocks * 256);
    for j in 0..blocks as u32 {
        for byte in hash.digest(input, j) {
            bits.push_msb_first(byte as u64, 8);
        }
    }
    Ok(bits.prefix(n))
}

/// 32-byte seed for a deterministic RNG, derived from `input` via the
/// first counter block.
pub(crate) fn derive_seed(input: &[u8], hash: HashId) -> [u8; 32] {
    hash.digest(input, 0)
}
