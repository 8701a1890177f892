//! Cancelable voice-template protection.
//!
//! A speaker embedding is binarized with a sign-plus-graycode quantizer and
//! XORed with a counter-mode hash of the user's secret key. The stored
//! template reveals neither the embedding nor the key, and a new key
//! revokes it. On top of that sit a challenge-response session protocol,
//! an append-only record store, baseline cancelable hashes (WTA, IoM, RoE)
//! and an evaluation harness.
//!
//! ```
//! use charvoc_core::{authenticate_match, protect, Embedding, SchemeParams, SecretKey};
//!
//! let params = SchemeParams::with_dim(4)?;
//! let key = SecretKey::new(b"2468".to_vec())?;
//! let voice = Embedding::new(vec![0.12, -0.5, 0.33, 0.07])?;
//! let stored = protect(&key, &voice, &params)?;
//! let result = authenticate_match(&stored, &key, &voice, 0.6)?;
//! assert!(result.accepted && result.similarity == 1.0);
//!
//! let wrong = SecretKey::new(b"1357".to_vec())?;
//! assert!(!authenticate_match(&stored, &wrong, &voice, 0.6)?.accepted);
//! # Ok::<(), charvoc_core::Error>(())
//! ```

pub mod audit;
pub mod baseline;
pub mod bits;
pub mod challenge;
pub mod embedding;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod hashgray;
mod journal;
pub mod key_hash;
pub mod store;

pub use bits::BitString;
pub use challenge::{AuthDecision, Authenticator, Challenge, Outcome, ProtocolConfig, SessionTable};
pub use embedding::Embedding;
pub use encoding::{binarize, SchemeParams};
pub use error::{Error, Result};
pub use hashgray::{authenticate_match, protect, recover, similarity, MatchResult, ProtectedTemplate};
pub use key_hash::{hash_key, HashId, SecretKey};
pub use store::{NewRecord, ProtectedRecord, Scheme, StoredTemplate, TemplateStore};
