//! HashGray-XOR protection: `t = H(k) XOR T(v)`.
//!
//! A stored template is useless without the key: XOR with the wrong digest
//! yields pseudorandom bits, so wrong keys are rejected by low similarity
//! rather than by an explicit key check.

use std::fmt;
use std::str::FromStr;

use crate::bits::BitString;
use crate::embedding::Embedding;
use crate::encoding::{binarize, SchemeParams};
use crate::error::{Error, Result};
use crate::key_hash::{hash_key, SecretKey};

const TEMPLATE_TAG: &str = "hgx1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtectedTemplate {
    bits: BitString,
    params: SchemeParams,
}

impl ProtectedTemplate {
    pub fn from_parts(bits: BitString, params: SchemeParams) -> Result<Self> {
        if bits.len() != params.template_len() {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: params.template_len(),
            });
        }
        Ok(Self { bits, params })
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }
}

/// `hgx1 <params> <hex>`, e.g. `hgx1 p=4;l=15;d=2;h=sha256 a1b2c3d4`.
impl fmt::Display for ProtectedTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{TEMPLATE_TAG} {} {}", self.params, self.bits.to_hex())
    }
}

impl FromStr for ProtectedTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(' ');
        let (Some(tag), Some(params), Some(hex), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::parse(1, "expected `hgx1 <params> <hex>`"));
        };
        if tag != TEMPLATE_TAG {
            return Err(Error::parse(1, format!("unknown template tag {tag:?}")));
        }
        let params: SchemeParams = params.parse()?;
        let bits = BitString::from_hex(hex, params.template_len())?;
        Self::from_parts(bits, params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    pub similarity: f64,
    pub matching_bits: usize,
    pub total_bits: usize,
    pub threshold: f64,
    pub accepted: bool,
}

impl MatchResult {
    pub(crate) fn decide(similarity: f64, matching: usize, total: usize, threshold: f64) -> Self {
        Self {
            similarity,
            matching_bits: matching,
            total_bits: total,
            threshold,
            accepted: similarity >= threshold,
        }
    }
}

pub fn protect(key: &SecretKey, e: &Embedding, params: &SchemeParams) -> Result<ProtectedTemplate> {
    let binary = binarize(e, params)?;
    let digest = hash_key(key, params.template_len(), params.hash())?;
    Ok(ProtectedTemplate {
        bits: binary.xor(digest.bits())?,
        params: *params,
    })
}

pub fn recover(t: &ProtectedTemplate, key: &SecretKey) -> Result<BitString> {
    let digest = hash_key(key, t.bits.len(), t.params.hash())?;
    t.bits.xor(digest.bits())
}

/// Number of positions where the two strings agree.
pub fn matching_bits(a: &BitString, b: &BitString) -> Result<usize> {
    Ok(a.len() - a.hamming(b)?)
}

/// `S = m / (2n - m)` where `m` counts agreeing positions over `n` bits.
pub fn similarity(a: &BitString, b: &BitString) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidParameter("cannot compare empty templates".into()));
    }
    let m = matching_bits(a, b)?;
    Ok(similarity_from_counts(m, a.len()))
}

pub(crate) fn similarity_from_counts(matching: usize, n: usize) -> f64 {
    matching as f64 / (2 * n - matching) as f64
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} not in [0, 1]")));
    }
    Ok(())
}

pub fn authenticate_match(
    stored: &ProtectedTemplate,
    key: &SecretKey,
    probe: &Embedding,
    threshold: f64,
) -> Result<MatchResult> {
    check_threshold(threshold)?;
    let probe_bits = binarize(probe, &stored.params)?;
    let recovered = recover(stored, key)?;
    let m = matching_bits(&recovered, &probe_bits)?;
    let n = probe_bits.len();
    Ok(MatchResult::decide(similarity_from_counts(m, n), m, n, threshold))
}

/// `t1 XOR t2`. Depending on whether the keys and binarizations agree this
/// is zero, `T(v1) ^ T(v2)`, `H(k1) ^ H(k2)`, or both combined.
pub fn cancelability_case(t1: &ProtectedTemplate, t2: &ProtectedTemplate) -> Result<BitString> {
    if t1.params != t2.params {
        return Err(Error::InvalidParameter("templates use different parameters".into()));
    }
    t1.bits.xor(&t2.bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key_hash::HashId;
    use proptest::prelude::*;

    fn key(s: &str) -> SecretKey {
        SecretKey::new(s.as_bytes()).unwrap()
    }

    fn sample(d: usize, shift: f64) -> Embedding {
        Embedding::new((0..d).map(|i| ((i as f64 * 0.37 + shift).sin()) * 0.2).collect()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = BitString::from_bit_str("10110010").unwrap();
        assert_eq!(similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(similarity(&a, &a.not()).unwrap(), 0.0);
        let b = BitString::from_bit_str("01000010").unwrap();
        assert_eq!(matching_bits(&a, &b).unwrap(), 4);
        assert!((similarity(&a, &b).unwrap() - 4.0 / 12.0).abs() < 1e-15);
        assert!(similarity(&a, &BitString::zeros(7)).is_err());
        assert!(similarity(&BitString::zeros(0), &BitString::zeros(0)).is_err());
    }

    #[test]
    fn protect_recover_involution() {
        let p = SchemeParams::with_dim(32).unwrap();
        let e = sample(32, 0.0);
        let t = protect(&key("4711"), &e, &p).unwrap();
        assert_eq!(recover(&t, &key("4711")).unwrap(), binarize(&e, &p).unwrap());
        assert_eq!(t, protect(&key("4711"), &e, &p).unwrap());
        let again = ProtectedTemplate::from_parts(recover(&t, &key("4711")).unwrap(), p).unwrap();
        assert_eq!(recover(&again, &key("4711")).unwrap(), *t.bits());
    }

    #[test]
    fn stored_bits_are_not_the_raw_binarization() {
        let p = SchemeParams::with_dim(64).unwrap();
        let e = sample(64, 1.0);
        let t = protect(&key("k"), &e, &p).unwrap();
        let raw = binarize(&e, &p).unwrap();
        let s = similarity(t.bits(), &raw).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn exact_match_and_wrong_key() {
        let p = SchemeParams::with_dim(256).unwrap();
        let e = sample(256, 2.0);
        let t = protect(&key("right"), &e, &p).unwrap();
        let ok = authenticate_match(&t, &key("right"), &e, 1.0).unwrap();
        assert!(ok.accepted);
        assert_eq!(ok.similarity, 1.0);
        let bad = authenticate_match(&t, &key("wrong"), &e, 0.6).unwrap();
        assert!(!bad.accepted);
        assert!((bad.similarity - 1.0 / 3.0).abs() < 0.03, "{}", bad.similarity);
        assert!(authenticate_match(&t, &key("right"), &e, 1.5).is_err());
        assert!(authenticate_match(&t, &key("right"), &sample(8, 0.0), 0.5).is_err());
    }

    // Every quantized magnitude moved by one step: one flipped bit per block.
    #[test]
    fn unit_perturbation_costs_one_bit_per_feature() {
        let d = 64;
        let p = SchemeParams::new(0, 15, d, HashId::Sha256).unwrap();
        let base: Vec<f64> = (0..d).map(|i| (i as f64 * 13.0 + 5.0) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let moved: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, v)| if i % 3 == 0 { v + v.signum() } else { v - v.signum() })
            .collect();
        let t = protect(&key("k"), &Embedding::new(base).unwrap(), &p).unwrap();
        let r = authenticate_match(&t, &key("k"), &Embedding::new(moved).unwrap(), 0.0).unwrap();
        let n = p.template_len();
        assert_eq!(r.matching_bits, n - d);
        assert_eq!(r.similarity, (n - d) as f64 / (n + d) as f64);
    }

    #[test]
    fn xor_decomposition_cases() {
        let p = SchemeParams::with_dim(48).unwrap();
        let (v1, v2) = (sample(48, 0.0), sample(48, 0.5));
        let (k1, k2) = (key("k1"), key("k2"));
        let n = p.template_len();
        let h = |k: &SecretKey| hash_key(k, n, p.hash()).unwrap().into_bits();
        let b = |v: &Embedding| binarize(v, &p).unwrap();

        let same = cancelability_case(&protect(&k1, &v1, &p).unwrap(), &protect(&k1, &v1, &p).unwrap()).unwrap();
        assert_eq!(same, BitString::zeros(n));

        let diff_v = cancelability_case(&protect(&k1, &v1, &p).unwrap(), &protect(&k1, &v2, &p).unwrap()).unwrap();
        assert_eq!(diff_v, b(&v1).xor(&b(&v2)).unwrap());

        let diff_k = cancelability_case(&protect(&k1, &v1, &p).unwrap(), &protect(&k2, &v1, &p).unwrap()).unwrap();
        assert_eq!(diff_k, h(&k1).xor(&h(&k2)).unwrap());

        let both = cancelability_case(&protect(&k1, &v1, &p).unwrap(), &protect(&k2, &v2, &p).unwrap()).unwrap();
        assert_eq!(both, h(&k1).xor(&h(&k2)).unwrap().xor(&b(&v1).xor(&b(&v2)).unwrap()).unwrap());
    }

    #[test]
    fn template_text_format() {
        let p = SchemeParams::new(2, 3, 2, HashId::Sha256).unwrap();
        let t = protect(&key("k"), &Embedding::new(vec![0.05, -0.07]).unwrap(), &p).unwrap();
        let text = t.to_string();
        assert!(text.starts_with("hgx1 p=2;l=3;d=2;h=sha256 "));
        assert_eq!(text.parse::<ProtectedTemplate>().unwrap(), t);
        assert!("hgx1 p=2;l=3;d=2;h=sha256 ffff".parse::<ProtectedTemplate>().is_err());
        assert!("hgx2 p=2;l=3;d=2;h=sha256 00".parse::<ProtectedTemplate>().is_err());
        assert!("hgx1 p=2;l=3;d=2;h=sha256 00 extra".parse::<ProtectedTemplate>().is_err());
    }

    proptest! {
        #[test]
        fn involution_holds_for_random_inputs(
            values in proptest::collection::vec(-0.5f64..0.5, 1..48),
            key_bytes in proptest::collection::vec(any::<u8>(), 1..24),
        ) {
            let e = Embedding::new(values).unwrap();
            let p = SchemeParams::with_dim(e.dim()).unwrap();
            let k = SecretKey::new(key_bytes).unwrap();
            let t = protect(&k, &e, &p).unwrap();
            prop_assert_eq!(recover(&t, &k).unwrap(), binarize(&e, &p).unwrap());
        }

        #[test]
        fn similarity_is_symmetric_bounded_and_monotone(
            bits in proptest::collection::vec(any::<bool>(), 2..200),
            flips in 0usize..200,
        ) {
            let a = BitString::from_bools(&bits);
            let mut b = a.clone();
            let flips = flips % (bits.len() + 1);
            let mut prev = 1.0;
            for i in 0..flips {
                b.set(i, !b.get(i));
                let s = similarity(&a, &b).unwrap();
                prop_assert!(s < prev);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, similarity(&b, &a).unwrap());
                prev = s;
            }
        }
    }
}
