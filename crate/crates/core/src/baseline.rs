//! Key-seeded baseline cancelable transforms: Winner-Take-All, Index-of-Max
//! (Gaussian random projection variant) and Ranking-of-Element.
//!
//! All randomness comes from a ChaCha20 stream seeded by hashing
//! `be32(len(key)) || key || tag || be32(slot)`, so codes are reproducible
//! and revoked by changing the key.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::key_hash::{derive_seed, HashId, SecretKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Wta,
    Iom,
    Roe,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Wta => "wta",
            BaselineKind::Iom => "iom",
            BaselineKind::Roe => "roe",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wta" => Ok(BaselineKind::Wta),
            "iom" => Ok(BaselineKind::Iom),
            "roe" => Ok(BaselineKind::Roe),
            other => Err(Error::InvalidParameter(format!("unknown baseline scheme {other:?}"))),
        }
    }
}

/// Public hyperparameters of a baseline transform. The seed key is supplied
/// separately and never stored alongside these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BaselineParams {
    pub kind: BaselineKind,
    pub dim: usize,
    pub m_codes: usize,
    pub window_k: usize,
    pub proj_q: usize,
    pub roe_dim: usize,
}

impl BaselineParams {
    pub const DEFAULT_M_CODES: usize = 300;
    pub const DEFAULT_WINDOW_K: usize = 16;
    pub const DEFAULT_PROJ_Q: usize = 16;
    pub const DEFAULT_ROE_DIM: usize = 64;

    pub fn new(kind: BaselineKind, dim: usize) -> Result<Self> {
        let p = Self {
            kind,
            dim,
            m_codes: Self::DEFAULT_M_CODES,
            window_k: Self::DEFAULT_WINDOW_K.min(dim),
            proj_q: Self::DEFAULT_PROJ_Q,
            roe_dim: Self::DEFAULT_ROE_DIM,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dim == 0 || self.m_codes == 0 || self.window_k == 0 || self.proj_q == 0 {
            return bad(format!("baseline counts must be positive: {self}"));
        }
        if self.window_k > self.dim {
            return bad(format!("window {} exceeds dimension {}", self.window_k, self.dim));
        }
        if self.roe_dim < 2 {
            return bad(format!("RoE projection dimension {} below 2", self.roe_dim));
        }
        // Indices and arities are serialized as u32.
        let limit = u32::MAX as usize;
        if self.window_k > limit || self.proj_q > limit || self.roe_dim > limit {
            return bad("arity exceeds u32 range".into());
        }
        Ok(())
    }

    /// Exclusive upper bound of every emitted index.
    pub fn arity(&self) -> usize {
        match self.kind {
            BaselineKind::Wta => self.window_k,
            BaselineKind::Iom => self.proj_q,
            BaselineKind::Roe => self.roe_dim,
        }
    }

    pub fn slots(&self) -> usize {
        match self.kind {
            BaselineKind::Wta | BaselineKind::Iom => self.m_codes,
            BaselineKind::Roe => self.roe_dim,
        }
    }
}

/// `s=wta;d=192;m=300;k=16;q=16;r=64`
impl fmt::Display for BaselineParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "s={};d={};m={};k={};q={};r={}",
            self.kind, self.dim, self.m_codes, self.window_k, self.proj_q, self.roe_dim
        )
    }
}

impl FromStr for BaselineParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split(';').collect();
        let [kind, d, m, k, q, r] = fields.as_slice() else {
            return Err(Error::parse(1, format!("expected 6 baseline fields, got {}", fields.len())));
        };
        let value = |field: &str, name: &str| -> Result<String> {
            field
                .strip_prefix(name)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(1, format!("expected `{name}=` in {field:?}")))
        };
        let num = |field: &str, name: &str| -> Result<usize> {
            let v = value(field, name)?;
            if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::parse(1, format!("`{name}` is not a decimal integer")));
            }
            v.parse().map_err(|_| Error::parse(1, format!("`{name}` out of range")))
        };
        let p = Self {
            kind: value(kind, "s")?.parse()?,
            dim: num(d, "d")?,
            m_codes: num(m, "m")?,
            window_k: num(k, "k")?,
            proj_q: num(q, "q")?,
            roe_dim: num(r, "r")?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// A sequence of slot indices, each below `arity`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexCode {
    indices: Vec<u32>,
    arity: u32,
}

impl IndexCode {
    pub fn new(indices: Vec<u32>, arity: u32) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidParameter("arity must be positive".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= arity) {
            return Err(Error::OutOfRange(format!("index {bad} not below arity {arity}")));
        }
        Ok(Self { indices, arity })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_be_bytes(&self) -> Vec<u8> {
        self.indices.iter().flat_map(|i| i.to_be_bytes()).collect()
    }

    pub fn from_be_bytes(bytes: &[u8], arity: u32) -> Result<Self> {
        if !bytes.len().is_multiple_of(4) {
            return Err(Error::parse(1, "index bytes not a multiple of 4"));
        }
        let indices = bytes
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(indices, arity)
    }
}

/// An index code together with the public parameters that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineTemplate {
    pub params: BaselineParams,
    pub code: IndexCode,
}

impl BaselineTemplate {
    pub fn new(params: BaselineParams, code: IndexCode) -> Result<Self> {
        params.validate()?;
        if code.len() != params.slots() || code.arity() as usize != params.arity() {
            return Err(Error::InvalidParameter(format!(
                "code shape {}x{} does not match {params}",
                code.len(),
                code.arity()
            )));
        }
        Ok(Self { params, code })
    }
}

/// `idx1 <params> 3,0,15,...`
impl fmt::Display for BaselineTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "idx1 {} ", self.params)?;
        for (i, idx) in self.code.indices.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

impl FromStr for BaselineTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(' ');
        let (Some("idx1"), Some(params), Some(list), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::parse(1, "expected `idx1 <params> <indices>`"));
        };
        let params: BaselineParams = params.parse()?;
        let indices = list
            .split(',')
            .map(|tok| {
                if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(Error::parse(1, format!("bad index {tok:?}")));
                }
                tok.parse::<u32>().map_err(|_| Error::parse(1, format!("index {tok:?} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let code = IndexCode::new(indices, params.arity() as u32)?;
        Self::new(params, code)
    }
}

fn slot_rng(key: &SecretKey, tag: &[u8], slot: u32) -> ChaCha20Rng {
    let kb = key.as_bytes();
    let mut input = Vec::with_capacity(kb.len() + tag.len() + 8);
    input.extend_from_slice(&(kb.len() as u32).to_be_bytes());
    input.extend_from_slice(kb);
    input.extend_from_slice(tag);
    input.extend_from_slice(&slot.to_be_bytes());
    ChaCha20Rng::from_seed(derive_seed(&input, HashId::Sha256))
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Position of the largest value; ties go to the lowest position.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// WTA code of `e` for one slot given a permutation prefix of length `K`.
pub fn wta_index(e: &Embedding, window: &[usize]) -> Result<u32> {
    if window.is_empty() {
        return Err(Error::InvalidParameter("empty WTA window".into()));
    }
    if let Some(&bad) = window.iter().find(|&&i| i >= e.dim()) {
        return Err(Error::OutOfRange(format!("permutation entry {bad} beyond dimension {}", e.dim())));
    }
    Ok(argmax(window.iter().map(|&i| e.values()[i])) as u32)
}

/// IoM code for one slot: argmax of `projection * e`, `projection` row-major `q x d`.
pub fn iom_index(e: &Embedding, projection: &[f64], rows: usize) -> Result<u32> {
    let d = e.dim();
    if rows == 0 || projection.len() != rows * d {
        return Err(Error::DimensionMismatch {
            expected: rows * d,
            actual: projection.len(),
        });
    }
    let scores = projection
        .chunks_exact(d)
        .map(|row| row.iter().zip(e.values()).map(|(a, b)| a * b).sum::<f64>());
    Ok(argmax(scores) as u32)
}

/// `rank_i = |{j : y_j < y_i}|`. Equal values do not count as smaller.
pub fn rank_of_elements(y: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut ranks = vec![0u32; y.len()];
    let mut smaller = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && y[order[pos - 1]] < y[i] {
            smaller = pos;
        }
        ranks[i] = smaller as u32;
    }
    ranks
}

/// Key-derived permutations and projections for one `(params, key)` pair,
/// reusable across many embeddings.
pub struct BaselineTransform {
    params: BaselineParams,
    material: Material,
}

enum Material {
    Wta(Vec<Vec<usize>>),
    Iom(Vec<Vec<f64>>),
    Roe(Vec<f64>),
}

impl BaselineTransform {
    pub fn new(params: &BaselineParams, key: &SecretKey) -> Result<Self> {
        params.validate()?;
        let d = params.dim;
        let material = match params.kind {
            BaselineKind::Wta => Material::Wta(
                (0..params.m_codes as u32)
                    .map(|slot| {
                        let mut rng = slot_rng(key, b"wta", slot);
                        // Partial Fisher-Yates: only the first K positions are needed.
                        let mut perm: Vec<usize> = (0..d).collect();
                        for i in 0..params.window_k {
                            let j = rng.random_range(i..d);
                            perm.swap(i, j);
                        }
                        perm.truncate(params.window_k);
                        perm
                    })
                    .collect(),
            ),
            BaselineKind::Iom => Material::Iom(
                (0..params.m_codes as u32)
                    .map(|slot| gaussian_matrix(&mut slot_rng(key, b"iom", slot), params.proj_q, d))
                    .collect(),
            ),
            BaselineKind::Roe => {
                Material::Roe(gaussian_matrix(&mut slot_rng(key, b"roe", 0), params.roe_dim, d))
            }
        };
        Ok(Self {
            params: *params,
            material,
        })
    }

    pub fn params(&self) -> &BaselineParams {
        &self.params
    }

    pub fn apply(&self, e: &Embedding) -> Result<IndexCode> {
        if e.dim() != self.params.dim {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim,
                actual: e.dim(),
            });
        }
        let indices = match &self.material {
            Material::Wta(perms) => perms.iter().map(|w| wta_index(e, w)).collect::<Result<_>>()?,
            Material::Iom(mats) => mats
                .iter()
                .map(|m| iom_index(e, m, self.params.proj_q))
                .collect::<Result<_>>()?,
            Material::Roe(m) => {
                let y: Vec<f64> = m
                    .chunks_exact(e.dim())
                    .map(|row| row.iter().zip(e.values()).map(|(a, b)| a * b).sum())
                    .collect();
                rank_of_elements(&y)
            }
        };
        IndexCode::new(indices, self.params.arity() as u32)
    }
}

fn hash_with(kind: BaselineKind, e: &Embedding, params: &BaselineParams, key: &SecretKey) -> Result<IndexCode> {
    if params.kind != kind {
        return Err(Error::InvalidParameter(format!("expected {kind} parameters, got {}", params.kind)));
    }
    BaselineTransform::new(params, key)?.apply(e)
}

pub fn wta_hash(e: &Embedding, params: &BaselineParams, key: &SecretKey) -> Result<IndexCode> {
    hash_with(BaselineKind::Wta, e, params, key)
}

pub fn iom_hash(e: &Embedding, params: &BaselineParams, key: &SecretKey) -> Result<IndexCode> {
    hash_with(BaselineKind::Iom, e, params, key)
}

pub fn roe_hash(e: &Embedding, params: &BaselineParams, key: &SecretKey) -> Result<IndexCode> {
    hash_with(BaselineKind::Roe, e, params, key)
}

/// Fraction of slots holding the same index.
pub fn index_similarity(a: &IndexCode, b: &IndexCode) -> Result<f64> {
    if a.len() != b.len() || a.arity != b.arity || a.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "code shapes differ: {}x{} vs {}x{}",
            a.len(),
            a.arity,
            b.len(),
            b.arity
        )));
    }
    Ok(matching_slots(a, b) as f64 / a.len() as f64)
}

pub(crate) fn matching_slots(a: &IndexCode, b: &IndexCode) -> usize {
    a.indices.iter().zip(&b.indices).filter(|(x, y)| x == y).count()
}
