//! Graycode binarization `T = G ∘ r` of speaker embeddings.
//!
//! Each feature becomes one `(l + 1)`-bit block: a sign bit (1 for a
//! non-negative quantized value, 0 otherwise) followed by the `l`-bit
//! reflected graycode of the saturated magnitude, most-significant bit
//! first. Blocks are concatenated in feature order, so a template has
//! `n = d * (l + 1)` bits.

use std::fmt;
use std::str::FromStr;

use crate::bits::BitString;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::key_hash::HashId;

pub const MAX_MAGNITUDE_BITS: u32 = 62;
pub const MAX_PRECISION: u32 = 18;

/// Everything needed to reproduce a template bit-for-bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SchemeParams {
    precision: u32,
    magnitude_bits: u32,
    dim: usize,
    hash: HashId,
}

impl SchemeParams {
    pub fn new(precision: u32, magnitude_bits: u32, dim: usize, hash: HashId) -> Result<Self> {
        if precision > MAX_PRECISION {
            return Err(Error::InvalidParameter(format!(
                "precision {precision} exceeds {MAX_PRECISION}"
            )));
        }
        if magnitude_bits == 0 || magnitude_bits > MAX_MAGNITUDE_BITS {
            return Err(Error::InvalidParameter(format!(
                "magnitude bit width must be in 1..={MAX_MAGNITUDE_BITS}, got {magnitude_bits}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if dim.checked_mul(magnitude_bits as usize + 1).is_none() {
            return Err(Error::InvalidParameter("template length overflows".into()));
        }
        Ok(Self {
            precision,
            magnitude_bits,
            dim,
            hash,
        })
    }

    /// Defaults with a different embedding dimension.
    pub fn with_dim(dim: usize) -> Result<Self> {
        let d = Self::default();
        Self::new(d.precision, d.magnitude_bits, dim, d.hash)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn magnitude_bits(&self) -> u32 {
        self.magnitude_bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash(&self) -> HashId {
        self.hash
    }

    pub fn block_len(&self) -> usize {
        self.magnitude_bits as usize + 1
    }

    pub fn template_len(&self) -> usize {
        self.dim * self.block_len()
    }
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            precision: 4,
            magnitude_bits: 15,
            dim: 1024,
            hash: HashId::Sha256,
        }
    }
}

/// Canonical text form: `p=4;l=15;d=1024;h=sha256`.
impl fmt::Display for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={};l={};d={};h={}",
            self.precision, self.magnitude_bits, self.dim, self.hash
        )
    }
}

impl FromStr for SchemeParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split(';').collect();
        let [p, l, d, h] = fields.as_slice() else {
            return Err(Error::parse(1, format!("expected 4 scheme fields, got {}", fields.len())));
        };
        let value = |field: &str, name: &str| -> Result<String> {
            field
                .strip_prefix(name)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(1, format!("expected `{name}=` in {field:?}")))
        };
        let num = |field: &str, name: &str| -> Result<u64> {
            let v = value(field, name)?;
            if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::parse(1, format!("`{name}` is not a decimal integer")));
            }
            v.parse().map_err(|_| Error::parse(1, format!("`{name}` out of range")))
        };
        let precision = u32::try_from(num(p, "p")?).map_err(|_| Error::parse(1, "p out of range"))?;
        let bits = u32::try_from(num(l, "l")?).map_err(|_| Error::parse(1, "l out of range"))?;
        let dim = usize::try_from(num(d, "d")?).map_err(|_| Error::parse(1, "d out of range"))?;
        let hash = value(h, "h")?.parse()?;
        Self::new(precision, bits, dim, hash)
    }
}

/// `r(x) = round(x * 10^p)`, ties away from zero, so `r(-x) == -r(x)`.
pub fn roundoff(x: f64, precision: u32) -> Result<i64> {
    if !x.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    if precision > MAX_PRECISION {
        return Err(Error::InvalidParameter(format!("precision {precision} exceeds {MAX_PRECISION}")));
    }
    // 10^p is exact in f64 for p <= 22.
    let scaled = (x * 10f64.powi(precision as i32)).round();
    // i64 spans [-2^63, 2^63); both bounds are exact in f64.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if !(-LIMIT..LIMIT).contains(&scaled) {
        return Err(Error::OutOfRange(format!("{x} * 10^{precision} does not fit in i64")));
    }
    Ok(scaled as i64)
}

pub fn clamp_magnitude(m: u64, bits: u32) -> u64 {
    m.min(max_magnitude(bits))
}

fn max_magnitude(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Reflected binary graycode as an integer.
#[inline]
pub const fn to_gray(m: u64) -> u64 {
    m ^ (m >> 1)
}

/// Inverse of [`to_gray`] via prefix XOR.
#[inline]
pub const fn from_gray(mut g: u64) -> u64 {
    let mut shift = 1;
    while shift < 64 {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

/// `bits`-wide graycode of `m`, most-significant bit first.
pub fn gray_encode(m: u64, bits: u32) -> Result<BitString> {
    if bits == 0 || bits > 63 {
        return Err(Error::InvalidParameter(format!("graycode width {bits} not in 1..=63")));
    }
    if m > max_magnitude(bits) {
        return Err(Error::OutOfRange(format!("{m} does not fit in {bits} bits")));
    }
    let mut out = BitString::with_capacity(bits as usize);
    out.push_msb_first(to_gray(m), bits);
    Ok(out)
}

pub fn gray_decode(g: &BitString) -> Result<u64> {
    if g.is_empty() || g.len() > 64 {
        return Err(Error::InvalidParameter(format!(
            "graycode length {} not in 1..=64",
            g.len()
        )));
    }
    let packed = g.iter().fold(0u64, |acc, b| (acc << 1) | b as u64);
    Ok(from_gray(packed))
}

pub fn binarize(e: &Embedding, params: &SchemeParams) -> Result<BitString> {
    if e.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: e.dim(),
        });
    }
    let width = params.magnitude_bits();
    let mut out = BitString::with_capacity(params.template_len());
    for (index, &x) in e.values().iter().enumerate() {
        let q = roundoff(x, params.precision()).map_err(|err| match err {
            Error::NonFinite { .. } => Error::NonFinite { index },
            other => other,
        })?;
        out.push(q >= 0);
        out.push_msb_first(to_gray(clamp_magnitude(q.unsigned_abs(), width)), width);
    }
    Ok(out)
}
