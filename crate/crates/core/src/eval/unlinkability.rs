//! Score-distribution unlinkability.
//!
//! Mated scores compare two protected templates of the same subject made
//! under different keys; non-mated scores compare different subjects. Both
//! are histogrammed over a shared equal-width grid. The local measure at a
//! bin is `D(s) = max(0, 2*w*LR/(1 + w*LR) - 1)` with `LR` the ratio of the
//! (add-one smoothed) mated and non-mated densities and `w` the prior odds.
//! The system measure weights `D(s)` by the empirical mated mass per bin.

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 100;
pub const MIN_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct UnlinkabilityReport {
    /// Bin centres.
    pub scores: Vec<f64>,
    pub local: Vec<f64>,
    pub d_sys: f64,
}

pub fn unlinkability(mated: &[f64], non_mated: &[f64], bins: usize) -> Result<UnlinkabilityReport> {
    unlinkability_with_prior(mated, non_mated, bins, 1.0)
}

pub fn unlinkability_with_prior(
    mated: &[f64],
    non_mated: &[f64],
    bins: usize,
    omega: f64,
) -> Result<UnlinkabilityReport> {
    if bins < MIN_BINS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_BINS} bins, got {bins}")));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidParameter(format!("prior odds must be positive, got {omega}")));
    }
    if mated.is_empty() || non_mated.is_empty() {
        return Err(Error::InvalidParameter("score lists must be non-empty".into()));
    }
    if mated.iter().chain(non_mated).any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("scores must be finite".into()));
    }
    let lo = mated.iter().chain(non_mated).copied().fold(f64::INFINITY, f64::min);
    let hi = mated.iter().chain(non_mated).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::Degenerate(format!("all scores equal {lo}; no support to bin")));
    }
    let width = (hi - lo) / bins as f64;
    let histogram = |scores: &[f64]| {
        let mut counts = vec![0u64; bins];
        for &s in scores {
            let b = (((s - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
    };
    let cm = histogram(mated);
    let cn = histogram(non_mated);
    let (nm, nn) = (mated.len() as f64, non_mated.len() as f64);
    let b = bins as f64;

    let mut local = Vec::with_capacity(bins);
    let mut d_sys = 0.0;
    for k in 0..bins {
        let pm = (cm[k] as f64 + 1.0) / (nm + b);
        let pn = (cn[k] as f64 + 1.0) / (nn + b);
        let lr = pm / pn;
        let d = (2.0 * omega * lr / (1.0 + omega * lr) - 1.0).max(0.0);
        d_sys += d * cm[k] as f64 / nm;
        local.push(d);
    }
    let scores = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    Ok(UnlinkabilityReport { scores, local, d_sys })
}
