//! Verification error rates from genuine and impostor score lists.
//!
//! For a threshold `t`, FMR is the fraction of impostor scores `>= t` and
//! FNMR the fraction of genuine scores `< t`. Thresholds sweep the distinct
//! observed scores plus one sentinel just above the maximum (FMR = 0,
//! FNMR = 1). EER linearly interpolates the first crossing of FNMR over FMR.

use crate::error::{Error, Result};

/// Operating point for the reported true match rate.
pub const TARGET_FMR: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    /// Percent, 0..=100.
    pub eer: f64,
    pub auc: f64,
    pub tmr_at_fmr: f64,
    pub threshold_at_eer: f64,
}

fn check_scores(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} scores are empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} scores contain non-finite values")));
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn roc_curve(genuine: &[f64], impostor: &[f64]) -> Result<Vec<RocPoint>> {
    check_scores(genuine, "genuine")?;
    check_scores(impostor, "impostor")?;
    let g = sorted(genuine);
    let i = sorted(impostor);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = *thresholds.last().unwrap();
    thresholds.push(top.next_up());

    let (ng, ni) = (g.len() as f64, i.len() as f64);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let impostor_below = i.partition_point(|&s| s < t);
            let genuine_below = g.partition_point(|&s| s < t);
            RocPoint {
                threshold: t,
                fmr: (i.len() - impostor_below) as f64 / ni,
                fnmr: genuine_below as f64 / ng,
            }
        })
        .collect())
}

/// EER (as a fraction) and its threshold from an ascending-threshold curve.
pub(crate) fn eer_from_curve(curve: &[RocPoint]) -> (f64, f64) {
    let diff = |p: &RocPoint| p.fnmr - p.fmr;
    // The lowest threshold has FMR = 1 and FNMR = 0, so the crossing is
    // at index >= 1; the sentinel guarantees one exists.
    let k = curve
        .iter()
        .position(|p| diff(p) >= 0.0)
        .expect("sentinel threshold has FNMR = 1 > FMR = 0");
    let cur = &curve[k];
    if diff(cur) == 0.0 || k == 0 {
        return (cur.fmr, cur.threshold);
    }
    let prev = &curve[k - 1];
    let (a, b) = (diff(prev), diff(cur));
    let t = -a / (b - a);
    (
        prev.fmr + t * (cur.fmr - prev.fmr),
        prev.threshold + t * (cur.threshold - prev.threshold),
    )
}

pub(crate) fn auc_from_curve(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| {
            let (tmr0, tmr1) = (1.0 - w[0].fnmr, 1.0 - w[1].fnmr);
            (w[0].fmr - w[1].fmr) * (tmr0 + tmr1) / 2.0
        })
        .sum()
}

pub(crate) fn tmr_at_fmr_from_curve(curve: &[RocPoint], target: f64) -> f64 {
    curve
        .iter()
        .filter(|p| p.fmr <= target)
        .map(|p| 1.0 - p.fnmr)
        .fold(0.0, f64::max)
}

pub fn compute_metrics(genuine: &[f64], impostor: &[f64]) -> Result<MetricsReport> {
    let curve = roc_curve(genuine, impostor)?;
    let (eer, threshold_at_eer) = eer_from_curve(&curve);
    Ok(MetricsReport {
        eer: eer * 100.0,
        auc: auc_from_curve(&curve),
        tmr_at_fmr: tmr_at_fmr_from_curve(&curve, TARGET_FMR),
        threshold_at_eer,
    })
}
