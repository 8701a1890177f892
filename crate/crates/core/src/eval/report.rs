//! Plain-text report blocks and CSV curve dumps.
//!
//! Every number is printed with fixed precision so that two runs with the
//! same seed produce byte-identical output.

use std::fmt::Write as _;

use super::dataset::{Provenance, SpeakerDataset};
use super::metrics::{compute_metrics, roc_curve, MetricsReport, RocPoint};
use super::scoring::{score_pairs, EvalScheme, KeyPolicy, ScoreSet};
use super::unlinkability::{unlinkability, UnlinkabilityReport};
use crate::baseline::BaselineKind;
use crate::encoding::SchemeParams;
use crate::error::Result;

pub struct SchemeEvaluation {
    pub scheme: EvalScheme,
    pub policy: KeyPolicy,
    pub scores: ScoreSet,
    pub metrics: MetricsReport,
    pub roc: Vec<RocPoint>,
}

pub fn evaluate_scheme(ds: &SpeakerDataset, scheme: &EvalScheme, policy: KeyPolicy, seed: u64) -> Result<SchemeEvaluation> {
    let scores = score_pairs(ds, scheme, policy, seed)?;
    let metrics = compute_metrics(&scores.genuine, &scores.impostor)?;
    let roc = roc_curve(&scores.genuine, &scores.impostor)?;
    Ok(SchemeEvaluation {
        scheme: *scheme,
        policy,
        scores,
        metrics,
        roc,
    })
}

pub struct UnlinkabilityEvaluation {
    pub params: SchemeParams,
    pub mated_pairs: usize,
    pub non_mated_pairs: usize,
    pub report: UnlinkabilityReport,
}

/// Mated scores come from same-speaker pairs protected under independent
/// keys; non-mated scores from different-speaker pairs.
pub fn evaluate_unlinkability(
    ds: &SpeakerDataset,
    params: &SchemeParams,
    seed: u64,
    bins: usize,
) -> Result<UnlinkabilityEvaluation> {
    let s = score_pairs(ds, &EvalScheme::Charvoc(*params), KeyPolicy::FreshKeyPerTemplate, seed)?;
    Ok(UnlinkabilityEvaluation {
        params: *params,
        mated_pairs: s.genuine.len(),
        non_mated_pairs: s.impostor.len(),
        report: unlinkability(&s.genuine, &s.impostor, bins)?,
    })
}

pub fn render_dataset(ds: &SpeakerDataset) -> String {
    let mut out = String::from("[dataset]\n");
    match ds.provenance() {
        Provenance::Synthetic(c) => {
            let _ = writeln!(
                out,
                "source=synthetic seed={} sigma_within={:.6} sigma_between={:.6}",
                c.seed, c.sigma_within, c.sigma_between
            );
        }
        Provenance::Ingested(path) => {
            let _ = writeln!(out, "source=ingested path={path}");
        }
    }
    let utterances: usize = ds.speakers().map(|(_, u)| u.len()).sum();
    let _ = writeln!(out, "speakers={} embeddings={utterances} dim={}", ds.speaker_count(), ds.dim());
    out
}

pub fn render_metrics(e: &SchemeEvaluation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[metrics scheme={} policy={}]", e.scheme.name(), e.policy);
    match &e.scheme {
        EvalScheme::Cosine => {}
        EvalScheme::Charvoc(p) => {
            let _ = writeln!(out, "params={p}");
        }
        EvalScheme::Baseline(p) => {
            let _ = writeln!(out, "params={p}");
            if p.kind == BaselineKind::Roe {
                let _ = writeln!(out, "variant=rank-of-projection, no windowing");
            }
        }
    }
    let m = &e.metrics;
    let _ = writeln!(out, "label={}", e.scores.label.as_str());
    let _ = writeln!(out, "genuine_pairs={}", e.scores.genuine.len());
    let _ = writeln!(out, "impostor_pairs={}", e.scores.impostor.len());
    let _ = writeln!(out, "eer_percent={:.6}", m.eer);
    let _ = writeln!(out, "auc={:.6}", m.auc);
    let _ = writeln!(out, "tmr_at_fmr_0.001={:.6}", m.tmr_at_fmr);
    let _ = writeln!(out, "threshold_at_eer={:.6}", m.threshold_at_eer);
    out
}

pub fn render_unlinkability(u: &UnlinkabilityEvaluation) -> String {
    let mut out = String::from("[unlinkability scheme=charvoc policy=fresh-key-per-template]\n");
    let _ = writeln!(out, "params={}", u.params);
    let _ = writeln!(out, "mated_pairs={}", u.mated_pairs);
    let _ = writeln!(out, "non_mated_pairs={}", u.non_mated_pairs);
    let _ = writeln!(out, "bins={}", u.report.local.len());
    let _ = writeln!(out, "d_sys={:.6}", u.report.d_sys);
    out
}

/// `scheme,policy,threshold,fmr,fnmr` rows for every evaluation.
pub fn roc_csv(evals: &[SchemeEvaluation]) -> String {
    let mut out = String::from("scheme,policy,threshold,fmr,fnmr\n");
    for e in evals {
        let name = e.scheme.name();
        for p in &e.roc {
            let _ = writeln!(out, "{name},{},{:.9},{:.9},{:.9}", e.policy, p.threshold, p.fmr, p.fnmr);
        }
    }
    out
}

/// `score,d` rows of the local unlinkability curve.
pub fn unlinkability_csv(u: &UnlinkabilityReport) -> String {
    let mut out = String::from("score,d\n");
    for (s, d) in u.scores.iter().zip(&u.local) {
        let _ = writeln!(out, "{s:.9},{d:.9}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::BaselineParams;
    use crate::eval::dataset::{generate_synthetic, SyntheticConfig};

    fn ds() -> SpeakerDataset {
        generate_synthetic(&SyntheticConfig {
            speakers: 6,
            utterances: 3,
            dim: 16,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn blocks_are_reproducible() {
        let ds = ds();
        let scheme = EvalScheme::Baseline(BaselineParams::new(BaselineKind::Roe, 16).unwrap());
        let render = || {
            let e = evaluate_scheme(&ds, &scheme, KeyPolicy::StolenKey, 4).unwrap();
            format!("{}{}{}", render_dataset(&ds), render_metrics(&e), roc_csv(&[e]))
        };
        let a = render();
        assert_eq!(a, render());
        assert!(a.contains("[metrics scheme=roe policy=stolen-key]"));
        assert!(a.contains("variant="));
        assert!(a.lines().any(|l| l.starts_with("eer_percent=")));
    }

    #[test]
    fn unlinkability_block_and_csv() {
        let ds = ds();
        let u = evaluate_unlinkability(&ds, &SchemeParams::with_dim(16).unwrap(), 1, 10).unwrap();
        let text = render_unlinkability(&u);
        assert!(text.contains("d_sys="));
        assert_eq!(unlinkability_csv(&u.report).lines().count(), 11);
    }
}
