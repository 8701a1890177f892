//! Genuine/impostor pair construction and scoring under a key policy.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::dataset::SpeakerDataset;
use crate::baseline::{index_similarity, BaselineParams, BaselineTransform, IndexCode};
use crate::bits::BitString;
use crate::embedding::Embedding;
use crate::encoding::SchemeParams;
use crate::error::{Error, Result};
use crate::hashgray::{protect, similarity};
use crate::key_hash::SecretKey;

/// Impostor pairs are capped at this multiple of the genuine count.
pub const IMPOSTOR_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalScheme {
    /// Unprotected cosine similarity mapped to `[0, 1]` as `(1 + cos) / 2`.
    Cosine,
    Charvoc(SchemeParams),
    Baseline(BaselineParams),
}

impl EvalScheme {
    pub fn name(&self) -> String {
        match self {
            EvalScheme::Cosine => "cosine".into(),
            EvalScheme::Charvoc(_) => "charvoc".into(),
            EvalScheme::Baseline(p) => p.kind.to_string(),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let expected = match self {
            EvalScheme::Cosine => return Ok(()),
            EvalScheme::Charvoc(p) => p.dim(),
            EvalScheme::Baseline(p) => p.dim,
        };
        if expected != dim {
            return Err(Error::DimensionMismatch { expected, actual: dim });
        }
        Ok(())
    }
}

impl fmt::Display for EvalScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalScheme::Cosine => f.write_str("cosine"),
            EvalScheme::Charvoc(p) => write!(f, "charvoc {p}"),
            EvalScheme::Baseline(p) => write!(f, "{} {p}", p.kind),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeyPolicy {
    /// Each speaker owns one key; impostors present their own key.
    PerUserKey,
    /// Every template shares one key, as if the impostor stole the victim's.
    StolenKey,
    /// Every template gets its own key. Genuine pairs are then the mated
    /// pairs of the unlinkability analysis.
    FreshKeyPerTemplate,
}

impl KeyPolicy {
    pub const ALL: [KeyPolicy; 3] = [KeyPolicy::PerUserKey, KeyPolicy::StolenKey, KeyPolicy::FreshKeyPerTemplate];

    pub fn as_str(self) -> &'static str {
        match self {
            KeyPolicy::PerUserKey => "per-user-key",
            KeyPolicy::StolenKey => "stolen-key",
            KeyPolicy::FreshKeyPerTemplate => "fresh-key-per-template",
        }
    }

    pub fn label(self) -> ScenarioLabel {
        match self {
            KeyPolicy::PerUserKey => ScenarioLabel::SameKey,
            KeyPolicy::StolenKey => ScenarioLabel::StolenKey,
            KeyPolicy::FreshKeyPerTemplate => ScenarioLabel::Mated,
        }
    }
}

impl fmt::Display for KeyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KeyPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KeyPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown key policy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioLabel {
    SameKey,
    StolenKey,
    Mated,
    NonMated,
}

impl ScenarioLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioLabel::SameKey => "same-key",
            ScenarioLabel::StolenKey => "stolen-key",
            ScenarioLabel::Mated => "mated",
            ScenarioLabel::NonMated => "non-mated",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub label: ScenarioLabel,
}

/// Index pairs into [`SpeakerDataset::flatten`] order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairPlan {
    pub genuine: Vec<(usize, usize)>,
    pub impostor: Vec<(usize, usize)>,
}

/// All same-speaker cross-utterance pairs, and different-speaker pairs
/// capped at [`IMPOSTOR_CAP`] times the genuine count. When the cap binds,
/// impostor pairs are drawn without replacement from a seeded stream.
pub fn plan_pairs(ds: &SpeakerDataset, seed: u64) -> PairPlan {
    let owners: Vec<usize> = ds.flatten().into_iter().map(|(s, _)| s).collect();
    let n = owners.len();
    let mut genuine = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if owners[i] == owners[j] {
                genuine.push((i, j));
            }
        }
    }
    let total_impostor = n * (n - 1) / 2 - genuine.len();
    let cap = genuine.len() * IMPOSTOR_CAP;
    let impostor = if total_impostor <= cap {
        let mut all = Vec::with_capacity(total_impostor);
        for i in 0..n {
            for j in i + 1..n {
                if owners[i] != owners[j] {
                    all.push((i, j));
                }
            }
        }
        all
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5041_4952_5341_4d50);
        let mut chosen = HashSet::with_capacity(cap);
        while chosen.len() < cap {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if owners[a] != owners[b] {
                chosen.insert((a.min(b), a.max(b)));
            }
        }
        let mut v: Vec<_> = chosen.into_iter().collect();
        v.sort_unstable();
        v
    };
    PairPlan { genuine, impostor }
}

/// Deterministic evaluation key. Not for deployment.
pub fn eval_key(seed: u64, role: &str, id: usize) -> SecretKey {
    let mut h = Sha256::new();
    h.update(b"charvoc-eval-key");
    h.update(seed.to_be_bytes());
    h.update((role.len() as u32).to_be_bytes());
    h.update(role.as_bytes());
    h.update((id as u64).to_be_bytes());
    SecretKey::new(h.finalize().to_vec()).expect("digest is non-empty")
}

/// Key slot for each template under the policy.
fn key_slots(owners: &[usize], policy: KeyPolicy) -> Vec<usize> {
    match policy {
        KeyPolicy::PerUserKey => owners.to_vec(),
        KeyPolicy::StolenKey => vec![0; owners.len()],
        KeyPolicy::FreshKeyPerTemplate => (0..owners.len()).collect(),
    }
}

enum Reps {
    Raw,
    Bits(Vec<BitString>),
    Codes(Vec<IndexCode>),
}

fn represent(
    scheme: &EvalScheme,
    templates: &[&Embedding],
    slots: &[usize],
    policy: KeyPolicy,
    seed: u64,
) -> Result<Reps> {
    let key = |slot| eval_key(seed, policy.as_str(), slot);
    match scheme {
        EvalScheme::Cosine => Ok(Reps::Raw),
        EvalScheme::Charvoc(params) => {
            let bits = templates
                .par_iter()
                .zip(slots)
                .map(|(e, &slot)| protect(&key(slot), e, params).map(|t| t.bits().clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Reps::Bits(bits))
        }
        EvalScheme::Baseline(params) => {
            // Build each key's transform once and apply it to its templates;
            // projections are large, so only a few live at a time.
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for (i, &slot) in slots.iter().enumerate() {
                match groups.last_mut() {
                    Some((s, members)) if *s == slot => members.push(i),
                    _ => groups.push((slot, vec![i])),
                }
            }
            let coded = groups
                .par_iter()
                .map(|(slot, members)| {
                    let t = BaselineTransform::new(params, &key(*slot))?;
                    members
                        .iter()
                        .map(|&i| t.apply(templates[i]).map(|c| (i, c)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let mut codes: Vec<Option<IndexCode>> = vec![None; templates.len()];
            for (i, c) in coded.into_iter().flatten() {
                codes[i] = Some(c);
            }
            Ok(Reps::Codes(codes.into_iter().map(|c| c.expect("every template coded")).collect()))
        }
    }
}

fn score_one(reps: &Reps, templates: &[&Embedding], a: usize, b: usize) -> Result<f64> {
    match reps {
        Reps::Raw => Ok(((1.0 + templates[a].cosine(templates[b])?) / 2.0).clamp(0.0, 1.0)),
        Reps::Bits(bits) => similarity(&bits[a], &bits[b]),
        Reps::Codes(codes) => index_similarity(&codes[a], &codes[b]),
    }
}

fn score_list(reps: &Reps, templates: &[&Embedding], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    pairs.par_iter().map(|&(a, b)| score_one(reps, templates, a, b)).collect()
}

/// Scores every planned pair. Output order follows the plan, so results do
/// not depend on the worker count.
pub fn score_pairs(ds: &SpeakerDataset, scheme: &EvalScheme, policy: KeyPolicy, seed: u64) -> Result<ScoreSet> {
    scheme.check_dim(ds.dim())?;
    let plan = plan_pairs(ds, seed);
    score_planned(ds, scheme, policy, seed, &plan)
}

pub fn score_planned(
    ds: &SpeakerDataset,
    scheme: &EvalScheme,
    policy: KeyPolicy,
    seed: u64,
    plan: &PairPlan,
) -> Result<ScoreSet> {
    scheme.check_dim(ds.dim())?;
    let flat = ds.flatten();
    let owners: Vec<usize> = flat.iter().map(|(s, _)| *s).collect();
    let templates: Vec<&Embedding> = flat.iter().map(|(_, e)| *e).collect();
    let slots = key_slots(&owners, policy);
    let reps = represent(scheme, &templates, &slots, policy, seed)?;
    Ok(ScoreSet {
        genuine: score_list(&reps, &templates, &plan.genuine)?,
        impostor: score_list(&reps, &templates, &plan.impostor)?,
        label: policy.label(),
    })
}

/// Scores of each template against itself; all should be exactly 1.
pub fn self_scores(ds: &SpeakerDataset, scheme: &EvalScheme, policy: KeyPolicy, seed: u64) -> Result<Vec<f64>> {
    scheme.check_dim(ds.dim())?;
    let flat = ds.flatten();
    let owners: Vec<usize> = flat.iter().map(|(s, _)| *s).collect();
    let templates: Vec<&Embedding> = flat.iter().map(|(_, e)| *e).collect();
    let reps = represent(scheme, &templates, &key_slots(&owners, policy), policy, seed)?;
    (0..templates.len()).map(|i| score_one(&reps, &templates, i, i)).collect()
}
