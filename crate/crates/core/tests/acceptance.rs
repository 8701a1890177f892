//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNMET` still run and still print FAIL when they
//! fail; they just do not abort the suite. Everything else must pass.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use charvoc_core::baseline::{BaselineKind, BaselineParams};
use charvoc_core::challenge::{Gate, SessionTable};
use charvoc_core::encoding::{gray_decode, gray_encode, roundoff};
use charvoc_core::eval::bench::bench_template_generation;
use charvoc_core::eval::metrics::{compute_metrics, MetricsReport, TARGET_FMR};
use charvoc_core::eval::report::{evaluate_scheme, evaluate_unlinkability};
use charvoc_core::eval::unlinkability::{unlinkability, DEFAULT_BINS};
use charvoc_core::eval::{generate_synthetic, EvalScheme, KeyPolicy, SyntheticConfig};
use charvoc_core::hashgray::cancelability_case;
use charvoc_core::{
    authenticate_match, binarize, hash_key, protect, recover, similarity, Authenticator, BitString, Embedding,
    NewRecord, Outcome, ProtocolConfig, SchemeParams, SecretKey, StoredTemplate, TemplateStore,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Check = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Check);

/// Criteria that cannot be met as stated, with the reason printed beside
/// the FAIL line.
const KNOWN_UNMET: &[(u8, &str)] = &[(
    5,
    "on the default synthetic set every keyed scheme separates perfectly under per-user keys, \
     so ChaRVoC and WTA tie at EER 0 and 'strictly lower' cannot hold",
)];

/// Cosine EER observed on the default synthetic set at the pinned seeds.
const COSINE_EER_ANCHOR: f64 = 0.0;
const SCORING_SEED: u64 = 7;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn key(tag: &str, i: usize) -> SecretKey {
    SecretKey::new(format!("{tag}-{i}").into_bytes()).unwrap()
}

fn random_embedding(rng: &mut ChaCha20Rng, dim: usize) -> Embedding {
    Embedding::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn scheme_correctness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let params = SchemeParams::default();
    for i in 0..200 {
        let v = random_embedding(&mut rng, params.dim());
        let k = key("involution", i);
        let t = protect(&k, &v, &params).unwrap();
        ensure(recover(&t, &k).unwrap() == binarize(&v, &params).unwrap(), "recover(protect) != binarize")?;
    }

    for l in 1..=12u32 {
        let mut prev = gray_encode(0, l).unwrap();
        ensure(gray_decode(&prev).unwrap() == 0, "graycode round trip at 0")?;
        for m in 1..(1u64 << l) {
            let g = gray_encode(m, l).unwrap();
            ensure(gray_decode(&g).unwrap() == m, format!("graycode round trip l={l} m={m}"))?;
            ensure(prev.hamming(&g).unwrap() == 1, format!("graycode adjacency l={l} m={m}"))?;
            prev = g;
        }
    }

    ensure(roundoff(3.6, 0).unwrap() == 4 && roundoff(3.9, 0).unwrap() == 4, "r(3.6) = r(3.9) = 4")?;

    let v1 = random_embedding(&mut rng, params.dim());
    let v2 = random_embedding(&mut rng, params.dim());
    let (k1, k2) = (key("case", 1), key("case", 2));
    let n = params.template_len();
    let t = |k: &SecretKey, v: &Embedding| protect(k, v, &params).unwrap();
    let h = |k: &SecretKey| hash_key(k, n, params.hash()).unwrap().into_bits();
    let b = |v: &Embedding| binarize(v, &params).unwrap();
    let same_both = cancelability_case(&t(&k1, &v1), &t(&k1, &v1)).unwrap();
    ensure(same_both == BitString::zeros(n), "same key, same voice must cancel to zero")?;
    let voice_only = cancelability_case(&t(&k1, &v1), &t(&k1, &v2)).unwrap();
    ensure(voice_only == b(&v1).xor(&b(&v2)).unwrap(), "same key leaves T(v1)^T(v2)")?;
    let key_only = cancelability_case(&t(&k1, &v1), &t(&k2, &v1)).unwrap();
    ensure(key_only == h(&k1).xor(&h(&k2)).unwrap(), "same voice leaves H(k1)^H(k2)")?;
    let both = cancelability_case(&t(&k1, &v1), &t(&k2, &v2)).unwrap();
    let expect = h(&k1).xor(&h(&k2)).unwrap().xor(&b(&v1).xor(&b(&v2)).unwrap()).unwrap();
    ensure(both == expect, "differing key and voice leaves the full combination")?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("all checks passed in {:.3} s", elapsed.as_secs_f64()))
}

fn naive_similarity(a: &BitString, b: &BitString) -> f64 {
    let mut m = 0usize;
    for i in 0..a.len() {
        if a.get(i) == b.get(i) {
            m += 1;
        }
    }
    m as f64 / (2 * a.len() - m) as f64
}

fn similarity_oracle() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=2048);
        let a: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let (a, b) = (BitString::from_bools(&a), BitString::from_bools(&b));
        let got = similarity(&a, &b).unwrap();
        let want = naive_similarity(&a, &b);
        ensure(got == want, format!("n={n}: {got} vs oracle {want}"))?;
        ensure(similarity(&a, &a).unwrap() == 1.0, "S(identical) != 1")?;
        ensure(similarity(&a, &a.not()).unwrap() == 0.0, "S(complement) != 0")?;
    }
    Ok("10000 random pairs agree exactly; S(x,x)=1, S(x,!x)=0".into())
}

fn revocability() -> Check {
    let ds = generate_synthetic(&SyntheticConfig {
        speakers: 100,
        utterances: 2,
        dim: 1024,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let params = SchemeParams::default();
    ensure(params.template_len() >= 4096, "template too short")?;
    let store = TemplateStore::in_memory();
    let mut accepted = 0;
    let mut wrong_key_sims = Vec::new();
    for (i, (user, utts)) in ds.speakers().enumerate() {
        let (old_key, new_key) = (key("old", i), key("new", i));
        let old = protect(&old_key, &utts[0], &params).unwrap();
        let enroll = |t| NewRecord {
            user_id: user.to_string(),
            template: StoredTemplate::Protected(t),
            threshold: 0.6,
            created_at: 0,
        };
        store.enroll(enroll(old.clone())).unwrap();
        let generation = store.enroll(enroll(protect(&new_key, &utts[0], &params).unwrap())).unwrap();
        ensure(generation == 2, "re-enrollment must be generation 2")?;
        let StoredTemplate::Protected(active) = store.fetch_active(user).unwrap().template else {
            return Err("active record is not a protected template".into());
        };
        // The attacker holds the old key and the old record, and the voice
        // itself via a genuine recording.
        for probe in utts {
            let r = authenticate_match(&active, &old_key, probe, 0.6).unwrap();
            if r.accepted {
                accepted += 1;
            }
            wrong_key_sims.push(r.similarity);
        }
        if similarity(old.bits(), active.bits()).unwrap() >= 0.6 {
            accepted += 1;
        }
    }
    ensure(accepted == 0, format!("{accepted} acceptances of revoked material"))?;
    let worst = wrong_key_sims.iter().map(|s| (s - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    let mean = wrong_key_sims.iter().sum::<f64>() / wrong_key_sims.len() as f64;
    ensure(worst <= 0.05, format!("wrong-key similarity strays {worst:.4} from 1/3"))?;
    Ok(format!(
        "0 acceptances over 100 users; wrong-key similarity mean {mean:.4}, max deviation {worst:.4} (n={})",
        params.template_len()
    ))
}

/// Direct enumeration of every candidate threshold.
fn metrics_oracle(genuine: &[f64], impostor: &[f64]) -> MetricsReport {
    let mut cands: Vec<f64> = Vec::new();
    for &s in genuine.iter().chain(impostor) {
        if !cands.contains(&s) {
            cands.push(s);
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.push(cands.last().unwrap().next_up());
    let rate = |xs: &[f64], pred: &dyn Fn(f64) -> bool| xs.iter().filter(|&&s| pred(s)).count() as f64 / xs.len() as f64;
    let pts: Vec<(f64, f64, f64)> = cands
        .iter()
        .map(|&t| (t, rate(impostor, &|s| s >= t), rate(genuine, &|s| s < t)))
        .collect();
    let k = (0..pts.len()).find(|&k| pts[k].2 - pts[k].1 >= 0.0).unwrap();
    let (eer, thr) = {
        let (t1, f1, n1) = pts[k];
        let d1 = n1 - f1;
        if d1 == 0.0 || k == 0 {
            (f1, t1)
        } else {
            let (t0, f0, n0) = pts[k - 1];
            let d0 = n0 - f0;
            let w = -d0 / (d1 - d0);
            (f0 + w * (f1 - f0), t0 + w * (t1 - t0))
        }
    };
    let mut auc = 0.0;
    for w in pts.windows(2) {
        auc += (w[0].1 - w[1].1) * ((1.0 - w[0].2) + (1.0 - w[1].2)) / 2.0;
    }
    let tmr = pts.iter().filter(|p| p.1 <= TARGET_FMR).map(|p| 1.0 - p.2).fold(0.0, f64::max);
    MetricsReport {
        eer: eer * 100.0,
        auc,
        tmr_at_fmr: tmr,
        threshold_at_eer: thr,
    }
}

fn metrics_acceptance() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    for case in 0..300 {
        let total = rng.random_range(2..=1000);
        let ng = rng.random_range(1..total);
        let grid = [10u32, 100, 1_000_000][case % 3];
        let mut draw = |shift: f64| (rng.random_range(0..=grid) as f64 / grid as f64 + shift).min(1.0);
        let g: Vec<f64> = (0..ng).map(|_| draw(0.1)).collect();
        let i: Vec<f64> = (0..total - ng).map(|_| draw(0.0)).collect();
        let got = compute_metrics(&g, &i).unwrap();
        let want = metrics_oracle(&g, &i);
        ensure(got == want, format!("case {case}: {got:?} vs oracle {want:?}"))?;
    }
    let perfect = compute_metrics(&[1.0; 50], &[0.0; 50]).unwrap();
    ensure(
        perfect.eer == 0.0 && perfect.auc == 1.0 && perfect.tmr_at_fmr == 1.0,
        format!("perfect separation gave {perfect:?}"),
    )?;
    let g: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
    let i: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
    let chance = compute_metrics(&g, &i).unwrap();
    ensure((chance.eer - 50.0).abs() <= 2.0, format!("chance EER {:.3}", chance.eer))?;
    Ok(format!(
        "300 fixtures match the oracle exactly; perfect EER 0 AUC 1; chance EER {:.3}%",
        chance.eer
    ))
}

fn desk_scale_recognition() -> Check {
    let start = Instant::now();
    let ds = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let d = ds.dim();
    let eer = |scheme: EvalScheme| {
        evaluate_scheme(&ds, &scheme, KeyPolicy::PerUserKey, SCORING_SEED)
            .unwrap()
            .metrics
            .eer
    };
    let cosine = eer(EvalScheme::Cosine);
    let charvoc = eer(EvalScheme::Charvoc(SchemeParams::with_dim(d).unwrap()));
    let wta = eer(EvalScheme::Baseline(BaselineParams::new(BaselineKind::Wta, d).unwrap()));
    let elapsed = start.elapsed();
    let detail = format!(
        "EER cosine {cosine:.3}%, charvoc {charvoc:.3}%, wta {wta:.3}% in {:.1} s",
        elapsed.as_secs_f64()
    );
    ensure(cosine < 5.0, format!("cosine EER not below 5%: {detail}"))?;
    ensure((cosine - COSINE_EER_ANCHOR).abs() <= 1.0, format!("cosine EER drifted from anchor: {detail}"))?;
    ensure(charvoc <= cosine + 3.0, format!("charvoc more than 3 pts above cosine: {detail}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("too slow: {detail}"))?;
    ensure(charvoc < wta, format!("charvoc not strictly below wta: {detail}"))?;
    Ok(detail)
}

fn unlinkability_acceptance() -> Check {
    let ds = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let u = evaluate_unlinkability(&ds, &SchemeParams::with_dim(ds.dim()).unwrap(), SCORING_SEED, DEFAULT_BINS).unwrap();
    let d_sys = u.report.d_sys;
    ensure(d_sys < 0.1, format!("fresh-key D_sys {d_sys:.4}"))?;

    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let x: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
    let same = unlinkability(&x, &x, DEFAULT_BINS).unwrap().d_sys;
    ensure(same.abs() <= 0.02, format!("D_sys(X, X) = {same:.4}"))?;
    let hi: Vec<f64> = (0..20_000).map(|_| rng.random_range(0.5..1.0)).collect();
    let lo: Vec<f64> = (0..20_000).map(|_| rng.random_range(0.0..0.5)).collect();
    let disjoint = unlinkability(&hi, &lo, DEFAULT_BINS).unwrap().d_sys;
    ensure((disjoint - 1.0).abs() <= 0.02, format!("disjoint D_sys = {disjoint:.4}"))?;
    Ok(format!(
        "fresh-key D_sys {d_sys:.4} ({} mated / {} non-mated); poles {same:.4} and {disjoint:.4}",
        u.mated_pairs, u.non_mated_pairs
    ))
}

fn timing() -> Check {
    let params = SchemeParams::default();
    let r = bench_template_generation(&EvalScheme::Charvoc(params), params.dim(), 200, 8).unwrap();
    let detail = format!("median {:.6} s, p95 {:.6} s over {} trials", r.median, r.p95, r.trials);
    ensure(r.median < 0.010, detail.clone())?;
    Ok(detail)
}

const T0: u64 = 1_700_000_000;

fn replay_setup(sessions: SessionTable) -> (Authenticator, SecretKey, Embedding) {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let params = SchemeParams::with_dim(192).unwrap();
    let voice = random_embedding(&mut rng, 192);
    let k = key("alice", 0);
    let store = Arc::new(TemplateStore::in_memory());
    store
        .enroll(NewRecord {
            user_id: "alice".into(),
            template: StoredTemplate::Protected(protect(&k, &voice, &params).unwrap()),
            threshold: 0.6,
            created_at: T0,
        })
        .unwrap();
    let auth = Authenticator::insecure_deterministic(store, sessions, ProtocolConfig::default(), 10).unwrap();
    (auth, k, voice)
}

fn replay_defense() -> Check {
    let (auth, k, voice) = replay_setup(SessionTable::in_memory());
    let c = auth.issue_challenge("alice", T0).unwrap();
    let first = auth.authenticate("alice", &c.session_id, &c.digits, &k, &voice, T0 + 3).unwrap();
    ensure(first.outcome == Outcome::Accepted, format!("first attempt {:?}", first.outcome))?;
    let replay = auth.authenticate("alice", &c.session_id, &c.digits, &k, &voice, T0 + 4).unwrap();
    ensure(replay.outcome == Outcome::RejectedReplayed, format!("replay {:?}", replay.outcome))?;

    let stale = auth.issue_challenge("alice", T0).unwrap();
    let fresh = auth.issue_challenge("alice", T0 + 1).unwrap();
    ensure(stale.digits != fresh.digits, "fixture challenges collided")?;
    let evals_before = auth.biometric_evaluations();
    let r = auth.authenticate("alice", &fresh.session_id, &stale.digits, &k, &voice, T0 + 2).unwrap();
    ensure(r.outcome == Outcome::RejectedTranscript, format!("stale transcript {:?}", r.outcome))?;
    ensure(auth.biometric_evaluations() == evals_before, "biometric check ran after failed liveness")?;

    // 100 threads race on one session through one authenticator.
    let auth = Arc::new(auth);
    let c = auth.issue_challenge("alice", T0).unwrap();
    let admitted_before = auth.sessions().admitted_count();
    let barrier = Arc::new(Barrier::new(100));
    let outcomes: Vec<Outcome> = (0..100)
        .map(|_| {
            let (auth, barrier, c, k, voice) = (auth.clone(), barrier.clone(), c.clone(), k.clone(), voice.clone());
            thread::spawn(move || {
                barrier.wait();
                auth.authenticate("alice", &c.session_id, &c.digits, &k, &voice, T0 + 1)
                    .unwrap()
                    .outcome
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .collect();
    let wins = outcomes.iter().filter(|o| **o == Outcome::Accepted).count();
    let replays = outcomes.iter().filter(|o| **o == Outcome::RejectedReplayed).count();
    let gate = auth.sessions().admitted_count() - admitted_before;
    ensure(wins == 1 && replays == 99 && gate == 1, format!("{wins} accepted, {replays} replayed, gate {gate}"))?;

    // The same race across independent handles on one session journal, as
    // separate processes would see it.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.log");
    let (auth, _, _) = replay_setup(SessionTable::open(&path).unwrap());
    let c = auth.issue_challenge("alice", T0).unwrap();
    let barrier = Arc::new(Barrier::new(100));
    let admitted: u64 = (0..100)
        .map(|_| {
            let (path, barrier, sid) = (path.clone(), barrier.clone(), c.session_id.clone());
            thread::spawn(move || {
                let table = SessionTable::open(&path).unwrap();
                barrier.wait();
                let gate = table.consume(&sid, "alice", T0 + 1).unwrap();
                u64::from(matches!(gate, Gate::Admitted(_)))
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .sum();
    ensure(admitted == 1, format!("{admitted} admissions across journal handles"))?;
    Ok("replay rejected, stale transcript rejected, 100-way races admit exactly once (shared and journaled)".into())
}

fn store_round_trip() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.log");
    let params = SchemeParams::with_dim(64).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let record = |user: &str, i: usize, rng: &mut ChaCha20Rng| NewRecord {
        user_id: user.into(),
        template: StoredTemplate::Protected(protect(&key(user, i), &random_embedding(rng, 64), &params).unwrap()),
        threshold: 0.6,
        created_at: T0 + i as u64,
    };
    let users = ["alice", "bob", "carol"];
    let (before, active_before) = {
        let store = TemplateStore::open(&path).unwrap();
        ensure(store.enroll(record("alice", 1, &mut rng)).unwrap() == 1, "alice gen 1")?;
        ensure(store.enroll(record("bob", 1, &mut rng)).unwrap() == 1, "bob gen 1")?;
        ensure(store.enroll(record("carol", 1, &mut rng)).unwrap() == 1, "carol gen 1")?;
        ensure(store.revoke("alice").unwrap(), "alice revoke")?;
        ensure(store.enroll(record("alice", 2, &mut rng)).unwrap() == 2, "alice gen 2")?;
        ensure(store.enroll(record("bob", 2, &mut rng)).unwrap() == 2, "bob gen 2")?;
        ensure(store.revoke("carol").unwrap(), "carol revoke")?;
        ensure(!store.revoke("dave").unwrap(), "revoking an unknown user changes nothing")?;
        let active: Vec<_> = users.iter().map(|u| store.fetch_active(u)).collect();
        (store.all_records(), active)
    };
    let store = TemplateStore::open(&path).unwrap();
    ensure(store.all_records() == before, "record set changed across restart")?;
    for (u, want) in users.iter().zip(&active_before) {
        let got = store.fetch_active(u);
        ensure(&got == want, format!("{u}: active record differs after restart"))?;
        if let (Some(StoredTemplate::Protected(a)), Some(StoredTemplate::Protected(b))) =
            (got.map(|r| r.template), want.as_ref().map(|r| r.template.clone()))
        {
            ensure(a.bits() == b.bits(), format!("{u}: template bits differ"))?;
        }
    }
    let gens: Vec<Option<u64>> = active_before.iter().map(|r| r.as_ref().map(|r| r.generation)).collect();
    ensure(gens == [Some(2), Some(2), None], format!("active generations {gens:?}"))?;
    ensure(store.enroll(record("carol", 2, &mut rng)).unwrap() == 2, "carol re-enrolls at gen 2")?;
    ensure(store.enroll(record("alice", 3, &mut rng)).unwrap() == 3, "alice continues at gen 3")?;
    Ok(format!("{} records identical after restart; generations continue", before.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "scheme correctness", scheme_correctness),
        (2, "similarity oracle", similarity_oracle),
        (3, "revocability", revocability),
        (4, "metrics oracle", metrics_acceptance),
        (5, "desk-scale recognition", desk_scale_recognition),
        (6, "unlinkability", unlinkability_acceptance),
        (7, "template timing", timing),
        (8, "replay defense", replay_defense),
        (9, "store round trip", store_round_trip),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS: {detail}"),
            Err(detail) => match KNOWN_UNMET.iter().find(|(k, _)| *k == id) {
                Some((_, why)) => println!("criterion {id} ({name}): FAIL (known: {why}): {detail}"),
                None => {
                    println!("criterion {id} ({name}): FAIL: {detail}");
                    unexpected.push(id);
                }
            },
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {unexpected:?}");
        std::process::exit(1);
    }
}
