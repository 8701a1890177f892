//! Challenge-response sessions.
//!
//! A challenge is a fresh string of decimal digits the user must speak. The
//! spoken transcript stands in for a speech-to-text result. Authentication
//! checks, in order: the session exists and belongs to the user, has not
//! expired, has not been used (it is consumed here, before anything else
//! runs), the transcript matches, the user has an active record, and the
//! recovered template matches the probe. A failed transcript never reaches
//! key hashing or binarization.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::audit::{AuditEntry, AuditSink};
use crate::baseline::{index_similarity, matching_slots, BaselineTransform};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::hashgray::{authenticate_match, MatchResult};
use crate::journal::Journal;
use crate::key_hash::SecretKey;
use crate::store::{validate_user_id, ProtectedRecord, StoredTemplate, TemplateStore};

pub const MIN_CHALLENGE_DIGITS: usize = 4;
const SESSION_TAG: &str = "v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub digits: usize,
    pub ttl_secs: u64,
    /// Report every rejection as a plain `Rejected` to outside callers.
    pub uniform_rejection: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            digits: 6,
            ttl_secs: 60,
            uniform_rejection: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.digits < MIN_CHALLENGE_DIGITS || self.digits > 64 {
            return Err(Error::InvalidParameter(format!(
                "challenge length {} not in {MIN_CHALLENGE_DIGITS}..=64",
                self.digits
            )));
        }
        if self.ttl_secs == 0 {
            return Err(Error::InvalidParameter("challenge TTL must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Challenge {
    pub session_id: String,
    pub user_id: String,
    pub digits: String,
    pub issued_at: u64,
    pub ttl_secs: u64,
    pub consumed: bool,
}

impl Challenge {
    /// First instant at which the challenge is no longer valid.
    pub fn expires_at(&self) -> u64 {
        self.issued_at.saturating_add(self.ttl_secs)
    }

    pub fn is_expired(&self, now: u64) -> bool {
        now >= self.expires_at()
    }

    /// `v1|session_id|user_id|digits|issued_at|ttl|pending-or-consumed`
    pub fn to_line(&self) -> String {
        format!(
            "{SESSION_TAG}|{}|{}|{}|{}|{}|{}",
            self.session_id,
            self.user_id,
            self.digits,
            self.issued_at,
            self.ttl_secs,
            if self.consumed { "consumed" } else { "pending" }
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('|').collect();
        let [tag, session, user, digits, issued, ttl, state] = fields.as_slice() else {
            return Err(Error::parse(1, format!("expected 7 session fields, got {}", fields.len())));
        };
        if *tag != SESSION_TAG {
            return Err(Error::parse(1, format!("unknown session version {tag:?}")));
        }
        if session.is_empty() || !session.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            return Err(Error::parse(1, "session id must be lowercase hex"));
        }
        validate_user_id(user)?;
        if digits.len() < MIN_CHALLENGE_DIGITS || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::parse(1, "challenge digits malformed"));
        }
        let num = |s: &str| -> Result<u64> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::parse(1, format!("{s:?} is not a decimal integer")));
            }
            s.parse().map_err(|_| Error::parse(1, format!("{s:?} out of range")))
        };
        let consumed = match *state {
            "pending" => false,
            "consumed" => true,
            other => return Err(Error::parse(1, format!("unknown session state {other:?}"))),
        };
        Ok(Self {
            session_id: session.to_string(),
            user_id: user.to_string(),
            digits: digits.to_string(),
            issued_at: num(issued)?,
            ttl_secs: num(ttl)?,
            consumed,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Accepted,
    RejectedTranscript,
    RejectedExpired,
    RejectedReplayed,
    RejectedMatch,
    RejectedUnknownUser,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Accepted => "Accepted",
            Outcome::RejectedTranscript => "RejectedTranscript",
            Outcome::RejectedExpired => "RejectedExpired",
            Outcome::RejectedReplayed => "RejectedReplayed",
            Outcome::RejectedMatch => "RejectedMatch",
            Outcome::RejectedUnknownUser => "RejectedUnknownUser",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuthDecision {
    pub liveness_ok: bool,
    pub match_result: Option<MatchResult>,
    pub outcome: Outcome,
}

impl AuthDecision {
    fn rejected(outcome: Outcome, liveness_ok: bool) -> Self {
        Self {
            liveness_ok,
            match_result: None,
            outcome,
        }
    }

    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }

    /// The outcome name shown to the caller, collapsed to `Rejected` when
    /// uniform rejection is configured.
    pub fn external_outcome(&self, uniform: bool) -> &'static str {
        if uniform && !self.accepted() {
            "Rejected"
        } else {
            self.outcome.as_str()
        }
    }
}

const DIGIT_WORDS: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// Reduces a transcript to its digit sequence: whitespace and punctuation
/// are dropped and English digit words become numerals. Returns `None` if
/// the transcript contains any other word.
pub fn normalize_transcript(transcript: &str) -> Option<String> {
    let mut out = String::new();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| -> bool {
        if word.is_empty() {
            return true;
        }
        let lower = word.to_lowercase();
        let found = DIGIT_WORDS.iter().position(|w| *w == lower);
        word.clear();
        match found {
            Some(d) => {
                out.push(char::from(b'0' + d as u8));
                true
            }
            None => false,
        }
    };
    for c in transcript.chars() {
        if c.is_alphabetic() {
            word.push(c);
            continue;
        }
        if !flush(&mut word, &mut out) {
            return None;
        }
        if c.is_ascii_digit() {
            out.push(c);
        } else if c.is_alphanumeric() {
            // Non-ASCII digits and other numerals are not accepted.
            return None;
        }
    }
    flush(&mut word, &mut out).then_some(out)
}

pub fn verify_transcript(challenge: &Challenge, transcript: &str) -> bool {
    normalize_transcript(transcript).is_some_and(|t| t == challenge.digits)
}

/// Result of trying to pass the single-use gate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gate {
    Admitted(Challenge),
    Expired,
    Replayed,
}

/// Pending sessions, optionally journaled to a file so separate processes
/// can issue and redeem the same challenge.
pub struct SessionTable {
    inner: Mutex<TableInner>,
    admitted: AtomicU64,
}

struct TableInner {
    sessions: HashMap<String, Challenge>,
    journal: Option<Journal>,
}

impl TableInner {
    fn apply_line(&mut self, line: &str) -> Result<()> {
        let c = Challenge::parse_line(line)?;
        self.sessions.insert(c.session_id.clone(), c);
        Ok(())
    }

    /// Runs `f` on fresh state, persisting the lines it returns.
    fn mutate<T>(&mut self, f: impl FnOnce(&mut HashMap<String, Challenge>) -> (T, Vec<String>)) -> Result<T> {
        match self.journal.take() {
            Some(mut journal) => {
                let result = journal.exclusive(|j| {
                    j.replay(|line| self.apply_line(line))?;
                    let (out, lines) = f(&mut self.sessions);
                    j.append(&lines)?;
                    Ok(out)
                });
                self.journal = Some(journal);
                result
            }
            None => Ok(f(&mut self.sessions).0),
        }
    }
}

impl SessionTable {
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(TableInner {
                sessions: HashMap::new(),
                journal: None,
            }),
            admitted: AtomicU64::new(0),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut inner = TableInner {
            sessions: HashMap::new(),
            journal: Some(Journal::open(path.as_ref())?),
        };
        let mut journal = inner.journal.take().unwrap();
        journal.shared(|j| j.replay(|line| inner.apply_line(line)))?;
        inner.journal = Some(journal);
        Ok(Self {
            inner: Mutex::new(inner),
            admitted: AtomicU64::new(0),
        })
    }

    pub fn insert(&self, challenge: Challenge) -> Result<()> {
        let line = challenge.to_line();
        self.inner.lock().unwrap().mutate(|sessions| {
            sessions.insert(challenge.session_id.clone(), challenge);
            ((), vec![line])
        })
    }

    pub fn get(&self, session_id: &str) -> Option<Challenge> {
        self.inner.lock().unwrap().sessions.get(session_id).cloned()
    }

    /// Atomically checks and consumes a session. Expired sessions are also
    /// marked consumed so they can never be redeemed later.
    pub fn consume(&self, session_id: &str, user_id: &str, now: u64) -> Result<Gate> {
        let gate = self.inner.lock().unwrap().mutate(|sessions| {
            let Some(c) = sessions.get_mut(session_id) else {
                return (Gate::Replayed, vec![]);
            };
            if c.user_id != user_id || c.consumed {
                return (Gate::Replayed, vec![]);
            }
            c.consumed = true;
            let line = c.to_line();
            if c.is_expired(now) {
                (Gate::Expired, vec![line])
            } else {
                (Gate::Admitted(c.clone()), vec![line])
            }
        })?;
        if matches!(gate, Gate::Admitted(_)) {
            self.admitted.fetch_add(1, Ordering::SeqCst);
        }
        Ok(gate)
    }

    /// Number of times the consumption gate has admitted a session.
    pub fn admitted_count(&self) -> u64 {
        self.admitted.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Matches a probe against any kind of stored record using `key`.
pub fn match_record(record: &ProtectedRecord, key: &SecretKey, probe: &Embedding) -> Result<MatchResult> {
    match &record.template {
        StoredTemplate::Protected(t) => authenticate_match(t, key, probe, record.threshold),
        StoredTemplate::Index(t) => {
            let code = BaselineTransform::new(&t.params, key)?.apply(probe)?;
            let sim = index_similarity(&t.code, &code)?;
            Ok(MatchResult::decide(sim, matching_slots(&t.code, &code), code.len(), record.threshold))
        }
    }
}

pub struct Authenticator {
    store: Arc<TemplateStore>,
    sessions: SessionTable,
    config: ProtocolConfig,
    rng: Mutex<ChaCha20Rng>,
    audit: Option<Arc<dyn AuditSink>>,
    biometric_evaluations: AtomicU64,
}

impl Authenticator {
    /// Challenges drawn from an operating-system seeded CSPRNG.
    pub fn new(store: Arc<TemplateStore>, sessions: SessionTable, config: ProtocolConfig) -> Result<Self> {
        Self::with_rng(store, sessions, config, ChaCha20Rng::from_os_rng())
    }

    /// Reproducible challenges for tests and scripted demos. Not for production.
    pub fn insecure_deterministic(
        store: Arc<TemplateStore>,
        sessions: SessionTable,
        config: ProtocolConfig,
        seed: u64,
    ) -> Result<Self> {
        Self::with_rng(store, sessions, config, ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(
        store: Arc<TemplateStore>,
        sessions: SessionTable,
        config: ProtocolConfig,
        rng: ChaCha20Rng,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            store,
            sessions,
            config,
            rng: Mutex::new(rng),
            audit: None,
            biometric_evaluations: AtomicU64::new(0),
        })
    }

    pub fn with_audit(mut self, sink: Arc<dyn AuditSink>) -> Self {
        self.audit = Some(sink);
        self
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn store(&self) -> &TemplateStore {
        &self.store
    }

    pub fn sessions(&self) -> &SessionTable {
        &self.sessions
    }

    /// How many times key hashing and template matching actually ran.
    pub fn biometric_evaluations(&self) -> u64 {
        self.biometric_evaluations.load(Ordering::SeqCst)
    }

    pub fn issue_challenge(&self, user_id: &str, now: u64) -> Result<Challenge> {
        if self.store.fetch_active(user_id).is_none() {
            return Err(Error::UnknownUser(user_id.to_string()));
        }
        let (session_id, digits) = {
            let mut rng = self.rng.lock().unwrap();
            let id: [u8; 16] = rng.random();
            let digits: String = (0..self.config.digits)
                .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
                .collect();
            (hex::encode(id), digits)
        };
        let challenge = Challenge {
            session_id,
            user_id: user_id.to_string(),
            digits,
            issued_at: now,
            ttl_secs: self.config.ttl_secs,
            consumed: false,
        };
        self.sessions.insert(challenge.clone())?;
        Ok(challenge)
    }

    pub fn authenticate(
        &self,
        user_id: &str,
        session_id: &str,
        transcript: &str,
        key: &SecretKey,
        probe: &Embedding,
        now: u64,
    ) -> Result<AuthDecision> {
        let decision = self.decide(user_id, session_id, transcript, key, probe, now)?;
        if let Some(sink) = &self.audit {
            sink.record(&AuditEntry {
                timestamp: now,
                user_id: user_id.to_string(),
                session_id: session_id.to_string(),
                outcome: decision.outcome.to_string(),
            })?;
        }
        Ok(decision)
    }

    fn decide(
        &self,
        user_id: &str,
        session_id: &str,
        transcript: &str,
        key: &SecretKey,
        probe: &Embedding,
        now: u64,
    ) -> Result<AuthDecision> {
        let challenge = match self.sessions.consume(session_id, user_id, now)? {
            Gate::Admitted(c) => c,
            Gate::Expired => return Ok(AuthDecision::rejected(Outcome::RejectedExpired, false)),
            Gate::Replayed => return Ok(AuthDecision::rejected(Outcome::RejectedReplayed, false)),
        };
        if !verify_transcript(&challenge, transcript) {
            return Ok(AuthDecision::rejected(Outcome::RejectedTranscript, false));
        }
        let Some(record) = self.store.fetch_active(user_id) else {
            return Ok(AuthDecision::rejected(Outcome::RejectedUnknownUser, true));
        };
        self.biometric_evaluations.fetch_add(1, Ordering::SeqCst);
        let result = match_record(&record, key, probe)?;
        Ok(AuthDecision {
            liveness_ok: true,
            outcome: if result.accepted {
                Outcome::Accepted
            } else {
                Outcome::RejectedMatch
            },
            match_result: Some(result),
        })
    }
}
