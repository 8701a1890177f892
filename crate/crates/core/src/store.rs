//! Append-only persistence for enrollment records.
//!
//! One record per line:
//!
//! ```text
//! v1|user_id|scheme|generation|status|hex_params|hex_template|threshold|created_at_unix
//! ```
//!
//! `hex_params` is the lowercase hex of the canonical parameter text
//! (`p=4;l=15;d=1024;h=sha256` or `s=wta;d=192;m=300;k=16;q=16;r=64`).
//! `hex_template` is the packed template bits for `charvoc` records and the
//! big-endian `u32` indices for baseline records. Revocation appends the
//! record again with status `revoked`; on load the last line for each
//! `(user, generation)` wins and older active records of the same scheme
//! are treated as superseded.
//!
//! Writers take an exclusive advisory lock on the log and replay any lines
//! appended by other processes before assigning a generation.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use crate::baseline::{BaselineKind, BaselineParams, BaselineTemplate, IndexCode};
use crate::bits::BitString;
use crate::encoding::SchemeParams;
use crate::error::{Error, Result};
use crate::hashgray::ProtectedTemplate;
use crate::journal::Journal;

const LINE_TAG: &str = "v1";
const MAX_USER_ID: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Charvoc,
    Baseline(BaselineKind),
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Charvoc,
        Scheme::Baseline(BaselineKind::Wta),
        Scheme::Baseline(BaselineKind::Iom),
        Scheme::Baseline(BaselineKind::Roe),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Charvoc => "charvoc",
            Scheme::Baseline(k) => k.as_str(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charvoc" => Ok(Scheme::Charvoc),
            other => Ok(Scheme::Baseline(other.parse()?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RecordStatus {
    Active,
    Superseded,
    Revoked,
}

impl RecordStatus {
    fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Active => "active",
            RecordStatus::Superseded => "superseded",
            RecordStatus::Revoked => "revoked",
        }
    }
}

impl FromStr for RecordStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(RecordStatus::Active),
            "superseded" => Ok(RecordStatus::Superseded),
            "revoked" => Ok(RecordStatus::Revoked),
            other => Err(Error::parse(1, format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoredTemplate {
    Protected(ProtectedTemplate),
    Index(BaselineTemplate),
}

impl StoredTemplate {
    pub fn scheme(&self) -> Scheme {
        match self {
            StoredTemplate::Protected(_) => Scheme::Charvoc,
            StoredTemplate::Index(t) => Scheme::Baseline(t.params.kind),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StoredTemplate::Protected(t) => t.params().dim(),
            StoredTemplate::Index(t) => t.params.dim,
        }
    }

    fn params_text(&self) -> String {
        match self {
            StoredTemplate::Protected(t) => t.params().to_string(),
            StoredTemplate::Index(t) => t.params.to_string(),
        }
    }

    fn template_hex(&self) -> String {
        match self {
            StoredTemplate::Protected(t) => t.bits().to_hex(),
            StoredTemplate::Index(t) => hex::encode(t.code.to_be_bytes()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtectedRecord {
    pub user_id: String,
    pub template: StoredTemplate,
    pub threshold: f64,
    pub created_at: u64,
    pub generation: u64,
    pub status: RecordStatus,
}

pub fn validate_user_id(user_id: &str) -> Result<()> {
    let ok = !user_id.is_empty()
        && user_id.len() <= MAX_USER_ID
        && user_id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-' | b'@'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "user id {user_id:?} must be 1-{MAX_USER_ID} characters of [A-Za-z0-9._@-]"
        )))
    }
}

fn validate_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold {threshold} not in [0, 1]")))
    }
}

impl ProtectedRecord {
    pub fn scheme(&self) -> Scheme {
        self.template.scheme()
    }

    pub fn is_active(&self) -> bool {
        self.status == RecordStatus::Active
    }

    pub fn to_line(&self) -> String {
        format!(
            "{LINE_TAG}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.user_id,
            self.scheme(),
            self.generation,
            self.status.as_str(),
            hex::encode(self.template.params_text()),
            self.template.template_hex(),
            self.threshold,
            self.created_at
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('|').collect();
        let [tag, user, scheme, generation, status, hex_params, hex_template, threshold, created] =
            fields.as_slice()
        else {
            return Err(Error::parse(1, format!("expected 9 fields, got {}", fields.len())));
        };
        if *tag != LINE_TAG {
            return Err(Error::parse(1, format!("unknown record version {tag:?}")));
        }
        validate_user_id(user)?;
        let scheme: Scheme = scheme.parse()?;
        let generation = parse_decimal(generation, "generation")?;
        if generation == 0 {
            return Err(Error::parse(1, "generation must be positive"));
        }
        let status: RecordStatus = status.parse()?;
        let params_text = decode_hex(hex_params)
            .and_then(|b| String::from_utf8(b).map_err(|_| Error::parse(1, "params are not UTF-8")))?;
        let template = match scheme {
            Scheme::Charvoc => {
                let params: SchemeParams = params_text.parse()?;
                let bits = BitString::from_hex(hex_template, params.template_len())?;
                StoredTemplate::Protected(ProtectedTemplate::from_parts(bits, params)?)
            }
            Scheme::Baseline(kind) => {
                let params: BaselineParams = params_text.parse()?;
                if params.kind != kind {
                    return Err(Error::parse(1, "scheme column disagrees with params"));
                }
                let code = IndexCode::from_be_bytes(&decode_hex(hex_template)?, params.arity() as u32)?;
                StoredTemplate::Index(BaselineTemplate::new(params, code)?)
            }
        };
        let threshold: f64 = threshold
            .parse()
            .map_err(|_| Error::parse(1, format!("bad threshold {threshold:?}")))?;
        validate_threshold(threshold)?;
        let created_at = parse_decimal(created, "created_at")?;
        Ok(Self {
            user_id: user.to_string(),
            template,
            threshold,
            created_at,
            generation,
            status,
        })
    }
}

fn decode_hex(s: &str) -> Result<Vec<u8>> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(Error::parse(1, "hex must be lowercase"));
    }
    hex::decode(s).map_err(|e| Error::parse(1, format!("bad hex: {e}")))
}

fn parse_decimal(s: &str, what: &str) -> Result<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::parse(1, format!("{what} is not a decimal integer")));
    }
    s.parse().map_err(|_| Error::parse(1, format!("{what} out of range")))
}

/// Input to [`TemplateStore::enroll`]; the store assigns the generation.
#[derive(Clone, Debug)]
pub struct NewRecord {
    pub user_id: String,
    pub template: StoredTemplate,
    pub threshold: f64,
    pub created_at: u64,
}

#[derive(Default)]
struct State {
    records: Vec<ProtectedRecord>,
    by_key: HashMap<(String, u64), usize>,
}

impl State {
    /// Applies one log line with latest-wins semantics.
    fn apply(&mut self, record: ProtectedRecord) {
        let key = (record.user_id.clone(), record.generation);
        match self.by_key.get(&key) {
            Some(&i) => self.records[i] = record,
            None => {
                self.by_key.insert(key, self.records.len());
                self.records.push(record);
            }
        }
        self.settle();
    }

    /// Only the newest active record per `(user, scheme)` stays active.
    fn settle(&mut self) {
        let mut newest: HashMap<(&str, Scheme), u64> = HashMap::new();
        for r in self.records.iter().filter(|r| r.is_active()) {
            let e = newest.entry((r.user_id.as_str(), r.scheme())).or_insert(0);
            *e = (*e).max(r.generation);
        }
        let stale: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_active() && newest[&(r.user_id.as_str(), r.scheme())] != r.generation)
            .map(|(i, _)| i)
            .collect();
        for i in stale {
            self.records[i].status = RecordStatus::Superseded;
        }
    }

    fn next_generation(&self, user_id: &str) -> u64 {
        self.records
            .iter()
            .filter(|r| r.user_id == user_id)
            .map(|r| r.generation)
            .max()
            .unwrap_or(0)
            + 1
    }

    fn fetch_active(&self, user_id: &str) -> Option<&ProtectedRecord> {
        self.records
            .iter()
            .filter(|r| r.user_id == user_id && r.is_active())
            .max_by_key(|r| r.generation)
    }
}

pub struct TemplateStore {
    state: RwLock<State>,
    log: Option<Mutex<Journal>>,
    path: Option<PathBuf>,
}

impl TemplateStore {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State::default()),
            log: None,
            path: None,
        }
    }

    /// Opens (creating if needed) the record log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut log = Journal::open(&path)?;
        let mut state = State::default();
        log.shared(|j| j.replay(|line| apply_line(&mut state, line)))?;
        Ok(Self {
            state: RwLock::new(state),
            log: Some(Mutex::new(log)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Stores a new record, superseding the user's active record for the
    /// same scheme, and returns its generation.
    pub fn enroll(&self, new: NewRecord) -> Result<u64> {
        validate_user_id(&new.user_id)?;
        validate_threshold(new.threshold)?;
        self.write(|state| {
            let record = ProtectedRecord {
                generation: state.next_generation(&new.user_id),
                user_id: new.user_id.clone(),
                template: new.template.clone(),
                threshold: new.threshold,
                created_at: new.created_at,
                status: RecordStatus::Active,
            };
            Ok(vec![record])
        })
        .map(|written| written[0].generation)
    }

    /// Revokes every active record of `user_id`. Returns whether any existed.
    pub fn revoke(&self, user_id: &str) -> Result<bool> {
        let written = self.write(|state| {
            Ok(state
                .records
                .iter()
                .filter(|r| r.user_id == user_id && r.is_active())
                .map(|r| ProtectedRecord {
                    status: RecordStatus::Revoked,
                    ..r.clone()
                })
                .collect())
        })?;
        Ok(!written.is_empty())
    }

    /// Highest-generation record of the user that is neither revoked nor superseded.
    pub fn fetch_active(&self, user_id: &str) -> Option<ProtectedRecord> {
        self.state.read().unwrap().fetch_active(user_id).cloned()
    }

    pub fn fetch_active_scheme(&self, user_id: &str, scheme: Scheme) -> Option<ProtectedRecord> {
        self.state
            .read()
            .unwrap()
            .records
            .iter()
            .find(|r| r.user_id == user_id && r.scheme() == scheme && r.is_active())
            .cloned()
    }

    /// Every record ever written for the user, superseded and revoked included.
    pub fn history(&self, user_id: &str) -> Vec<ProtectedRecord> {
        let state = self.state.read().unwrap();
        let mut out: Vec<_> = state.records.iter().filter(|r| r.user_id == user_id).cloned().collect();
        out.sort_by_key(|r| r.generation);
        out
    }

    pub fn all_records(&self) -> Vec<ProtectedRecord> {
        self.state.read().unwrap().records.clone()
    }

    /// Runs `build` against up-to-date state under the writer lock, then
    /// persists and applies the records it returns.
    fn write<F>(&self, build: F) -> Result<Vec<ProtectedRecord>>
    where
        F: FnOnce(&State) -> Result<Vec<ProtectedRecord>>,
    {
        let mut log = self.log.as_ref().map(|m| m.lock().unwrap());
        let mut state = self.state.write().unwrap();
        let records = match log.as_deref_mut() {
            Some(journal) => journal.exclusive(|j| {
                j.replay(|line| apply_line(&mut state, line))?;
                let records = build(&state)?;
                j.append(&records.iter().map(ProtectedRecord::to_line).collect::<Vec<_>>())?;
                Ok(records)
            })?,
            None => build(&state)?,
        };
        for r in &records {
            state.apply(r.clone());
        }
        Ok(records)
    }
}

fn apply_line(state: &mut State, line: &str) -> Result<()> {
    state.apply(ProtectedRecord::parse_line(line)?);
    Ok(())
}
