#![allow(dead_code)]

// Round-trip properties shared by the fuzz targets and the seed replay test.
// Every decoder must either reject its input or produce a value that
// re-encodes to something it decodes back to unchanged. None may panic.

use std::str::{from_utf8, FromStr};

use charvoc_core::baseline::{BaselineParams, BaselineTemplate, IndexCode};
use charvoc_core::challenge::{normalize_transcript, Challenge};
use charvoc_core::embedding::{format_embedding_line, parse_embedding_file, parse_embedding_line};
use charvoc_core::eval::SpeakerDataset;
use charvoc_core::{BitString, ProtectedRecord, ProtectedTemplate, SchemeParams};

fn text(data: &[u8]) -> Option<&str> {
    from_utf8(data).ok()
}

fn display_round_trip<T>(s: &str)
where
    T: FromStr + ToString + PartialEq + std::fmt::Debug,
{
    if let Ok(v) = s.parse::<T>() {
        let again = v.to_string();
        let back = again.parse::<T>().ok().expect("re-encoded value must parse");
        assert_eq!(back, v);
    }
}

pub fn embedding_line(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(line) = parse_embedding_line(s, 1) {
        let again = format_embedding_line(line.speaker.as_deref(), &line.embedding);
        assert_eq!(parse_embedding_line(&again, 1).unwrap(), line);
    }
}

pub fn embedding_file(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(lines) = parse_embedding_file(s) {
        let dim = lines.first().map(|l| l.embedding.dim());
        assert!(lines.iter().all(|l| Some(l.embedding.dim()) == dim));
    }
    if let Ok(ds) = SpeakerDataset::parse(s, "fuzz") {
        let back = SpeakerDataset::parse(&ds.to_text(), "fuzz").unwrap();
        assert_eq!(back, ds);
    }
}

pub fn record_line(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(r) = ProtectedRecord::parse_line(s) {
        assert_eq!(ProtectedRecord::parse_line(&r.to_line()).unwrap(), r);
    }
}

pub fn session_line(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(c) = Challenge::parse_line(s) {
        assert_eq!(Challenge::parse_line(&c.to_line()).unwrap(), c);
    }
}

pub fn protected_template(data: &[u8]) {
    if let Some(s) = text(data) {
        display_round_trip::<ProtectedTemplate>(s);
    }
}

pub fn baseline_template(data: &[u8]) {
    if let Some(s) = text(data) {
        display_round_trip::<BaselineTemplate>(s);
    }
}

pub fn params(data: &[u8]) {
    if let Some(s) = text(data) {
        display_round_trip::<SchemeParams>(s);
        display_round_trip::<BaselineParams>(s);
    }
}

pub fn bits(data: &[u8]) {
    let Some((&len, rest)) = data.split_first() else { return };
    let len = len as usize;
    if let Ok(b) = BitString::from_bytes(rest, len) {
        assert_eq!(b.to_bytes(), rest);
        assert_eq!(BitString::from_hex(&b.to_hex(), len).unwrap(), b);
    }
    if let Some(s) = text(rest) {
        if let Ok(b) = BitString::from_hex(s, len) {
            assert_eq!(b.to_hex(), s);
        }
    }
    if let Ok(code) = IndexCode::from_be_bytes(rest, len.max(1) as u32) {
        assert_eq!(code.to_be_bytes(), rest);
    }
}

pub fn transcript(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Some(digits) = normalize_transcript(s) {
        assert!(digits.bytes().all(|b| b.is_ascii_digit()));
        assert_eq!(normalize_transcript(&digits).as_deref(), Some(digits.as_str()));
    }
}

pub type Check = fn(&[u8]);

/// Target name to check, for replaying seed corpora.
pub const TARGETS: &[(&str, Check)] = &[
    ("embedding_line", embedding_line),
    ("embedding_file", embedding_file),
    ("record_line", record_line),
    ("session_line", session_line),
    ("protected_template", protected_template),
    ("baseline_template", baseline_template),
    ("params", params),
    ("bits", bits),
    ("transcript", transcript),
];
