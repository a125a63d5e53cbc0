//! Read code parsing and hierarchy handling.
//!
//! A Read code is seven ASCII characters: a five character core that is
//! hierarchical from left to right and padded with trailing dots, followed by
//! a two character term suffix. `N24..00` is a level 3 code and `N245111` is
//! one of its level 5 descendants.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

pub const CODE_LEN: usize = 7;
pub const CORE_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadCodeError {
    #[error("malformed read code {raw:?}: {reason}")]
    MalformedCode { raw: String, reason: &'static str },
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("cannot read dictionary {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("dictionary {path} row {row}: {reason}")]
    BadRow { path: String, row: u64, reason: String },
}

/// A validated seven character Read code.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadCode {
    raw: [u8; CODE_LEN],
    level: u8,
}

impl ReadCode {
    pub fn parse(raw: &str) -> Result<Self, ReadCodeError> {
        let bad = |reason| ReadCodeError::MalformedCode {
            raw: raw.to_string(),
            reason,
        };
        if raw.chars().count() != CODE_LEN {
            return Err(bad("expected exactly 7 characters"));
        }
        if !raw.is_ascii() {
            return Err(bad("non-ASCII character"));
        }
        let bytes = raw.as_bytes();
        let mut level = 0u8;
        let mut padding = false;
        for &c in &bytes[..CORE_LEN] {
            if c == b'.' {
                padding = true;
            } else if padding {
                return Err(bad("dot padding must be trailing"));
            } else if c.is_ascii_alphanumeric() {
                level += 1;
            } else {
                return Err(bad("core characters must be alphanumeric"));
            }
        }
        if level == 0 {
            return Err(bad("core has no hierarchy characters"));
        }
        if !bytes[CORE_LEN..].iter().all(u8::is_ascii_alphanumeric) {
            return Err(bad("term characters must be alphanumeric"));
        }
        let mut code = [0u8; CODE_LEN];
        code.copy_from_slice(bytes);
        Ok(ReadCode { raw: code, level })
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII bytes pass validation.
        std::str::from_utf8(&self.raw).expect("ascii")
    }

    /// Hierarchy part, dot padded to five characters.
    pub fn core(&self) -> &str {
        &self.as_str()[..CORE_LEN]
    }

    /// Term/synonym suffix.
    pub fn term(&self) -> &str {
        &self.as_str()[CORE_LEN..]
    }

    /// Depth in the hierarchy, 1 to 5.
    pub fn level(&self) -> u8 {
        self.level
    }

    /// First character of the code, e.g. `B` for neoplasms.
    pub fn chapter(&self) -> char {
        self.raw[0] as char
    }

    /// Truncates to the level 3 parent with a `00` term.
    ///
    /// Codes above level 3 keep their own padding dots, so `D....00` maps to
    /// itself and `SL...15` maps to `SL...00`.
    pub fn to_level3(&self) -> ReadCode {
        let mut raw = *b".....00";
        raw[..3].copy_from_slice(&self.raw[..3]);
        ReadCode {
            raw,
            level: self.level.min(3),
        }
    }

    pub fn key(&self, mode: KeyMode) -> EventKey {
        match mode {
            KeyMode::FullCode => EventKey { mode, code: *self },
            KeyMode::Level3 => to_level3_key(self),
        }
    }
}

impl fmt::Debug for ReadCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReadCode({})", self.as_str())
    }
}

impl fmt::Display for ReadCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReadCode {
    type Err = ReadCodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReadCode::parse(s)
    }
}

pub fn parse_readcode(raw: &str) -> Result<ReadCode, ReadCodeError> {
    ReadCode::parse(raw)
}

pub fn to_level3_key(code: &ReadCode) -> EventKey {
    EventKey {
        mode: KeyMode::Level3,
        code: code.to_level3(),
    }
}

pub fn chapter_of(code: &ReadCode) -> char {
    code.chapter()
}

/// How event identities are formed from raw codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyMode {
    /// The full seven character code, term suffix included.
    #[serde(rename = "full")]
    FullCode,
    /// The level 3 ancestor, `XYZ..00`.
    Level3,
}

impl KeyMode {
    pub fn name(self) -> &'static str {
        match self {
            KeyMode::FullCode => "full",
            KeyMode::Level3 => "level3",
        }
    }
}

impl fmt::Display for KeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KeyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "fullcode" => Ok(KeyMode::FullCode),
            "level3" => Ok(KeyMode::Level3),
            other => Err(format!("unknown mode {other:?} (expected full|level3)")),
        }
    }
}

/// Normalized event identity. Orders by key string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventKey {
    mode: KeyMode,
    code: ReadCode,
}

impl EventKey {
    pub fn mode(&self) -> KeyMode {
        self.mode
    }

    pub fn code(&self) -> &ReadCode {
        &self.code
    }

    pub fn as_str(&self) -> &str {
        self.code.as_str()
    }

    /// Re-keys under Level3. Idempotent.
    pub fn to_level3(&self) -> EventKey {
        to_level3_key(&self.code)
    }

    pub fn starts_with(&self, prefix: &str) -> bool {
        self.as_str().starts_with(prefix)
    }
}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.code.raw.cmp(&other.code.raw).then(self.mode.cmp(&other.mode))
    }
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Human readable terms keyed by code string.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    terms: HashMap<String, String>,
}

#[derive(Deserialize)]
struct DictionaryRow {
    code: String,
    description: String,
}

impl Dictionary {
    /// Loads a `code,description` CSV.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DictionaryError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|source| DictionaryError::Unreadable {
            path: name.clone(),
            source,
        })?;
        let mut terms = HashMap::new();
        for (i, row) in reader.deserialize::<DictionaryRow>().enumerate() {
            let row = row.map_err(|e| DictionaryError::BadRow {
                path: name.clone(),
                row: i as u64 + 2,
                reason: e.to_string(),
            })?;
            terms.insert(row.code.trim().to_string(), row.description.trim().to_string());
        }
        Ok(Dictionary { terms })
    }

    pub fn insert(&mut self, code: impl Into<String>, description: impl Into<String>) {
        self.terms.insert(code.into(), description.into());
    }

    pub fn describe(&self, code: &str) -> Option<&str> {
        self.terms.get(code).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(s: &str) -> ReadCode {
        ReadCode::parse(s).unwrap()
    }

    #[test]
    fn level3_parent_from_table() {
        let c = code("N24..00");
        assert_eq!(c.level(), 3);
        assert_eq!(c.core(), "N24..");
        assert_eq!(c.term(), "00");
    }

    #[test]
    fn level5_toe_pain() {
        let c = code("N245111");
        assert_eq!(c.level(), 5);
        assert_eq!(c.core(), "N2451");
        assert_eq!(c.term(), "11");
    }

    #[test]
    fn rejects_inner_dot() {
        assert!(matches!(
            ReadCode::parse("N.245.0"),
            Err(ReadCodeError::MalformedCode { .. })
        ));
    }

    #[test]
    fn rejects_bad_shapes() {
        for raw in ["N24..0", "N24..000", ".......", "N24..0.", "N24-.00", "N24..0é", ""] {
            assert!(ReadCode::parse(raw).is_err(), "{raw}");
        }
    }

    #[test]
    fn level3_keys() {
        assert_eq!(code("N245.16").key(KeyMode::Level3).as_str(), "N24..00");
        assert_eq!(code("N24..00").key(KeyMode::Level3).as_str(), "N24..00");
        assert_eq!(code("I71..00").key(KeyMode::Level3).as_str(), "I71..00");
        assert_eq!(code("D....00").key(KeyMode::Level3).as_str(), "D....00");
        assert_eq!(code("SL...15").key(KeyMode::Level3).as_str(), "SL...00");
        assert_eq!(code("N245.17").key(KeyMode::FullCode).as_str(), "N245.17");
    }

    #[test]
    fn no_i_one_normalization() {
        let letter = code("IZ12.00").key(KeyMode::Level3);
        let digit = code("1Z12.00").key(KeyMode::Level3);
        assert_ne!(letter, digit);
    }

    #[test]
    fn chapters() {
        assert_eq!(chapter_of(&code("B49..00")), 'B');
        assert_eq!(chapter_of(&code("N24..00")), 'N');
        assert_eq!(chapter_of(&code("1Z12.00")), '1');
    }

    #[test]
    fn dictionary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.csv");
        std::fs::write(
            &path,
            "code,description\nN24..00,Other soft tissue disorders\nN245111,Toe pain\n",
        )
        .unwrap();
        let dict = Dictionary::load(&path).unwrap();
        assert_eq!(dict.describe("N245111"), Some("Toe pain"));
        assert_eq!(dict.describe("N245.16"), None);
    }

    fn valid_code() -> impl Strategy<Value = String> {
        (1usize..=5, "[A-Za-z0-9]{5}", "[A-Za-z0-9]{2}").prop_map(|(level, core, term)| {
            let mut s: String = core.chars().take(level).collect();
            s.extend(std::iter::repeat_n('.', CORE_LEN - level));
            s + &term
        })
    }

    proptest! {
        #[test]
        fn parse_never_panics(raw in "\\PC{7}") {
            let _ = ReadCode::parse(&raw);
        }

        #[test]
        fn parse_never_panics_ascii(raw in "[ -~]{7}") {
            if let Ok(c) = ReadCode::parse(&raw) {
                prop_assert_eq!(c.as_str(), raw.as_str());
            }
        }

        #[test]
        fn roundtrip_and_levels(raw in valid_code()) {
            let c = ReadCode::parse(&raw).unwrap();
            prop_assert_eq!(c.to_string(), raw.clone());
            prop_assert_eq!(c.level() as usize, raw[..5].chars().filter(|&ch| ch != '.').count());
            let k = c.key(KeyMode::Level3);
            prop_assert!(k.code().level() <= 3);
            let k3 = k.to_level3();
            prop_assert_eq!(k3.as_str(), k.as_str());
            prop_assert_eq!(ReadCode::parse(k.as_str()).unwrap(), *k.code());
        }
    }
}
