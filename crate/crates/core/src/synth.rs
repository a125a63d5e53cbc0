//! Seeded synthetic populations with known injected effects.
//!
//! Each exposed patient gets one prescription of the drug at an index date
//! drawn uniformly from a date range. Every vocabulary code then occurs on
//! each day of the before and after windows independently with its daily
//! baseline probability; injected codes use `baseline * multiplier` in the
//! after window (and in the before window too when the injection is not
//! after-only). A Poisson number of extra events is scattered outside both
//! windows as noise the pipeline must ignore.
//!
//! # Random stream
//!
//! All randomness comes from SplitMix64 (Steele, Lea and Flood, 2014):
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! Patient `i` (0-based) draws from its own SplitMix64 seeded with output
//! `i + 1` of the master stream, which is `mix(seed + (i + 1) * gamma)`.
//! Uniforms are `(next >> 11) * 2^-53`; bounded integers are
//! `(next * n) >> 64`. Day occurrences use geometric gaps
//! `floor(ln(1 - u) / ln(1 - p))`, which is equivalent to one Bernoulli
//! draw per day. Poisson counts use Knuth's product method.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::ingest::{MedicalEvent, Prescription, RecordStore, MEDICAL_HEADER, PATIENTS_HEADER, THERAPY_HEADER};
use crate::readcode::ReadCode;

pub const TRUTH_HEADER: [&str; 2] = ["readcode", "multiplier"];
pub const PATIENTS_FILE: &str = "patients.csv";
pub const THERAPY_FILE: &str = "therapy.csv";
pub const MEDICAL_FILE: &str = "medical.csv";
pub const TRUTH_FILE: &str = "truth.csv";

/// Days either side of the windows over which noise events are spread.
const NOISE_SPAN_DAYS: u64 = 365;
const MAX_POISSON_MEAN: f64 = 100.0;
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Output `n` (1-based) of the stream seeded with `seed`, without
    /// stepping through the earlier outputs.
    pub fn nth_output(seed: u64, n: u64) -> u64 {
        mix(seed.wrapping_add(n.wrapping_mul(GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Number of failures before the first success of a Bernoulli(p) trial.
    fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 0;
        }
        let u = 1.0 - self.next_f64(); // (0, 1]
        let gap = u.ln() / (-p).ln_1p();
        if gap >= u64::MAX as f64 {
            u64::MAX
        } else {
            gap as u64
        }
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let limit = (-mean).exp();
        let mut k = 0;
        let mut prod = self.next_f64();
        while prod > limit {
            k += 1;
            prod *= self.next_f64();
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabEntry {
    pub code: ReadCode,
    /// Probability of an occurrence on any single day.
    pub daily_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub code: ReadCode,
    pub multiplier: f64,
    /// Lift the rate only after exposure; otherwise both windows are lifted
    /// and the code is a decoy rather than an ADR.
    pub after_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_exposed: usize,
    /// Poisson mean of noise events placed outside both windows.
    pub n_background_events_per_patient: f64,
    pub vocabulary: Vec<VocabEntry>,
    pub injections: Vec<Injection>,
    pub index_start: NaiveDate,
    pub index_end: NaiveDate,
    pub drug_code: String,
    pub window_days: u32,
}

/// Daily probability giving `window_prob` chance of at least one occurrence
/// over `days` days.
pub fn daily_prob_for_window(window_prob: f64, days: u32) -> f64 {
    -((-window_prob).ln_1p() / f64::from(days)).exp_m1()
}

const ALNUM: &[u8; 36] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const LETTERS: &[u8; 26] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const CHILD_SUFFIXES: [&str; 5] = ["..00", "1.00", "2.00", "1100", "2100"];

/// `n` distinct codes in families of five sharing a level 3 stem: the stem
/// itself, two level 4 children and two level 5 grandchildren.
pub fn standard_codes(n: usize) -> Vec<ReadCode> {
    (0..n)
        .map(|i| {
            let (stem, child) = (i / CHILD_SUFFIXES.len(), i % CHILD_SUFFIXES.len());
            let mut s = String::with_capacity(7);
            s.push(LETTERS[stem % 26] as char);
            s.push(ALNUM[(stem / 26) % 36] as char);
            s.push(ALNUM[(stem / (26 * 36)) % 36] as char);
            s.push_str(CHILD_SUFFIXES[child]);
            ReadCode::parse(&s).expect("generated code is valid")
        })
        .collect()
}

/// Vocabulary of [`standard_codes`] at a common per-window baseline.
pub fn standard_vocabulary(n: usize, window_prob: f64, window_days: u32) -> Vec<VocabEntry> {
    let daily_prob = daily_prob_for_window(window_prob, window_days);
    standard_codes(n)
        .into_iter()
        .map(|code| VocabEntry { code, daily_prob })
        .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        let vocabulary = standard_vocabulary(200, 0.01, 60);
        let injections = [7usize, 42, 77, 112, 147]
            .iter()
            .map(|&i| Injection {
                code: vocabulary[i].code,
                multiplier: 4.0,
                after_only: true,
            })
            .collect();
        SynthConfig {
            seed: 1,
            n_exposed: 2000,
            n_background_events_per_patient: 2.0,
            vocabulary,
            injections,
            index_start: NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid"),
            index_end: NaiveDate::from_ymd_opt(2010, 12, 31).expect("valid"),
            drug_code: "PIO".to_string(),
            window_days: 60,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_exposed == 0 {
            return bad("n_exposed must be at least 1".into());
        }
        if self.vocabulary.is_empty() {
            return bad("vocabulary is empty".into());
        }
        if self.window_days == 0 {
            return bad("window_days must be at least 1".into());
        }
        if self.index_end < self.index_start {
            return bad("index_end precedes index_start".into());
        }
        if self.drug_code.is_empty() || self.drug_code.contains([',', '\n', '"']) {
            return bad(format!("unusable drug code {:?}", self.drug_code));
        }
        if !(0.0..=MAX_POISSON_MEAN).contains(&self.n_background_events_per_patient) {
            return bad(format!("background event mean must lie in [0, {MAX_POISSON_MEAN}]"));
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.vocabulary {
            if !(v.daily_prob > 0.0 && v.daily_prob < 1.0) {
                return bad(format!("baseline for {} must lie in (0, 1)", v.code));
            }
            if !seen.insert(v.code) {
                return bad(format!("{} listed twice in vocabulary", v.code));
            }
        }
        let mut injected = std::collections::HashSet::new();
        for inj in &self.injections {
            if !(inj.multiplier > 0.0 && inj.multiplier.is_finite()) {
                return bad(format!("multiplier for {} must be positive", inj.code));
            }
            let Some(v) = self.vocabulary.iter().find(|v| v.code == inj.code) else {
                return bad(format!("injected code {} is not in the vocabulary", inj.code));
            };
            if v.daily_prob * inj.multiplier >= 1.0 {
                return bad(format!("lifted daily rate for {} reaches 1", inj.code));
            }
            if !injected.insert(inj.code) {
                return bad(format!("{} injected twice", inj.code));
            }
        }
        Ok(())
    }

    fn rates(&self) -> Vec<(ReadCode, f64, f64)> {
        self.vocabulary
            .iter()
            .map(|v| {
                let inj = self.injections.iter().find(|i| i.code == v.code);
                let after = v.daily_prob * inj.map_or(1.0, |i| i.multiplier);
                let before = match inj {
                    Some(i) if !i.after_only => v.daily_prob * i.multiplier,
                    _ => v.daily_prob,
                };
                (v.code, before, after)
            })
            .collect()
    }
}

/// Generated records plus the injected ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub patients: Vec<String>,
    pub prescriptions: Vec<Prescription>,
    pub events: Vec<MedicalEvent>,
    pub truth: Vec<Injection>,
}

fn patient_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(6);
    format!("P{i:0width$}")
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticData, SynthError> {
    config.validate()?;
    let rates = config.rates();
    let days = u64::from(config.window_days);
    let span = (config.index_end - config.index_start).num_days() as u64 + 1;
    let n = config.n_exposed;

    let per_patient: Vec<(String, Prescription, Vec<MedicalEvent>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::new(SplitMix64::nth_output(config.seed, i as u64 + 1));
            let id = patient_id(i, n);
            let index = config.index_start + Duration::days(rng.below(span) as i64);
            let mut events = Vec::new();
            let mut push = |code: ReadCode, offset: i64| {
                events.push(MedicalEvent {
                    patient_id: id.clone(),
                    code,
                    date: index + Duration::days(offset),
                })
            };
            for &(code, p_before, p_after) in &rates {
                for (p, first) in [(p_before, -(days as i64)), (p_after, 0)] {
                    let mut pos = rng.geometric(p);
                    while pos < days {
                        push(code, first + pos as i64);
                        pos = pos.saturating_add(1).saturating_add(rng.geometric(p));
                    }
                }
            }
            for _ in 0..rng.poisson(config.n_background_events_per_patient) {
                let code = config.vocabulary[rng.below(config.vocabulary.len() as u64) as usize].code;
                let far = rng.below(NOISE_SPAN_DAYS) as i64;
                let offset = if rng.below(2) == 0 {
                    -(days as i64) - 1 - far
                } else {
                    days as i64 + far
                };
                push(code, offset);
            }
            events.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.code.cmp(&b.code)));
            let rx = Prescription {
                patient_id: id.clone(),
                drug_code: config.drug_code.clone(),
                date: index,
            };
            (id, rx, events)
        })
        .collect();

    let mut data = SyntheticData {
        patients: Vec::with_capacity(n),
        prescriptions: Vec::with_capacity(n),
        events: Vec::new(),
        truth: config.injections.clone(),
    };
    for (id, rx, events) in per_patient {
        data.patients.push(id);
        data.prescriptions.push(rx);
        data.events.extend(events);
    }
    Ok(data)
}

impl SyntheticData {
    pub fn to_store(&self) -> RecordStore {
        RecordStore::from_records(
            self.patients.iter().cloned(),
            self.prescriptions.iter().cloned(),
            self.events.iter().cloned(),
        )
        .expect("generated records reference generated patients")
    }

    /// Writes `patients.csv`, `therapy.csv`, `medical.csv` and `truth.csv`
    /// into `dir`, returning their paths. `truth.csv` lists the after-only
    /// injections; decoys lifted in both windows are left out.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, SynthError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let paths: Vec<PathBuf> = [PATIENTS_FILE, THERAPY_FILE, MEDICAL_FILE, TRUTH_FILE]
            .iter()
            .map(|f| dir.join(f))
            .collect();
        write_csv(
            &paths[0],
            PATIENTS_HEADER,
            self.patients.iter().map(|p| vec![p.clone()]),
        )?;
        write_csv(
            &paths[1],
            THERAPY_HEADER,
            self.prescriptions
                .iter()
                .map(|rx| vec![rx.patient_id.clone(), rx.drug_code.clone(), rx.date.to_string()]),
        )?;
        write_csv(
            &paths[2],
            MEDICAL_HEADER,
            self.events
                .iter()
                .map(|e| vec![e.patient_id.clone(), e.code.to_string(), e.date.to_string()]),
        )?;
        write_csv(
            &paths[3],
            &TRUTH_HEADER,
            self.truth
                .iter()
                .filter(|i| i.after_only)
                .map(|i| vec![i.code.to_string(), i.multiplier.to_string()]),
        )?;
        Ok(paths)
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), SynthError> {
    let io = |source: std::io::Error| SynthError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| io(e.into()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct TruthRow {
    readcode: String,
    multiplier: f64,
}

/// Reads a `truth.csv` manifest back as `(code, multiplier)` pairs.
pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<(ReadCode, f64)>, SynthError> {
    let path = path.as_ref();
    let bad = |m: String| SynthError::InvalidConfig(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    r.deserialize::<TruthRow>()
        .map(|row| {
            let row = row.map_err(|e| bad(e.to_string()))?;
            let code = ReadCode::parse(&row.readcode).map_err(|e| bad(e.to_string()))?;
            Ok((code, row.multiplier))
        })
        .collect()
}
