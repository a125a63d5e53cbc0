//! Run configuration. Flags override config file values, which override the
//! defaults (60 day windows, groups of 100, p < 0.05).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use crate::cohort::DEFAULT_WINDOW_DAYS;
use crate::ingest::Strictness;
use crate::readcode::{KeyMode, ReadCode};
use crate::signal::{Direction, Order, ReportFormat, SignalQuery, DEFAULT_P_MAX};
use crate::stats::{Remainder, TestVariant, DEFAULT_GROUP_SIZE};
use crate::synth::{self, Injection, SynthConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Every setting optional; one of these comes from the config file and one
/// from the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub input_dir: Option<PathBuf>,
    pub patients: Option<PathBuf>,
    pub therapy: Option<PathBuf>,
    pub medical: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub drug_codes: Option<Vec<String>>,
    pub window_days: Option<u32>,
    pub mode: Option<KeyMode>,
    pub group_size: Option<usize>,
    pub remainder: Option<Remainder>,
    pub test: Option<TestVariant>,
    pub p_max: Option<f64>,
    pub order: Option<Order>,
    pub direction: Option<Direction>,
    pub chapter: Option<String>,
    pub top_k: Option<usize>,
    pub format: Option<ReportFormat>,
    pub skip_bad_rows: Option<bool>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_exposed: Option<usize>,
    pub vocabulary_size: Option<usize>,
    pub window_prob: Option<f64>,
    pub background_mean: Option<f64>,
    pub index_start: Option<NaiveDate>,
    pub index_end: Option<NaiveDate>,
    pub drug_code: Option<String>,
    pub injections: Option<Vec<InjectionSpec>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSpec {
    pub code: String,
    pub multiplier: f64,
    #[serde(default = "default_true")]
    pub after_only: bool,
}

fn default_true() -> bool {
    true
}

macro_rules! overlay {
    ($low:expr, $high:expr, $($field:ident),+) => {
        $( if $high.$field.is_some() { $low.$field = $high.$field; } )+
    };
}

impl PartialConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `higher` win.
    pub fn overlay(mut self, higher: PartialConfig) -> PartialConfig {
        overlay!(
            self,
            higher,
            input_dir,
            patients,
            therapy,
            medical,
            dictionary,
            drug_codes,
            window_days,
            mode,
            group_size,
            remainder,
            test,
            p_max,
            order,
            direction,
            chapter,
            top_k,
            format,
            skip_bad_rows,
            out,
            threads,
            seed
        );
        overlay!(
            self.synth,
            higher.synth,
            n_exposed,
            vocabulary_size,
            window_prob,
            background_mean,
            index_start,
            index_end,
            drug_code,
            injections
        );
        self
    }
}

/// Accepts a path to a file of codes (one per line or comma separated) or a
/// comma separated list.
pub fn parse_drug_codes(arg: &str) -> Result<Vec<String>, ConfigError> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read drug codes {arg}: {e}")))?
    } else {
        arg.to_string()
    };
    let codes: Vec<String> = text
        .split([',', '\n', '\r'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if codes.is_empty() {
        return Err(ConfigError(format!("no drug codes in {arg:?}")));
    }
    Ok(codes)
}

/// Fully resolved settings for `detect`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub patients: PathBuf,
    pub therapy: PathBuf,
    pub medical: PathBuf,
    pub dictionary: Option<PathBuf>,
    pub drug_codes: Vec<String>,
    pub window_days: u32,
    pub mode: KeyMode,
    pub group_size: usize,
    pub remainder: Remainder,
    pub test: TestVariant,
    pub query: SignalQuery,
    pub format: ReportFormat,
    pub strictness: Strictness,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn resolve(c: &PartialConfig) -> Result<Self, ConfigError> {
        let input = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf, ConfigError> {
            match (explicit, &c.input_dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(dir)) => Ok(dir.join(name)),
                (None, None) => Err(ConfigError(format!(
                    "no path for {name}; set input_dir or the file path"
                ))),
            }
        };
        let drug_codes = match &c.drug_codes {
            Some(codes) if !codes.is_empty() => codes.clone(),
            _ => return Err(ConfigError("no drug codes given".into())),
        };
        let query = SignalQuery {
            order: c.order.unwrap_or_default(),
            p_max: c.p_max.unwrap_or(DEFAULT_P_MAX),
            direction: c.direction.unwrap_or_default(),
            chapter_prefix: c.chapter.clone().filter(|s| !s.is_empty()),
            top_k: c.top_k,
        };
        query.validate().map_err(|e| ConfigError(e.to_string()))?;
        let window_days = c.window_days.unwrap_or(DEFAULT_WINDOW_DAYS);
        if window_days == 0 {
            return Err(ConfigError("window_days must be at least 1".into()));
        }
        let group_size = c.group_size.unwrap_or(DEFAULT_GROUP_SIZE);
        if group_size < 2 {
            return Err(ConfigError("group_size must be at least 2".into()));
        }
        if c.threads == Some(0) {
            return Err(ConfigError("threads must be at least 1".into()));
        }
        Ok(RunConfig {
            patients: input(&c.patients, synth::PATIENTS_FILE)?,
            therapy: input(&c.therapy, synth::THERAPY_FILE)?,
            medical: input(&c.medical, synth::MEDICAL_FILE)?,
            dictionary: c.dictionary.clone(),
            drug_codes,
            window_days,
            mode: c.mode.unwrap_or(KeyMode::FullCode),
            group_size,
            remainder: c.remainder.unwrap_or_default(),
            test: c.test.unwrap_or_default(),
            query,
            format: c.format.unwrap_or_default(),
            strictness: if c.skip_bad_rows.unwrap_or(false) {
                Strictness::SkipBad
            } else {
                Strictness::Strict
            },
            out: c.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            threads: c.threads,
        })
    }

    /// `config.<key>=<value>` lines for the run summary.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "config.{k}={v}");
        };
        kv("patients", self.patients.display().to_string());
        kv("therapy", self.therapy.display().to_string());
        kv("medical", self.medical.display().to_string());
        kv(
            "dictionary",
            self.dictionary
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("drug_codes", self.drug_codes.join(","));
        kv("window_days", self.window_days.to_string());
        kv("mode", self.mode.name().to_string());
        kv("group_size", self.group_size.to_string());
        kv("remainder", self.remainder.name().to_string());
        kv("test", format!("{:?}", self.test).to_lowercase());
        kv("p_max", self.query.p_max.to_string());
        kv("order", self.query.order.name().to_string());
        kv(
            "direction",
            match self.query.direction {
                Direction::IncreaseOnly => "increase",
                Direction::Both => "both",
            }
            .to_string(),
        );
        kv("chapter", self.query.chapter_prefix.clone().unwrap_or_default());
        kv("top_k", self.query.top_k.map(|k| k.to_string()).unwrap_or_default());
        kv("format", self.format.extension().to_string());
        kv("skip_bad_rows", (self.strictness == Strictness::SkipBad).to_string());
        kv("out", self.out.display().to_string());
        s
    }
}

/// Resolves the synth settings, starting from [`SynthConfig::default`].
pub fn resolve_synth(c: &PartialConfig) -> Result<(SynthConfig, PathBuf), ConfigError> {
    let mut cfg = SynthConfig::default();
    let s = &c.synth;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(days) = c.window_days {
        cfg.window_days = days;
    }
    if let Some(n) = s.n_exposed {
        cfg.n_exposed = n;
    }
    if let Some(mean) = s.background_mean {
        cfg.n_background_events_per_patient = mean;
    }
    if let Some(d) = s.index_start {
        cfg.index_start = d;
    }
    if let Some(d) = s.index_end {
        cfg.index_end = d;
    }
    if let Some(code) = &s.drug_code {
        cfg.drug_code = code.clone();
    } else if let Some(codes) = &c.drug_codes {
        if let [only] = codes.as_slice() {
            cfg.drug_code = only.clone();
        }
    }
    let size = s.vocabulary_size.unwrap_or(cfg.vocabulary.len());
    let window_prob = s.window_prob.unwrap_or(0.01);
    if !(window_prob > 0.0 && window_prob < 1.0) {
        return Err(ConfigError("synth.window_prob must lie in (0, 1)".into()));
    }
    cfg.vocabulary = synth::standard_vocabulary(size, window_prob, cfg.window_days.max(1));
    match &s.injections {
        Some(specs) => {
            cfg.injections = specs
                .iter()
                .map(|spec| {
                    Ok(Injection {
                        code: ReadCode::parse(&spec.code).map_err(|e| ConfigError(e.to_string()))?,
                        multiplier: spec.multiplier,
                        after_only: spec.after_only,
                    })
                })
                .collect::<Result<_, ConfigError>>()?;
        }
        None => cfg
            .injections
            .retain(|i| cfg.vocabulary.iter().any(|v| v.code == i.code)),
    }
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    Ok((cfg, out))
}
