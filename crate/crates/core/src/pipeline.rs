//! End-to-end runs: ingest, cohort, matrices, grouping, tests, reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cohort::{build_matrices, column_patient_counts, event_axis_size, MatrixError, WindowSpec};
use crate::config::{ConfigError, RunConfig};
use crate::ingest::{cohort_for_drug, load_store, CohortError, IngestError, IngestReport};
use crate::readcode::{Dictionary, DictionaryError, KeyMode};
use crate::signal::{
    event_statistics, read_event_table, report_file_name, select_signals, write_event_table, write_report, EventStat,
    ReportFormat, SignalError, SignalQuery, SignalRecord,
};
use crate::special::NumericError;
use crate::stats::{group_patients, StatsError};
use crate::synth::{generate, SynthConfig, SynthError};

pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no cohort patient has any event in either window")]
    NoWindowEvents,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-parsable failure category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Ingest(IngestError::FileUnreadable { .. }) => "FileUnreadable",
            Error::Ingest(IngestError::MalformedRow(_)) => "MalformedRow",
            Error::Cohort(_) | Error::Matrix(MatrixError::EmptyCohort) | Error::NoWindowEvents => "EmptyCohort",
            Error::Matrix(MatrixError::UnknownPatient(_)) | Error::Matrix(MatrixError::DuplicatePatient(_)) => {
                "UnknownPatient"
            }
            Error::Matrix(MatrixError::BadWindow) | Error::Config(_) => "InvalidConfig",
            Error::Stats(e) | Error::Signal(SignalError::Stats(e)) => stats_category(e),
            Error::Signal(SignalError::AxisMismatch(_)) => "AxisMismatch",
            Error::Signal(SignalError::InvalidQuery(_)) => "InvalidConfig",
            Error::Signal(SignalError::BadEventTable { .. }) => "MalformedRow",
            Error::Signal(SignalError::Io { .. }) | Error::Io { .. } => "IoError",
            Error::Synth(SynthError::InvalidConfig(_)) => "InvalidConfig",
            Error::Synth(SynthError::Io { .. }) => "IoError",
            Error::Dictionary(_) => "FileUnreadable",
        }
    }
}

fn stats_category(e: &StatsError) -> &'static str {
    match e {
        StatsError::TooFewPatients { .. } => "TooFewPatients",
        StatsError::BadGroupSize(_) => "InvalidConfig",
        StatsError::LengthMismatch(..) => "LengthMismatch",
        StatsError::DegenerateInput(_) => "DegenerateInput",
        StatsError::BadPopulation { .. } => "BadPopulation",
        StatsError::Numeric(NumericError::NonConvergence { .. }) => "NonConvergence",
        StatsError::Numeric(NumericError::Domain(_)) => "NonConvergence",
    }
}

/// Key figures of a `detect` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ingest: IngestReport,
    pub cohort_size: usize,
    pub retained_patients: usize,
    pub group_count: usize,
    pub event_axis_full: usize,
    pub event_axis_level3: usize,
    pub events_tested: usize,
    pub significant_events: usize,
    pub signals: Vec<SignalRecord>,
    pub report_path: PathBuf,
    pub events_path: PathBuf,
}

impl RunSummary {
    /// `key=value` lines, followed by the effective config.
    pub fn render(&self, config: &RunConfig) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("status", "ok".into());
        kv("ingest.rows_read", self.ingest.rows_read.to_string());
        kv("ingest.rows_accepted", self.ingest.rows_accepted.to_string());
        kv("ingest.rows_rejected", self.ingest.rows_rejected.to_string());
        kv("ingest.distinct_patients", self.ingest.distinct_patients.to_string());
        kv(
            "ingest.distinct_event_codes",
            self.ingest.distinct_event_codes.to_string(),
        );
        kv("cohort_size", self.cohort_size.to_string());
        kv("retained_patients", self.retained_patients.to_string());
        kv("group_count", self.group_count.to_string());
        kv("event_axis_full", self.event_axis_full.to_string());
        kv("event_axis_level3", self.event_axis_level3.to_string());
        kv("events_tested", self.events_tested.to_string());
        kv("significant_events", self.significant_events.to_string());
        kv("signals_reported", self.signals.len().to_string());
        kv("report", file_name(&self.report_path));
        kv("events", file_name(&self.events_path));
        s + &config.echo()
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Report name for a query: `signals_<order>_<mode>`, with `_<chapter>`
/// appended when a chapter filter is active.
pub fn report_name(query: &SignalQuery, mode: KeyMode, format: ReportFormat) -> String {
    let base = report_file_name(query.order, mode, format);
    match &query.chapter_prefix {
        Some(ch) => {
            let (stem, ext) = base.rsplit_once('.').expect("has extension");
            format!("{stem}_{ch}.{ext}")
        }
        None => base,
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// In-memory statistics for a cohort, shared by `detect` and the tests.
#[derive(Debug, Clone)]
pub struct CohortAnalysis {
    pub cohort_size: usize,
    pub retained_patients: usize,
    pub group_count: usize,
    pub event_axis: usize,
    pub stats: Vec<EventStat>,
}

pub fn analyze(store: &crate::ingest::RecordStore, config: &RunConfig) -> Result<CohortAnalysis, Error> {
    let cohort = cohort_for_drug(store, &config.drug_codes)?;
    let window = WindowSpec::new(config.window_days)?;
    let (a, b) = build_matrices(store, &cohort, window, config.mode)?;
    let x = group_patients(&a, config.group_size, config.remainder)?;
    let y = group_patients(&b, config.group_size, config.remainder)?;
    if a.n_events() == 0 {
        return Err(Error::NoWindowEvents);
    }
    let stats = event_statistics(
        &x,
        &y,
        &column_patient_counts(&a),
        &column_patient_counts(&b),
        cohort.len() as u64,
        config.test,
    )?;
    Ok(CohortAnalysis {
        cohort_size: cohort.len(),
        retained_patients: x.retained_patients(),
        group_count: x.group_count(),
        event_axis: a.n_events(),
        stats,
    })
}

/// Runs the full pipeline and writes the ranked report, the per-event table
/// and `summary.txt` into `config.out`.
pub fn run_detect(config: &RunConfig) -> Result<RunSummary, Error> {
    let dictionary = config.dictionary.as_ref().map(Dictionary::load).transpose()?;
    let (store, ingest) = load_store(&config.patients, &config.therapy, &config.medical, config.strictness)?;
    let analysis = analyze(&store, config)?;

    let cohort = cohort_for_drug(&store, &config.drug_codes)?;
    let window = WindowSpec::new(config.window_days)?;
    let other = match config.mode {
        KeyMode::FullCode => KeyMode::Level3,
        KeyMode::Level3 => KeyMode::FullCode,
    };
    let other_axis = event_axis_size(&store, &cohort, window, other)?;
    let (event_axis_full, event_axis_level3) = match config.mode {
        KeyMode::FullCode => (analysis.event_axis, other_axis),
        KeyMode::Level3 => (other_axis, analysis.event_axis),
    };

    let signals = select_signals(&analysis.stats, &config.query)?;
    let significant_events = analysis.stats.iter().filter(|s| s.p < config.query.p_max).count();

    create_dir(&config.out)?;
    let report_path = config.out.join(report_name(&config.query, config.mode, config.format));
    write_report(&signals, dictionary.as_ref(), config.format, &report_path)?;
    let events_path = config.out.join(format!("events_{}.tsv", config.mode.name()));
    write_event_table(&analysis.stats, &events_path)?;

    let summary = RunSummary {
        ingest,
        cohort_size: analysis.cohort_size,
        retained_patients: analysis.retained_patients,
        group_count: analysis.group_count,
        event_axis_full,
        event_axis_level3,
        events_tested: analysis.stats.len(),
        significant_events,
        signals,
        report_path,
        events_path,
    };
    let summary_path = config.out.join(SUMMARY_FILE);
    std::fs::write(&summary_path, summary.render(config)).map_err(|source| Error::Io {
        path: summary_path.display().to_string(),
        source,
    })?;
    Ok(summary)
}

/// Re-queries a per-event table written by `detect`.
pub fn run_report(
    events_path: impl AsRef<Path>,
    mode: KeyMode,
    query: &SignalQuery,
    dictionary: Option<&Path>,
    format: ReportFormat,
    out_dir: impl AsRef<Path>,
) -> Result<(PathBuf, Vec<SignalRecord>), Error> {
    let dictionary = dictionary.map(Dictionary::load).transpose()?;
    let stats = read_event_table(events_path, mode)?;
    let records = select_signals(&stats, query)?;
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;
    let path = out_dir.join(report_name(query, mode, format));
    write_report(&records, dictionary.as_ref(), format, &path)?;
    Ok((path, records))
}

/// Generates a synthetic population and writes its four files.
pub fn run_synth(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, Error> {
    let data = generate(config)?;
    Ok(data.write_to_dir(out_dir)?)
}
