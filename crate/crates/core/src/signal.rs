//! Ranked ADR signal tables.
//!
//! Every event on the shared axis gets a t-test over the grouped counts and
//! its R1/R2 ratios. A [`SignalQuery`] then filters by p-value, direction and
//! chapter prefix and orders the survivors either by ascending p or by
//! descending R1.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::readcode::{Dictionary, EventKey, KeyMode, ReadCode};
use crate::stats::{format_2dp, ratio_stats, t_test, GroupedMatrix, StatsError, TestVariant};

pub const DEFAULT_P_MAX: f64 = 0.05;

pub const REPORT_HEADER: [&str; 9] = ["rank", "readcode", "description", "NB", "NA", "R1", "R2", "t", "p"];
pub const EVENTS_HEADER: [&str; 7] = ["readcode", "NB", "NA", "N", "t", "df", "p"];

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("grouped matrices and counts do not share an event axis: {0}")]
    AxisMismatch(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad event table {path} row {row}: {reason}")]
    BadEventTable { path: String, row: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
pub enum Order {
    #[default]
    #[serde(rename = "p")]
    AscendingP,
    #[serde(rename = "r1")]
    DescendingR1,
}

impl Order {
    pub fn name(self) -> &'static str {
        match self {
            Order::AscendingP => "p",
            Order::DescendingR1 => "r1",
        }
    }
}

impl std::str::FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p" => Ok(Order::AscendingP),
            "r1" => Ok(Order::DescendingR1),
            other => Err(format!("unknown order {other:?} (expected p|r1)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Keep only events with more patients after exposure than before.
    #[default]
    #[serde(rename = "increase")]
    IncreaseOnly,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalQuery {
    pub order: Order,
    pub p_max: f64,
    pub direction: Direction,
    pub chapter_prefix: Option<String>,
    pub top_k: Option<usize>,
}

impl Default for SignalQuery {
    fn default() -> Self {
        SignalQuery {
            order: Order::AscendingP,
            p_max: DEFAULT_P_MAX,
            direction: Direction::IncreaseOnly,
            chapter_prefix: None,
            top_k: None,
        }
    }
}

impl SignalQuery {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(SignalError::InvalidQuery(format!(
                "p_max {} outside (0, 1]",
                self.p_max
            )));
        }
        if self.top_k == Some(0) {
            return Err(SignalError::InvalidQuery("top_k must be at least 1".into()));
        }
        Ok(())
    }

    fn admits(&self, s: &EventStat) -> bool {
        s.p < self.p_max
            && (self.direction == Direction::Both || s.n_after > s.n_before)
            && self
                .chapter_prefix
                .as_deref()
                .is_none_or(|prefix| s.event_key.starts_with(prefix))
    }
}

/// Unfiltered statistics for one event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStat {
    pub event_key: EventKey,
    pub n_before: u64,
    pub n_after: u64,
    pub n_population: u64,
    pub r1: f64,
    pub r2_percent: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub event_key: EventKey,
    pub description: Option<String>,
    pub n_before: u64,
    pub n_after: u64,
    pub r1: f64,
    pub r2_percent: f64,
    pub t: f64,
    pub p: f64,
    pub rank: usize,
}

impl From<&EventStat> for SignalRecord {
    fn from(s: &EventStat) -> Self {
        SignalRecord {
            event_key: s.event_key,
            description: None,
            n_before: s.n_before,
            n_after: s.n_after,
            r1: s.r1,
            r2_percent: s.r2_percent,
            t: s.t,
            p: s.p,
            rank: 0,
        }
    }
}

/// Runs the t-test and ratio statistics for every event on the axis.
///
/// `counts_before`/`counts_after` are N_B/N_A per event and `n_population`
/// is the exposed cohort size.
pub fn event_statistics(
    before: &GroupedMatrix,
    after: &GroupedMatrix,
    counts_before: &[u32],
    counts_after: &[u32],
    n_population: u64,
    variant: TestVariant,
) -> Result<Vec<EventStat>, SignalError> {
    if before.event_keys() != after.event_keys() {
        return Err(SignalError::AxisMismatch("before/after event keys differ".into()));
    }
    if before.group_sizes() != after.group_sizes() {
        return Err(SignalError::AxisMismatch("before/after groupings differ".into()));
    }
    let e = before.n_events();
    if counts_before.len() != e || counts_after.len() != e {
        return Err(SignalError::AxisMismatch(format!(
            "{e} events but {} before / {} after counts",
            counts_before.len(),
            counts_after.len()
        )));
    }
    (0..e)
        .into_par_iter()
        .map(|i| {
            let test = t_test(variant, &before.column(i), &after.column(i))?;
            let nb = u64::from(counts_before[i]);
            let na = u64::from(counts_after[i]);
            let ratios = ratio_stats(nb, na, n_population)?;
            Ok(EventStat {
                event_key: before.event_keys()[i],
                n_before: nb,
                n_after: na,
                n_population,
                r1: ratios.r1,
                r2_percent: ratios.r2_percent,
                t: test.t,
                df: test.df,
                p: test.p,
            })
        })
        .collect()
}

fn by_p(a: &SignalRecord, b: &SignalRecord) -> Ordering {
    a.p.total_cmp(&b.p)
        .then_with(|| b.r1.total_cmp(&a.r1))
        .then_with(|| a.event_key.cmp(&b.event_key))
}

fn by_r1(a: &SignalRecord, b: &SignalRecord) -> Ordering {
    b.r1.total_cmp(&a.r1)
        .then_with(|| a.p.total_cmp(&b.p))
        .then_with(|| a.event_key.cmp(&b.event_key))
}

fn assign_ranks(records: &mut [SignalRecord]) {
    for (i, r) in records.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

/// Orders by ascending p; ties go to larger R1, then key.
pub fn rank_by_p(mut records: Vec<SignalRecord>) -> Vec<SignalRecord> {
    records.sort_by(by_p);
    assign_ranks(&mut records);
    records
}

/// Orders by descending R1; ties go to smaller p, then key.
pub fn rank_by_r1(mut records: Vec<SignalRecord>) -> Vec<SignalRecord> {
    records.sort_by(by_r1);
    assign_ranks(&mut records);
    records
}

/// Applies `query` to precomputed statistics.
pub fn select_signals(stats: &[EventStat], query: &SignalQuery) -> Result<Vec<SignalRecord>, SignalError> {
    query.validate()?;
    let kept: Vec<SignalRecord> = stats
        .iter()
        .filter(|s| query.admits(s))
        .map(SignalRecord::from)
        .collect();
    let mut ranked = match query.order {
        Order::AscendingP => rank_by_p(kept),
        Order::DescendingR1 => rank_by_r1(kept),
    };
    if let Some(k) = query.top_k {
        ranked.truncate(k);
    }
    Ok(ranked)
}

/// Per-event pooled t-tests and ratios, filtered and ranked by `query`.
pub fn detect_signals(
    before: &GroupedMatrix,
    after: &GroupedMatrix,
    counts_before: &[u32],
    counts_after: &[u32],
    n_population: u64,
    query: &SignalQuery,
) -> Result<Vec<SignalRecord>, SignalError> {
    let stats = event_statistics(
        before,
        after,
        counts_before,
        counts_after,
        n_population,
        TestVariant::Pooled,
    )?;
    select_signals(&stats, query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Tsv,
    Csv,
}

impl ReportFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            ReportFormat::Tsv => b'\t',
            ReportFormat::Csv => b',',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?} (expected tsv|csv)")),
        }
    }
}

/// Report file name, `signals_<order>_<mode>.<ext>`.
pub fn report_file_name(order: Order, mode: KeyMode, format: ReportFormat) -> String {
    format!("signals_{}_{}.{}", order.name(), mode.name(), format.extension())
}

/// Four significant digits in scientific notation.
pub fn format_p(p: f64) -> String {
    format!("{p:.3e}")
}

pub fn format_t(t: f64) -> String {
    if t.is_finite() {
        format!("{t:.4}")
    } else {
        t.to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SignalError + '_ {
    move |source| SignalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> SignalError + '_ {
    move |e| SignalError::Io {
        path: path.display().to_string(),
        source: e.into(),
    }
}

/// Renders a ranked table. R1/R2 get two decimals and p four significant
/// digits; a description missing from both the record and the dictionary is
/// left empty.
pub fn render_report<W: Write>(
    records: &[SignalRecord],
    dictionary: Option<&Dictionary>,
    format: ReportFormat,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in records {
        let key = r.event_key.as_str();
        let description = r
            .description
            .as_deref()
            .or_else(|| dictionary.and_then(|d| d.describe(key)))
            .unwrap_or("");
        w.write_record([
            r.rank.to_string().as_str(),
            key,
            description,
            &r.n_before.to_string(),
            &r.n_after.to_string(),
            &format_2dp(r.r1),
            &format_2dp(r.r2_percent),
            &format_t(r.t),
            &format_p(r.p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(
    records: &[SignalRecord],
    dictionary: Option<&Dictionary>,
    format: ReportFormat,
    out_path: impl AsRef<Path>,
) -> Result<(), SignalError> {
    let path = out_path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    render_report(records, dictionary, format, BufWriter::new(file)).map_err(csv_err(path))
}

/// Writes the full per-event table with round-trip precision, so that a
/// later query can re-rank without recomputing the tests.
pub fn write_event_table(stats: &[EventStat], out_path: impl AsRef<Path>) -> Result<(), SignalError> {
    let path = out_path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(BufWriter::new(file));
    let err = csv_err(path);
    w.write_record(EVENTS_HEADER).map_err(&err)?;
    for s in stats {
        w.write_record([
            s.event_key.as_str(),
            &s.n_before.to_string(),
            &s.n_after.to_string(),
            &s.n_population.to_string(),
            &s.t.to_string(),
            &s.df.to_string(),
            &s.p.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| err(e.into()))?;
    Ok(())
}

/// Reads a table produced by [`write_event_table`]. Keys are taken as
/// written, under `mode`.
pub fn read_event_table(path: impl AsRef<Path>, mode: KeyMode) -> Result<Vec<EventStat>, SignalError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != EVENTS_HEADER {
        return Err(SignalError::BadEventTable {
            path: name,
            row: 1,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>().join("\t")),
        });
    }
    let mut stats = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i as u64 + 2;
        let bad = |reason: String| SignalError::BadEventTable {
            path: name.clone(),
            row,
            reason,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| {
            rec.get(j)
                .ok_or_else(|| bad(format!("missing field {}", EVENTS_HEADER[j])))
        };
        let int = |j: usize| field(j)?.parse::<u64>().map_err(|e| bad(e.to_string()));
        let real = |j: usize| field(j)?.parse::<f64>().map_err(|e| bad(e.to_string()));
        let code = ReadCode::parse(field(0)?).map_err(|e| bad(e.to_string()))?;
        let (nb, na, n) = (int(1)?, int(2)?, int(3)?);
        let ratios = ratio_stats(nb, na, n).map_err(|e| bad(e.to_string()))?;
        let event_key = code.key(mode);
        if event_key.as_str() != code.as_str() {
            return Err(bad(format!("{code} is not a level 3 key")));
        }
        stats.push(EventStat {
            event_key,
            n_before: nb,
            n_after: na,
            n_population: n,
            r1: ratios.r1,
            r2_percent: ratios.r2_percent,
            t: real(4)?,
            df: real(5)?,
            p: real(6)?,
        });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::readcode::KeyMode;

    fn rec(code: &str, r1: f64, p: f64) -> SignalRecord {
        SignalRecord {
            event_key: ReadCode::parse(code).unwrap().key(KeyMode::FullCode),
            description: None,
            n_before: 1,
            n_after: 2,
            r1,
            r2_percent: 0.0,
            t: -1.0,
            p,
            rank: 0,
        }
    }

    fn stat(code: &str, nb: u64, na: u64, p: f64) -> EventStat {
        let r = ratio_stats(nb, na, 1000).unwrap();
        EventStat {
            event_key: ReadCode::parse(code).unwrap().key(KeyMode::FullCode),
            n_before: nb,
            n_after: na,
            n_population: 1000,
            r1: r.r1,
            r2_percent: r.r2_percent,
            t: 0.0,
            df: 10.0,
            p,
        }
    }

    #[test]
    fn r1_ranking_from_table() {
        let ranked = rank_by_r1(vec![
            rec("J15..00", 29.0, 0.01),
            rec("16J..00", 43.0, 0.01),
            rec("1C84.00", 35.0, 0.01),
        ]);
        let keys: Vec<_> = ranked.iter().map(|r| (r.rank, r.event_key.as_str())).collect();
        assert_eq!(keys, vec![(1, "16J..00"), (2, "1C84.00"), (3, "J15..00")]);
    }

    #[test]
    fn r1_ties_prefer_smaller_p() {
        let ranked = rank_by_r1(vec![rec("A....00", 16.0, 0.03), rec("B....00", 16.0, 0.01)]);
        assert_eq!(ranked[0].event_key.as_str(), "B....00");
        let single = rank_by_r1(vec![rec("A....00", 1.0, 0.5)]);
        assert_eq!(single[0].rank, 1);
    }

    #[test]
    fn p_ties_prefer_larger_r1_then_key() {
        let ranked = rank_by_p(vec![
            rec("C....00", 2.0, 0.01),
            rec("B....00", 3.0, 0.01),
            rec("A....00", 3.0, 0.01),
        ]);
        let keys: Vec<_> = ranked.iter().map(|r| r.event_key.as_str()).collect();
        assert_eq!(keys, vec!["A....00", "B....00", "C....00"]);
    }

    #[test]
    fn filters() {
        let stats = vec![
            stat("B49..00", 1, 11, 0.001),
            stat("B22..00", 1, 18, 0.2),
            stat("N24..00", 10, 40, 0.0001),
            stat("I82..00", 40, 10, 0.0001),
        ];
        let all = select_signals(&stats, &SignalQuery::default()).unwrap();
        let keys: Vec<_> = all.iter().map(|r| r.event_key.as_str()).collect();
        assert_eq!(keys, vec!["N24..00", "B49..00"]);
        let both = select_signals(
            &stats,
            &SignalQuery {
                direction: Direction::Both,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(both.len(), 3);
        let cancer = select_signals(
            &stats,
            &SignalQuery {
                chapter_prefix: Some("B".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(cancer.len(), 1);
        assert!(cancer.iter().all(|r| r.event_key.as_str().starts_with('B')));
        let top = select_signals(
            &stats,
            &SignalQuery {
                top_k: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(top.len(), 1);
        assert!(select_signals(
            &stats,
            &SignalQuery {
                p_max: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(select_signals(
            &stats,
            &SignalQuery {
                top_k: Some(0),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn report_row_format() {
        let r = ratio_stats(133, 623, 9093).unwrap();
        let record = SignalRecord {
            event_key: ReadCode::parse("IZ12.00").unwrap().key(KeyMode::FullCode),
            description: None,
            n_before: 133,
            n_after: 623,
            r1: r.r1,
            r2_percent: r.r2_percent,
            t: -12.3456789,
            p: 1.234567e-9,
            rank: 1,
        };
        let mut dict = Dictionary::default();
        dict.insert("IZ12.00", "Chronic kidney disease stage 3");
        let mut out = Vec::new();
        render_report(&[record], Some(&dict), ReportFormat::Tsv, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "rank\treadcode\tdescription\tNB\tNA\tR1\tR2\tt\tp");
        assert_eq!(
            lines[1],
            "1\tIZ12.00\tChronic kidney disease stage 3\t133\t623\t4.68\t6.85\t-12.3457\t1.235e-9"
        );
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut out = Vec::new();
        render_report(&[], None, ReportFormat::Csv, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "rank,readcode,description,NB,NA,R1,R2,t,p\n"
        );
    }

    #[test]
    fn event_table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.tsv");
        let mut stats = vec![stat("N24..00", 3, 9, 0.012345678901234567), stat("B49..00", 0, 4, 1.0)];
        stats[0].t = -std::f64::consts::E;
        stats[1].t = f64::NEG_INFINITY;
        write_event_table(&stats, &path).unwrap();
        assert_eq!(read_event_table(&path, KeyMode::FullCode).unwrap(), stats);
        assert_eq!(read_event_table(&path, KeyMode::Level3).unwrap().len(), 2);
        write_event_table(&[stat("N245.16", 1, 2, 0.5)], &path).unwrap();
        assert!(matches!(
            read_event_table(&path, KeyMode::Level3),
            Err(SignalError::BadEventTable { row: 2, .. })
        ));
    }

    #[test]
    fn file_names() {
        assert_eq!(
            report_file_name(Order::AscendingP, KeyMode::FullCode, ReportFormat::Tsv),
            "signals_p_full.tsv"
        );
        assert_eq!(
            report_file_name(Order::DescendingR1, KeyMode::Level3, ReportFormat::Csv),
            "signals_r1_level3.csv"
        );
    }
}
