//! Patient grouping, per-event t-tests and R1/R2 ratios.

use serde::Deserialize;
use thiserror::Error;

use crate::cohort::{FeatureMatrix, Side};
use crate::readcode::EventKey;
use crate::special::{t_cdf_complement, NumericError};

pub const DEFAULT_GROUP_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{patients} patients give fewer than 2 groups of {group_size}")]
    TooFewPatients { patients: usize, group_size: usize },
    #[error("group size must be at least 2, got {0}")]
    BadGroupSize(usize),
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("t-test needs at least 2 observations per sample, got {0}")]
    DegenerateInput(usize),
    #[error("population {population} is invalid for counts before={before} after={after}")]
    BadPopulation { before: u64, after: u64, population: u64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// What to do with the last block when the patient count is not a multiple
/// of the group size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Remainder {
    #[default]
    Drop,
    #[serde(rename = "partial")]
    PartialGroup,
}

impl std::str::FromStr for Remainder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(Remainder::Drop),
            "partial" => Ok(Remainder::PartialGroup),
            other => Err(format!("unknown remainder policy {other:?} (expected drop|partial)")),
        }
    }
}

impl Remainder {
    pub fn name(self) -> &'static str {
        match self {
            Remainder::Drop => "drop",
            Remainder::PartialGroup => "partial",
        }
    }
}

/// Dense groups x events count matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupedMatrix {
    side: Side,
    group_size: usize,
    group_sizes: Vec<usize>,
    event_keys: Vec<EventKey>,
    // row-major, group_count x event_count
    counts: Vec<u32>,
}

impl GroupedMatrix {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn group_count(&self) -> usize {
        self.group_sizes.len()
    }

    /// Nominal group size.
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// True size of each group; only the last may be short, under
    /// [`Remainder::PartialGroup`].
    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Patients covered by the groups.
    pub fn retained_patients(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn event_keys(&self) -> &[EventKey] {
        &self.event_keys
    }

    pub fn n_events(&self) -> usize {
        self.event_keys.len()
    }

    pub fn get(&self, group: usize, event: usize) -> u32 {
        self.counts[group * self.n_events() + event]
    }

    /// Counts for one event across groups.
    pub fn column(&self, event: usize) -> Vec<f64> {
        (0..self.group_count()).map(|g| f64::from(self.get(g, event))).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.n_events()];
        for row in self.counts.chunks(self.n_events().max(1)) {
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += u64::from(c);
            }
        }
        sums
    }
}

/// Sums consecutive blocks of `group_size` patients.
pub fn group_patients(m: &FeatureMatrix, group_size: usize, remainder: Remainder) -> Result<GroupedMatrix, StatsError> {
    if group_size < 2 {
        return Err(StatsError::BadGroupSize(group_size));
    }
    let patients = m.n_patients();
    let full = patients / group_size;
    let mut group_sizes = vec![group_size; full];
    if remainder == Remainder::PartialGroup && !patients.is_multiple_of(group_size) {
        group_sizes.push(patients % group_size);
    }
    if group_sizes.len() < 2 {
        return Err(StatsError::TooFewPatients { patients, group_size });
    }
    let e = m.n_events();
    let mut counts = vec![0u32; group_sizes.len() * e];
    let mut row = 0;
    for (g, &size) in group_sizes.iter().enumerate() {
        let out = &mut counts[g * e..(g + 1) * e];
        for r in row..row + size {
            for &c in m.row(r) {
                out[c as usize] += 1;
            }
        }
        row += size;
    }
    Ok(GroupedMatrix {
        side: m.side(),
        group_size,
        group_sizes,
        event_keys: m.event_keys().to_vec(),
        counts,
    })
}

/// Which two-sample t-test to run per event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestVariant {
    /// Unpaired, pooled variance, `df = 2g - 2`.
    #[default]
    Pooled,
    /// Paired on group position, `df = g - 1`.
    Paired,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_and_ss(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss)
}

fn finish(diff: f64, se: f64, df: f64) -> Result<TTestResult, StatsError> {
    if se == 0.0 {
        // zero variance: identical means give no evidence, distinct means
        // give certainty under the model
        return Ok(if diff == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = diff / se;
    let p = t_cdf_complement(t.abs(), df)?;
    Ok(TTestResult { t, df, p })
}

/// Pooled-variance two-sample Student t-test, two-sided. `t` is positive
/// when `x` has the larger mean.
pub fn t_test_pooled(x: &[f64], y: &[f64]) -> Result<TTestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::DegenerateInput(n));
    }
    let (mx, ssx) = mean_and_ss(x);
    let (my, ssy) = mean_and_ss(y);
    let df = (2 * n - 2) as f64;
    let pooled = (ssx + ssy) / df;
    let se = (pooled * 2.0 / n as f64).sqrt();
    finish(mx - my, se, df)
}

/// Paired t-test on `x[i] - y[i]`, two-sided.
pub fn t_test_paired(x: &[f64], y: &[f64]) -> Result<TTestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::DegenerateInput(n));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let (md, ss) = mean_and_ss(&d);
    let df = (n - 1) as f64;
    let se = (ss / df / n as f64).sqrt();
    finish(md, se, df)
}

pub fn t_test(variant: TestVariant, x: &[f64], y: &[f64]) -> Result<TTestResult, StatsError> {
    match variant {
        TestVariant::Pooled => t_test_pooled(x, y),
        TestVariant::Paired => t_test_paired(x, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub n_before: u64,
    pub n_after: u64,
    /// `N_A / N_B`, or `N_A` when `N_B = 0`.
    pub r1: f64,
    /// `100 * N_A / N`.
    pub r2_percent: f64,
}

pub fn ratio_stats(n_before: u64, n_after: u64, n_population: u64) -> Result<RatioStats, StatsError> {
    if n_population == 0 || n_population < n_before.max(n_after) {
        return Err(StatsError::BadPopulation {
            before: n_before,
            after: n_after,
            population: n_population,
        });
    }
    let r1 = if n_before == 0 {
        n_after as f64
    } else {
        n_after as f64 / n_before as f64
    };
    Ok(RatioStats {
        n_before,
        n_after,
        r1,
        r2_percent: 100.0 * n_after as f64 / n_population as f64,
    })
}

/// Fixed two-decimal rendering with ties rounded away from zero.
///
/// A value within 1e-9 of a half hundredth counts as a tie, so decimal ties
/// such as 201/200 that are not exact in binary still round up.
pub fn format_2dp(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let scaled = x.abs() * 100.0;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let hundredths = if (frac - 0.5).abs() < 1e-9 || frac > 0.5 {
        floor + 1.0
    } else {
        floor
    };
    let sign = if x < 0.0 && hundredths != 0.0 { "-" } else { "" };
    format!("{sign}{:.2}", hundredths / 100.0)
}
