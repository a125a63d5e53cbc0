//! Adverse drug reaction signal detection.
//!
//! Medical events of an exposed cohort are compared between a window before
//! and a window after each patient's first prescription. Binary patient x
//! event matrices for both windows are summed over blocks of patients, each
//! event is tested with a two-sample Student t-test on the block counts, and
//! events whose patient count rises significantly are reported with their
//! R1 (after/before) and R2 (after/population) ratios.
//!
//! ```no_run
//! use adrsig::prelude::*;
//!
//! let (store, _) = load_store("patients.csv", "therapy.csv", "medical.csv", Strictness::Strict)?;
//! let cohort = cohort_for_drug(&store, &["PIO"])?;
//! let (a, b) = build_matrices(&store, &cohort, WindowSpec::default(), KeyMode::FullCode)?;
//! let x = group_patients(&a, 100, Remainder::Drop)?;
//! let y = group_patients(&b, 100, Remainder::Drop)?;
//! let signals = detect_signals(
//!     &x,
//!     &y,
//!     &column_patient_counts(&a),
//!     &column_patient_counts(&b),
//!     cohort.len() as u64,
//!     &SignalQuery::default(),
//! )?;
//! # Ok::<(), adrsig::Error>(())
//! ```

pub mod cohort;
pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod readcode;
pub mod signal;
pub mod special;
pub mod stats;
pub mod synth;

pub use pipeline::Error;

pub mod prelude {
    pub use crate::cohort::{build_matrices, column_patient_counts, FeatureMatrix, Side, WindowSpec};
    pub use crate::ingest::{cohort_for_drug, load_store, CohortMember, RecordStore, Strictness};
    pub use crate::readcode::{parse_readcode, to_level3_key, Dictionary, EventKey, KeyMode, ReadCode};
    pub use crate::signal::{
        detect_signals, rank_by_r1, write_report, Direction, Order, ReportFormat, SignalQuery, SignalRecord,
    };
    pub use crate::stats::{group_patients, ratio_stats, t_test_pooled, GroupedMatrix, Remainder};
    pub use crate::synth::{generate, SynthConfig};
    pub use crate::Error;
}
