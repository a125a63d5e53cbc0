//! Before/after exposure feature matrices.
//!
//! For each exposed patient the before window covers the `days` calendar days
//! strictly preceding the index date and the after window covers the index
//! date and the following `days - 1` days. A cell is set when the patient has
//! at least one event with that key inside the window.

use std::collections::BTreeSet;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{CohortMember, RecordStore};
use crate::readcode::{EventKey, KeyMode};

pub const DEFAULT_WINDOW_DAYS: u32 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("cohort patient {0:?} is not in the record store")]
    UnknownPatient(String),
    #[error("cohort lists patient {0:?} twice")]
    DuplicatePatient(String),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("window must span at least one day")]
    BadWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    days: u32,
}

impl WindowSpec {
    pub fn new(days: u32) -> Result<Self, MatrixError> {
        if days == 0 {
            return Err(MatrixError::BadWindow);
        }
        Ok(WindowSpec { days })
    }

    pub fn days(&self) -> u32 {
        self.days
    }

    /// Which window, if any, `date` falls in relative to `index`.
    pub fn classify(&self, index: NaiveDate, date: NaiveDate) -> Option<Side> {
        let offset = (date - index).num_days();
        let days = i64::from(self.days);
        if (-days..0).contains(&offset) {
            Some(Side::Before)
        } else if (0..days).contains(&offset) {
            Some(Side::After)
        } else {
            None
        }
    }

    /// First and last day (inclusive) of the window on `side`.
    pub fn bounds(&self, index: NaiveDate, side: Side) -> (NaiveDate, NaiveDate) {
        let days = i64::from(self.days);
        match side {
            Side::Before => (index - Duration::days(days), index - Duration::days(1)),
            Side::After => (index, index + Duration::days(days - 1)),
        }
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            days: DEFAULT_WINDOW_DAYS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Before,
    After,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Before => "before",
            Side::After => "after",
        }
    }
}

/// Sparse binary patients x events matrix in row-compressed form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    side: Side,
    patient_ids: Vec<String>,
    event_keys: Vec<EventKey>,
    // row i holds columns[row_ptr[i]..row_ptr[i + 1]], ascending
    row_ptr: Vec<usize>,
    columns: Vec<u32>,
}

impl FeatureMatrix {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn event_keys(&self) -> &[EventKey] {
        &self.event_keys
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_events(&self) -> usize {
        self.event_keys.len()
    }

    /// Number of set cells.
    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    /// Column indices set for patient row `row`.
    pub fn row(&self, row: usize) -> &[u32] {
        &self.columns[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.row(row).binary_search(&(col as u32)).is_ok()
    }

    pub fn column_index(&self, key: &EventKey) -> Option<usize> {
        self.event_keys.binary_search(key).ok()
    }

    /// Writes `patient_id,event_key,side` triplets, one per set cell.
    pub fn write_triplets<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patient_id", "event_key", "side"])?;
        for (i, id) in self.patient_ids.iter().enumerate() {
            for &c in self.row(i) {
                w.write_record([id.as_str(), self.event_keys[c as usize].as_str(), self.side.name()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Count of patients with the event, per column: N_B for a before matrix,
/// N_A for an after matrix.
pub fn column_patient_counts(m: &FeatureMatrix) -> Vec<u32> {
    let mut counts = vec![0u32; m.n_events()];
    for &c in &m.columns {
        counts[c as usize] += 1;
    }
    counts
}

type KeySets = (BTreeSet<EventKey>, BTreeSet<EventKey>);

fn patient_keys<'s>(
    store: &'s RecordStore,
    cohort: &[CohortMember<'_>],
    window: WindowSpec,
    mode: KeyMode,
) -> Result<Vec<(&'s str, KeySets)>, MatrixError> {
    let mut members: Vec<_> = cohort.to_vec();
    members.sort();
    if members.is_empty() {
        return Err(MatrixError::EmptyCohort);
    }
    if let Some(w) = members.windows(2).find(|w| w[0].patient_id == w[1].patient_id) {
        return Err(MatrixError::DuplicatePatient(w[0].patient_id.to_string()));
    }
    members
        .par_iter()
        .map(|m| {
            let (id, rec) = store
                .patient_entry(m.patient_id)
                .ok_or_else(|| MatrixError::UnknownPatient(m.patient_id.to_string()))?;
            let mut before = BTreeSet::new();
            let mut after = BTreeSet::new();
            for ev in &rec.events {
                match window.classify(m.index_date, ev.date) {
                    Some(Side::Before) => {
                        before.insert(ev.code.key(mode));
                    }
                    Some(Side::After) => {
                        after.insert(ev.code.key(mode));
                    }
                    None => {}
                }
            }
            Ok((id, (before, after)))
        })
        .collect()
}

/// Size of the event axis `build_matrices` would produce, without building
/// the matrices.
pub fn event_axis_size(
    store: &RecordStore,
    cohort: &[CohortMember<'_>],
    window: WindowSpec,
    mode: KeyMode,
) -> Result<usize, MatrixError> {
    let keys = patient_keys(store, cohort, window, mode)?;
    let axis: BTreeSet<EventKey> = keys
        .into_iter()
        .flat_map(|(_, (b, a))| b.into_iter().chain(a))
        .collect();
    Ok(axis.len())
}

/// Builds the before (A) and after (B) matrices over a shared axis.
///
/// The event axis is the union of keys seen in either window across the
/// cohort, so an event seen only before exposure still gets a column.
pub fn build_matrices(
    store: &RecordStore,
    cohort: &[CohortMember<'_>],
    window: WindowSpec,
    mode: KeyMode,
) -> Result<(FeatureMatrix, FeatureMatrix), MatrixError> {
    let keys = patient_keys(store, cohort, window, mode)?;
    let axis: Vec<EventKey> = keys
        .iter()
        .flat_map(|(_, (b, a))| b.iter().chain(a))
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let column = |k: &EventKey| axis.binary_search(k).expect("key on axis") as u32;

    let patient_ids: Vec<String> = keys.iter().map(|(id, _)| id.to_string()).collect();
    let mut a = FeatureMatrix {
        side: Side::Before,
        patient_ids: patient_ids.clone(),
        event_keys: axis.clone(),
        row_ptr: vec![0],
        columns: Vec::new(),
    };
    let mut b = FeatureMatrix {
        side: Side::After,
        patient_ids,
        event_keys: axis.clone(),
        row_ptr: vec![0],
        columns: Vec::new(),
    };
    for (_, (before, after)) in &keys {
        // BTreeSet iteration is ascending, so columns stay sorted per row
        a.columns.extend(before.iter().map(column));
        a.row_ptr.push(a.columns.len());
        b.columns.extend(after.iter().map(column));
        b.row_ptr.push(b.columns.len());
    }
    Ok((a, b))
}
