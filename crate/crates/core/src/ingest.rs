//! Loading of the patients, therapy and medical event files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::readcode::ReadCode;

pub const PATIENTS_HEADER: &[&str] = &["patient_id"];
pub const THERAPY_HEADER: &[&str] = &["patient_id", "drug_code", "date"];
pub const MEDICAL_HEADER: &[&str] = &["patient_id", "readcode", "date"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {file}: {reason}")]
    FileUnreadable { file: String, reason: String },
    #[error("{0}")]
    MalformedRow(RowReject),
}

/// A rejected input row with its file and 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowReject {
    pub file: String,
    pub row: u64,
    pub reason: String,
}

impl fmt::Display for RowReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} row {}: {}", self.file, self.row, self.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Fail on the first bad row.
    #[default]
    Strict,
    /// Collect bad rows in the report and continue.
    SkipBad,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prescription {
    pub patient_id: String,
    pub drug_code: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MedicalEvent {
    pub patient_id: String,
    pub code: ReadCode,
    pub date: NaiveDate,
}

/// Everything known about one patient, sorted by date.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatientRecord {
    pub prescriptions: Vec<Prescription>,
    pub events: Vec<MedicalEvent>,
}

/// In-memory view of the three input files. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordStore {
    patients: BTreeMap<String, PatientRecord>,
}

impl RecordStore {
    /// Builds a store from already-validated records.
    ///
    /// Records referencing a patient missing from `patients` are returned as
    /// the error value.
    pub fn from_records(
        patients: impl IntoIterator<Item = String>,
        prescriptions: impl IntoIterator<Item = Prescription>,
        events: impl IntoIterator<Item = MedicalEvent>,
    ) -> Result<Self, String> {
        let mut map: BTreeMap<String, PatientRecord> =
            patients.into_iter().map(|id| (id, PatientRecord::default())).collect();
        for rx in prescriptions {
            match map.get_mut(&rx.patient_id) {
                Some(rec) => rec.prescriptions.push(rx),
                None => return Err(rx.patient_id),
            }
        }
        for ev in events {
            match map.get_mut(&ev.patient_id) {
                Some(rec) => rec.events.push(ev),
                None => return Err(ev.patient_id),
            }
        }
        let mut store = RecordStore { patients: map };
        store.sort();
        Ok(store)
    }

    fn sort(&mut self) {
        for rec in self.patients.values_mut() {
            rec.prescriptions
                .sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.drug_code.cmp(&b.drug_code)));
            rec.events
                .sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.code.cmp(&b.code)));
        }
    }

    pub fn contains(&self, patient_id: &str) -> bool {
        self.patients.contains_key(patient_id)
    }

    pub fn patient(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.patients.get(patient_id)
    }

    pub fn patient_entry(&self, patient_id: &str) -> Option<(&str, &PatientRecord)> {
        self.patients.get_key_value(patient_id).map(|(k, v)| (k.as_str(), v))
    }

    /// Patients in ascending id order.
    pub fn patients(&self) -> impl Iterator<Item = (&str, &PatientRecord)> {
        self.patients.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn prescription_count(&self) -> usize {
        self.patients.values().map(|r| r.prescriptions.len()).sum()
    }

    pub fn event_count(&self) -> usize {
        self.patients.values().map(|r| r.events.len()).sum()
    }

    pub fn distinct_event_codes(&self) -> usize {
        self.patients
            .values()
            .flat_map(|r| r.events.iter().map(|e| e.code))
            .collect::<HashSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    pub distinct_patients: usize,
    pub distinct_event_codes: usize,
    pub rejects: Vec<RowReject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CohortMember<'a> {
    pub patient_id: &'a str,
    pub index_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CohortError {
    #[error("no patient has a prescription for drug codes {0:?}")]
    EmptyCohort(Vec<String>),
    #[error("no drug codes given")]
    NoDrugCodes,
}

/// Exposed patients and the date of their first matching prescription,
/// ascending by patient id.
pub fn cohort_for_drug<'a, S: AsRef<str>>(
    store: &'a RecordStore,
    drug_codes: &[S],
) -> Result<Vec<CohortMember<'a>>, CohortError> {
    if drug_codes.is_empty() {
        return Err(CohortError::NoDrugCodes);
    }
    let wanted: HashSet<&str> = drug_codes.iter().map(AsRef::as_ref).collect();
    let cohort: Vec<_> = store
        .patients()
        .filter_map(|(id, rec)| {
            // prescriptions are date sorted
            rec.prescriptions
                .iter()
                .find(|rx| wanted.contains(rx.drug_code.as_str()))
                .map(|rx| CohortMember {
                    patient_id: id,
                    index_date: rx.date,
                })
        })
        .collect();
    if cohort.is_empty() {
        let mut codes: Vec<String> = wanted.into_iter().map(str::to_string).collect();
        codes.sort();
        return Err(CohortError::EmptyCohort(codes));
    }
    Ok(cohort)
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

struct RowSink<'a> {
    strictness: Strictness,
    report: &'a mut IngestReport,
}

impl RowSink<'_> {
    fn reject(&mut self, reject: RowReject) -> Result<(), IngestError> {
        self.report.rows_rejected += 1;
        match self.strictness {
            Strictness::Strict => Err(IngestError::MalformedRow(reject)),
            Strictness::SkipBad => {
                self.report.rejects.push(reject);
                Ok(())
            }
        }
    }
}

type Row = (u64, Result<Vec<String>, String>);

/// Yields `(line number, fields)` for each data row after checking the header.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Row>, IngestError> {
    let file = path.display().to_string();
    let unreadable = |reason: String| IngestError::FileUnreadable {
        file: file.clone(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| unreadable(e.to_string()))?;
    let found = reader.headers().map_err(|e| unreadable(e.to_string()))?;
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != header {
        return Err(unreadable(format!(
            "expected header {:?}, found {:?}",
            header.join(","),
            found.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let fields = match record {
            Ok(r) if r.len() == header.len() => Ok(r.iter().map(|f| f.trim().to_string()).collect()),
            Ok(r) => Err(format!("expected {} fields, found {}", header.len(), r.len())),
            Err(e) if e.is_io_error() => return Err(unreadable(e.to_string())),
            Err(e) => Err(e.to_string()),
        };
        rows.push((line, fields));
    }
    Ok(rows)
}

type Parsed<T> = Vec<(u64, Result<T, String>)>;

fn parse_file<T>(
    path: &Path,
    header: &[&str],
    parse: impl Fn(Vec<String>) -> Result<T, String> + Sync,
) -> Result<Parsed<T>, IngestError>
where
    T: Send,
{
    Ok(read_rows(path, header)?
        .into_iter()
        .map(|(line, fields)| (line, fields.and_then(&parse)))
        .collect())
}

fn non_empty(id: String) -> Result<String, String> {
    if id.is_empty() {
        Err("empty patient_id".to_string())
    } else {
        Ok(id)
    }
}

/// Reads and validates the three input files.
///
/// Patients are read first; therapy and medical rows are parsed in parallel
/// and then checked against the patient set.
pub fn load_store(
    patients_path: impl AsRef<Path>,
    therapy_path: impl AsRef<Path>,
    medical_path: impl AsRef<Path>,
    strictness: Strictness,
) -> Result<(RecordStore, IngestReport), IngestError> {
    let (patients_path, therapy_path, medical_path) =
        (patients_path.as_ref(), therapy_path.as_ref(), medical_path.as_ref());
    let mut report = IngestReport::default();

    let patient_rows = parse_file(patients_path, PATIENTS_HEADER, |mut f| non_empty(f.remove(0)))?;
    let (therapy_rows, medical_rows) = rayon::join(
        || {
            parse_file(therapy_path, THERAPY_HEADER, |f| {
                let mut f = f.into_iter();
                let patient_id = non_empty(f.next().unwrap_or_default())?;
                let drug_code = f.next().unwrap_or_default();
                if drug_code.is_empty() {
                    return Err("empty drug_code".to_string());
                }
                let date = parse_date(&f.next().unwrap_or_default())?;
                Ok(Prescription {
                    patient_id,
                    drug_code,
                    date,
                })
            })
        },
        || {
            parse_file(medical_path, MEDICAL_HEADER, |f| {
                let mut f = f.into_iter();
                let patient_id = non_empty(f.next().unwrap_or_default())?;
                let code = ReadCode::parse(&f.next().unwrap_or_default()).map_err(|e| e.to_string())?;
                let date = parse_date(&f.next().unwrap_or_default())?;
                Ok(MedicalEvent { patient_id, code, date })
            })
        },
    );
    let (therapy_rows, medical_rows) = (therapy_rows?, medical_rows?);

    let mut sink = RowSink {
        strictness,
        report: &mut report,
    };
    let mut patients = BTreeSet::new();
    let file = patients_path.display().to_string();
    for (row, parsed) in patient_rows {
        sink.report.rows_read += 1;
        let reason = match parsed {
            Ok(id) if patients.contains(&id) => format!("duplicate patient_id {id:?}"),
            Ok(id) => {
                patients.insert(id);
                sink.report.rows_accepted += 1;
                continue;
            }
            Err(reason) => reason,
        };
        sink.reject(RowReject {
            file: file.clone(),
            row,
            reason,
        })?;
    }

    let prescriptions = accept_rows(&mut sink, therapy_path, therapy_rows, &patients, |p| &p.patient_id)?;
    let events = accept_rows(&mut sink, medical_path, medical_rows, &patients, |e| &e.patient_id)?;

    let store = RecordStore::from_records(patients, prescriptions, events).expect("patient references checked above");
    report.distinct_patients = store.patient_count();
    report.distinct_event_codes = store.distinct_event_codes();
    Ok((store, report))
}

fn accept_rows<T>(
    sink: &mut RowSink<'_>,
    path: &Path,
    rows: Parsed<T>,
    patients: &BTreeSet<String>,
    patient_of: impl Fn(&T) -> &String,
) -> Result<Vec<T>, IngestError> {
    let file = path.display().to_string();
    let mut accepted = Vec::with_capacity(rows.len());
    for (row, parsed) in rows {
        sink.report.rows_read += 1;
        let reason = match parsed {
            Ok(rec) if patients.contains(patient_of(&rec)) => {
                accepted.push(rec);
                sink.report.rows_accepted += 1;
                continue;
            }
            Ok(rec) => format!("unknown patient_id {:?}", patient_of(&rec)),
            Err(reason) => reason,
        };
        sink.reject(RowReject {
            file: file.clone(),
            row,
            reason,
        })?;
    }
    Ok(accepted)
}
