//! Load patients/therapy/medical CSV files and find the exposed cohort.
//!
//! cargo run --example ingest_files -- <dir> [drug code]
//! Without arguments a small population is generated into a temp dir first.

use std::path::PathBuf;

use adrsig::ingest::IngestError;
use adrsig::prelude::*;
use adrsig::synth::{MEDICAL_FILE, PATIENTS_FILE, THERAPY_FILE};

fn main() -> Result<(), adrsig::Error> {
    let mut args = std::env::args().skip(1);
    let dir = match args.next() {
        Some(d) => PathBuf::from(d),
        None => {
            let dir = std::env::temp_dir().join("adrsig_ingest_example");
            generate(&SynthConfig {
                n_exposed: 500,
                ..SynthConfig::default()
            })?
            .write_to_dir(&dir)?;
            dir
        }
    };
    let drug = args.next().unwrap_or_else(|| "PIO".into());

    let strictness = Strictness::SkipBad;
    let (store, report) = match load_store(
        dir.join(PATIENTS_FILE),
        dir.join(THERAPY_FILE),
        dir.join(MEDICAL_FILE),
        strictness,
    ) {
        Ok(r) => r,
        Err(IngestError::MalformedRow(r)) => {
            eprintln!("{}:{} {}", r.file, r.row, r.reason);
            std::process::exit(1);
        }
        Err(e) => return Err(e.into()),
    };
    println!("{report:#?}");

    let cohort = cohort_for_drug(&store, &[drug.as_str()])?;
    println!("{} patients exposed to {drug}", cohort.len());
    for m in cohort.iter().take(5) {
        println!("  {} index {}", m.patient_id, m.index_date);
    }
    Ok(())
}
