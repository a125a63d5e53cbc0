//! Before/after binary matrices in both key modes, and their grouped sums.

use adrsig::cohort::event_axis_size;
use adrsig::prelude::*;

fn main() -> Result<(), adrsig::Error> {
    let data = generate(&SynthConfig {
        n_exposed: 450,
        ..SynthConfig::default()
    })?;
    let store = data.to_store();
    let cohort = cohort_for_drug(&store, &["PIO"])?;
    let window = WindowSpec::new(60)?;

    for mode in [KeyMode::FullCode, KeyMode::Level3] {
        println!("{mode}: {} events", event_axis_size(&store, &cohort, window, mode)?);
    }

    let (a, b) = build_matrices(&store, &cohort, window, KeyMode::Level3)?;
    println!("A {}x{} nnz={}", a.n_patients(), a.n_events(), a.nnz());
    println!("B {}x{} nnz={}", b.n_patients(), b.n_events(), b.nnz());

    let x = group_patients(&a, 100, Remainder::Drop)?;
    let y = group_patients(&b, 100, Remainder::Drop)?;
    println!(
        "{} groups, {} patients retained",
        x.group_count(),
        x.retained_patients()
    );
    let (nb, na) = (column_patient_counts(&a), column_patient_counts(&b));
    for (j, key) in a.event_keys().iter().enumerate().take(8) {
        println!(
            "{} NB={} NA={} X={:?} Y={:?}",
            key,
            nb[j],
            na[j],
            x.column(j),
            y.column(j)
        );
    }

    let mut triplets = Vec::new();
    b.write_triplets(&mut triplets).expect("in-memory write");
    for line in String::from_utf8_lossy(&triplets).lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
