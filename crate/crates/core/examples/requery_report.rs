//! Run `detect` to disk once, then re-rank its per-event table without
//! recomputing anything.

use adrsig::config::{PartialConfig, RunConfig};
use adrsig::pipeline::{run_detect, run_report, run_synth};
use adrsig::prelude::*;

fn main() -> Result<(), adrsig::Error> {
    let root = std::env::temp_dir().join("adrsig_requery_example");
    run_synth(&SynthConfig::default(), root.join("data"))?;
    let dictionary = root.join("dictionary.csv");
    std::fs::write(
        &dictionary,
        "code,description\nB002.00,Injected event one\nI002.00,Injected event two\nP002.00,Injected event three\n",
    )
    .expect("writable temp dir");

    let config = RunConfig::resolve(&PartialConfig {
        input_dir: Some(root.join("data")),
        drug_codes: Some(vec!["PIO".into()]),
        out: Some(root.join("out")),
        ..Default::default()
    })?;
    let summary = run_detect(&config)?;
    print!("{}", summary.render(&config));

    let query = SignalQuery {
        order: Order::DescendingR1,
        p_max: 0.01,
        top_k: Some(5),
        ..SignalQuery::default()
    };
    let (path, records) = run_report(
        &summary.events_path,
        KeyMode::FullCode,
        &query,
        Some(dictionary.as_path()),
        ReportFormat::Csv,
        root.join("requery"),
    )?;
    println!("\n{}", path.display());
    print!("{}", std::fs::read_to_string(&path).expect("just written"));
    println!("{} records", records.len());
    Ok(())
}
