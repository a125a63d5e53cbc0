//! End to end in memory: synthetic cohort in, ranked signal table out.

use adrsig::config::{PartialConfig, RunConfig};
use adrsig::pipeline::analyze;
use adrsig::prelude::*;
use adrsig::signal::{render_report, select_signals};

fn main() -> Result<(), adrsig::Error> {
    let seed = std::env::args().nth(1).map_or(17, |s| s.parse().expect("seed"));
    let data = generate(&SynthConfig {
        seed,
        n_exposed: 4000,
        ..SynthConfig::default()
    })?;
    let config = RunConfig::resolve(&PartialConfig {
        input_dir: Some(".".into()),
        drug_codes: Some(vec!["PIO".into()]),
        ..Default::default()
    })?;
    let analysis = analyze(&data.to_store(), &config)?;
    println!(
        "cohort {} in {} groups, {} events tested",
        analysis.cohort_size,
        analysis.group_count,
        analysis.stats.len()
    );
    let query = SignalQuery {
        top_k: Some(15),
        ..SignalQuery::default()
    };
    let signals = select_signals(&analysis.stats, &query)?;
    let mut out = std::io::stdout().lock();
    render_report(&signals, None, ReportFormat::Tsv, &mut out).expect("stdout");
    let truth: Vec<_> = data.truth.iter().map(|i| i.code.as_str()).collect();
    println!("injected: {}", truth.join(" "));
    Ok(())
}
