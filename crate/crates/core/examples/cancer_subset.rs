//! Chapter filter: only neoplasm codes (chapter B), in both orders.

use adrsig::config::{PartialConfig, RunConfig};
use adrsig::pipeline::analyze;
use adrsig::prelude::*;
use adrsig::signal::{render_report, select_signals};
use adrsig::synth::{standard_vocabulary, Injection};

fn main() -> Result<(), adrsig::Error> {
    let vocabulary = standard_vocabulary(300, 0.01, 60);
    let injections = vocabulary
        .iter()
        .filter(|v| v.code.chapter() == 'B')
        .step_by(3)
        .map(|v| Injection {
            code: v.code,
            multiplier: 3.0,
            after_only: true,
        })
        .collect();
    let data = generate(&SynthConfig {
        n_exposed: 6000,
        vocabulary,
        injections,
        ..SynthConfig::default()
    })?;
    let config = RunConfig::resolve(&PartialConfig {
        input_dir: Some(".".into()),
        drug_codes: Some(vec!["PIO".into()]),
        mode: Some(KeyMode::Level3),
        ..Default::default()
    })?;
    let analysis = analyze(&data.to_store(), &config)?;
    for order in [Order::AscendingP, Order::DescendingR1] {
        let query = SignalQuery {
            order,
            chapter_prefix: Some("B".into()),
            ..SignalQuery::default()
        };
        println!("order={}", order.name());
        render_report(
            &select_signals(&analysis.stats, &query)?,
            None,
            ReportFormat::Tsv,
            std::io::stdout().lock(),
        )
        .expect("stdout");
    }
    Ok(())
}
