//! Write a seeded synthetic population to a directory.
//!
//! cargo run --example synth_population -- /tmp/pop 42

use adrsig::synth::{generate, SynthConfig};

fn main() -> Result<(), adrsig::Error> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "synth".into());
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let config = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let data = generate(&config)?;
    println!(
        "{} patients, {} prescriptions, {} medical events",
        data.patients.len(),
        data.prescriptions.len(),
        data.events.len()
    );
    for inj in &data.truth {
        println!("injected {} x{}", inj.code, inj.multiplier);
    }
    for path in data.write_to_dir(&dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
