//! Config precedence: defaults, then a TOML file, then command line values.

use adrsig::config::{PartialConfig, RunConfig};

const FILE: &str = r#"
input_dir = "data"
drug_codes = ["PIO"]
window_days = 90
mode = "level3"
order = "r1"
chapter = "B"

[synth]
n_exposed = 9093
"#;

fn main() -> Result<(), adrsig::Error> {
    let file: PartialConfig = toml::from_str(FILE).map_err(|e| adrsig::config::ConfigError(e.to_string()))?;
    let flags = PartialConfig {
        window_days: Some(60),
        p_max: Some(0.01),
        ..Default::default()
    };
    let config = RunConfig::resolve(&file.overlay(flags))?;
    print!("{}", config.echo());
    Ok(())
}
