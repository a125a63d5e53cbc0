//! Command line front end: `synth`, `detect` and `report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adrsig::config::{parse_drug_codes, resolve_synth, PartialConfig, RunConfig};
use adrsig::pipeline::{run_detect, run_report, run_synth};
use adrsig::readcode::KeyMode;
use adrsig::signal::{Direction, Order, ReportFormat, SignalQuery, DEFAULT_P_MAX};
use adrsig::stats::{Remainder, TestVariant};
use adrsig::Error;

#[derive(Parser)]
#[command(name = "adrsig", version, about = "Adverse drug reaction signal detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic population.
    Synth(SynthArgs),
    /// Run the detection pipeline on patients/therapy/medical files.
    Detect(DetectArgs),
    /// Re-rank a per-event table written by `detect`.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_exposed: Option<usize>,
    #[arg(long)]
    window_days: Option<u32>,
    /// Drug code written to therapy.csv.
    #[arg(long)]
    drug_code: Option<String>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    /// Directory holding patients.csv, therapy.csv and medical.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    /// File of drug codes, or a comma separated list.
    #[arg(long)]
    drug_codes: Option<String>,
    #[arg(long)]
    window_days: Option<u32>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<KeyMode>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    remainder: Option<Remainder>,
    #[arg(long, value_parser = parse_test)]
    test: Option<TestVariant>,
    #[command(flatten)]
    query: QueryArgs,
    /// Keep going past malformed input rows.
    #[arg(long)]
    skip_bad_rows: bool,
    /// Accepted for symmetry with `synth`; detection is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    order: Option<Order>,
    /// Keep only codes starting with this prefix, e.g. `B` for neoplasms.
    #[arg(long)]
    chapter: Option<String>,
    /// Report decreases too.
    #[arg(long)]
    both_directions: bool,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    format: Option<ReportFormat>,
    /// `code,description` CSV for the description column.
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// `events_<mode>.tsv` written by `detect`.
    #[arg(long)]
    events: PathBuf,
    #[arg(long, value_parser = parse_mode, default_value = "full")]
    mode: KeyMode,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    query: QueryArgs,
}

fn parse_mode(s: &str) -> Result<KeyMode, String> {
    s.parse()
}

fn parse_test(s: &str) -> Result<TestVariant, String> {
    match s {
        "pooled" => Ok(TestVariant::Pooled),
        "paired" => Ok(TestVariant::Paired),
        other => Err(format!("unknown test {other:?} (expected pooled|paired)")),
    }
}

fn file_config(path: &Option<PathBuf>) -> Result<PartialConfig, Error> {
    Ok(match path {
        Some(p) => PartialConfig::from_toml_file(p)?,
        None => PartialConfig::default(),
    })
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn synth(args: SynthArgs) -> Result<(), Error> {
    let mut flags = PartialConfig {
        out: args.common.out,
        threads: args.common.threads,
        seed: args.seed,
        window_days: args.window_days,
        ..Default::default()
    };
    flags.synth.n_exposed = args.n_exposed;
    flags.synth.drug_code = args.drug_code;
    let merged = file_config(&args.common.config)?.overlay(flags);
    init_threads(merged.threads);
    let (config, out) = resolve_synth(&merged)?;
    for path in run_synth(&config, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn detect(args: DetectArgs) -> Result<(), Error> {
    let q = args.query;
    let flags = PartialConfig {
        input_dir: args.input,
        dictionary: q.dictionary,
        drug_codes: args.drug_codes.as_deref().map(parse_drug_codes).transpose()?,
        window_days: args.window_days,
        mode: args.mode,
        group_size: args.group_size,
        remainder: args.remainder,
        test: args.test,
        p_max: q.p_max,
        order: q.order,
        direction: q.both_directions.then_some(Direction::Both),
        chapter: q.chapter,
        top_k: q.top_k,
        format: q.format,
        skip_bad_rows: args.skip_bad_rows.then_some(true),
        out: args.common.out,
        threads: args.common.threads,
        seed: args.seed,
        ..Default::default()
    };
    let config = RunConfig::resolve(&file_config(&args.common.config)?.overlay(flags))?;
    init_threads(config.threads);
    let summary = run_detect(&config)?;
    print!("{}", summary.render(&config));
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    let q = args.query;
    let query = SignalQuery {
        order: q.order.unwrap_or_default(),
        p_max: q.p_max.unwrap_or(DEFAULT_P_MAX),
        direction: if q.both_directions {
            Direction::Both
        } else {
            Direction::IncreaseOnly
        },
        chapter_prefix: q.chapter,
        top_k: q.top_k,
    };
    let out = args.out.unwrap_or_else(|| PathBuf::from("out"));
    let (path, records) = run_report(
        &args.events,
        args.mode,
        &query,
        q.dictionary.as_deref(),
        q.format.unwrap_or_default(),
        out,
    )?;
    println!("report={}", path.display());
    println!("signals_reported={}", records.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error category={} message={message:?}", e.category());
            ExitCode::FAILURE
        }
    }
}
