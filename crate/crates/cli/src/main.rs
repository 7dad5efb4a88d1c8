use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evattn_core::config::parse_kv;
use evattn_core::events::{self, synth_saccade};
use evattn_core::pipeline::{self, Manifest};
use evattn_core::{selfcheck, Error, PipelineConfig, Result, SaccadeParams, StreamHeader};

/// Event-stream attention toolkit.
#[derive(Debug, Parser)]
#[command(name = "evattn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Peak-driven patch extraction (centered or follower placement).
    RunPeaks(RunArgs),
    /// Attention-driven extraction with the filterbank controller.
    RunAttention(RunArgs),
    /// Convert a binary AER file to CSV.
    Decode(DecodeArgs),
    /// Generate a synthetic saccade recording.
    Synth(SynthArgs),
    /// Run the built-in self-test oracles.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset profile (overrides the config file).
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one key, e.g. `--set alpha=1.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    input: PathBuf,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    /// Output CSV path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output path; `.csv` writes text, anything else binary AER.
    output: PathBuf,
    #[arg(long, default_value_t = 68)]
    width: u32,
    #[arg(long, default_value_t = 68)]
    height: u32,
    #[arg(long, default_value_t = 3.0)]
    blob_radius: f64,
    #[arg(long, default_value_t = 3)]
    saccades: u32,
    #[arg(long, default_value_t = 100.0)]
    saccade_ms: f64,
    /// Mean events per millisecond.
    #[arg(long, default_value_t = 40.0)]
    rate: f64,
    /// Triangle side in pixels; 0 keeps the blob still.
    #[arg(long, default_value_t = 30.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cli_pairs(args: &RunArgs) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    if let Some(p) = &args.profile {
        pairs.push(("profile".to_string(), p.clone()));
    }
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.clone(), "expected KEY=VALUE"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(p) = &args.input {
        pairs.push(("input".to_string(), p.display().to_string()));
    }
    if let Some(p) = &args.out {
        pairs.push(("out".to_string(), p.display().to_string()));
    }
    Ok(pairs)
}

fn load_config(args: &RunArgs) -> Result<PipelineConfig> {
    let file = match &args.config {
        Some(path) => parse_kv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
        None => Vec::new(),
    };
    PipelineConfig::resolve(&file, &cli_pairs(args)?)
}

fn report(manifest: &Manifest, out: &Path) {
    let s = &manifest.summary;
    println!(
        "{} events, {} closures, {} peaks, {} patches, {} skipped -> {}",
        s.events,
        s.closures,
        s.peaks,
        s.patches,
        s.skipped_events,
        pipeline::manifest_path(out).display()
    );
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::RunPeaks(args) => {
            let cfg = load_config(&args)?;
            let m = pipeline::run_peak_pipeline(&cfg)?;
            report(&m, &cfg.out);
        }
        Command::RunAttention(args) => {
            let cfg = load_config(&args)?;
            let m = pipeline::run_attention_pipeline(&cfg)?;
            report(&m, &cfg.out);
        }
        Command::Decode(args) => {
            let header = StreamHeader::new(args.width, args.height).map_err(|e| Error::config("width", e.to_string()))?;
            let bytes = fs::read(&args.input).map_err(|e| Error::io(&args.input, e))?;
            let stream = events::read_aer_bin(&bytes, header)?;
            let csv = events::write_csv(&stream.events);
            match &args.output {
                Some(path) => write_out(path, csv.as_bytes())?,
                None => {
                    let mut out = io::stdout().lock();
                    match out.write_all(csv.as_bytes()).and_then(|()| out.flush()) {
                        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(Error::io("<stdout>", e)),
                        _ => {}
                    }
                }
            }
            if stream.non_monotone {
                eprintln!("warning: timestamps are not monotone");
            }
        }
        Command::Synth(args) => {
            let geometry = StreamHeader::new(args.width, args.height).map_err(|e| Error::config("width", e.to_string()))?;
            let params = SaccadeParams {
                blob_radius: args.blob_radius,
                geometry,
                n_saccades: args.saccades,
                saccade_ms: args.saccade_ms,
                rate: args.rate,
                amplitude: args.amplitude,
                seed: args.seed,
            };
            let stream = synth_saccade(&params).map_err(|e| match e {
                Error::Validation(reason) => Error::config("synth", reason),
                other => other,
            })?;
            let is_csv = args.output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if is_csv {
                write_out(&args.output, events::write_csv(&stream.events).as_bytes())?;
            } else {
                write_out(&args.output, &events::write_aer_bin(&stream.events)?)?;
            }
            println!("{} events -> {}", stream.len(), args.output.display());
        }
        Command::Check { seed } => {
            let results = selfcheck::run_all(seed);
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Io { .. } | Error::Decode { .. } | Error::Parse { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
