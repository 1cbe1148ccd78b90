use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dscd_cli::artifacts::{emit_metrics, Format};
use dscd_cli::compare::{compare, load, render_table};
use dscd_cli::config::{parse_config, ConfigFlags};
use dscd_cli::CliError;
use dscd_core::config::{Mode, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "dscd", version, about = "O-RAN scheduler placement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a batch of simulations and write metric files.
    Run(RunArgs),
    /// Compare aggregate files; the first one is the baseline.
    Compare(CompareArgs),
    /// Print the fully resolved default configuration.
    Defaults,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    ttis: Option<u64>,
    /// Output directory.
    #[arg(long, env = "DSCD_OUT_DIR", default_value = "dscd-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Accept values outside the documented envelopes (e.g. URLLC density).
    #[arg(long = "override")]
    allow_out_of_envelope: bool,
    /// Worker threads for the batch; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(required = true, num_args = 2..)]
    files: Vec<PathBuf>,
    /// Emit the comparison as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: dscd_core::ConfigError| e.reason)
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let flags = ConfigFlags {
        mode: args.mode,
        seed: args.seed,
        runs: args.runs,
        ttis: args.ttis,
        allow_out_of_envelope: args.allow_out_of_envelope,
    };
    let cfg = parse_config(args.config.as_deref(), &flags)?;
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let started = Instant::now();
    let batch = dscd_core::sim::run_batch(&cfg, threads)?;
    let elapsed = started.elapsed().as_secs_f64();
    let written = emit_metrics(&batch, &cfg, args.format, &args.out, elapsed)?;
    eprintln!(
        "{} run(s) of {} TTIs in {elapsed:.1}s, {} files in {}",
        cfg.runs,
        cfg.ttis,
        written.len(),
        args.out.display()
    );
    Ok(())
}

fn compare_files(args: CompareArgs) -> Result<(), CliError> {
    let files = args.files.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let c = compare(&files)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&c).expect("comparison serializes"));
    } else {
        print!("{}", render_table(&c));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare_files(a),
        Command::Defaults => {
            print!("{}", SimConfig::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
