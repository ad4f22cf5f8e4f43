use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbsoft_cli::{compare, run, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(version, about = "Radial soft-potential Boltzmann runs: deterministic, Monte Carlo and diagnostics")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifact directory.
    Run {
        /// Configuration file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// det, mc, diagnose or scan.
        #[arg(long)]
        mode: Option<String>,
        /// Override a configuration key, e.g. `--set model.n=1000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads. Results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
        /// Do not read or write the generator cache.
        #[arg(long)]
        no_cache: bool,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Compare snapshots of two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// W1 tolerance per snapshot; derived from the runs when omitted.
        #[arg(long)]
        w1_tol: Option<f64>,
    },
}

fn execute(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            mode,
            overrides,
            workers,
            no_cache,
            dry_run,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.apply_override(&format!("seed={s}"))?;
            }
            if let Some(m) = mode {
                cfg.apply_override(&format!("mode={m}"))?;
            }
            for o in &overrides {
                cfg.apply_override(o)?;
            }
            cfg.validate()?;
            if dry_run {
                print!("{}", cfg.echo());
                return Ok(true);
            }
            let mut opts = RunOptions::with_default_cache(out, workers);
            if no_cache {
                opts.cache = None;
            }
            let summary = run(&cfg, &opts)?;
            println!(
                "wrote {} ({})",
                summary.out.display(),
                if summary.all_pass { "all checks pass" } else { "some checks failed, see report.json" }
            );
            Ok(true)
        }
        Command::Compare { a, b, w1_tol } => {
            let cmp = compare(&a, &b, w1_tol)?;
            print!("{}", cmp.to_csv());
            if cmp.pass() {
                Ok(true)
            } else {
                Err(CliError::Tolerance(format!(
                    "max W1 {:e} exceeds tolerance {:e}",
                    cmp.max_w1(),
                    cmp.tolerance
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
