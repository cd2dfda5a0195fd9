use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nldiff_cli::pipeline::Stage;
use nldiff_cli::sweep::{parse_assignment, run_sweep};
use nldiff_cli::{parse_config, run_pipeline, CliError, ExperimentConfig, OUTPUT_ROOT_VAR};

#[derive(Parser)]
#[command(name = "nldiff", version, about = "Nonlocal diffusion in exterior domains")]
struct Cli {
    /// Record deterministic mode in the config (reductions always run in a fixed order).
    #[arg(long, global = true)]
    deterministic: bool,

    /// Directory under which run directories are created.
    #[arg(long, global = true, env = OUTPUT_ROOT_VAR, default_value = "runs")]
    output_root: PathBuf,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,

    /// Run directory; defaults to the config's `output` under the output root.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Integrate again even when the run directory holds a matching trajectory.
    #[arg(long)]
    no_reuse: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print kernel moments, diffusivity and transform samples as JSON.
    KernelInfo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve for the stationary profiles.
    Stationary(RunArgs),
    /// Stationary profiles, then integrate in time.
    Evolve(RunArgs),
    /// Evolve (or reuse a stored trajectory) and write decay fits and error series.
    Report(RunArgs),
    /// Report, then run every check; exits 1 when one fails.
    Verify(RunArgs),
    /// Run one pipeline per value of a config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...`, for example `kernel.d=1,1.5,2`.
        #[arg(long = "set")]
        assignment: String,
        /// Last stage of each run.
        #[arg(long, default_value = "report", value_parser = ["stationary", "evolve", "report", "verify"])]
        until: String,
    },
}

fn stages(until: &str) -> Vec<Stage> {
    let all = [Stage::Stationary, Stage::Evolve, Stage::Report, Stage::Verify];
    let n = all.iter().position(|s| s.name() == until).map_or(all.len(), |i| i + 1);
    all[..n].to_vec()
}

fn load(path: &Path, deterministic: bool) -> Result<ExperimentConfig, CliError> {
    let mut config = parse_config(path)?;
    config.evolution.deterministic |= deterministic;
    Ok(config)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let (args, until) = match cli.command {
        Command::KernelInfo { config } => {
            let config = load(&config, cli.deterministic)?;
            let mut info = serde_json::to_value(config.kernel.build()?.info()?).expect("kernel info serializes");
            info["config_hash"] = config.hash().into();
            println!("{}", serde_json::to_string_pretty(&info).expect("kernel info serializes"));
            return Ok(0);
        }
        Command::Sweep { config, assignment, until } => {
            let (key, values) = parse_assignment(&assignment)?;
            let base =
                std::fs::read_to_string(&config).map_err(|source| CliError::Read { path: config.clone(), source })?;
            let rows = run_sweep(&base, &key, &values, &cli.output_root, &stages(&until), cli.deterministic)?;
            for r in &rows {
                println!("{key}={}: exit {} ({})", r.value, r.exit_code, r.outcome);
            }
            return Ok(rows.iter().map(|r| r.exit_code).max().unwrap_or(0));
        }
        Command::Stationary(a) => (a, "stationary"),
        Command::Evolve(a) => (a, "evolve"),
        Command::Report(a) => (a, "report"),
        Command::Verify(a) => (a, "verify"),
    };
    let config = load(&args.config, cli.deterministic)?;
    let dir = args.out.unwrap_or_else(|| cli.output_root.join(&config.output));
    let outcome = run_pipeline(&config, &stages(until), &dir, !args.no_reuse)?;
    for p in &outcome.manifest.phases {
        println!("{:<10} {:<8} {:.2}s", p.name, p.status, p.seconds);
    }
    for c in &outcome.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("config hash {}; artifacts in {}", outcome.manifest.config_hash, dir.display());
    Ok(u8::from(!outcome.passed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
