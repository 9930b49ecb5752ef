use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use healthscope_cli::pipeline::{self, Manifest};
use healthscope_cli::{fixture, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "healthscope", version, about = "Health resource perception analytics from geotagged reviews")]
struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every resampling step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config key, e.g. `--set n_perm=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, deduplicate and filter reviews; assign county and period.
    Ingest,
    /// Label filtered reviews and aggregate county-period scores.
    Score,
    /// Moran's I, the five PLS models and survey validation.
    Analyze,
    /// Survey validation only.
    Validate,
    /// Ingest, score and analyze in one run.
    RunAll,
    /// Write the synthetic fixture corpus.
    MakeFixture {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 20_240_601)]
        fixture_seed: u64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(manifest: &Manifest) {
    for stage in &manifest.stages {
        match &stage.reason {
            Some(reason) => println!("{:<28} {:?}: {reason}", stage.name, stage.status),
            None => println!("{:<28} {:?}", stage.name, stage.status),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::MakeFixture { dir, fixture_seed } = &cli.command {
        let s = fixture::generate(dir, *fixture_seed)?;
        println!("wrote {} counties, {} review lines, {} survey rows to {}", s.counties, s.reviews, s.survey_rows, dir.display());
        return Ok(());
    }
    let cfg = load_config(cli)?;
    let manifest = match cli.command {
        Command::Ingest => pipeline::cmd_ingest(&cfg),
        Command::Score => pipeline::cmd_score(&cfg),
        Command::Analyze => pipeline::cmd_analyze(&cfg),
        Command::Validate => pipeline::cmd_validate(&cfg),
        Command::RunAll => pipeline::cmd_run_all(&cfg),
        Command::MakeFixture { .. } => unreachable!("handled above"),
    }?;
    report(&manifest);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
