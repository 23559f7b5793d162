use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdiff_cli::run::{run_stages, RunOptions, Stage};
use tdiff_cli::stages::report::render;
use tdiff_cli::{synth, CliError, LoadedConfig};

#[derive(Parser)]
#[command(name = "tdiff", version, about = "Translation difficulty feature analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the configured seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overwrite existing stage output.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run configuration (TOML); the run directory is taken from it.
    #[arg(long, required_unless_present = "run_dir", conflicts_with = "run_dir")]
    config: Option<PathBuf>,
    /// Render an existing run directory directly.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    seed_override: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter the study tables, assign folds.
    Ingest(Common),
    /// Compute the feature table from observations and model dumps.
    Extract(Common),
    /// Cross-validated model fits.
    Fit(Common),
    /// Likelihood differences, tests and summaries.
    Evaluate(Common),
    /// Render the summary document and plot tables.
    Report(ReportArgs),
    /// Run every stage, or every stage from `--stage` on.
    All {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        stage: Option<Stage>,
    },
    /// Write the synthetic mini-corpus and its configuration.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = synth::DEFAULT_SEED)]
        seed: u64,
    },
}

fn execute(common: &Common, stages: &[Stage]) -> Result<(), CliError> {
    let mut cfg = LoadedConfig::load(&common.config)?;
    if let Some(seed) = common.seed_override {
        cfg.config.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {:?} worker threads: {e}", common.jobs)))?;
    let opts = RunOptions { force: common.force };
    pool.install(|| run_stages(&cfg, stages, &opts))?;
    println!("{}", cfg.output_dir().display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), CliError> {
    if let Some(config) = &args.config {
        let common = Common {
            config: config.clone(),
            seed_override: args.seed_override,
            jobs: args.jobs,
            force: args.force,
        };
        return execute(&common, &[Stage::Report]);
    }
    let run_dir = args.run_dir.as_ref().expect("clap requires one of the two");
    let out = run_dir.join(Stage::Report.name());
    if out.exists() && !args.force {
        return Err(CliError::Validation(format!("{} exists; use --force to overwrite", out.display())));
    }
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    }
    render(run_dir)?;
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(c) => execute(c, &[Stage::Ingest]),
        Command::Extract(c) => execute(c, &[Stage::Extract]),
        Command::Fit(c) => execute(c, &[Stage::Fit]),
        Command::Evaluate(c) => execute(c, &[Stage::Evaluate]),
        Command::Report(args) => report(args),
        Command::All { common, stage } => execute(common, stage.unwrap_or(Stage::Ingest).onwards()),
        Command::Synth { out, seed } => synth::generate(out, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
