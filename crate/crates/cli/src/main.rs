use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use tkobench::{pipeline, CliError, Config, Preset, Stage};

/// Temporal knockout benchmark runner.
#[derive(Debug, Parser)]
#[command(name = "tkobench", version)]
struct Args {
    /// JSON configuration; fields override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "TKOBENCH_WORKERS")]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum, default_value = "all")]
    stage: Stage,
    /// Correlate over all instantiations concatenated.
    #[arg(long)]
    pooled_correlations: bool,
    /// Add the k-core column to centrality tables.
    #[arg(long)]
    include_kcore: bool,
}

fn build_config(args: &Args) -> Result<Config, CliError> {
    let mut config = match &args.config {
        Some(path) => Config::from_file(args.preset, path)?,
        None => Config::layered(args.preset, None)?,
    };
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if args.pooled_correlations {
        config.correlation_mode = tkobench_core::analysis::CorrelationMode::Pooled;
    }
    if args.include_kcore {
        config.include_kcore = true;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = build_config(&args).and_then(|config| {
        let root = pipeline::output_root(&config, args.out.clone())?;
        let stats = pipeline::run(&config, &root, args.stage)?;
        info!(
            "{} units run, {} skipped, {} simulations",
            stats.units_executed, stats.units_skipped, stats.simulations
        );
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
