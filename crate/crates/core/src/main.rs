use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use opinf_dae::pipeline::{self, PipelineConfig};
use opinf_dae::podspace::TruncationRule;
use opinf_dae::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Simulate,
    Pod,
    Infer,
    Rom,
    Compare,
    Oracle,
    Pipeline,
}

/// Structure-preserving operator inference for constrained mechanical systems.
#[derive(Debug, Parser)]
#[command(name = "opinf-dae", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Pipeline config (JSON). Repeat to run several configs in parallel.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Override `output_dir` (only with a single config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the truncation rule with a fixed reduced order.
    #[arg(long)]
    fixed_r: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

fn run(cmd: Command, cfg: &PipelineConfig) -> opinf_dae::Result<()> {
    match cmd {
        Command::Simulate => pipeline::cmd_simulate(cfg),
        Command::Pod => pipeline::cmd_pod(cfg),
        Command::Infer => pipeline::cmd_infer(cfg),
        Command::Rom => pipeline::cmd_rom(cfg),
        Command::Compare => pipeline::cmd_compare(cfg).map(|_| ()),
        Command::Oracle => pipeline::cmd_oracle(cfg).map(|_| ()),
        Command::Pipeline => pipeline::cmd_pipeline(cfg).map(|_| ()),
    }
}

fn load(cli: &Cli, path: &PathBuf) -> opinf_dae::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(r) = cli.fixed_r {
        cfg.truncation = TruncationRule::FixedR { r };
        cfg.validate()?;
    }
    Ok(cfg)
}

fn error_record(config: &PathBuf, err: &Error) -> String {
    serde_json::json!({
        "error": err.kind(),
        "message": err.to_string(),
        "config": config.display().to_string(),
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .init();
    if cli.out.is_some() && cli.config.len() > 1 {
        let err = Error::Config("--out cannot be combined with several --config files".into());
        eprintln!("{}", error_record(&cli.config[0], &err));
        return ExitCode::from(2);
    }
    let threads = match pipeline::worker_threads() {
        Ok(n) => n,
        Err(err) => {
            eprintln!("{}", error_record(&cli.config[0], &err));
            return ExitCode::from(2);
        }
    };
    let results = pipeline::parallel_map(&cli.config, threads, |path| load(&cli, path).and_then(|cfg| run(cli.command, &cfg)));
    let mut failed = false;
    for (path, result) in cli.config.iter().zip(results) {
        if let Err(err) = result {
            eprintln!("{}", error_record(path, &err));
            failed = true;
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
