use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use roughctl_cli::{run, CliError, RunConfig};

/// Run one experiment described by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "roughctl", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

fn load(args: &Args) -> Result<(RunConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = RunConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &args.out {
        config.output = Some(out.clone());
    }
    let dir = config
        .output
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: set `output` or pass --out".into()))?;
    Ok((config, dir))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|(config, dir)| {
        if let Some(n) = args.threads {
            if n == 0 {
                return Err(CliError::Config("--threads must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        run(&config, &dir, args.verbose).map(|pass| (pass, dir))
    });
    match result {
        Ok((pass, dir)) => {
            println!("{} {}", if pass { "PASS" } else { "FAIL" }, dir.join("summary.json").display());
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
