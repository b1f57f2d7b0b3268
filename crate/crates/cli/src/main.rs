use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;

use commands::{Command, Failure, Outcome};

/// Nonlocal micromagnetic energies on balls.
#[derive(Parser, Debug)]
#[command(name = "nlmag", version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set mesh.radius=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as `--set output.dir=...`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve(args: &Args) -> Result<config::RunConfig, Failure> {
    let mut overrides = args
        .set
        .iter()
        .map(|s| config::parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &args.out {
        overrides.push((vec!["output".into(), "dir".into()], toml::Value::String(dir.display().to_string())));
    }
    if let Some(t) = args.threads {
        let t = i64::try_from(t).map_err(|_| config::ConfigError {
            key: "threads".into(),
            message: "out of range".into(),
        })?;
        overrides.push((vec!["threads".into()], toml::Value::Integer(t)));
    }
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).map_err(|_| config::ConfigError {
            key: "seed".into(),
            message: "must fit in a signed 64-bit integer".into(),
        })?;
        overrides.push((vec!["seed".into()], toml::Value::Integer(seed)));
    }
    Ok(config::load(&args.config, &overrides)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = resolve(&args).and_then(|cfg| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Failure::Io(format!("thread pool: {e}")))?;
        commands::run(args.command, &cfg)
    });
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("error: minimization did not converge (key `minimize.max_iters`); partial results written");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
