//! Batch front end: config parsing, subcommands and run manifests.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

pub use commands::Context;
pub use config::RunConfig;
pub use error::CliError;

/// Thread-count variable consulted when --threads is absent.
pub const THREADS_ENV: &str = "MSOE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "msoe", version, about = "Rough Bergomi Monte Carlo: kernels, smiles, barriers, calibration")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate certified sum-of-exponentials nodes and weights.
    GenNodes(GenNodesArgs),
    /// Implied-volatility smile at one maturity.
    Smile,
    /// Implied-volatility surface over several maturities.
    Surface,
    /// Calibrate the model to market samples or prices.
    Calibrate,
    /// Barrier option price table.
    Barrier,
    /// Loss landscape over two parameters.
    Landscape,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenNodes(_) => "gen-nodes",
            Command::Smile => "smile",
            Command::Surface => "surface",
            Command::Calibrate => "calibrate",
            Command::Barrier => "barrier",
            Command::Landscape => "landscape",
        }
    }
}

/// Overrides for the `[gen_nodes]` section.
#[derive(Debug, Clone, Default, Args)]
pub struct GenNodesArgs {
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// File name inside the output directory (default nodes.csv).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(files) => {
            if !cli.quiet {
                for f in files {
                    eprintln!("wrote {}", f.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config, applies overrides and runs on a pool of the requested size.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (cfg, bytes) = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), Vec::new()),
    };
    let ctx = Context {
        seed: cli.seed.or(cfg.seed),
        out_dir: cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        base_dir: cli.config.as_deref().and_then(Path::parent).map(Path::to_path_buf),
        verbose: !cli.quiet,
    };
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        t => t,
    };
    let mut files = with_threads(threads, || execute(&cli.command, &cfg, &ctx))??;
    files.push(write_manifest(cli.command.name(), &bytes, &ctx, &files)?);
    Ok(files)
}

/// Runs `f` on a dedicated pool, or on the global one when `threads` is `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build a pool of {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Dispatches one command. `gen-nodes` flags override its config section.
pub fn execute(command: &Command, cfg: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::GenNodes(a) => {
            let mut spec = cfg.gen_nodes.clone().unwrap_or_default();
            spec.hurst = a.hurst.or(spec.hurst);
            spec.delta = a.delta.or(spec.delta);
            spec.horizon = a.horizon.or(spec.horizon);
            spec.eps = a.eps.or(spec.eps);
            spec.output = a.output.clone().or(spec.output);
            commands::gen_nodes(&spec, ctx)
        }
        Command::Smile => commands::smile(cfg, ctx),
        Command::Surface => commands::surface(cfg, ctx),
        Command::Calibrate => commands::calibrate(cfg, ctx).map(|(files, _)| files),
        Command::Barrier => commands::barrier(cfg, ctx),
        Command::Landscape => commands::landscape_cmd(cfg, ctx),
    }
}

/// `manifest.txt`: command, config hash, seed, versions and outputs.
pub fn write_manifest(command: &str, config: &[u8], ctx: &Context, files: &[PathBuf]) -> Result<PathBuf, CliError> {
    let hash: String = Sha256::digest(config).iter().map(|b| format!("{b:02x}")).collect();
    let mut text = format!(
        "command = {command}\nconfig_sha256 = {hash}\nseed = {}\nmsoe_version = {}\n",
        ctx.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
        env!("CARGO_PKG_VERSION")
    );
    for f in files {
        let name = f.strip_prefix(&ctx.out_dir).unwrap_or(f);
        text.push_str(&format!("output = {}\n", name.display()));
    }
    commands::write_file(&ctx.out_dir.join("manifest.txt"), &text)
}
