use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

mod commands;
mod config;
mod source;

use commands::{EvalCmd, RestoreArgs, SampleArgs, SynthArgs, TrainCmd};

/// Patch priors for disparity: training, evaluation, sampling and restoration.
#[derive(Parser, Debug)]
#[command(name = "depthprior", version)]
pub struct Cli {
    /// Config file of `key = value` lines under `[command.sub]` sections.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (default: $DEPTHPRIOR_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write it to a model file.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Score models on held-out patches.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Draw patches from a model into a PNG mosaic.
    Sample(SampleArgs),
    /// Restore a noisy disparity image with holes.
    Restore(RestoreArgs),
    /// Write a synthetic dataset of scenes.
    Synth(SynthArgs),
}

pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<depthprior::Error> for Failure {
    fn from(e: depthprior::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return if n == 0 { Err(Failure::Usage("--threads must be at least 1".into())) } else { Ok(Some(n)) };
    }
    match std::env::var("DEPTHPRIOR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("DEPTHPRIOR_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn parse_args() -> Result<Cli, Failure> {
    let args: Vec<String> = std::env::args().collect();
    let args = match config::config_path(&args) {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let entries = config::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            config::merge(&Cli::command(), &args, &entries, &path).map_err(Failure::Usage)?
        }
        None => args,
    };
    Cli::try_parse_from(args).map_err(|e| {
        let _ = e.print();
        match e.exit_code() {
            0 => Failure::Runtime(String::new()),
            _ => Failure::Usage(String::new()),
        }
    })
}

fn run() -> CmdResult {
    let cli = match parse_args() {
        Ok(cli) => cli,
        // help and version output
        Err(Failure::Runtime(m)) if m.is_empty() => return Ok(()),
        Err(e) => return Err(e),
    };
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Train(cmd) => commands::train(cmd, cli.seed),
        Command::Eval(cmd) => commands::eval(cmd, cli.seed),
        Command::Sample(args) => commands::sample(args, cli.seed),
        Command::Restore(args) => commands::restore(args),
        Command::Synth(args) => commands::synth(args, cli.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            if !m.is_empty() {
                eprintln!("error: {m}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
