use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use depthprior::conditional::conditional_log_likelihood_per_pixel;
use depthprior::inference::{benchmark_rows, benchmark_tsv, BenchModel, BenchmarkRow, Task};
use depthprior::models::{log_likelihood_per_pixel, SavedModel};

use super::{emit, write_text, LoadedModel};
use crate::source::{parse_list, DataArgs, Split};
use crate::{CmdResult, Failure};

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Held-out log-likelihood in nats per pixel.
    Loglik(EvalArgs),
    /// Denoising PSNR.
    Denoise {
        /// Noise levels in 1/255 units.
        #[arg(long, default_value = "5,15")]
        sigma: String,
        #[command(flatten)]
        common: EvalArgs,
    },
    /// Inpainting PSNR with only the four corner pixels visible.
    Inpaint(EvalArgs),
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model files; repeat or separate with commas.
    #[arg(long = "model", value_name = "FILE", value_delimiter = ',')]
    models: Vec<PathBuf>,
    /// Add the identity (no restoration) baseline.
    #[arg(long)]
    identity: bool,
    /// Use at most N test patches.
    #[arg(long)]
    count: Option<usize>,
    /// Table destination (default stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the scores as CSV for plotting.
    #[arg(long, value_name = "FILE")]
    plot_csv: Option<PathBuf>,
    /// Include wall-clock columns.
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    data: DataArgs,
}

fn load_models(args: &EvalArgs) -> Result<Vec<LoadedModel>, Failure> {
    if args.models.is_empty() && !args.identity {
        return Err(Failure::Usage("give at least one --model (or --identity)".into()));
    }
    args.models.iter().map(|p| LoadedModel::load(p)).collect()
}

pub fn eval(cmd: &EvalCmd, seed: u64) -> CmdResult {
    let (args, tasks) = match cmd {
        EvalCmd::Loglik(a) => return loglik(a, seed),
        EvalCmd::Denoise { sigma, common } => {
            let sigmas: Vec<f64> = parse_list(sigma, "--sigma")?;
            if sigmas.iter().any(|s| !(*s > 0.0)) {
                return Err(Failure::Usage("--sigma values must be positive".into()));
            }
            (common, sigmas.into_iter().map(|s| Task::Denoise { sigma255: s }).collect::<Vec<_>>())
        }
        EvalCmd::Inpaint(a) => (a, vec![Task::Inpaint]),
    };
    let models = load_models(args)?;
    let norm = models.iter().find_map(|m| m.meta.normalization);
    let mut patches = args.data.load(Split::Test, seed, norm)?;
    if let Some(n) = args.count {
        patches.truncate(n);
    }
    let pairs = patches.pairs();
    let mut rows: Vec<BenchmarkRow> = Vec::new();
    for &task in &tasks {
        if args.identity {
            rows.extend(benchmark_rows("identity", &BenchModel::Identity, task, &pairs, seed)?);
        }
        for m in &models {
            rows.extend(benchmark_rows(&m.name, &m.bench(), task, &pairs, seed)?);
        }
    }
    emit(args.out.as_ref(), &benchmark_tsv(&rows, args.timings))?;
    if let Some(p) = &args.plot_csv {
        let mut csv = String::from("model,task,method,psnr_db\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{},{:.6}", r.model, r.task, r.method, r.psnr);
        }
        write_text(p, &csv)?;
    }
    Ok(())
}

fn loglik(args: &EvalArgs, seed: u64) -> CmdResult {
    if args.identity {
        return Err(Failure::Usage("the identity baseline has no likelihood".into()));
    }
    let models = load_models(args)?;
    let norm = models.iter().find_map(|m| m.meta.normalization);
    let mut patches = args.data.load(Split::Test, seed, norm)?;
    if let Some(n) = args.count {
        patches.truncate(n);
    }
    let pairs = patches.pairs();
    let mut table = String::from("model\tnats_per_pixel\tbits_per_pixel\tcount\n");
    let mut csv = String::from("model,nats_per_pixel,bits_per_pixel\n");
    for m in &models {
        let nats = match (&m.model, m.bench()) {
            (SavedModel::Dl1(_), _) => return Err(Failure::Runtime(format!("{}: DL1 has no normalized density", m.name))),
            (_, BenchModel::Gaussian(g)) => log_likelihood_per_pixel(g, &patches.disparity)?,
            (_, BenchModel::Gmm(g)) => log_likelihood_per_pixel(g, &patches.disparity)?,
            (_, BenchModel::Dl2Int(d)) => conditional_log_likelihood_per_pixel(d, &pairs)?,
            (_, BenchModel::Hmm(h)) => conditional_log_likelihood_per_pixel(h, &pairs)?,
            _ => unreachable!("identity and DL1 handled above"),
        };
        let _ = writeln!(table, "{}\t{nats:.9}\t{:.9}\t{}", m.name, nats / LN_2, pairs.len());
        let _ = writeln!(csv, "{},{nats:.9},{:.9}", m.name, nats / LN_2);
    }
    emit(args.out.as_ref(), &table)?;
    if let Some(p) = &args.plot_csv {
        write_text(p, &csv)?;
    }
    Ok(())
}
