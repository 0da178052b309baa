use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use depthprior::models::{load_model, Dl1Model, SavedModel};
use depthprior::training::{train_gmm_sweep, train_hmm, tune_handcrafted, HandcraftedKind, TrainConfig, TuneGrid};
use depthprior::Dl2IntF64;

use super::{write_model, write_text};
use crate::source::{parse_list, DataArgs, Split};
use crate::{CmdResult, Failure};

#[derive(Subcommand, Debug)]
pub enum TrainCmd {
    /// Gaussian mixture over disparity patches.
    Gmm(GmmArgs),
    /// Intensity-coupled mixture (HMM).
    Hmm(HmmArgs),
    /// Grid-search a hand-crafted prior.
    Tune(TuneArgs),
}

#[derive(Args, Debug)]
pub struct EmArgs {
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Covariance ridge added in every M-step.
    #[arg(long, default_value_t = 1e-7)]
    ridge: f64,
    /// Patches per EM iteration (0 = full batch).
    #[arg(long, default_value_t = 0)]
    minibatch: usize,
    /// Training log (TSV), one row per EM iteration.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Include wall-clock columns in logs.
    #[arg(long)]
    timings: bool,
}

impl EmArgs {
    fn config(&self, k: usize, seed: u64) -> TrainConfig {
        TrainConfig { k, max_iters: self.max_iters, tol: self.tol, seed, ridge: self.ridge, minibatch: self.minibatch, ..TrainConfig::default() }
    }
}

#[derive(Args, Debug)]
pub struct GmmArgs {
    /// Component count, or a comma list for a nested sweep (then --out
    /// must contain `{k}`).
    #[arg(long, default_value = "20")]
    k: String,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
pub struct HmmArgs {
    /// Disparity components.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Intensity components.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    k_intensity: u64,
    /// Reuse a trained disparity GMM instead of fitting one.
    #[arg(long, value_name = "FILE")]
    reuse: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long, value_parser = ["dl2", "dl1", "dl2int"])]
    model: String,
    #[arg(long, default_value = "1,10,100,1000,10000")]
    lambdas: String,
    #[arg(long, default_value = "0.0001,0.001,0.01")]
    epsilons: String,
    /// Intensity-weight widths (DL2|int only).
    #[arg(long, default_value = "0.01,0.05,0.1,0.2")]
    sigmas: String,
    /// Held-out patches scored per grid point.
    #[arg(long, default_value_t = 2000)]
    validation_cap: usize,
    /// Grid scores (TSV).
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

pub fn train(cmd: &TrainCmd, seed: u64) -> CmdResult {
    match cmd {
        TrainCmd::Gmm(a) => train_gmm_cmd(a, seed),
        TrainCmd::Hmm(a) => train_hmm_cmd(a, seed),
        TrainCmd::Tune(a) => tune_cmd(a, seed),
    }
}

fn train_gmm_cmd(a: &GmmArgs, seed: u64) -> CmdResult {
    let ks: Vec<usize> = parse_list(&a.k, "--k")?;
    if ks.contains(&0) {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let out_pattern = a.out.to_string_lossy().into_owned();
    if ks.len() > 1 && !out_pattern.contains("{k}") {
        return Err(Failure::Usage("a --k sweep needs `{k}` in --out".into()));
    }
    let patches = a.data.load(Split::Train, seed, None)?;
    let results = train_gmm_sweep(&patches.disparity, &ks, &a.em.config(ks[0], seed))?;
    let mut table = String::from("k\ttrain_nats_per_pixel\ttrain_bits_per_pixel\n");
    let mut logs = String::new();
    for (&k, (model, log)) in ks.iter().zip(&results) {
        let path = PathBuf::from(out_pattern.replace("{k}", &k.to_string()));
        write_model(&path, &SavedModel::Gmm(model.clone()), patches.normalization, &format!("train gmm k={k} seed={seed}"))?;
        let nats = log.final_nats_per_pixel().unwrap_or(f64::NAN);
        let _ = writeln!(table, "{k}\t{nats:.9}\t{:.9}", nats / LN_2);
        if ks.len() > 1 {
            let _ = writeln!(logs, "# k={k}");
        }
        logs.push_str(&log.to_tsv(a.em.timings));
    }
    if let Some(p) = &a.em.log {
        write_text(p, &logs)?;
    }
    print!("{table}");
    Ok(())
}

fn train_hmm_cmd(a: &HmmArgs, seed: u64) -> CmdResult {
    let patches = a.data.load(Split::Train, seed, None)?;
    let reuse = match &a.reuse {
        Some(p) => match load_model::<f64>(p)?.0 {
            SavedModel::Gmm(g) => Some(g),
            other => return Err(Failure::Runtime(format!("{}: expected a GMM, found {:?}", p.display(), other.kind()))),
        },
        None => None,
    };
    let pairs = patches.pairs();
    let trained = train_hmm(&pairs, &a.em.config(a.k_intensity as usize, seed), &a.em.config(a.k as usize, seed), reuse.as_ref())?;
    write_model(
        &a.out,
        &SavedModel::Hmm(trained.model),
        patches.normalization,
        &format!("train hmm k={} k_intensity={} seed={seed}", a.k, a.k_intensity),
    )?;
    if let Some(p) = &a.em.log {
        let mut text = String::from("# intensity\n");
        text.push_str(&trained.intensity_log.to_tsv(a.em.timings));
        if let Some(d) = &trained.disparity_log {
            text.push_str("# disparity\n");
            text.push_str(&d.to_tsv(a.em.timings));
        }
        write_text(p, &text)?;
    }
    Ok(())
}

fn tune_cmd(a: &TuneArgs, seed: u64) -> CmdResult {
    let kind: HandcraftedKind = a.model.parse().map_err(|e: depthprior::Error| Failure::Usage(e.to_string()))?;
    let grid = TuneGrid {
        lambdas: parse_list(&a.lambdas, "--lambdas")?,
        epsilons: parse_list(&a.epsilons, "--epsilons")?,
        sigmas: parse_list(&a.sigmas, "--sigmas")?,
        validation_cap: a.validation_cap,
        seed,
        ..TuneGrid::default()
    };
    let patches = a.data.load(Split::Train, seed, None)?;
    let intensity = (kind == HandcraftedKind::Dl2int).then_some(patches.intensity.as_slice());
    let r = tune_handcrafted(kind, &patches.disparity, intensity, &grid)?;
    let model = match kind {
        HandcraftedKind::Dl2 => SavedModel::Dl2 { lambda: r.lambda, epsilon: r.epsilon },
        HandcraftedKind::Dl1 => SavedModel::Dl1(Dl1Model::patch(r.lambda, r.epsilon)?),
        HandcraftedKind::Dl2int => SavedModel::Dl2Int(Dl2IntF64::patch(r.lambda, r.epsilon, r.sigma.expect("dl2int sigma"))?),
    };
    write_model(&a.out, &model, patches.normalization, &format!("train tune {} seed={seed}", a.model))?;
    if let Some(p) = &a.table {
        let mut text = String::from("lambda\tepsilon\tsigma\tscore\n");
        for (l, e, s, score) in &r.evaluated {
            let s = s.map_or_else(|| "-".to_string(), |s| s.to_string());
            let _ = writeln!(text, "{l}\t{e}\t{s}\t{score:.9}");
        }
        write_text(p, &text)?;
    }
    let sigma = r.sigma.map_or_else(String::new, |s| format!("\tsigma={s}"));
    println!("lambda={}\tepsilon={}{sigma}\tscore={:.6}", r.lambda, r.epsilon, r.score);
    Ok(())
}
