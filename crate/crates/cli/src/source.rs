use std::path::PathBuf;

use clap::Args;
use depthprior::data::{generate_synthetic, load_dataset, load_frames, read_manifest, sample_training_patches, SyntheticSpec, TRAIN_PATCH_CAP};

use crate::Failure;

/// Where patches come from: a scene directory or the synthetic generator.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset root holding scene directories and manifest.json.
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,

    /// Use N synthetic flat-or-edge patch pairs instead of a dataset.
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,

    #[arg(long, default_value_t = 0.8)]
    pub flat_prob: f64,

    /// Intensity-disparity coupling of synthetic pairs.
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub noise_floor: f64,

    /// Seed of the synthetic generator (default 1 for training, 2 for
    /// evaluation, so the two never share patches).
    #[arg(long)]
    pub data_seed: Option<u64>,

    /// Cap on patches sampled from a dataset.
    #[arg(long, default_value_t = TRAIN_PATCH_CAP)]
    pub max_patches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Aligned intensity and disparity patches.
pub struct Patches {
    pub intensity: Vec<Vec<f64>>,
    pub disparity: Vec<Vec<f64>>,
    /// Raw disparity mapped to 1.0, for dataset input.
    pub normalization: Option<f64>,
}

impl Patches {
    pub fn pairs(&self) -> Vec<(&[f64], &[f64])> {
        self.intensity.iter().map(Vec::as_slice).zip(self.disparity.iter().map(Vec::as_slice)).collect()
    }

    pub fn truncate(&mut self, n: usize) {
        self.intensity.truncate(n);
        self.disparity.truncate(n);
    }
}

impl DataArgs {
    /// Loads one split. Test scenes reuse `normalization` when given so
    /// both splits share a disparity scale.
    pub fn load(&self, split: Split, seed: u64, normalization: Option<f64>) -> Result<Patches, Failure> {
        if let Some(n) = self.synthetic {
            let data_seed = self.data_seed.unwrap_or(match split {
                Split::Train => 1,
                Split::Test => 2,
            });
            let spec = SyntheticSpec {
                flat_prob: self.flat_prob,
                rho: self.rho,
                noise_floor: self.noise_floor,
                seed: data_seed,
                ..SyntheticSpec::default()
            };
            spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let pairs = generate_synthetic::<f64>(&spec, n)?;
            let (intensity, disparity) = depthprior::data::pair_values(&pairs);
            return Ok(Patches { intensity, disparity, normalization: None });
        }
        let root = self.data.as_ref().expect("clap requires --data or --synthetic");
        let manifest = read_manifest(root)?;
        let dataset = load_dataset(root, &manifest)?;
        let scenes = match split {
            Split::Train => &dataset.train,
            Split::Test => &dataset.test,
        };
        if scenes.is_empty() {
            return Err(Failure::Runtime(format!("{}: no {split:?} scenes", root.display()).to_lowercase()));
        }
        let loaded = load_frames::<f64>(scenes, normalization)?;
        let pairs = sample_training_patches(&loaded.frames, self.max_patches, seed)?;
        let (intensity, disparity) = pairs.into_iter().unzip();
        Ok(Patches { intensity, disparity, normalization: Some(loaded.normalization) })
    }
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Failure::Usage(format!("bad {what} value {t:?}"))))
        .collect()
}
