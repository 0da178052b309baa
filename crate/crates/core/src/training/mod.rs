//! EM training of mixtures, HMM coupling estimation and grid-search tuning
//! of the hand-crafted priors.

mod em;
mod hmm;
mod init;
mod tune;

pub use em::{train_gmm, train_gmm_from, train_gmm_sweep, train_gmm_with_mean};
pub use hmm::{estimate_transition, train_hmm, HmmTraining};
pub use init::{kmeans_pp_init, split_components};
pub use tune::{tune_handcrafted, HandcraftedKind, TuneGrid, TuneResult};

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of mixture components.
    pub k: usize,
    pub max_iters: usize,
    /// Relative objective change below which EM stops.
    pub tol: f64,
    pub seed: u64,
    /// Covariance ridge `ρ`: each M-step uses `Σ_k = (S_k + ρ (N/K) I) / N_k`.
    pub ridge: f64,
    /// Patches per EM iteration; 0 means full batch.
    pub minibatch: usize,
    /// Lloyd iterations after K-means++ seeding.
    pub kmeans_iters: usize,
    /// EM iterations run after each round of component splitting.
    pub split_em_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 20,
            max_iters: 50,
            tol: 1e-6,
            seed: 0,
            ridge: 1e-7,
            minibatch: 0,
            kmeans_iters: 10,
            split_em_iters: 3,
        }
    }
}

impl TrainConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("K must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::param(format!("ridge must be finite and nonnegative, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Disjoint train and test scene lists.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn new(train: Vec<String>, test: Vec<String>) -> Result<Self> {
        let split = Self { train, test };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let train: BTreeSet<&str> = self.train.iter().map(String::as_str).collect();
        if let Some(s) = self.test.iter().find(|s| train.contains(s.as_str())) {
            return Err(Error::param(format!("scene {s:?} is in both train and test")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// Mean training log-likelihood, nats per pixel.
    pub nats_per_pixel: f64,
    /// Log-likelihood minus the ridge penalty, per pixel. EM never
    /// decreases this in full-batch mode.
    pub objective_per_pixel: f64,
    pub wall_seconds: f64,
    /// A covariance needed a diagonal repair in the preceding M-step.
    pub repaired: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<IterRecord>,
}

impl TrainingLog {
    pub fn final_nats_per_pixel(&self) -> Option<f64> {
        self.records.last().map(|r| r.nats_per_pixel)
    }

    /// Tab-separated: iter, nats/pixel, objective/pixel and, with
    /// `timings`, wall seconds. Without timings the table is reproducible.
    pub fn to_tsv(&self, timings: bool) -> String {
        let mut out = String::from("iter\tnats_per_pixel\tobjective_per_pixel");
        out.push_str(if timings { "\twall_s\n" } else { "\n" });
        for r in &self.records {
            let _ = write!(out, "{}\t{:.9}\t{:.9}", r.iter, r.nats_per_pixel, r.objective_per_pixel);
            let _ = if timings { writeln!(out, "\t{:.3}", r.wall_seconds) } else { writeln!(out) };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::with_k(0).validate().is_err());
        assert!(TrainConfig { tol: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn split_must_be_disjoint() {
        assert!(DatasetSplit::new(vec!["a".into()], vec!["a".into()]).is_err());
        assert!(DatasetSplit::new(vec!["a".into()], vec!["b".into()]).is_ok());
    }

    #[test]
    fn tsv_has_header_and_rows() {
        let log = TrainingLog {
            records: vec![IterRecord { iter: 0, nats_per_pixel: 1.5, objective_per_pixel: 1.4, wall_seconds: 0.1, repaired: false }],
        };
        let tsv = log.to_tsv(false);
        assert_eq!(tsv.lines().count(), 2);
        assert_eq!(tsv.lines().nth(1).unwrap(), "0\t1.500000000\t1.400000000");
        assert!(log.to_tsv(true).starts_with("iter\tnats_per_pixel\tobjective_per_pixel\twall_s\n"));
    }
}
