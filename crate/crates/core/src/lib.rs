//! Patch-based generative models of disparity and Bayesian restoration of
//! the depth channel of RGBD images.
//!
//! The numeric core is generic over the scalar type ([`Real`]); the aliases
//! at the crate root fix it to `f64` (or `f32`) for application code.

pub mod conditional;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod patch;
pub mod pipeline;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PatchF64 = patch::Patch<f64>;
pub type ImageF64 = patch::ImageGrid<f64>;
pub type GaussianF64 = models::GaussianModel<f64>;
pub type GmmF64 = models::GmmModel<f64>;
pub type Dl1F64 = models::Dl1Model<f64>;
pub type Dl2IntF64 = conditional::Dl2IntModel<f64>;
pub type HmmF64 = conditional::HmmModel<f64>;

pub type PatchF32 = patch::Patch<f32>;
pub type ImageF32 = patch::ImageGrid<f32>;
pub type GaussianF32 = models::GaussianModel<f32>;
pub type GmmF32 = models::GmmModel<f32>;
pub type Dl1F32 = models::Dl1Model<f32>;
pub type Dl2IntF32 = conditional::Dl2IntModel<f32>;
pub type HmmF32 = conditional::HmmModel<f32>;
