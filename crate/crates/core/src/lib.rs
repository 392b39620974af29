//! Discriminative attribute network.
//!
//! Given visual vectors for a referent and a context, the network predicts
//! which attributes distinguish the two. It is trained only on pair-level
//! discriminativeness (the symmetric difference of the two concepts'
//! attribute sets) and never sees per-concept attributes, yet its shared
//! attribute layer can be read out as an attribute classifier.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are the defaults used by the command-line tool.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod matrix;
pub mod model;
pub mod params;
pub mod predict;
pub mod rng;
pub mod scalar;
pub mod storage;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use params::{ModelKind, Parameters};
pub use rng::Rng;
pub use scalar::{DType, Scalar};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type World64 = dataset::World<f64>;
pub type World32 = dataset::World<f32>;
pub type Dan64 = model::DanParams<f64>;
pub type Dan32 = model::DanParams<f32>;
pub type Ablation64 = baselines::AblationParams<f64>;
pub type Classifier64 = baselines::AttrClassifierParams<f64>;
