pub mod counterfactual;
pub mod dgp;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod samplers;
pub mod scalar;
pub mod scm;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instances of the generic numeric core.
pub type Matrix64 = nn::Matrix<f64>;
pub type MlpParams64 = nn::MlpParams<f64>;
pub type NoiseSchedule64 = diffusion::NoiseSchedule<f64>;
pub type TrainedDenoiser64 = diffusion::TrainedDenoiser<f64>;
pub type LatentCode64 = samplers::LatentCode<f64>;
