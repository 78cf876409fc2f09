//! Causal graphs, datasets, per-node mechanisms and ancestral sampling.

mod data;
mod fitted;
mod graph;
mod mechanism;
mod preprocess;

pub use data::Dataset;
pub use fitted::{node_seed, FittedNode, FittedScm, Noise, NoiseProfile};
pub use graph::{CausalGraph, NodeKind};
pub use mechanism::{Mechanism, MechanismConfig, Regressor, RegressorConfig};
pub use preprocess::{
    class_count, clip_code, mean_std, ColumnTransform, NodePreprocessor, TargetTransform,
};
