use std::collections::BTreeMap;

use super::config::{ExperimentConfig, ExperimentId, ExperimentOptions, Protocol};
use crate::diffusion::{DiffusionConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::scm::MechanismConfig;

/// Published hyperparameters of one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetHyperparameters {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub timesteps: usize,
    pub hybrid_weight: f64,
    pub guidance_weight: f64,
}

/// Preset names in table order.
pub const PRESET_NAMES: [&str; 5] = ["psm", "lalonde", "semisynth", "ablation", "stress"];

pub fn preset_hyperparameters(name: &str) -> Option<PresetHyperparameters> {
    let (epochs, batch_size, hidden_dim, learning_rate, timesteps, hybrid_weight, guidance_weight) =
        match name {
            "psm" => (1500, 128, 512, 1e-4, 200, 0.1, 0.0),
            "lalonde" => (1000, 64, 512, 1e-4, 200, 2.0, 1.0),
            "semisynth" => (1200, 64, 768, 1.1e-4, 50, 2.0, 0.1),
            "ablation" => (700, 128, 768, 1e-4, 200, 5.0, 0.2),
            "stress" => (500, 128, 256, 1e-4, 200, 0.5, 0.0),
            _ => return None,
        };
    Some(PresetHyperparameters {
        epochs,
        batch_size,
        hidden_dim,
        learning_rate,
        timesteps,
        hybrid_weight,
        guidance_weight,
    })
}

impl PresetHyperparameters {
    pub fn diffusion(&self) -> DiffusionConfig {
        DiffusionConfig {
            timesteps: self.timesteps,
            hidden_dim: self.hidden_dim,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            hybrid_weight: self.hybrid_weight,
            guidance_weight: self.guidance_weight,
            sampler_kind: SamplerKind::Belm,
            ..DiffusionConfig::default()
        }
    }
}

/// Full-scale configuration for a named preset: every non-root node is a
/// diffusion mechanism with the published hyperparameters.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let hp = preset_hyperparameters(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset '{name}'; expected one of {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    let (experiment, n, protocol, nodes): (ExperimentId, usize, Protocol, &[&str]) = match name {
        "psm" => (
            ExperimentId::Psm,
            5000,
            Protocol::Individual,
            &["C1", "T", "Y"],
        ),
        "lalonde" => (
            ExperimentId::Cate,
            445,
            Protocol::Ensemble,
            &["treat", "re78"],
        ),
        "semisynth" => (
            ExperimentId::Semisynthetic,
            445,
            Protocol::Ensemble,
            &["treat", "re78"],
        ),
        "ablation" => (
            ExperimentId::Ablation,
            4000,
            Protocol::Individual,
            &["T", "M", "Y"],
        ),
        _ => (
            ExperimentId::Stress,
            2000,
            Protocol::Individual,
            &["T", "Y"],
        ),
    };
    let mechanisms: BTreeMap<String, MechanismConfig> = nodes
        .iter()
        .map(|n| (n.to_string(), MechanismConfig::Diffusion(hp.diffusion())))
        .collect();
    let config = ExperimentConfig {
        experiment,
        graph: None,
        mechanisms,
        seeds: vec![1, 2, 3, 4, 5],
        n,
        dataset_path: None,
        output_dir: format!("results/{name}").into(),
        protocol,
        options: ExperimentOptions::default(),
    };
    config.validate()?;
    Ok(config)
}
