use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::denoiser::{EmbeddingTable, InputLayout, TrainedDenoiser};
use super::loss::{network_loss, Batch, TargetKind, TaskLoss};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, Matrix, MlpParams, MlpSpec};
use crate::scalar::Scalar;

/// Deterministic sampler used for encoding and decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ddim,
    #[default]
    Belm,
}

/// Hyperparameters of one diffusion mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub timesteps: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hybrid_weight: f64,
    pub guidance_weight: f64,
    pub sampler_kind: SamplerKind,
    pub condition_dropout_prob: f64,
    pub target_kind: TargetKind,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            timesteps: 200,
            hidden_dim: 128,
            num_blocks: 2,
            embed_dim: 32,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 128,
            hybrid_weight: 0.0,
            guidance_weight: 0.0,
            sampler_kind: SamplerKind::Belm,
            condition_dropout_prob: 0.1,
            target_kind: TargetKind::Continuous,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.timesteps < 4 {
            return fail(format!("timesteps must be >= 4, got {}", self.timesteps));
        }
        if self.hidden_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return fail("hidden_dim, epochs and batch_size must be positive".into());
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) {
            return fail(format!(
                "embed_dim must be positive and even, got {}",
                self.embed_dim
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.hybrid_weight >= 0.0 && self.hybrid_weight.is_finite()) {
            return fail(format!(
                "hybrid_weight must be >= 0, got {}",
                self.hybrid_weight
            ));
        }
        if !(self.guidance_weight >= 0.0 && self.guidance_weight.is_finite()) {
            return fail(format!(
                "guidance_weight must be >= 0, got {}",
                self.guidance_weight
            ));
        }
        if !(0.0..1.0).contains(&self.condition_dropout_prob) {
            return fail(format!(
                "condition_dropout_prob must lie in [0, 1), got {}",
                self.condition_dropout_prob
            ));
        }
        Ok(())
    }
}

/// Loss trace of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_total: Vec<f64>,
    pub epoch_simple: Vec<f64>,
    pub steps: u64,
}

impl TrainingLog {
    pub fn final_total(&self) -> f64 {
        self.epoch_total.last().copied().unwrap_or(f64::NAN)
    }
}

/// Trains `eps_theta` on target values `x0` with one condition row per value.
///
/// The run is a pure function of its arguments. Each epoch visits a fresh
/// permutation of the rows; every visit draws `t ~ U{1..T}`, `eps ~ N(0, 1)`
/// and, when the mechanism has a condition, drops it with probability
/// `condition_dropout_prob`.
pub fn train_denoiser<S: Scalar>(
    x0: &[S],
    conditions: &Matrix<S>,
    config: &DiffusionConfig,
    task: TaskLoss,
    seed: u64,
) -> Result<(TrainedDenoiser<S>, TrainingLog)> {
    config.validate()?;
    let n = x0.len();
    if n < 2 {
        return Err(Error::Data(format!("training needs >= 2 samples, got {n}")));
    }
    if conditions.rows() != n {
        return Err(Error::dim("training conditions", n, conditions.rows()));
    }
    if let TaskLoss::Categorical { num_classes } = task {
        if num_classes < 2 {
            return Err(Error::Data("categorical target needs >= 2 classes".into()));
        }
    }
    let schedule = NoiseSchedule::<S>::linear(config.timesteps)?;
    let layout = InputLayout {
        embed_dim: config.embed_dim,
        condition_dim: conditions.cols(),
    };
    let spec = MlpSpec {
        input_dim: layout.width(),
        hidden_dim: config.hidden_dim,
        num_residual_blocks: config.num_blocks,
        output_dim: 1,
        activation: Activation::Silu,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut network = MlpParams::<S>::init(spec, &mut rng)?;
    let mut adam = AdamState::new(&network, config.learning_rate);
    let embeddings = EmbeddingTable::new(config.timesteps, config.embed_dim)?;
    let drop_p = if layout.condition_dim > 0 {
        config.condition_dropout_prob
    } else {
        0.0
    };

    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_simple) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let m = chunk.len();
            let batch = Batch {
                x0: chunk.iter().map(|&i| x0[i]).collect(),
                conditions: conditions.select_rows(chunk),
                timesteps: (0..m)
                    .map(|_| rng.random_range(1..=config.timesteps))
                    .collect(),
                eps: (0..m)
                    .map(|_| S::of(rng.sample::<f64, _>(StandardNormal)))
                    .collect(),
                null: (0..m)
                    .map(|_| drop_p > 0.0 && rng.random_bool(drop_p))
                    .collect(),
            };
            let (terms, grads) = network_loss(
                &network,
                layout,
                &embeddings,
                &schedule,
                &batch,
                config.hybrid_weight,
                task,
            )
            .map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence {
                    step: log.steps as usize,
                    detail: format!("epoch {epoch}: {detail}"),
                },
                other => other,
            })?;
            adam.step(&mut network, &grads)?;
            log.steps += 1;
            sum_total += terms.total * m as f64;
            sum_simple += terms.simple * m as f64;
        }
        log.epoch_total.push(sum_total / n as f64);
        log.epoch_simple.push(sum_simple / n as f64);
    }
    if !network.is_finite() {
        return Err(Error::Divergence {
            step: log.steps as usize,
            detail: "non-finite parameters after training".into(),
        });
    }
    let denoiser = TrainedDenoiser::new(network, schedule, layout, config.guidance_weight)?;
    Ok((denoiser, log))
}

/// Number of label classes implied by a column of codes.
pub fn task_for(kind: TargetKind, x0: &[f64]) -> TaskLoss {
    match kind {
        TargetKind::Continuous => TaskLoss::Continuous,
        TargetKind::Categorical => {
            let max = x0.iter().fold(0.0f64, |m, &v| m.max(v.round()));
            TaskLoss::Categorical {
                num_classes: (max as usize + 1).max(2),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DiffusionConfig {
        DiffusionConfig {
            timesteps: 10,
            hidden_dim: 8,
            num_blocks: 1,
            embed_dim: 4,
            epochs: 3,
            batch_size: 4,
            ..DiffusionConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = Matrix::column(&x.iter().map(|v| v * 2.0).collect::<Vec<_>>());
        let (a, la) = train_denoiser(&x, &c, &small(), TaskLoss::Continuous, 9).unwrap();
        let (b, lb) = train_denoiser(&x, &c, &small(), TaskLoss::Continuous, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (d, _) = train_denoiser(&x, &c, &small(), TaskLoss::Continuous, 10).unwrap();
        assert_ne!(a.network, d.network);
    }

    #[test]
    fn config_validation() {
        assert!(small().validate().is_ok());
        for bad in [
            DiffusionConfig {
                timesteps: 3,
                ..small()
            },
            DiffusionConfig {
                hybrid_weight: -1.0,
                ..small()
            },
            DiffusionConfig {
                guidance_weight: -0.5,
                ..small()
            },
            DiffusionConfig {
                condition_dropout_prob: 1.0,
                ..small()
            },
            DiffusionConfig {
                embed_dim: 5,
                ..small()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let c = Matrix::<f64>::zeros(1, 0);
        assert!(train_denoiser(&[1.0], &c, &small(), TaskLoss::Continuous, 0).is_err());
    }

    #[test]
    fn class_count_from_codes() {
        assert_eq!(
            task_for(TargetKind::Categorical, &[0.0, 2.0, 1.0]),
            TaskLoss::Categorical { num_classes: 3 }
        );
        assert_eq!(
            task_for(TargetKind::Continuous, &[5.0]),
            TaskLoss::Continuous
        );
    }
}
