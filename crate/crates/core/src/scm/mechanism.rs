use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionConfig, SamplerKind, TrainedDenoiser};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, Matrix, MlpParams, MlpSpec};

/// Regression family of an additive-noise mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorConfig {
    /// Ordinary least squares with intercept.
    Linear,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden_dim: usize,
        #[serde(default = "default_blocks")]
        num_blocks: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
}

fn default_hidden() -> usize {
    64
}
fn default_blocks() -> usize {
    1
}
fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    128
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig::Mlp {
            hidden_dim: default_hidden(),
            num_blocks: default_blocks(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if let RegressorConfig::Mlp {
            hidden_dim,
            epochs,
            learning_rate,
            batch_size,
            ..
        } = self
        {
            if *hidden_dim == 0 || *epochs == 0 || *batch_size == 0 {
                return Err(Error::Config(
                    "ANM regressor hidden_dim, epochs and batch_size must be positive".into(),
                ));
            }
            if !(*learning_rate > 0.0 && learning_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "ANM learning_rate must be > 0, got {learning_rate}"
                )));
            }
        }
        Ok(())
    }
}

/// How one node is modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismConfig {
    /// Observed values stand for themselves.
    Empirical,
    /// `V = f(Pa) + U`.
    Anm {
        #[serde(default)]
        regressor: RegressorConfig,
    },
    /// Conditional diffusion model with a deterministic sampler.
    Diffusion(DiffusionConfig),
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            MechanismConfig::Empirical => Ok(()),
            MechanismConfig::Anm { regressor } => regressor.validate(),
            MechanismConfig::Diffusion(c) => c.validate(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MechanismConfig::Empirical => "empirical",
            MechanismConfig::Anm { .. } => "anm",
            MechanismConfig::Diffusion(c) => match c.sampler_kind {
                SamplerKind::Belm => "diffusion-belm",
                SamplerKind::Ddim => "diffusion-ddim",
            },
        }
    }
}

/// Fitted regression function on normalized inputs and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    Linear { coef: Vec<f64>, intercept: f64 },
    Mlp(MlpParams<f64>),
}

impl Regressor {
    pub fn fit(config: &RegressorConfig, x: &Matrix<f64>, y: &[f64], seed: u64) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dim("regressor rows", y.len(), x.rows()));
        }
        if y.is_empty() {
            return Err(Error::Data("regressor needs data".into()));
        }
        match config {
            RegressorConfig::Linear => fit_linear(x, y),
            RegressorConfig::Mlp {
                hidden_dim,
                num_blocks,
                epochs,
                learning_rate,
                batch_size,
            } => fit_mlp(
                x,
                y,
                MlpSpec {
                    input_dim: x.cols(),
                    hidden_dim: *hidden_dim,
                    num_residual_blocks: *num_blocks,
                    output_dim: 1,
                    activation: Activation::Silu,
                },
                *epochs,
                *learning_rate,
                *batch_size,
                seed,
            ),
        }
    }

    pub fn predict(&self, x: &Matrix<f64>) -> Result<Vec<f64>> {
        match self {
            Regressor::Linear { coef, intercept } => {
                if coef.len() != x.cols() {
                    return Err(Error::dim("linear regressor input", coef.len(), x.cols()));
                }
                Ok((0..x.rows())
                    .map(|i| intercept + x.row(i).iter().zip(coef).map(|(a, b)| a * b).sum::<f64>())
                    .collect())
            }
            Regressor::Mlp(p) => {
                if x.cols() == 0 {
                    // Unconditioned: the network sees a single constant input.
                    let ones = Matrix::from_vec(x.rows(), 1, vec![1.0; x.rows()])?;
                    return Ok(p.forward(&ones)?.into_data());
                }
                Ok(p.forward(x)?.into_data())
            }
        }
    }
}

fn fit_linear(x: &Matrix<f64>, y: &[f64]) -> Result<Regressor> {
    let (n, p) = (x.rows(), x.cols());
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let target = DVector::from_column_slice(y);
    let beta = design
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|e| Error::Data(format!("least squares failed: {e}")))?;
    Ok(Regressor::Linear {
        coef: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
    })
}

#[allow(clippy::too_many_arguments)]
fn fit_mlp(
    x: &Matrix<f64>,
    y: &[f64],
    mut spec: MlpSpec,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Regressor> {
    let ones;
    let x = if x.cols() == 0 {
        ones = Matrix::from_vec(x.rows(), 1, vec![1.0; x.rows()])?;
        spec.input_dim = 1;
        &ones
    } else {
        x
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::init(spec, &mut rng)?;
    let mut adam = AdamState::new(&params, lr);
    let mut order: Vec<usize> = (0..y.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let xb = x.select_rows(chunk);
            let (out, cache) = params.forward_cached(&xb)?;
            let scale = 2.0 / chunk.len() as f64;
            let d: Vec<f64> = out
                .data()
                .iter()
                .zip(chunk)
                .map(|(o, &i)| scale * (o - y[i]))
                .collect();
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: epoch,
                    detail: "non-finite ANM regression loss".into(),
                });
            }
            let (grads, _) = params.backward(&cache, &Matrix::column(&d))?;
            adam.step(&mut params, &grads)?;
        }
    }
    Ok(Regressor::Mlp(params))
}

/// Fitted per-node mechanism.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    /// Stores the observed training column (for bootstrap sampling).
    Empirical { values: Vec<f64> },
    /// Regression on normalized parents plus residual in normalized units.
    Anm {
        regressor: Regressor,
        residual_std: f64,
    },
    Diffusion {
        denoiser: TrainedDenoiser<f64>,
        sampler: SamplerKind,
    },
}

impl Mechanism {
    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::Empirical { .. } => "empirical",
            Mechanism::Anm { .. } => "anm",
            Mechanism::Diffusion { sampler, .. } => match sampler {
                SamplerKind::Belm => "diffusion-belm",
                SamplerKind::Ddim => "diffusion-ddim",
            },
        }
    }
}
