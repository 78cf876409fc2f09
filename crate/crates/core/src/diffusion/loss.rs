use serde::{Deserialize, Serialize};

use super::denoiser::{assemble_input, EmbeddingTable, InputLayout};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{Matrix, MlpParams};
use crate::scalar::Scalar;

/// Temperature of the distance-based class logits.
pub const CATEGORICAL_TEMPERATURE: f64 = 0.5;

/// What the mechanism's target column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Continuous,
    /// Label codes `0..num_classes`.
    Categorical,
}

/// Task loss attached to the denoised estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskLoss {
    Continuous,
    Categorical { num_classes: usize },
}

/// One minibatch with its random draws fixed.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub x0: Vec<S>,
    pub conditions: Matrix<S>,
    pub timesteps: Vec<usize>,
    pub eps: Vec<S>,
    pub null: Vec<bool>,
}

impl<S: Scalar> Batch<S> {
    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    fn validate(&self, sched: &NoiseSchedule<S>) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Data("loss needs a non-empty batch".into()));
        }
        for (name, len) in [
            ("batch timesteps", self.timesteps.len()),
            ("batch noise", self.eps.len()),
            ("batch null mask", self.null.len()),
            ("batch conditions", self.conditions.rows()),
        ] {
            if len != n {
                return Err(Error::dim(name, n, len));
            }
        }
        for &t in &self.timesteps {
            sched.check_index(t, 1, sched.steps())?;
        }
        Ok(())
    }
}

/// Loss components on one batch; `total = simple + lambda * task`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub simple: f64,
    pub task: f64,
    pub total: f64,
}

/// Loss value and its gradient with respect to each noise prediction.
///
/// `x_t` are the noised inputs the predictions were made from. With
/// `lambda == 0` the task term is skipped entirely.
pub fn loss_from_predictions<S: Scalar>(
    eps: &[S],
    eps_hat: &[S],
    x0: &[S],
    x_t: &[S],
    timesteps: &[usize],
    sched: &NoiseSchedule<S>,
    lambda: f64,
    task: TaskLoss,
) -> Result<(LossTerms, Vec<S>)> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "hybrid weight must be >= 0, got {lambda}"
        )));
    }
    let n = eps.len();
    if n == 0 {
        return Err(Error::Data("loss needs a non-empty batch".into()));
    }
    let inv_n = S::of(1.0 / n as f64);
    let two = S::of(2.0);
    let mut simple = S::zero();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let r = eps_hat[i] - eps[i];
        simple += r * r;
        grad.push(two * r * inv_n);
    }
    simple *= inv_n;

    let mut task_value = S::zero();
    if lambda > 0.0 {
        let lam = S::of(lambda);
        for i in 0..n {
            let t = timesteps[i];
            let (g, s) = (sched.gamma(t), sched.sigma(t));
            let x0_hat = (x_t[i] - s * eps_hat[i]) / g;
            // d x0_hat / d eps_hat = -rho_t
            let dx = -sched.rho(t);
            let (value, d_value) = match task {
                TaskLoss::Continuous => {
                    let r = x0_hat - x0[i];
                    (r * r, two * r)
                }
                TaskLoss::Categorical { num_classes } => {
                    let label = x0[i].to_f64_lossy().round() as usize;
                    categorical_ce(x0_hat, label.min(num_classes - 1), num_classes)
                }
            };
            task_value += value;
            grad[i] += lam * d_value * dx * inv_n;
        }
        task_value *= inv_n;
    }
    let simple = simple.to_f64_lossy();
    let task_value = task_value.to_f64_lossy();
    let total = if lambda > 0.0 {
        simple + lambda * task_value
    } else {
        simple
    };
    Ok((
        LossTerms {
            simple,
            task: task_value,
            total,
        },
        grad,
    ))
}

/// Cross-entropy of `logit_k = -(x - k)^2 / tau` against `label`, and its
/// derivative with respect to `x`.
pub fn categorical_ce<S: Scalar>(x: S, label: usize, num_classes: usize) -> (S, S) {
    let tau = S::of(CATEGORICAL_TEMPERATURE);
    let logits: Vec<S> = (0..num_classes)
        .map(|k| {
            let d = x - S::of(k as f64);
            -(d * d) / tau
        })
        .collect();
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let sum: S = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let mut deriv = S::zero();
    for (k, &l) in logits.iter().enumerate() {
        let p = (l - log_z).exp();
        let indicator = if k == label { S::one() } else { S::zero() };
        let dlogit = -S::of(2.0) * (x - S::of(k as f64)) / tau;
        deriv += (p - indicator) * dlogit;
    }
    (log_z - logits[label], deriv)
}

/// Hybrid loss of a network on a batch with the gradient of `total`
/// with respect to every parameter.
pub fn network_loss<S: Scalar>(
    network: &MlpParams<S>,
    layout: InputLayout,
    embeddings: &EmbeddingTable<S>,
    sched: &NoiseSchedule<S>,
    batch: &Batch<S>,
    lambda: f64,
    task: TaskLoss,
) -> Result<(LossTerms, MlpParams<S>)> {
    batch.validate(sched)?;
    let x_t: Vec<S> = (0..batch.len())
        .map(|i| {
            let t = batch.timesteps[i];
            sched.gamma(t) * batch.x0[i] + sched.sigma(t) * batch.eps[i]
        })
        .collect();
    let input = assemble_input(
        layout,
        embeddings,
        &x_t,
        &batch.timesteps,
        &batch.conditions,
        &batch.null,
    );
    let (out, cache) = network.forward_cached(&input)?;
    let (terms, d_pred) = loss_from_predictions(
        &batch.eps,
        out.data(),
        &batch.x0,
        &x_t,
        &batch.timesteps,
        sched,
        lambda,
        task,
    )?;
    if !terms.total.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            detail: format!("non-finite loss {}", terms.total),
        });
    }
    let (grads, _) = network.backward(&cache, &Matrix::column(&d_pred))?;
    Ok((terms, grads))
}

/// `mean ||eps - eps_theta(x_t, t, c)||^2` with its parameter gradient.
pub fn loss_simple<S: Scalar>(
    network: &MlpParams<S>,
    layout: InputLayout,
    embeddings: &EmbeddingTable<S>,
    sched: &NoiseSchedule<S>,
    batch: &Batch<S>,
) -> Result<(f64, MlpParams<S>)> {
    let (terms, grads) = network_loss(
        network,
        layout,
        embeddings,
        sched,
        batch,
        0.0,
        TaskLoss::Continuous,
    )?;
    Ok((terms.simple, grads))
}

/// `loss_simple + lambda * task` with its parameter gradient.
pub fn loss_hybrid<S: Scalar>(
    network: &MlpParams<S>,
    layout: InputLayout,
    embeddings: &EmbeddingTable<S>,
    sched: &NoiseSchedule<S>,
    batch: &Batch<S>,
    lambda: f64,
    task: TaskLoss,
) -> Result<(LossTerms, MlpParams<S>)> {
    network_loss(network, layout, embeddings, sched, batch, lambda, task)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::linear(10).unwrap()
    }

    #[test]
    fn zero_predictor_gives_mean_squared_noise() {
        let s = sched();
        let eps = [0.5, -1.5, 1.0];
        let (terms, _) = loss_from_predictions(
            &eps,
            &[0.0; 3],
            &[0.0; 3],
            &[0.0; 3],
            &[1, 2, 3],
            &s,
            0.0,
            TaskLoss::Continuous,
        )
        .unwrap();
        assert!((terms.simple - (0.25 + 2.25 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictor_has_zero_loss_and_task() {
        let s = sched();
        let x0 = [0.3, -2.0];
        let eps = [1.1, -0.4];
        let ts = [3, 10];
        let x_t: Vec<f64> = (0..2)
            .map(|i| s.gamma(ts[i]) * x0[i] + s.sigma(ts[i]) * eps[i])
            .collect();
        let (terms, grad) =
            loss_from_predictions(&eps, &eps, &x0, &x_t, &ts, &s, 2.0, TaskLoss::Continuous)
                .unwrap();
        assert_eq!(terms.simple, 0.0);
        assert!(terms.task < 1e-24);
        assert!(grad.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn categorical_hand_value() {
        // Two classes, estimate exactly at class 1: logits (-2, 0).
        let (ce, _) = categorical_ce(1.0f64, 1, 2);
        assert!((ce - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-14);
        assert!((ce - 0.126_928_011_042_972_6).abs() < 1e-12);
    }

    #[test]
    fn categorical_derivative_matches_finite_difference() {
        for &(x, label) in &[(0.3f64, 0usize), (1.7, 2), (-0.4, 1)] {
            let (_, d) = categorical_ce(x, label, 3);
            let h = 1e-6;
            let fd =
                (categorical_ce(x + h, label, 3).0 - categorical_ce(x - h, label, 3).0) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7, "x={x}: {d} vs {fd}");
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let s = sched();
        let r = loss_from_predictions(
            &[0.0],
            &[0.0],
            &[0.0],
            &[0.0],
            &[1],
            &s,
            -0.1,
            TaskLoss::Continuous,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
