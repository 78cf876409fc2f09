use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam optimizer state with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &MlpParams<S>, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::with_shapes(&shapes, learning_rate)
    }

    /// State for an arbitrary list of flat tensors.
    pub fn with_shapes(shapes: &[usize], learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    /// One Adam step over matching lists of parameter and gradient tensors.
    pub fn step_tensors(&mut self, params: Vec<&mut [S]>, grads: Vec<&[S]>) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::dim(
                "adam tensor count",
                self.first.len(),
                params.len(),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.first[i].len() {
                return Err(Error::dim(
                    "adam tensor shape",
                    self.first[i].len(),
                    g.len(),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: self.step_count as usize,
                    detail: format!("non-finite gradient in tensor {i}"),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = S::of(self.beta1);
        let b2 = S::of(self.beta2);
        let c1 = S::of(1.0 - self.beta1.powi(t));
        let c2 = S::of(1.0 - self.beta2.powi(t));
        let lr = S::of(self.learning_rate);
        let eps = S::of(self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (S::one() - b1) * gj;
                v[j] = b2 * v[j] + (S::one() - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut MlpParams<S>, grads: &MlpParams<S>) -> Result<()> {
        self.step_tensors(params.tensors_mut(), grads.tensors())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = vec![1.5f64, -2.0];
        let mut st = AdamState::<f64>::with_shapes(&[2], 0.1);
        st.step_tensors(vec![&mut p], vec![&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps).
        let mut p = vec![0.0f64];
        let mut st = AdamState::<f64>::with_shapes(&[1], 0.1);
        st.step_tensors(vec![&mut p], vec![&[1.0]]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let mut p = vec![0.0f64];
        let mut st = AdamState::<f64>::with_shapes(&[1], 0.1);
        for _ in 0..1000 {
            let g = 2.0 * (p[0] - 3.0);
            st.step_tensors(vec![&mut p], vec![&[g]]).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-2, "p = {}", p[0]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = vec![0.0f64];
        let mut st = AdamState::<f64>::with_shapes(&[1], 0.1);
        let err = st
            .step_tensors(vec![&mut p], vec![&[f64::NAN]])
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert_eq!(st.step_count, 0);
    }
}
