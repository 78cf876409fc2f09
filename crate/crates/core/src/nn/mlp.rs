//! Residual multilayer perceptron with hand-written backpropagation.
//!
//! Topology:
//!
//! ```text
//! h0      = act(x · W_in + b_in)
//! h_{l+1} = h_l + act(h_l · W1_l + b1_l) · W2_l + b2_l
//! out     = h_L · W_out + b_out
//! ```
//!
//! Weights are stored `fan_in × fan_out` so a batch (one sample per row)
//! multiplies on the left.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Trans};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Silu,
    /// No nonlinearity; used to check layers against closed forms.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Silu => x / (S::one() + (-x).exp()),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Silu => {
                let s = S::one() / (S::one() + (-x).exp());
                s * (S::one() + x * (S::one() - s))
            }
            Activation::Identity => S::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_residual_blocks: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!(
                "MLP dimensions must be >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Affine layer `x · weight + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<S> {
    pub weight: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Dense<S> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![S::zero(); fan_out],
        }
    }

    fn kaiming_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| S::of(rng.random_range(-bound..bound)))
            .collect();
        Dense {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
            bias: vec![S::zero(); fan_out],
        }
    }

    fn forward(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let mut z = Matrix::product(x, Trans::No, &self.weight, Trans::No)?;
        z.add_row_vector(&self.bias);
        Ok(z)
    }

    /// Accumulates weight/bias gradients into `grad` and returns the
    /// gradient with respect to the layer input.
    fn backward(&self, x: &Matrix<S>, dz: &Matrix<S>, grad: &mut Dense<S>) -> Result<Matrix<S>> {
        grad.weight
            .gemm(S::one(), x, Trans::Yes, dz, Trans::No, S::one())?;
        for (g, s) in grad.bias.iter_mut().zip(dz.sum_rows()) {
            *g += s;
        }
        Matrix::product(dz, Trans::No, &self.weight, Trans::Yes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock<S> {
    pub inner: Dense<S>,
    pub outer: Dense<S>,
}

/// Parameters (or, with identical shape, gradients) of a residual MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<S> {
    pub spec: MlpSpec,
    pub input: Dense<S>,
    pub blocks: Vec<ResidualBlock<S>>,
    pub output: Dense<S>,
}

/// Intermediate values kept by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    input: Matrix<S>,
    pre_input: Matrix<S>,
    hidden: Vec<Matrix<S>>,
    pre_block: Vec<Matrix<S>>,
    post_block: Vec<Matrix<S>>,
}

impl<S: Scalar> MlpParams<S> {
    /// All-zero parameters; the network outputs zero for any input.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden_dim;
        Ok(MlpParams {
            spec,
            input: Dense::zeros(spec.input_dim, h),
            blocks: (0..spec.num_residual_blocks)
                .map(|_| ResidualBlock {
                    inner: Dense::zeros(h, h),
                    outer: Dense::zeros(h, h),
                })
                .collect(),
            output: Dense::zeros(h, spec.output_dim),
        })
    }

    /// Kaiming-uniform (fan-in) hidden layers, zero output layer.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden_dim;
        let input = Dense::kaiming_uniform(spec.input_dim, h, rng);
        let blocks = (0..spec.num_residual_blocks)
            .map(|_| ResidualBlock {
                inner: Dense::kaiming_uniform(h, h, rng),
                outer: Dense::kaiming_uniform(h, h, rng),
            })
            .collect();
        Ok(MlpParams {
            spec,
            input,
            blocks,
            output: Dense::zeros(h, spec.output_dim),
        })
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`, output layer
    /// included. Used for gradient checks and adversarial round-trip tests.
    pub fn random<R: Rng + ?Sized>(spec: MlpSpec, scale: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = S::of(rng.random_range(-scale..=scale));
            }
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&[S]> {
        let mut out: Vec<&[S]> = vec![self.input.weight.data(), &self.input.bias];
        for b in &self.blocks {
            out.push(b.inner.weight.data());
            out.push(&b.inner.bias);
            out.push(b.outer.weight.data());
            out.push(&b.outer.bias);
        }
        out.push(self.output.weight.data());
        out.push(&self.output.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut out: Vec<&mut [S]> = vec![self.input.weight.data_mut(), &mut self.input.bias];
        for b in &mut self.blocks {
            out.push(b.inner.weight.data_mut());
            out.push(&mut b.inner.bias);
            out.push(b.outer.weight.data_mut());
            out.push(&mut b.outer.bias);
        }
        out.push(self.output.weight.data_mut());
        out.push(&mut self.output.bias);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &Matrix<S>) -> Result<Matrix<S>> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &Matrix<S>) -> Result<(Matrix<S>, ForwardCache<S>)> {
        if input.cols() != self.spec.input_dim {
            return Err(Error::dim("mlp input", self.spec.input_dim, input.cols()));
        }
        let act = self.spec.activation;
        let pre_input = self.input.forward(input)?;
        let mut h = pre_input.map(|v| act.apply(v));
        let mut hidden = Vec::with_capacity(self.blocks.len() + 1);
        let mut pre_block = Vec::with_capacity(self.blocks.len());
        let mut post_block = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let u = block.inner.forward(&h)?;
            let a = u.map(|v| act.apply(v));
            let mut next = block.outer.forward(&a)?;
            for (n, &prev) in next.data_mut().iter_mut().zip(h.data()) {
                *n += prev;
            }
            hidden.push(h);
            pre_block.push(u);
            post_block.push(a);
            h = next;
        }
        let out = self.output.forward(&h)?;
        hidden.push(h);
        Ok((
            out,
            ForwardCache {
                input: input.clone(),
                pre_input,
                hidden,
                pre_block,
                post_block,
            },
        ))
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    ///
    /// Returns the parameter gradients and the gradient with respect to the
    /// network input.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        upstream: &Matrix<S>,
    ) -> Result<(MlpParams<S>, Matrix<S>)> {
        let last = cache.hidden.last().expect("hidden has L+1 entries");
        if upstream.rows() != last.rows() || upstream.cols() != self.spec.output_dim {
            return Err(Error::dim(
                "mlp upstream gradient",
                last.rows() * self.spec.output_dim,
                upstream.rows() * upstream.cols(),
            ));
        }
        let act = self.spec.activation;
        let mut grad = MlpParams::zeros(self.spec)?;
        let mut dh = self.output.backward(last, upstream, &mut grad.output)?;
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let da = block
                .outer
                .backward(&cache.post_block[l], &dh, &mut grad.blocks[l].outer)?;
            let mut du = da;
            for (d, &u) in du.data_mut().iter_mut().zip(cache.pre_block[l].data()) {
                *d *= act.derivative(u);
            }
            let dh_inner =
                block
                    .inner
                    .backward(&cache.hidden[l], &du, &mut grad.blocks[l].inner)?;
            for (d, &extra) in dh.data_mut().iter_mut().zip(dh_inner.data()) {
                *d += extra;
            }
        }
        let mut dz = dh;
        for (d, &z) in dz.data_mut().iter_mut().zip(cache.pre_input.data()) {
            *d *= act.derivative(z);
        }
        let dx = self.input.backward(&cache.input, &dz, &mut grad.input)?;
        Ok((grad, dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(blocks: usize, act: Activation) -> MlpSpec {
        MlpSpec {
            input_dim: 2,
            hidden_dim: 2,
            num_residual_blocks: blocks,
            output_dim: 1,
            activation: act,
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::<f64>::zeros(spec(2, Activation::Silu)).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -3.0], vec![0.5, 9.0]]).unwrap();
        assert!(p.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_block_network_matches_hand_computation() {
        // h = relu(x W_in + b_in), out = h W_out + b_out on a 2x2 case.
        let mut p = MlpParams::<f64>::zeros(spec(0, Activation::Relu)).unwrap();
        p.input.weight = Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]).unwrap();
        p.input.bias = vec![0.5, -0.25];
        p.output.weight = Matrix::from_rows(&[vec![3.0], vec![-2.0]]).unwrap();
        p.output.bias = vec![0.1];
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 2.0]]).unwrap();
        // row 0: z = [1+2+0.5, -1+0.5-0.25] = [3.5, -0.75] -> h = [3.5, 0] -> 10.5 + 0.1
        // row 1: z = [-1+4+0.5, 1+1-0.25] = [3.5, 1.75] -> 10.5 - 3.5 + 0.1
        let out = p.forward(&x).unwrap();
        assert!((out.get(0, 0) - 10.6).abs() < 1e-12);
        assert!((out.get(1, 0) - 7.1).abs() < 1e-12);
    }

    #[test]
    fn zeroed_block_leaves_output_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s1 = MlpSpec {
            input_dim: 3,
            hidden_dim: 4,
            num_residual_blocks: 1,
            output_dim: 2,
            activation: Activation::Silu,
        };
        let mut with_block = MlpParams::<f64>::random(s1, 0.7, &mut rng).unwrap();
        with_block.blocks[0].outer = Dense::zeros(4, 4);
        let without = MlpParams {
            spec: MlpSpec {
                num_residual_blocks: 0,
                ..s1
            },
            input: with_block.input.clone(),
            blocks: vec![],
            output: with_block.output.clone(),
        };
        let x = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.5, 0.2, -0.7]]).unwrap();
        assert_eq!(
            with_block.forward(&x).unwrap(),
            without.forward(&x).unwrap()
        );
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = MlpSpec {
            input_dim: 5,
            hidden_dim: 16,
            num_residual_blocks: 2,
            output_dim: 1,
            activation: Activation::Silu,
        };
        let p = MlpParams::<f64>::random(s, 0.5, &mut rng).unwrap();
        let x = MlpParams::<f64>::random(
            MlpSpec {
                input_dim: 7,
                hidden_dim: 5,
                num_residual_blocks: 0,
                output_dim: 1,
                activation: Activation::Identity,
            },
            1.0,
            &mut rng,
        )
        .unwrap()
        .input
        .weight;
        let a = p.forward(&x).unwrap();
        let b = p.forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = spec(2, Activation::Silu);
        let p = MlpParams::<f64>::random(s, 1.0, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.4, -0.2]]).unwrap();
        let (_, cache) = p.forward_cached(&x).unwrap();
        let (g, dx) = p.backward(&cache, &Matrix::zeros(1, 1)).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_input_transpose_times_upstream() {
        let s = MlpSpec {
            input_dim: 3,
            hidden_dim: 2,
            num_residual_blocks: 0,
            output_dim: 2,
            activation: Activation::Identity,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = MlpParams::<f64>::random(s, 1.0, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, -1.0], vec![0.5, -0.5, 3.0]]).unwrap();
        let up = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.25, 4.0]]).unwrap();
        let (_, cache) = p.forward_cached(&x).unwrap();
        let (g, _) = p.backward(&cache, &up).unwrap();
        // Output layer sees h = x W_in + b_in; its gradient is h^T * upstream.
        let h = cache.hidden.last().unwrap();
        let expected = Matrix::product(h, Trans::Yes, &up, Trans::No).unwrap();
        for (a, b) in g.output.weight.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Input layer: d out / d W_in = x^T (upstream W_out^T).
        let dh = Matrix::product(&up, Trans::No, &p.output.weight, Trans::Yes).unwrap();
        let expected_in = Matrix::product(&x, Trans::Yes, &dh, Trans::No).unwrap();
        for (a, b) in g.input.weight.data().iter().zip(expected_in.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let p = MlpParams::<f64>::zeros(spec(1, Activation::Relu)).unwrap();
        let x = Matrix::<f64>::zeros(3, 5);
        assert!(matches!(p.forward(&x), Err(Error::Dimension { .. })));
    }
}
