use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::nn::{sinusoidal_embed_into, Matrix, MlpParams};
use crate::scalar::Scalar;

/// Anything that predicts the noise component of a batch of scalar states.
///
/// `conditions` has one row per state (zero columns for unconditioned
/// mechanisms). Samplers only interact with denoisers through this trait,
/// which lets tests substitute closed-form stubs.
pub trait NoisePredictor<S: Scalar> {
    fn schedule(&self) -> &NoiseSchedule<S>;

    fn predict(&self, states: &[S], t: usize, conditions: &Matrix<S>) -> Result<Vec<S>>;
}

/// Classifier-free guidance: `(1 + w) eps_cond - w eps_uncond`.
pub fn cfg_mix<S: Scalar>(eps_cond: &[S], eps_uncond: &[S], w: S) -> Vec<S> {
    debug_assert_eq!(eps_cond.len(), eps_uncond.len());
    if w == S::zero() {
        return eps_cond.to_vec();
    }
    eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(&c, &u)| (S::one() + w) * c - w * u)
        .collect()
}

/// Column layout of the denoiser input: `[x_t, embed(t), condition, null_flag]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub embed_dim: usize,
    pub condition_dim: usize,
}

impl InputLayout {
    pub fn width(&self) -> usize {
        1 + self.embed_dim + self.condition_dim + 1
    }
}

/// Precomputed time embeddings for every grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable<S> {
    table: Matrix<S>,
}

impl<S: Scalar> EmbeddingTable<S> {
    pub fn new(steps: usize, dim: usize) -> Result<Self> {
        let mut table = Matrix::zeros(steps + 1, dim);
        for t in 0..=steps {
            sinusoidal_embed_into(t, steps, table.row_mut(t))?;
        }
        Ok(EmbeddingTable { table })
    }

    #[inline]
    pub fn get(&self, t: usize) -> &[S] {
        self.table.row(t)
    }

    pub fn steps(&self) -> usize {
        self.table.rows() - 1
    }
}

/// Assembles network inputs; `null[i]` replaces row `i`'s condition by zeros
/// and raises its null flag.
pub(crate) fn assemble_input<S: Scalar>(
    layout: InputLayout,
    embeddings: &EmbeddingTable<S>,
    states: &[S],
    timesteps: &[usize],
    conditions: &Matrix<S>,
    null: &[bool],
) -> Matrix<S> {
    let n = states.len();
    let mut input = Matrix::zeros(n, layout.width());
    let e = layout.embed_dim;
    let c = layout.condition_dim;
    for i in 0..n {
        let row = input.row_mut(i);
        row[0] = states[i];
        row[1..1 + e].copy_from_slice(embeddings.get(timesteps[i]));
        if null[i] {
            row[1 + e + c] = S::one();
        } else if c > 0 {
            row[1 + e..1 + e + c].copy_from_slice(conditions.row(i));
        }
    }
    input
}

/// A trained conditional noise predictor `eps_theta(x_t, t, c)` with guidance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDenoiser<S> {
    pub network: MlpParams<S>,
    pub schedule: NoiseSchedule<S>,
    pub layout: InputLayout,
    pub guidance_weight: f64,
    embeddings: EmbeddingTable<S>,
}

impl<S: Scalar> TrainedDenoiser<S> {
    pub fn new(
        network: MlpParams<S>,
        schedule: NoiseSchedule<S>,
        layout: InputLayout,
        guidance_weight: f64,
    ) -> Result<Self> {
        if network.spec.input_dim != layout.width() || network.spec.output_dim != 1 {
            return Err(Error::dim(
                "denoiser network input",
                layout.width(),
                network.spec.input_dim,
            ));
        }
        let embeddings = EmbeddingTable::new(schedule.steps(), layout.embed_dim)?;
        Ok(TrainedDenoiser {
            network,
            schedule,
            layout,
            guidance_weight,
            embeddings,
        })
    }

    /// Raw prediction with every row either conditioned or null.
    pub fn predict_branch(
        &self,
        states: &[S],
        t: usize,
        conditions: &Matrix<S>,
        unconditional: bool,
    ) -> Result<Vec<S>> {
        let steps = vec![t; states.len()];
        let null = vec![unconditional; states.len()];
        let input = assemble_input(
            self.layout,
            &self.embeddings,
            states,
            &steps,
            conditions,
            &null,
        );
        Ok(self.network.forward(&input)?.into_data())
    }
}

impl<S: Scalar> NoisePredictor<S> for TrainedDenoiser<S> {
    fn schedule(&self) -> &NoiseSchedule<S> {
        &self.schedule
    }

    fn predict(&self, states: &[S], t: usize, conditions: &Matrix<S>) -> Result<Vec<S>> {
        self.schedule.check_index(t, 0, self.schedule.steps())?;
        if conditions.rows() != states.len() || conditions.cols() != self.layout.condition_dim {
            return Err(Error::dim(
                "denoiser conditions",
                states.len() * self.layout.condition_dim,
                conditions.rows() * conditions.cols(),
            ));
        }
        // Without a condition the null branch is the only branch.
        let unconditioned = self.layout.condition_dim == 0;
        let cond = self.predict_branch(states, t, conditions, false)?;
        if self.guidance_weight == 0.0 || unconditioned {
            return Ok(cond);
        }
        let uncond = self.predict_branch(states, t, conditions, true)?;
        Ok(cfg_mix(&cond, &uncond, S::of(self.guidance_weight)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guidance_mixing_cases() {
        assert_eq!(cfg_mix(&[1.5f64, -2.0], &[7.0, 3.0], 0.0), vec![1.5, -2.0]);
        assert!((cfg_mix(&[0.3f64], &[0.3], 5.0)[0] - 0.3).abs() < 1e-15);
        assert_eq!(cfg_mix(&[1.0f64], &[0.0], 1.0), vec![2.0]);
    }

    #[test]
    fn input_layout_places_condition_and_flag() {
        let layout = InputLayout {
            embed_dim: 2,
            condition_dim: 2,
        };
        let emb = EmbeddingTable::<f64>::new(4, 2).unwrap();
        let cond = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let m = assemble_input(layout, &emb, &[0.5, -0.5], &[0, 4], &cond, &[false, true]);
        assert_eq!(m.row(0), &[0.5, 0.0, 1.0, 5.0, 6.0, 0.0]);
        assert_eq!(&m.row(1)[3..], &[0.0, 0.0, 1.0]);
        assert_eq!(m.row(1)[1], 4.0f64.sin());
    }
}
