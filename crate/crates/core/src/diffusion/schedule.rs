use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower end of the linear β ramp on a 1000-step grid.
pub const BETA_START: f64 = 1e-4;
/// Upper end of the linear β ramp on a 1000-step grid.
pub const BETA_END: f64 = 0.02;
const REFERENCE_STEPS: f64 = 1000.0;

/// Noise levels on the grid `t = 0..=T`.
///
/// `gamma = sqrt(alpha_bar)`, `sigma = sqrt(1 - alpha_bar)`, `rho = sigma / gamma`.
/// In the coordinates `y = x / gamma` the deterministic sampler ODE reads
/// `dy/drho = eps`, which is what the samplers integrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule<S> {
    steps: usize,
    beta: Vec<S>,
    alpha_bar: Vec<S>,
    gamma: Vec<S>,
    sigma: Vec<S>,
    rho: Vec<S>,
}

impl<S: Scalar> NoiseSchedule<S> {
    /// Linear β ramp from `1e-4` to `0.02` taken in its continuous-time limit,
    /// `alpha_bar(s) = exp(-(b0 s + (b1 - b0) s^2 / 2))` with `s = t/T` and
    /// `b0, b1` the ramp ends rescaled to a unit time horizon.
    ///
    /// Every `T` discretizes the same probability-flow ODE, so trajectories
    /// refine as `T` grows; at `T = 1000` the per-step β equals the ramp.
    pub fn linear(steps: usize) -> Result<Self> {
        if steps < 4 {
            return Err(Error::Config(format!(
                "noise schedule needs T >= 4 steps, got {steps}"
            )));
        }
        let b0 = BETA_START * REFERENCE_STEPS;
        let b1 = BETA_END * REFERENCE_STEPS;
        let alpha_bar: Vec<f64> = (0..=steps)
            .map(|t| {
                let s = t as f64 / steps as f64;
                (-(b0 * s + 0.5 * (b1 - b0) * s * s)).exp()
            })
            .collect();
        Self::from_alpha_bar(&alpha_bar)
    }

    /// Builds a schedule from an explicit `alpha_bar` grid (length `T + 1`).
    pub fn from_alpha_bar(alpha_bar: &[f64]) -> Result<Self> {
        let steps = alpha_bar.len().saturating_sub(1);
        if steps < 4 {
            return Err(Error::Config(format!(
                "noise schedule needs T >= 4 steps, got {steps}"
            )));
        }
        if alpha_bar[0] != 1.0 {
            return Err(Error::Config("alpha_bar[0] must equal 1".into()));
        }
        if !alpha_bar.windows(2).all(|w| w[1] < w[0]) || alpha_bar[steps] <= 0.0 {
            return Err(Error::Config(
                "alpha_bar must be strictly decreasing and positive".into(),
            ));
        }
        let beta = alpha_bar
            .windows(2)
            .map(|w| S::of(1.0 - w[1] / w[0]))
            .collect();
        let gamma: Vec<f64> = alpha_bar.iter().map(|a| a.sqrt()).collect();
        let sigma: Vec<f64> = alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect();
        let rho = sigma
            .iter()
            .zip(&gamma)
            .map(|(s, g)| S::of(s / g))
            .collect();
        Ok(NoiseSchedule {
            steps,
            beta,
            alpha_bar: alpha_bar.iter().map(|&a| S::of(a)).collect(),
            gamma: gamma.into_iter().map(S::of).collect(),
            sigma: sigma.into_iter().map(S::of).collect(),
            rho,
        })
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta(&self) -> &[S] {
        &self.beta
    }

    pub fn alpha_bar(&self) -> &[S] {
        &self.alpha_bar
    }

    #[inline]
    pub fn gamma(&self, t: usize) -> S {
        self.gamma[t]
    }

    #[inline]
    pub fn sigma(&self, t: usize) -> S {
        self.sigma[t]
    }

    #[inline]
    pub fn rho(&self, t: usize) -> S {
        self.rho[t]
    }

    pub fn rhos(&self) -> &[S] {
        &self.rho
    }

    pub(crate) fn check_index(&self, t: usize, lo: usize, hi: usize) -> Result<()> {
        if t < lo || t > hi {
            return Err(Error::OutOfRange { index: t, max: hi });
        }
        Ok(())
    }
}

/// Forward noising `x_t = gamma_t x0 + sigma_t eps` for `1 <= t <= T`.
pub fn q_sample<S: Scalar>(
    x0: &[S],
    t: usize,
    eps: &[S],
    sched: &NoiseSchedule<S>,
) -> Result<Vec<S>> {
    sched.check_index(t, 1, sched.steps())?;
    if x0.len() != eps.len() {
        return Err(Error::dim("q_sample noise", x0.len(), eps.len()));
    }
    let (g, s) = (sched.gamma(t), sched.sigma(t));
    Ok(x0.iter().zip(eps).map(|(&x, &e)| g * x + s * e).collect())
}
