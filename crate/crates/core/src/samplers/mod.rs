//! Deterministic trajectory operators between data and terminal noise.
//!
//! DDIM runs the first-order update in both directions and so only
//! approximately inverts itself. BELM runs a three-point linear recursion
//! whose inverse is explicit, so decode after encode is exact up to
//! rounding for any noise predictor.

mod belm;
mod ddim;

use serde::{Deserialize, Serialize};

pub use belm::{
    belm_coefficients, belm_decode, belm_decode_generative, belm_encode, BelmCoefficients,
};
pub use ddim::{ddim_decode, ddim_encode, ddim_step_down, ddim_step_up, ddim_transfer};

use crate::diffusion::{NoisePredictor, NoiseSchedule, SamplerKind};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Encoded exogenous representation of a batch of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode<S> {
    /// Terminal states `x_T`.
    pub x_t: Vec<S>,
    /// Penultimate states `x_{T-1}`.
    pub x_aux: Vec<S>,
    pub grid_t: usize,
    pub sampler_kind: SamplerKind,
}

pub(crate) fn check_finite<S: Scalar>(x: &[S], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::TrajectoryBlowup { step })
    }
}

/// Closed-form noise predictor, mostly for tests and diagnostics.
pub struct FnPredictor<S, F> {
    pub schedule: NoiseSchedule<S>,
    pub f: F,
}

impl<S, F> FnPredictor<S, F>
where
    S: Scalar,
    F: Fn(&[S], usize, &Matrix<S>) -> Vec<S>,
{
    pub fn new(schedule: NoiseSchedule<S>, f: F) -> Self {
        FnPredictor { schedule, f }
    }
}

impl<S, F> NoisePredictor<S> for FnPredictor<S, F>
where
    S: Scalar,
    F: Fn(&[S], usize, &Matrix<S>) -> Vec<S>,
{
    fn schedule(&self) -> &NoiseSchedule<S> {
        &self.schedule
    }

    fn predict(&self, states: &[S], t: usize, conditions: &Matrix<S>) -> Result<Vec<S>> {
        Ok((self.f)(states, t, conditions))
    }
}

/// Abduction with the chosen sampler.
pub fn encode<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    kind: SamplerKind,
    x0: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<LatentCode<S>> {
    match kind {
        SamplerKind::Ddim => ddim_encode(x0, conditions, model),
        SamplerKind::Belm => belm_encode(x0, conditions, model),
    }
}

/// Reconstruction from a full latent under the same sampler.
pub fn decode<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    latent: &LatentCode<S>,
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    match latent.sampler_kind {
        SamplerKind::Ddim => {
            if latent.grid_t != model.schedule().steps() {
                return Err(Error::dim(
                    "latent grid",
                    model.schedule().steps(),
                    latent.grid_t,
                ));
            }
            ddim_decode(&latent.x_t, conditions, model)
        }
        SamplerKind::Belm => belm_decode(latent, conditions, model),
    }
}

/// Generation from terminal states alone.
pub fn decode_generative<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    kind: SamplerKind,
    x_t: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    match kind {
        SamplerKind::Ddim => ddim_decode(x_t, conditions, model),
        SamplerKind::Belm => belm_decode_generative(x_t, conditions, model),
    }
}

/// `decode(encode(x))`.
pub fn round_trip<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    kind: SamplerKind,
    x0: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    let latent = encode(kind, x0, conditions, model)?;
    decode(&latent, conditions, model)
}

/// `max |x_hat - x| / max |x|` (absolute error when `x` is all zeros).
pub fn max_relative_error<S: Scalar>(x: &[S], x_hat: &[S]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let err = x
        .iter()
        .zip(x_hat)
        .fold(0.0f64, |m, (a, b)| m.max((*a - *b).to_f64_lossy().abs()));
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Normalized structural reconstruction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SreValue {
    /// Value entering reports: zero by construction for exactly invertible
    /// mechanisms.
    pub reported: f64,
    /// `sum (decode(encode(x)) - x)^2 / sum x^2` as actually computed.
    pub measured: f64,
}

/// Relative squared round-trip error of `x` through a diffusion mechanism.
pub fn sre_measure<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    kind: SamplerKind,
    x: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<SreValue> {
    if x.is_empty() {
        return Err(Error::Data("SRE needs at least one row".into()));
    }
    let x_hat = round_trip(kind, x, conditions, model)?;
    let measured = sre_ratio(x, &x_hat);
    let reported = match kind {
        SamplerKind::Belm => 0.0,
        SamplerKind::Ddim => measured,
    };
    Ok(SreValue { reported, measured })
}

/// `sum (x_hat - x)^2 / sum x^2`.
pub fn sre_ratio<S: Scalar>(x: &[S], x_hat: &[S]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in x.iter().zip(x_hat) {
        let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
        num += (b - a) * (b - a);
        den += a * a;
    }
    if den > 0.0 {
        num / den
    } else {
        num
    }
}
