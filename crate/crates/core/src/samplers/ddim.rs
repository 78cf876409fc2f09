use super::{check_finite, LatentCode};
use crate::diffusion::{NoisePredictor, NoiseSchedule, SamplerKind};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Moves states from grid index `from` to `to` along the deterministic
/// update `y_to = y_from + (rho_to - rho_from) eps_hat`, `y = x / gamma`.
pub fn ddim_transfer<S: Scalar>(
    x: &[S],
    from: usize,
    to: usize,
    eps_hat: &[S],
    sched: &NoiseSchedule<S>,
) -> Result<Vec<S>> {
    if x.len() != eps_hat.len() {
        return Err(Error::dim("ddim noise prediction", x.len(), eps_hat.len()));
    }
    let (g_from, g_to) = (sched.gamma(from), sched.gamma(to));
    let dr = sched.rho(to) - sched.rho(from);
    Ok(x.iter()
        .zip(eps_hat)
        .map(|(&xi, &e)| g_to * (xi / g_from + dr * e))
        .collect())
}

/// One generative step `x_t -> x_{t-1}` for `1 <= t <= T`.
pub fn ddim_step_down<S: Scalar>(
    x_t: &[S],
    t: usize,
    eps_hat: &[S],
    sched: &NoiseSchedule<S>,
) -> Result<Vec<S>> {
    sched.check_index(t, 1, sched.steps())?;
    ddim_transfer(x_t, t, t - 1, eps_hat, sched)
}

/// One inversion step `x_t -> x_{t+1}` for `0 <= t <= T - 1`, with the noise
/// prediction taken at the current state.
pub fn ddim_step_up<S: Scalar>(
    x_t: &[S],
    t: usize,
    eps_hat: &[S],
    sched: &NoiseSchedule<S>,
) -> Result<Vec<S>> {
    sched.check_index(t, 0, sched.steps() - 1)?;
    ddim_transfer(x_t, t, t + 1, eps_hat, sched)
}

/// Full DDIM inversion `x_0 -> x_T`.
pub fn ddim_encode<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    x0: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<LatentCode<S>> {
    let sched = model.schedule();
    let steps = sched.steps();
    let mut x = x0.to_vec();
    let mut prev = x.clone();
    for t in 0..steps {
        let eps = model.predict(&x, t, conditions)?;
        prev = x;
        x = ddim_step_up(&prev, t, &eps, sched)?;
        check_finite(&x, t + 1)?;
    }
    Ok(LatentCode {
        x_t: x,
        x_aux: prev,
        grid_t: steps,
        sampler_kind: SamplerKind::Ddim,
    })
}

/// Full DDIM generation from the terminal state.
pub fn ddim_decode<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    x_t: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    let sched = model.schedule();
    let mut x = x_t.to_vec();
    check_finite(&x, sched.steps())?;
    for t in (1..=sched.steps()).rev() {
        let eps = model.predict(&x, t, conditions)?;
        x = ddim_step_down(&x, t, &eps, sched)?;
        check_finite(&x, t - 1)?;
    }
    Ok(x)
}
