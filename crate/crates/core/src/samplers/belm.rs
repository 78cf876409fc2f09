use serde::{Deserialize, Serialize};

use super::{check_finite, LatentCode};
use crate::diffusion::{NoisePredictor, NoiseSchedule, SamplerKind};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Weights of the three-point relation
/// `y_{i-1} = a_i y_i + b_i y_{i+1} + d_i eps(x_i, i)` for `1 <= i <= T - 1`.
///
/// Index 0 and `T` are unused and hold zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BelmCoefficients<S> {
    pub a: Vec<S>,
    pub b: Vec<S>,
    pub d: Vec<S>,
}

/// Second-order consistent three-point weights on the `rho` grid.
pub fn belm_coefficients<S: Scalar>(sched: &NoiseSchedule<S>) -> Result<BelmCoefficients<S>> {
    let steps = sched.steps();
    if steps < 4 {
        return Err(Error::Config(format!(
            "three-point recursion needs T >= 4, got {steps}"
        )));
    }
    let mut a = vec![S::zero(); steps + 1];
    let mut b = vec![S::zero(); steps + 1];
    let mut d = vec![S::zero(); steps + 1];
    for i in 1..steps {
        let h1 = sched.rho(i - 1) - sched.rho(i);
        let h2 = sched.rho(i + 1) - sched.rho(i);
        if !(h1 < S::zero() && h2 > S::zero()) {
            return Err(Error::Config(format!("rho grid is not increasing at {i}")));
        }
        let r = h1 / h2;
        b[i] = r * r;
        a[i] = S::one() - b[i];
        d[i] = h1 * (h2 - h1) / h2;
    }
    Ok(BelmCoefficients { a, b, d })
}

fn scale<S: Scalar>(v: &[S], k: S) -> Vec<S> {
    v.iter().map(|&x| x * k).collect()
}

/// Abduction `x_0 -> (x_T, x_{T-1})` through the inverted recursion.
pub fn belm_encode<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    x0: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<LatentCode<S>> {
    let sched = model.schedule();
    let coef = belm_coefficients(sched)?;
    let steps = sched.steps();
    // y = x / gamma; gamma_0 = 1.
    let eps0 = model.predict(x0, 0, conditions)?;
    let dr = sched.rho(1) - sched.rho(0);
    let mut y_prev: Vec<S> = x0.to_vec();
    let mut y: Vec<S> = x0.iter().zip(&eps0).map(|(&x, &e)| x + dr * e).collect();
    check_finite(&y, 1)?;
    for i in 1..steps {
        let x_i = scale(&y, sched.gamma(i));
        let eps = model.predict(&x_i, i, conditions)?;
        let (b, d) = (coef.b[i], coef.d[i]);
        // Increment form of `(y_{i-1} - a y_i - d eps) / b`.
        let y_next: Vec<S> = (0..y.len())
            .map(|j| y[j] + (y_prev[j] - y[j] - d * eps[j]) / b)
            .collect();
        check_finite(&y_next, i + 1)?;
        y_prev = y;
        y = y_next;
    }
    Ok(LatentCode {
        x_t: scale(&y, sched.gamma(steps)),
        x_aux: scale(&y_prev, sched.gamma(steps - 1)),
        grid_t: steps,
        sampler_kind: SamplerKind::Belm,
    })
}

/// Runs the forward recursion from the pair `(x_T, x_{T-1})` down to `x_0`.
pub fn belm_decode<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    latent: &LatentCode<S>,
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    let sched = model.schedule();
    let steps = sched.steps();
    if latent.grid_t != steps {
        return Err(Error::dim("latent grid", steps, latent.grid_t));
    }
    if latent.x_t.len() != latent.x_aux.len() {
        return Err(Error::dim(
            "latent pair",
            latent.x_t.len(),
            latent.x_aux.len(),
        ));
    }
    check_finite(&latent.x_t, steps)?;
    check_finite(&latent.x_aux, steps - 1)?;
    let y_top = scale(&latent.x_t, S::one() / sched.gamma(steps));
    let y_aux = scale(&latent.x_aux, S::one() / sched.gamma(steps - 1));
    run_down(y_top, y_aux, conditions, model)
}

fn run_down<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    mut y_next: Vec<S>,
    mut y: Vec<S>,
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    let sched = model.schedule();
    let coef = belm_coefficients(sched)?;
    for i in (1..sched.steps()).rev() {
        let x_i = scale(&y, sched.gamma(i));
        let eps = model.predict(&x_i, i, conditions)?;
        let (b, d) = (coef.b[i], coef.d[i]);
        // Increment form of `a y_i + b y_{i+1} + d eps` with `a = 1 - b`.
        let y_prev: Vec<S> = (0..y.len())
            .map(|j| y[j] + b * (y_next[j] - y[j]) + d * eps[j])
            .collect();
        check_finite(&y_prev, i - 1)?;
        y_next = y;
        y = y_prev;
    }
    Ok(y)
}

/// Generation from a terminal state alone: one DDIM step supplies `x_{T-1}`,
/// then the recursion runs to `x_0`.
pub fn belm_decode_generative<S: Scalar, P: NoisePredictor<S> + ?Sized>(
    x_t: &[S],
    conditions: &Matrix<S>,
    model: &P,
) -> Result<Vec<S>> {
    let sched = model.schedule();
    let steps = sched.steps();
    check_finite(x_t, steps)?;
    let eps = model.predict(x_t, steps, conditions)?;
    let y_top = scale(x_t, S::one() / sched.gamma(steps));
    let dr = sched.rho(steps - 1) - sched.rho(steps);
    let y_aux: Vec<S> = y_top.iter().zip(&eps).map(|(&y, &e)| y + dr * e).collect();
    check_finite(&y_aux, steps - 1)?;
    run_down(y_top, y_aux, conditions, model)
}
