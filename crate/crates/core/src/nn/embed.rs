use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_PERIOD: f64 = 10_000.0;

/// Sinusoidal timestep embedding, interleaved `[sin(t f0), cos(t f0), sin(t f1), ...]`
/// with frequencies `f_k = MAX_PERIOD^(-k / (dim/2))`.
pub fn sinusoidal_embed<S: Scalar>(t: usize, dim: usize, t_max: usize) -> Result<Vec<S>> {
    let mut out = vec![S::zero(); dim];
    sinusoidal_embed_into(t, t_max, &mut out)?;
    Ok(out)
}

/// Writes the embedding into `out` (its length is the embedding dimension).
pub fn sinusoidal_embed_into<S: Scalar>(t: usize, t_max: usize, out: &mut [S]) -> Result<()> {
    let dim = out.len();
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "time embedding dimension must be positive and even, got {dim}"
        )));
    }
    if t > t_max {
        return Err(Error::OutOfRange {
            index: t,
            max: t_max,
        });
    }
    let half = dim / 2;
    for k in 0..half {
        let freq = (-(MAX_PERIOD.ln()) * k as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[2 * k] = S::of(arg.sin());
        out[2 * k + 1] = S::of(arg.cos());
    }
    Ok(())
}
