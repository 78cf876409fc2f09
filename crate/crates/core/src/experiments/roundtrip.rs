use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mean, ExperimentConfig, Outcome, Table};
use crate::counterfactual::median;
use crate::dgp::gen_stress_noninvertible;
use crate::diffusion::{
    task_for, train_denoiser, DiffusionConfig, InputLayout, NoisePredictor, NoiseSchedule,
    SamplerKind, TrainedDenoiser,
};
use crate::error::Result;
use crate::nn::{Activation, Matrix, MlpParams, MlpSpec};
use crate::samplers::{max_relative_error, round_trip, FnPredictor};
use crate::scm::MechanismConfig;

/// Largest accepted BELM round-trip error.
pub const BELM_TOLERANCE: f64 = 1e-8;
/// DDIM must lose at least this much at `T = 50`.
pub const DDIM_FLOOR: f64 = 1e-6;
/// Accepted range of the log-log slope of DDIM error against `T`.
pub const SLOPE_RANGE: (f64, f64) = (-1.4, -0.6);

const STUB_STEPS: usize = 50;
const INPUT_RANGE: f64 = 3.0;
const RANDOM_EMBED_DIM: usize = 8;

fn tanh_stub(
    steps: usize,
) -> Result<FnPredictor<f64, impl Fn(&[f64], usize, &Matrix<f64>) -> Vec<f64>>> {
    Ok(FnPredictor::new(
        NoiseSchedule::linear(steps)?,
        |x: &[f64], _, _: &Matrix<f64>| x.iter().map(|v| v.tanh()).collect(),
    ))
}

/// Oscillating, discontinuous at zero and time dependent, with Lipschitz
/// constant 2 away from the jump.
fn adversarial_stub(
    steps: usize,
) -> Result<FnPredictor<f64, impl Fn(&[f64], usize, &Matrix<f64>) -> Vec<f64>>> {
    Ok(FnPredictor::new(
        NoiseSchedule::linear(steps)?,
        move |x: &[f64], t, _: &Matrix<f64>| {
            let s = t as f64 / steps as f64;
            x.iter()
                .map(|v| 0.5 * (4.0 * v).sin() + 0.25 * v.signum() + 0.5 * (3.0 * s).cos())
                .collect()
        },
    ))
}

fn random_denoiser(scale: f64, seed: u64) -> Result<TrainedDenoiser<f64>> {
    let layout = InputLayout {
        embed_dim: RANDOM_EMBED_DIM,
        condition_dim: 0,
    };
    let spec = MlpSpec {
        input_dim: layout.width(),
        hidden_dim: 32,
        num_residual_blocks: 2,
        output_dim: 1,
        activation: Activation::Silu,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = MlpParams::random(spec, scale, &mut rng)?;
    TrainedDenoiser::new(net, NoiseSchedule::linear(STUB_STEPS)?, layout, 0.0)
}

/// Unconditional denoiser trained on stress-test outcomes.
fn trained_denoiser(config: &ExperimentConfig, seed: u64) -> Result<TrainedDenoiser<f64>> {
    let cfg = match config.mechanisms.get("Y") {
        Some(MechanismConfig::Diffusion(c)) => c.clone(),
        _ => DiffusionConfig {
            timesteps: STUB_STEPS,
            hidden_dim: 32,
            epochs: 20,
            ..DiffusionConfig::default()
        },
    };
    let g = gen_stress_noninvertible(config.n.max(100), seed)?;
    let y = g.data.column(&g.outcome)?;
    let (den, _) = train_denoiser(
        y,
        &Matrix::zeros(y.len(), 0),
        &cfg,
        task_for(cfg.target_kind, y),
        seed,
    )?;
    Ok(den)
}

fn belm_error<P: NoisePredictor<f64>>(x: &[f64], model: &P) -> Result<f64> {
    let back = round_trip(SamplerKind::Belm, x, &Matrix::zeros(x.len(), 0), model)?;
    Ok(max_relative_error(x, &back))
}

/// Median over inputs of `|x_hat - x| / |x|`.
fn ddim_median_error(x: &[f64], steps: usize) -> Result<f64> {
    let back = round_trip(
        SamplerKind::Ddim,
        x,
        &Matrix::zeros(x.len(), 0),
        &tanh_stub(steps)?,
    )?;
    let rel: Vec<f64> = x
        .iter()
        .zip(&back)
        .filter(|(a, _)| a.abs() > 1e-12)
        .map(|(a, b)| ((b - a) / a).abs())
        .collect();
    Ok(median(&rel))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

const DENOISERS: [&str; 5] = [
    "tanh",
    "adversarial",
    "random_small",
    "random_large",
    "trained",
];

pub(crate) fn run(config: &ExperimentConfig) -> Result<Outcome> {
    let grid = config.options.step_grid.clone();
    let mut out = Outcome::default();
    out.for_each_seed(&config.seeds, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..config.n)
            .map(|_| rng.random_range(-INPUT_RANGE..INPUT_RANGE))
            .collect();
        let mut v = BTreeMap::new();
        let errs = [
            belm_error(&x, &tanh_stub(STUB_STEPS)?)?,
            belm_error(&x, &adversarial_stub(STUB_STEPS)?)?,
            belm_error(&x, &random_denoiser(0.2, seed.wrapping_add(1))?)?,
            belm_error(&x, &random_denoiser(0.4, seed.wrapping_add(2))?)?,
            belm_error(&x, &trained_denoiser(config, seed)?)?,
        ];
        for (name, e) in DENOISERS.iter().zip(errs) {
            v.insert(format!("belm.{name}.max_rel_error"), e);
        }
        for &t in &grid {
            v.insert(
                format!("ddim.T{t:04}.median_rel_error"),
                ddim_median_error(&x, t)?,
            );
        }
        if !grid.contains(&STUB_STEPS) {
            v.insert(
                format!("ddim.T{STUB_STEPS:04}.median_rel_error"),
                ddim_median_error(&x, STUB_STEPS)?,
            );
        }
        let ys: Vec<f64> = grid
            .iter()
            .map(|t| v[&format!("ddim.T{t:04}.median_rel_error")])
            .collect();
        let ts: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
        v.insert("ddim.slope".into(), log_log_slope(&ts, &ys));
        Ok(v)
    })?;

    let mut t = Table::new("belm_round_trip", &["denoiser", "max_rel_error_worst_seed"]);
    let mut worst = 0.0f64;
    for name in DENOISERS {
        let w = out
            .series(&format!("belm.{name}.max_rel_error"))
            .into_iter()
            .fold(0.0f64, f64::max);
        worst = worst.max(w);
        t.push(name, vec![w]);
    }
    out.tables.push(t);
    let mut t = Table::new("ddim_round_trip", &["timesteps", "median_rel_error"]);
    for &steps in &grid {
        t.push(
            &steps.to_string(),
            vec![mean(
                &out.series(&format!("ddim.T{steps:04}.median_rel_error")),
            )],
        );
    }
    out.tables.push(t);

    out.check(
        "belm_max_rel_error_at_most_1e-8",
        worst <= BELM_TOLERANCE,
        format!(
            "largest BELM round-trip error {worst:.3e} over {} denoisers",
            DENOISERS.len()
        ),
    );
    let at50 = out.series(&format!("ddim.T{STUB_STEPS:04}.median_rel_error"));
    let low = at50.iter().copied().fold(f64::INFINITY, f64::min);
    out.check(
        "ddim_error_above_1e-6_at_T50",
        low > DDIM_FLOOR,
        format!("smallest per-seed median DDIM error at T = 50: {low:.3e}"),
    );
    let slopes = out.series("ddim.slope");
    let ok = slopes
        .iter()
        .all(|s| (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(s));
    out.check(
        "ddim_slope_in_range",
        ok,
        format!(
            "log-log slopes {} (accepted [{}, {}])",
            slopes
                .iter()
                .map(|s| format!("{s:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            SLOPE_RANGE.0,
            SLOPE_RANGE.1
        ),
    );
    out.notes
        .push("Inputs are uniform on [-3, 3]. DDIM errors use the tanh stub.".into());
    out.notes.push("Random networks draw every weight from U(-0.2, 0.2) or U(-0.4, 0.4). Round-off in the BELM recursion grows with the denoiser's Lipschitz constant, so much steeper networks lose digits even though the inverse is exact algebraically.".into());
    Ok(out)
}
