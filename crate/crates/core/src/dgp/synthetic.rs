use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{logistic, mean, normal, require_rows, sigmoid, uniform, GeneratedData};
use crate::error::Result;
use crate::scm::{CausalGraph, Dataset, NodeKind};

const C: NodeKind = NodeKind::Continuous;
const K: NodeKind = NodeKind::Categorical;

/// Monte-Carlo sample size of the mediation truth oracle.
pub const ABLATION_MC_SAMPLES: usize = 200_000;
/// Published approximate effect for the mediation design.
pub const ABLATION_REFERENCE_ATE: f64 = 202.29;

fn noises(pairs: Vec<(&str, Vec<f64>)>) -> BTreeMap<String, Vec<f64>> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn columns(cols: Vec<(&str, NodeKind, Vec<f64>)>) -> Result<Dataset> {
    Dataset::from_columns(cols.into_iter().map(|(n, k, v)| (n.to_string(), k, v)))
}

/// Confounded design where propensity matching struggles: a categorical
/// confounder with nonlinear assignment and a very noisy outcome.
///
/// `C1` codes 0, 1, 2 stand for classes A, B, C. Treatment is the
/// latent-index form `T = 1[logit + U_T > 0]` with `U_T ~ Logistic(0, 1)`.
pub fn gen_psm_failure(n: usize, seed: u64) -> Result<GeneratedData> {
    require_rows("PSM design", n, 100)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut u_c, mut u_t, mut u_y, mut y_cf) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let w1 = normal(&mut rng, 1.0);
        let w2 = normal(&mut rng, 1.0);
        let p = psm_class_probs(w1, w2);
        let uc = uniform(&mut rng);
        let c = if uc < p[0] {
            0.0
        } else if uc < p[0] + p[1] {
            1.0
        } else {
            2.0
        };
        let ut = logistic(&mut rng, 1.0);
        let t = if psm_logit(w1, w2, c) + ut > 0.0 {
            1.0
        } else {
            0.0
        };
        let uy = normal(&mut rng, 6000.0);
        let y = psm_outcome(w1, w2, c, t) + uy;
        for (col, v) in cols.iter_mut().zip([w1, w2, c, t, y]) {
            col.push(v);
        }
        u_c.push(uc);
        u_t.push(ut);
        u_y.push(uy);
        y_cf.push(psm_outcome(w1, w2, c, 1.0 - t) + uy);
    }
    let [w1, w2, c, t, y] = cols;
    let graph = CausalGraph::from_edges(
        &[("W1", C), ("W2", C), ("C1", K), ("T", K), ("Y", C)],
        &[
            ("W1", "C1"),
            ("W2", "C1"),
            ("W1", "T"),
            ("W2", "T"),
            ("C1", "T"),
            ("W1", "Y"),
            ("W2", "Y"),
            ("C1", "Y"),
            ("T", "Y"),
        ],
    )?;
    Ok(GeneratedData {
        noises: noises(vec![
            ("W1", w1.clone()),
            ("W2", w2.clone()),
            ("C1", u_c),
            ("T", u_t),
            ("Y", u_y),
        ]),
        data: columns(vec![
            ("W1", C, w1),
            ("W2", C, w2),
            ("C1", K, c),
            ("T", K, t),
            ("Y", C, y),
        ])?,
        graph,
        treatment: "T".into(),
        outcome: "Y".into(),
        ite: Some(vec![5000.0; n]),
        counterfactual_outcome: Some(y_cf),
        true_ate: 5000.0,
        true_ate_se: 0.0,
        reference_ate: Some(5000.0),
    })
}

/// Softmax over `(W1 - W2, cos(πW1) + sin(πW2), W1² - W2²)`.
pub(crate) fn psm_class_probs(w1: f64, w2: f64) -> [f64; 3] {
    let z = [
        w1 - w2,
        (PI * w1).cos() + (PI * w2).sin(),
        w1 * w1 - w2 * w2,
    ];
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn psm_logit(w1: f64, w2: f64, c: f64) -> f64 {
    2.0 * (PI * w1).sin() + 1.5 * w2 * w2 + 2.0 * w1 * w2 - 1.5 * f64::from(c == 0.0)
        + 2.5 * f64::from(c == 1.0)
}

fn psm_outcome(w1: f64, w2: f64, c: f64, t: f64) -> f64 {
    5000.0 * t
        + 60.0 * (15.0 * w1 - 25.0 * w2 + 10.0 * w1 * w2)
        + 60.0 * (-40.0 * f64::from(c == 0.0) + 50.0 * f64::from(c == 2.0))
}

/// Outcome noise enters squared, so it cannot be recovered from `(W, T, Y)`.
pub fn gen_stress_noninvertible(n: usize, seed: u64) -> Result<GeneratedData> {
    require_rows("stress design", n, 100)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut w, mut t, mut y) = (vec![], vec![], vec![]);
    let (mut u_t, mut u_y, mut y_cf) = (vec![], vec![], vec![]);
    for _ in 0..n {
        let wi = -2.0 + 4.0 * uniform(&mut rng);
        let ut = uniform(&mut rng);
        let ti = if ut < sigmoid(wi + 0.5 * wi * wi) {
            1.0
        } else {
            0.0
        };
        let uy = normal(&mut rng, 1.5);
        w.push(wi);
        t.push(ti);
        y.push(5.0 * ti + 2.0 * wi + uy * uy);
        y_cf.push(5.0 * (1.0 - ti) + 2.0 * wi + uy * uy);
        u_t.push(ut);
        u_y.push(uy);
    }
    let graph = CausalGraph::from_edges(
        &[("W", C), ("T", K), ("Y", C)],
        &[("W", "T"), ("W", "Y"), ("T", "Y")],
    )?;
    Ok(GeneratedData {
        noises: noises(vec![("W", w.clone()), ("T", u_t), ("Y", u_y)]),
        data: columns(vec![("W", C, w), ("T", K, t), ("Y", C, y)])?,
        graph,
        treatment: "T".into(),
        outcome: "Y".into(),
        ite: Some(vec![5.0; n]),
        counterfactual_outcome: Some(y_cf),
        true_ate: 5.0,
        true_ate_se: 0.0,
        reference_ate: Some(5.0),
    })
}

/// Normalized sinc, `sin(πx) / (πx)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn mediator(x1: f64, x2: f64, t: f64) -> f64 {
    let arm = if t == 1.0 {
        15.0 * (2.0 * PI * x2).cos() + 5.0 * x1
    } else {
        -10.0 * x1.abs()
    };
    5.0 * x2.tanh() + arm
}

/// `Y(1) - Y(0)` of one unit in the mediation design.
pub fn ablation_unit_effect(x1: f64, x2: f64) -> f64 {
    25.0 * (mediator(x1, x2, 1.0) - mediator(x1, x2, 0.0))
}

/// Gaussian-mixture outcome noise: a symmetric bimodal mixture when `Z = 0`
/// and a single wide Gaussian when `Z = 1`; both have mean zero.
fn mixture_noise(rng: &mut ChaCha8Rng, z: f64) -> f64 {
    if z == 0.0 {
        let centre = if uniform(rng) < 0.5 { -4.0 } else { 4.0 };
        centre + normal(rng, 2.0)
    } else {
        normal(rng, 3.0)
    }
}

/// Monte-Carlo mean effect and its standard error for the mediation design.
pub fn ablation_mc_truth(n_mc: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let effects: Vec<f64> = (0..n_mc)
        .map(|_| {
            let x1 = normal(&mut rng, 1.0);
            let x2 = -2.0 + 4.0 * uniform(&mut rng);
            ablation_unit_effect(x1, x2)
        })
        .collect();
    let m = mean(&effects);
    let var = effects.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (n_mc - 1) as f64;
    (m, (var / n_mc as f64).sqrt())
}

/// Mediation design `T -> M -> Y` with confounders `X1`, `X2`, `Z`.
///
/// Treatment is `Bern(σ(2 sin(πX1) X2 - 1.5 Z + U_T))` with
/// `U_T ~ Logistic(0, 0.3)`. The reported truth comes from
/// [`ablation_mc_truth`] with [`ABLATION_MC_SAMPLES`] draws.
pub fn gen_ablation_mediation(n: usize, seed: u64) -> Result<GeneratedData> {
    require_rows("mediation design", n, 100)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: [Vec<f64>; 6] = Default::default();
    let (mut z_u, mut u_t, mut u_m, mut u_y) = (vec![], vec![], vec![], vec![]);
    let (mut ite, mut y_cf) = (vec![], vec![]);
    for _ in 0..n {
        let x1 = normal(&mut rng, 1.0);
        let x2 = -2.0 + 4.0 * uniform(&mut rng);
        let uz = uniform(&mut rng);
        let z = if uz < 0.5 { 1.0 } else { 0.0 };
        let ut = logistic(&mut rng, 0.3);
        let draw = uniform(&mut rng);
        let p = sigmoid(2.0 * (PI * x1).sin() * x2 - 1.5 * z + ut);
        let t = if draw < p { 1.0 } else { 0.0 };
        let um = normal(&mut rng, 1.5);
        let m = mediator(x1, x2, t) + um;
        let uy = mixture_noise(&mut rng, z);
        let y = 25.0 * m + 10.0 * sinc(2.0 * x1) + uy;
        let m_cf = mediator(x1, x2, 1.0 - t) + um;
        y_cf.push(25.0 * m_cf + 10.0 * sinc(2.0 * x1) + uy);
        ite.push(ablation_unit_effect(x1, x2));
        for (col, v) in cols.iter_mut().zip([x1, x2, z, t, m, y]) {
            col.push(v);
        }
        z_u.push(uz);
        u_t.push(ut);
        u_m.push(um);
        u_y.push(uy);
    }
    let [x1, x2, z, t, m, y] = cols;
    let graph = CausalGraph::from_edges(
        &[("X1", C), ("X2", C), ("Z", K), ("T", K), ("M", C), ("Y", C)],
        &[
            ("X1", "T"),
            ("X2", "T"),
            ("Z", "T"),
            ("T", "M"),
            ("X1", "M"),
            ("X2", "M"),
            ("M", "Y"),
            ("X1", "Y"),
            ("Z", "Y"),
        ],
    )?;
    let (truth, se) = ablation_mc_truth(ABLATION_MC_SAMPLES, seed);
    Ok(GeneratedData {
        noises: noises(vec![
            ("X1", x1.clone()),
            ("X2", x2.clone()),
            ("Z", z_u),
            ("T", u_t),
            ("M", u_m),
            ("Y", u_y),
        ]),
        data: columns(vec![
            ("X1", C, x1),
            ("X2", C, x2),
            ("Z", K, z),
            ("T", K, t),
            ("M", C, m),
            ("Y", C, y),
        ])?,
        graph,
        treatment: "T".into(),
        outcome: "Y".into(),
        ite: Some(ite),
        counterfactual_outcome: Some(y_cf),
        true_ate: truth,
        true_ate_se: se,
        reference_ate: Some(ABLATION_REFERENCE_ATE),
    })
}

/// Toy model `W ~ N(0,1)`, `T ~ Bern(σ(W))`, `Y = 2 sin W + 3T + U`.
pub fn gen_metric_validation_scm(n: usize, seed: u64) -> Result<GeneratedData> {
    require_rows("metric validation model", n, 500)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut w, mut t, mut y) = (vec![], vec![], vec![]);
    let (mut u_t, mut u_y, mut y_cf) = (vec![], vec![], vec![]);
    for _ in 0..n {
        let wi = normal(&mut rng, 1.0);
        let ut = uniform(&mut rng);
        let ti = if ut < sigmoid(wi) { 1.0 } else { 0.0 };
        let u = normal(&mut rng, 1.0);
        w.push(wi);
        t.push(ti);
        y.push(2.0 * wi.sin() + 3.0 * ti + u);
        y_cf.push(2.0 * wi.sin() + 3.0 * (1.0 - ti) + u);
        u_t.push(ut);
        u_y.push(u);
    }
    let graph = CausalGraph::from_edges(
        &[("W", C), ("T", K), ("Y", C)],
        &[("W", "T"), ("W", "Y"), ("T", "Y")],
    )?;
    Ok(GeneratedData {
        noises: noises(vec![("W", w.clone()), ("T", u_t), ("Y", u_y)]),
        data: columns(vec![("W", C, w), ("T", K, t), ("Y", C, y)])?,
        graph,
        treatment: "T".into(),
        outcome: "Y".into(),
        ite: Some(vec![3.0; n]),
        counterfactual_outcome: Some(y_cf),
        true_ate: 3.0,
        true_ate_se: 0.0,
        reference_ate: None,
    })
}
