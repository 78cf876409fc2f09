use serde::{Deserialize, Serialize};

use super::engine::{counterfactual, Intervention};
use crate::error::{Error, Result};
use crate::scm::{Dataset, FittedScm};

/// Per-unit treatment effects from one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub ate: f64,
    pub ite: Vec<f64>,
    /// Outcome under `T = 0` (observed for control units).
    pub y0: Vec<f64>,
    /// Outcome under `T = 1` (observed for treated units).
    pub y1: Vec<f64>,
}

fn require_binary(data: &Dataset, column: &str) -> Result<Vec<f64>> {
    let v = data.column(column)?.to_vec();
    if let Some(bad) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
        return Err(Error::Intervention {
            node: column.to_string(),
            reason: format!("expected a binary 0/1 column, found {bad}"),
        });
    }
    Ok(v)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Imputes each unit's missing potential outcome by flipping the treatment.
pub fn estimate_ate(
    scm: &FittedScm,
    data: &Dataset,
    treatment: &str,
    outcome: &str,
) -> Result<EffectEstimate> {
    let cf = flip_treatment(scm, data, treatment)?;
    effects_from_counterfactual(data, &cf, treatment, outcome)
}

/// Counterfactual table under `do(treatment := 1 - treatment)` for every unit.
pub fn flip_treatment(scm: &FittedScm, data: &Dataset, treatment: &str) -> Result<Dataset> {
    let t = require_binary(data, treatment)?;
    if t.is_empty() {
        return Err(Error::Data("no units".into()));
    }
    let flipped: Vec<f64> = t.iter().map(|x| 1.0 - x).collect();
    counterfactual(scm, data, &[Intervention::new(treatment, flipped)])
}

/// Potential outcomes from an observed table and its treatment-flipped
/// counterfactual.
pub fn effects_from_counterfactual(
    data: &Dataset,
    flipped: &Dataset,
    treatment: &str,
    outcome: &str,
) -> Result<EffectEstimate> {
    let t = require_binary(data, treatment)?;
    if t.is_empty() {
        return Err(Error::Data("no units".into()));
    }
    let y = data.column(outcome)?;
    let y_cf = flipped.column(outcome)?;
    if y_cf.len() != t.len() {
        return Err(Error::dim("counterfactual rows", t.len(), y_cf.len()));
    }
    let (mut y0, mut y1) = (Vec::with_capacity(t.len()), Vec::with_capacity(t.len()));
    for i in 0..t.len() {
        if t[i] == 1.0 {
            y1.push(y[i]);
            y0.push(y_cf[i]);
        } else {
            y0.push(y[i]);
            y1.push(y_cf[i]);
        }
    }
    let ite: Vec<f64> = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
    Ok(EffectEstimate {
        ate: mean(&ite),
        ite,
        y0,
        y1,
    })
}

/// Root mean squared error between estimated and true unit effects.
pub fn pehe(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::dim("PEHE inputs", truth.len(), estimated.len()));
    }
    if truth.is_empty() {
        return Err(Error::Data("PEHE of empty sequences".into()));
    }
    let mse = estimated
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(mse.sqrt())
}

/// Effect averaged within one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub group: f64,
    pub n: usize,
    pub cate: f64,
    pub std_error: f64,
    /// Fewer than 10 units.
    pub low_support: bool,
}

/// Mean unit effect among units whose `groups` value equals each requested value.
pub fn cate_from_ite(ite: &[f64], groups: &[f64], values: &[f64]) -> Result<Vec<GroupEffect>> {
    if ite.len() != groups.len() {
        return Err(Error::dim("grouping column", ite.len(), groups.len()));
    }
    values
        .iter()
        .map(|&g| {
            let members: Vec<f64> = ite
                .iter()
                .zip(groups)
                .filter(|(_, &x)| x == g)
                .map(|(e, _)| *e)
                .collect();
            if members.is_empty() {
                return Err(Error::Data(format!("group {g} has no units")));
            }
            let agg = Aggregate::from_values(&members);
            Ok(GroupEffect {
                group: g,
                n: members.len(),
                cate: agg.mean,
                std_error: agg.std / (members.len() as f64).sqrt(),
                low_support: members.len() < 10,
            })
        })
        .collect()
}

/// Conditional average treatment effects for the given values of `group_column`.
pub fn cate_by_group(
    scm: &FittedScm,
    data: &Dataset,
    treatment: &str,
    outcome: &str,
    group_column: &str,
    values: &[f64],
) -> Result<Vec<GroupEffect>> {
    let est = estimate_ate(scm, data, treatment, outcome)?;
    cate_from_ite(&est.ite, data.column(group_column)?, values)
}

/// Mean of `actual - counterfactual` among units with one attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGap {
    pub group: f64,
    pub n: usize,
    pub mean_gap: f64,
}

/// Outcomes under the observed and the flipped sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub groups: Vec<GroupGap>,
    /// Mean over all units of `Y(attribute = 0) - Y(attribute = 1)`.
    pub average_gap: f64,
    pub actual: Vec<f64>,
    pub counterfactual: Vec<f64>,
}

/// Flips a binary attribute for every unit and compares outcomes.
pub fn fairness_audit(
    scm: &FittedScm,
    data: &Dataset,
    attribute: &str,
    outcome: &str,
) -> Result<FairnessReport> {
    let a = require_binary(data, attribute)?;
    let flipped: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
    let cf = counterfactual(scm, data, &[Intervention::new(attribute, flipped)])?;
    let actual = data.column(outcome)?.to_vec();
    let counter = cf.column(outcome)?.to_vec();
    let mut groups = Vec::new();
    for g in [0.0, 1.0] {
        let gaps: Vec<f64> = (0..a.len())
            .filter(|&i| a[i] == g)
            .map(|i| actual[i] - counter[i])
            .collect();
        if !gaps.is_empty() {
            groups.push(GroupGap {
                group: g,
                n: gaps.len(),
                mean_gap: mean(&gaps),
            });
        }
    }
    let oriented: Vec<f64> = (0..a.len())
        .map(|i| {
            let d = actual[i] - counter[i];
            if a[i] == 0.0 {
                d
            } else {
                -d
            }
        })
        .collect();
    Ok(FairnessReport {
        attribute: attribute.to_string(),
        groups,
        average_gap: mean(&oriented),
        actual,
        counterfactual: counter,
    })
}

/// Per-seed values with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// `n - 1` denominator; zero for a single value.
    pub std: f64,
    pub single_seed: bool,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let m = if n > 0 { mean(values) } else { f64::NAN };
        let std = if n > 1 {
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Aggregate {
            per_seed: values.to_vec(),
            mean: m,
            std,
            single_seed: n == 1,
        }
    }

    pub fn median(&self) -> f64 {
        median(&self.per_seed)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `run` once per seed in order; the first failure aborts and names its seed.
pub fn ensemble_run<T, F>(seeds: &[u64], mut run: F) -> Result<Vec<T>>
where
    F: FnMut(u64) -> Result<T>,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    seeds
        .iter()
        .map(|&s| {
            run(s).map_err(|e| Error::SeedRun {
                seed: s,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Unit-wise mean of per-seed effect vectors.
pub fn ensemble_ite(per_seed: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = per_seed
        .first()
        .ok_or_else(|| Error::Data("no effect vectors to ensemble".into()))?;
    let n = first.len();
    let mut out = vec![0.0; n];
    for v in per_seed {
        if v.len() != n {
            return Err(Error::dim("ensemble effect vector", n, v.len()));
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let k = per_seed.len() as f64;
    Ok(out.into_iter().map(|x| x / k).collect())
}
