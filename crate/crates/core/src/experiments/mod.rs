//! Seeded end-to-end experiments, their configuration schema and reports.

mod ablation;
mod config;
mod lalonde;
mod presets;
mod report;
mod roundtrip;
mod synthetic;
mod validation;

use std::collections::BTreeMap;
use std::time::Instant;

pub use config::{
    ExperimentConfig, ExperimentId, ExperimentOptions, GraphSpec, NodeSpec, Protocol,
    GUIDANCE_WEIGHT_RANGE, HYBRID_WEIGHT_RANGE, LEARNING_RATE_RANGE, TIMESTEP_RANGE,
};
pub use presets::{preset, preset_hyperparameters, PresetHyperparameters, PRESET_NAMES};
pub use report::{aggregate_seeds, Check, ExperimentReport, SeedResult, Table, TableRow, Timing};

use crate::diffusion::SamplerKind;
use crate::error::{Error, Result};
use crate::metrics::delta_sre;
use crate::scm::{
    CausalGraph, Dataset, FittedScm, Mechanism, MechanismConfig, Noise, RegressorConfig,
};

/// Everything an experiment produces apart from bookkeeping.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub per_seed: Vec<SeedResult>,
    pub ensemble: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub seed_seconds: Vec<f64>,
}

impl Outcome {
    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    /// Runs `f` for every seed in order, recording its values and duration.
    pub fn for_each_seed<F>(&mut self, seeds: &[u64], mut f: F) -> Result<()>
    where
        F: FnMut(u64) -> Result<BTreeMap<String, f64>>,
    {
        for &seed in seeds {
            let start = Instant::now();
            let values = f(seed).map_err(|e| Error::SeedRun {
                seed,
                source: Box::new(e),
            })?;
            if let Some((k, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::SeedRun {
                    seed,
                    source: Box::new(Error::Data(format!("value '{k}' is not finite ({v})"))),
                });
            }
            self.seed_seconds.push(start.elapsed().as_secs_f64());
            self.per_seed.push(SeedResult { seed, values });
        }
        Ok(())
    }

    /// Per-seed series of one value, in seed order.
    pub fn series(&self, key: &str) -> Vec<f64> {
        self.per_seed.iter().map(|s| s.values[key]).collect()
    }
}

/// Runs the configured experiment. The configuration is validated first.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let out = match config.experiment {
        ExperimentId::Roundtrip => roundtrip::run(config),
        ExperimentId::Stress => synthetic::run_stress(config),
        ExperimentId::Psm => synthetic::run_psm(config),
        ExperimentId::Ablation => ablation::run(config),
        ExperimentId::Golden => lalonde::run_golden(config),
        ExperimentId::Semisynthetic => lalonde::run_semisynthetic(config),
        ExperimentId::Cate => lalonde::run_cate(config),
        ExperimentId::Attribute => lalonde::run_attribute(config),
        ExperimentId::Fairness => lalonde::run_fairness(config),
        ExperimentId::ValidateMetrics => validation::run(config),
    }?;
    Ok(ExperimentReport {
        experiment: config.experiment,
        version: env!("CARGO_PKG_VERSION").to_string(),
        protocol: config.protocol,
        config: config.clone(),
        aggregates: aggregate_seeds(&out.per_seed)?,
        per_seed: out.per_seed,
        ensemble: out.ensemble,
        tables: out.tables,
        checks: out.checks,
        notes: out.notes,
        timing: Timing {
            total_seconds: start.elapsed().as_secs_f64(),
            per_seed_seconds: out.seed_seconds,
        },
    })
}

/// Graph from the configuration, or the generator's own graph.
pub(crate) fn resolve_graph(
    config: &ExperimentConfig,
    default: &CausalGraph,
) -> Result<CausalGraph> {
    match &config.graph {
        Some(g) => g.build(),
        None => Ok(default.clone()),
    }
}

/// Graph and the matching columns of `data`.
pub(crate) fn model_inputs(
    config: &ExperimentConfig,
    default: &CausalGraph,
    data: &Dataset,
) -> Result<(CausalGraph, Dataset)> {
    let graph = resolve_graph(config, default)?;
    let names: Vec<&str> = graph.names().iter().map(String::as_str).collect();
    let data = data.select_columns(&names)?;
    Ok((graph, data))
}

/// `decode(encode(x))` of one node with its observed parents.
pub(crate) fn node_round_trip(scm: &FittedScm, node: &str, data: &Dataset) -> Result<Vec<f64>> {
    let noise = scm.encode_noise(node, data)?;
    scm.decode_value(node, &noise, data)
}

/// Measured and reported reconstruction error of one node. Additive and
/// BELM mechanisms are exactly invertible and report zero.
pub(crate) fn node_sre(scm: &FittedScm, node: &str, data: &Dataset) -> Result<(f64, f64)> {
    let x = data.column(node)?;
    let measured = delta_sre(&node_round_trip(scm, node, data)?, x)?;
    let exact = match &scm.node(node)?.mechanism {
        Mechanism::Diffusion { sampler, .. } => *sampler == SamplerKind::Belm,
        _ => true,
    };
    Ok((if exact { 0.0 } else { measured }, measured))
}

/// Per-unit abducted noise summary of one node.
pub(crate) fn abducted_noise(scm: &FittedScm, node: &str, data: &Dataset) -> Result<Vec<f64>> {
    Ok(match scm.encode_noise(node, data)? {
        Noise::Latent { code, .. } => code.x_t,
        other => other.scalar().to_vec(),
    })
}

/// Every diffusion mechanism replaced by an additive-noise model.
pub(crate) fn anm_mechanisms(
    mechanisms: &BTreeMap<String, MechanismConfig>,
    regressor: &RegressorConfig,
) -> BTreeMap<String, MechanismConfig> {
    mechanisms
        .iter()
        .map(|(k, m)| {
            let m = match m {
                MechanismConfig::Diffusion(_) => MechanismConfig::Anm {
                    regressor: regressor.clone(),
                },
                other => other.clone(),
            };
            (k.clone(), m)
        })
        .collect()
}

pub(crate) fn values<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Number of true flags and whether they form a strict majority.
pub(crate) fn majority(flags: &[bool]) -> (usize, bool) {
    let k = flags.iter().filter(|&&f| f).count();
    (k, 2 * k > flags.len())
}
