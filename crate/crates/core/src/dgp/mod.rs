//! Synthetic data-generating processes with known noises and effects.

mod lalonde;
mod synthetic;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{CausalGraph, Dataset};

pub use lalonde::{
    gen_semisynthetic_lalonde, lalonde_graph, read_lalonde_covariates, semisynthetic_base,
    semisynthetic_ite, synthetic_lalonde_covariates, LALONDE_BINARY, LALONDE_CONTINUOUS,
    LALONDE_OUTCOME,
};
pub use synthetic::{
    ablation_mc_truth, ablation_unit_effect, gen_ablation_mediation, gen_metric_validation_scm,
    gen_psm_failure, gen_stress_noninvertible, sinc, ABLATION_MC_SAMPLES, ABLATION_REFERENCE_ATE,
};

/// A generated table together with everything known about how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub data: Dataset,
    pub graph: CausalGraph,
    pub treatment: String,
    pub outcome: String,
    /// Exogenous noise per node, aligned with the rows of `data`.
    pub noises: BTreeMap<String, Vec<f64>>,
    /// True unit effect `Y(1) - Y(0)`.
    pub ite: Option<Vec<f64>>,
    /// Outcome under the flipped treatment with all noises held fixed.
    pub counterfactual_outcome: Option<Vec<f64>>,
    pub true_ate: f64,
    /// Monte-Carlo standard error of `true_ate`; zero when exact.
    pub true_ate_se: f64,
    /// Published value the generator is meant to approximate, if any.
    pub reference_ate: Option<f64>,
}

/// Serializable ground truth written next to an exported table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub treatment: String,
    pub outcome: String,
    pub n: usize,
    pub true_ate: f64,
    pub true_ate_se: f64,
    pub reference_ate: Option<f64>,
    pub edges: Vec<(String, String)>,
    pub noises: BTreeMap<String, Vec<f64>>,
    pub ite: Option<Vec<f64>>,
    pub counterfactual_outcome: Option<Vec<f64>>,
}

impl GeneratedData {
    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn noise(&self, node: &str) -> Result<&[f64]> {
        self.noises
            .get(node)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let g = &self.graph;
        let mut edges = Vec::new();
        for v in 0..g.len() {
            for &p in g.parents(v) {
                edges.push((g.name(p).to_string(), g.name(v).to_string()));
            }
        }
        GroundTruth {
            treatment: self.treatment.clone(),
            outcome: self.outcome.clone(),
            n: self.n_rows(),
            true_ate: self.true_ate,
            true_ate_se: self.true_ate_se,
            reference_ate: self.reference_ate,
            edges,
            noises: self.noises.clone(),
            ite: self.ite.clone(),
            counterfactual_outcome: self.counterfactual_outcome.clone(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns both paths.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.data.to_csv(BufWriter::new(File::create(&csv_path)?))?;
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(&json_path)?),
            &self.ground_truth(),
        )?;
        Ok((csv_path, json_path))
    }
}

pub(crate) fn require_rows(what: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::Config(format!("{what} needs n >= {min}, got {n}")));
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    sd * rng.sample::<f64, _>(StandardNormal)
}

/// Logistic(0, scale) by inverse CDF.
pub(crate) fn logistic<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    scale * (u / (1.0 - u)).ln()
}

pub(crate) fn uniform<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
