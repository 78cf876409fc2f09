use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::{LALONDE_BINARY, LALONDE_CONTINUOUS, LALONDE_OUTCOME};
use crate::error::{Error, Result};
use crate::scm::{CausalGraph, MechanismConfig, NodeKind, RegressorConfig};

/// Allowed hybrid weights, guidance weights and step counts.
pub const HYBRID_WEIGHT_RANGE: (f64, f64) = (0.0, 10.0);
pub const GUIDANCE_WEIGHT_RANGE: (f64, f64) = (0.0, 10.0);
pub const TIMESTEP_RANGE: (usize, usize) = (50, 500);
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-5, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Roundtrip,
    Golden,
    Stress,
    Ablation,
    Psm,
    Semisynthetic,
    Cate,
    Attribute,
    Fairness,
    ValidateMetrics,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        Self::Roundtrip,
        Self::Golden,
        Self::Stress,
        Self::Ablation,
        Self::Psm,
        Self::Semisynthetic,
        Self::Cate,
        Self::Attribute,
        Self::Fairness,
        Self::ValidateMetrics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Roundtrip => "roundtrip",
            Self::Golden => "golden",
            Self::Stress => "stress",
            Self::Ablation => "ablation",
            Self::Psm => "psm",
            Self::Semisynthetic => "semisynthetic",
            Self::Cate => "cate",
            Self::Attribute => "attribute",
            Self::Fairness => "fairness",
            Self::ValidateMetrics => "validate-metrics",
        }
    }

    /// Experiments built on the job-training covariates.
    pub fn uses_lalonde(self) -> bool {
        matches!(
            self,
            Self::Golden | Self::Semisynthetic | Self::Cate | Self::Attribute | Self::Fairness
        )
    }

    /// Experiments that fit a structural causal model.
    pub fn fits_model(self) -> bool {
        !matches!(self, Self::Roundtrip | Self::ValidateMetrics)
    }

    /// Smallest sample size the experiment's generator accepts.
    pub fn min_rows(self) -> usize {
        match self {
            Self::Roundtrip => 1,
            Self::Psm | Self::Stress | Self::Ablation => 100,
            Self::ValidateMetrics => 500,
            _ => 20,
        }
    }

    /// Column names of the experiment's data with their kinds.
    pub fn columns(self) -> Vec<(&'static str, NodeKind)> {
        use NodeKind::{Categorical as K, Continuous as C};
        match self {
            Self::Roundtrip => vec![],
            Self::Psm => vec![("W1", C), ("W2", C), ("C1", K), ("T", K), ("Y", C)],
            Self::Stress => vec![("W", C), ("T", K), ("Y", C)],
            Self::Ablation => vec![("X1", C), ("X2", C), ("Z", K), ("T", K), ("M", C), ("Y", C)],
            Self::ValidateMetrics => vec![("W", C), ("T", K), ("Y", C)],
            _ => LALONDE_BINARY
                .iter()
                .map(|n| (*n, K))
                .chain(LALONDE_CONTINUOUS.iter().map(|n| (*n, C)))
                .chain([(LALONDE_OUTCOME, C)])
                .collect(),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How per-seed models are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Every seed draws fresh data and a fresh model; metrics are summarized
    /// as mean and standard deviation over seeds.
    #[default]
    Individual,
    /// One dataset; per-unit effects are averaged over the seeds' models
    /// before scoring.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

/// Causal graph overriding the experiment's default structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<CausalGraph> {
        let nodes: Vec<(&str, NodeKind)> = self
            .nodes
            .iter()
            .map(|n| (n.name.as_str(), n.kind))
            .collect();
        let edges: Vec<(&str, &str)> = self
            .edges
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        CausalGraph::from_edges(&nodes, &edges)
    }
}

/// Experiment-specific settings. Each field is read only by the experiments
/// named in its comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// roundtrip: step counts of the DDIM error table.
    pub step_grid: Vec<usize>,
    /// cate: grouping column and the values reported.
    pub group_column: String,
    pub group_values: Vec<f64>,
    /// fairness: binary attributes to flip.
    pub sensitive_attributes: Vec<String>,
    /// attribute: unit whose outcome noise is replaced (default: lowest outcome).
    pub victim: Option<usize>,
    /// attribute: unit supplying the noise (default: highest outcome).
    pub donor: Option<usize>,
    /// golden, ablation: regressor of the additive-noise arms.
    pub anm_regressor: RegressorConfig,
    /// ablation: node modeled additively in the untargeted arm.
    pub mediator: String,
    /// golden: scale of the kernel score.
    pub kmd_gamma: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            step_grid: vec![25, 50, 100, 200],
            group_column: "educ".into(),
            group_values: vec![3.0, 8.0, 12.0, 16.0],
            sensitive_attributes: vec!["black".into(), "hisp".into()],
            victim: None,
            donor: None,
            anm_regressor: RegressorConfig::default(),
            mediator: "M".into(),
            kmd_gamma: 1.0,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Everything a run needs. The output directory is not part of the echoed
/// configuration so that reports do not depend on where they are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub mechanisms: BTreeMap<String, MechanismConfig>,
    pub seeds: Vec<u64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_path: Option<PathBuf>,
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub options: ExperimentOptions,
}

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

fn check_range<T: PartialOrd + fmt::Display>(field: &str, v: T, (lo, hi): (T, T)) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(invalid(format!("{field} = {v} is outside [{lo}, {hi}]")))
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Node names the experiment's data provides.
    fn available_columns(&self) -> BTreeMap<&'static str, NodeKind> {
        self.experiment.columns().into_iter().collect()
    }

    /// Node names of the graph the run will use.
    fn node_names(&self) -> BTreeSet<String> {
        match &self.graph {
            Some(g) => g.nodes.iter().map(|n| n.name.clone()).collect(),
            None => self
                .experiment
                .columns()
                .into_iter()
                .map(|(n, _)| n.to_string())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.experiment;
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty".into()));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(invalid("seeds must be distinct".into()));
        }
        if self.n < id.min_rows() {
            return Err(invalid(format!(
                "n = {} is below the minimum of {} for experiment '{id}'",
                self.n,
                id.min_rows()
            )));
        }
        if let Some(path) = &self.dataset_path {
            if !id.uses_lalonde() {
                return Err(invalid(format!(
                    "dataset_path is not used by experiment '{id}'"
                )));
            }
            if !path.is_file() {
                return Err(invalid(format!(
                    "dataset_path {} is not a readable file",
                    path.display()
                )));
            }
        }
        if self.protocol == Protocol::Ensemble
            && !matches!(
                id,
                ExperimentId::Golden | ExperimentId::Semisynthetic | ExperimentId::Cate
            )
        {
            return Err(invalid(format!(
                "protocol 'ensemble' is only available for golden, semisynthetic and cate, not '{id}'"
            )));
        }
        if let Some(g) = &self.graph {
            if !id.fits_model() {
                return Err(invalid(format!("graph is not used by experiment '{id}'")));
            }
            let cols = self.available_columns();
            for node in &g.nodes {
                match cols.get(node.name.as_str()) {
                    None => {
                        return Err(invalid(format!(
                            "graph node '{}' is not a column of the {id} data",
                            node.name
                        )))
                    }
                    Some(k) if *k != node.kind => {
                        return Err(invalid(format!(
                            "graph node '{}' has kind {:?} but the data column is {:?}",
                            node.name, node.kind, k
                        )))
                    }
                    _ => {}
                }
            }
            for (a, b) in &g.edges {
                for end in [a, b] {
                    if !g.nodes.iter().any(|n| &n.name == end) {
                        return Err(invalid(format!(
                            "graph edge {a} -> {b} references undeclared node '{end}'"
                        )));
                    }
                }
            }
            g.build().map_err(|e| invalid(format!("graph: {e}")))?;
        }
        let names = self.node_names();
        if !id.fits_model() && !self.mechanisms.is_empty() && id != ExperimentId::Roundtrip {
            return Err(invalid(format!(
                "mechanisms are not used by experiment '{id}'"
            )));
        }
        for (name, mech) in &self.mechanisms {
            if id != ExperimentId::Roundtrip && !names.contains(name) {
                return Err(invalid(format!(
                    "mechanisms.{name}: no such node in the graph"
                )));
            }
            validate_mechanism(&format!("mechanisms.{name}"), mech)?;
        }
        if id == ExperimentId::Roundtrip {
            if let Some(other) = self.mechanisms.keys().find(|k| k.as_str() != "Y") {
                return Err(invalid(format!(
                    "mechanisms.{other}: roundtrip only reads the trained denoiser config 'Y'"
                )));
            }
            if self.options.step_grid.len() < 2 {
                return Err(invalid(
                    "options.step_grid needs at least two step counts".into(),
                ));
            }
            if let Some(t) = self
                .options
                .step_grid
                .iter()
                .find(|&&t| !(4..=2000).contains(&t))
            {
                return Err(invalid(format!(
                    "options.step_grid entry {t} is outside [4, 2000]"
                )));
            }
        }
        self.validate_options(&names)
    }

    fn validate_options(&self, names: &BTreeSet<String>) -> Result<()> {
        let o = &self.options;
        o.anm_regressor
            .validate()
            .map_err(|e| invalid(format!("options.anm_regressor: {e}")))?;
        match self.experiment {
            ExperimentId::Cate => {
                if !names.contains(&o.group_column) {
                    return Err(invalid(format!(
                        "options.group_column '{}' is not a node",
                        o.group_column
                    )));
                }
                if o.group_values.is_empty() {
                    return Err(invalid("options.group_values must not be empty".into()));
                }
            }
            ExperimentId::Fairness => {
                if o.sensitive_attributes.is_empty() {
                    return Err(invalid(
                        "options.sensitive_attributes must not be empty".into(),
                    ));
                }
                for a in &o.sensitive_attributes {
                    if !matches!(a.as_str(), "black" | "hisp" | "married" | "nodegr")
                        || !names.contains(a)
                    {
                        return Err(invalid(format!(
                            "options.sensitive_attributes: '{a}' is not a binary covariate node"
                        )));
                    }
                }
            }
            ExperimentId::Attribute => {
                for (field, idx) in [("victim", o.victim), ("donor", o.donor)] {
                    if let Some(i) = idx {
                        if i >= self.n {
                            return Err(invalid(format!(
                                "options.{field} = {i} is not below n = {}",
                                self.n
                            )));
                        }
                    }
                }
                if o.victim.is_some() && o.victim == o.donor {
                    return Err(invalid(
                        "options.victim and options.donor must differ".into(),
                    ));
                }
            }
            ExperimentId::Ablation => {
                if !names.contains(&o.mediator) {
                    return Err(invalid(format!(
                        "options.mediator '{}' is not a node",
                        o.mediator
                    )));
                }
            }
            ExperimentId::Golden => {
                if !(o.kmd_gamma > 0.0 && o.kmd_gamma.is_finite()) {
                    return Err(invalid(format!(
                        "options.kmd_gamma = {} must be > 0",
                        o.kmd_gamma
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn validate_mechanism(field: &str, mech: &MechanismConfig) -> Result<()> {
    if let MechanismConfig::Diffusion(c) = mech {
        check_range(
            &format!("{field}.hybrid_weight"),
            c.hybrid_weight,
            HYBRID_WEIGHT_RANGE,
        )?;
        check_range(
            &format!("{field}.guidance_weight"),
            c.guidance_weight,
            GUIDANCE_WEIGHT_RANGE,
        )?;
        check_range(&format!("{field}.timesteps"), c.timesteps, TIMESTEP_RANGE)?;
        check_range(
            &format!("{field}.learning_rate"),
            c.learning_rate,
            LEARNING_RATE_RANGE,
        )?;
    }
    mech.validate()
        .map_err(|e| invalid(format!("{field}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stress_json(fields: &str) -> String {
        format!(
            r#"{{"experiment": "stress", "seeds": [1, 2], "n": 200,
                "mechanisms": {{"Y": {{"kind": "diffusion", {fields}}}}}}}"#
        )
    }

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(&stress_json(r#""timesteps": 50"#)).unwrap();
        assert_eq!(c.experiment, ExperimentId::Stress);
        assert_eq!(c.protocol, Protocol::Individual);
        assert_eq!(c.output_dir, PathBuf::from("results"));
    }

    #[test]
    fn out_of_range_hyperparameter_is_named() {
        let e = ExperimentConfig::from_json(&stress_json(r#""hybrid_weight": 12.0"#)).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("mechanisms.Y.hybrid_weight = 12"), "{msg}");
        let e = ExperimentConfig::from_json(&stress_json(r#""timesteps": 20"#)).unwrap_err();
        assert!(e.to_string().contains("mechanisms.Y.timesteps = 20"), "{e}");
        let e = ExperimentConfig::from_json(&stress_json(r#""learning_rate": 0.5"#)).unwrap_err();
        assert!(e.to_string().contains("learning_rate"), "{e}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let e = ExperimentConfig::from_json(&stress_json(r#""warmup": 3"#)).unwrap_err();
        assert!(e.to_string().contains("warmup"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"experiment": "nope", "seeds": [1], "n": 200}"#)
            .unwrap_err();
        assert!(e.to_string().contains("nope"), "{e}");
    }

    #[test]
    fn referenced_nodes_must_exist() {
        let text = r#"{"experiment": "stress", "seeds": [1], "n": 200,
            "mechanisms": {"Q": {"kind": "anm"}}}"#;
        let e = ExperimentConfig::from_json(text).unwrap_err();
        assert!(e.to_string().contains("mechanisms.Q"), "{e}");
        let text = r#"{"experiment": "stress", "seeds": [1], "n": 200,
            "graph": {"nodes": [{"name": "W", "kind": "continuous"}], "edges": [["W", "Y"]]}}"#;
        let e = ExperimentConfig::from_json(text).unwrap_err();
        assert!(e.to_string().contains("undeclared node 'Y'"), "{e}");
    }

    #[test]
    fn seeds_and_rows_checked() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "stress", "seeds": [], "n": 200}"#)
            .unwrap_err();
        assert!(e.to_string().contains("seeds"));
        let e = ExperimentConfig::from_json(r#"{"experiment": "psm", "seeds": [1], "n": 10}"#)
            .unwrap_err();
        assert!(e.to_string().contains("n = 10"));
    }

    #[test]
    fn ensemble_only_where_defined() {
        let e = ExperimentConfig::from_json(
            r#"{"experiment": "stress", "seeds": [1], "n": 200, "protocol": "ensemble"}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("ensemble"));
        ExperimentConfig::from_json(
            r#"{"experiment": "semisynthetic", "seeds": [1], "n": 200, "protocol": "ensemble"}"#,
        )
        .unwrap();
    }

    #[test]
    fn experiment_ids_round_trip() {
        for id in ExperimentId::ALL {
            let s = serde_json::to_string(&id).unwrap();
            assert_eq!(s, format!("\"{}\"", id.as_str()));
            assert_eq!(serde_json::from_str::<ExperimentId>(&s).unwrap(), id);
        }
    }
}
