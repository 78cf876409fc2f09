use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::Dataset;
use super::graph::{CausalGraph, NodeKind};
use super::mechanism::{Mechanism, MechanismConfig, Regressor};
use super::preprocess::{mean_std, NodePreprocessor, TargetTransform};
use crate::diffusion::{task_for, train_denoiser, SamplerKind, TargetKind, TrainingLog};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::samplers::{decode, decode_generative, encode, LatentCode};

/// Seed for a node's private random stream; depends on the node name only.
pub fn node_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a of the name, mixed with the run seed by splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Abducted exogenous value of one node for a batch of units.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// Root modeled empirically: the observed value itself.
    Observed(Vec<f64>),
    /// Additive residual in normalized units.
    Residual(Vec<f64>),
    /// Diffusion latent with the conditions it was encoded under.
    Latent {
        code: LatentCode<f64>,
        conditions: Matrix<f64>,
    },
}

impl Noise {
    pub fn len(&self) -> usize {
        match self {
            Noise::Observed(v) | Noise::Residual(v) => v.len(),
            Noise::Latent { code, .. } => code.x_t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalar summary per unit: the value, residual, or terminal state.
    pub fn scalar(&self) -> &[f64] {
        match self {
            Noise::Observed(v) | Noise::Residual(v) => v,
            Noise::Latent { code, .. } => &code.x_t,
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Noise {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        match self {
            Noise::Observed(v) => Noise::Observed(pick(v)),
            Noise::Residual(v) => Noise::Residual(pick(v)),
            Noise::Latent { code, conditions } => Noise::Latent {
                code: LatentCode {
                    x_t: pick(&code.x_t),
                    x_aux: pick(&code.x_aux),
                    grid_t: code.grid_t,
                    sampler_kind: code.sampler_kind,
                },
                conditions: conditions.select_rows(idx),
            },
        }
    }
}

/// Abducted noise per node (`None` for nodes that were not abducted).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub noises: Vec<Option<Noise>>,
}

/// One node's fitted mechanism and transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedNode {
    pub name: String,
    pub kind: NodeKind,
    pub parents: Vec<usize>,
    pub mechanism: Mechanism,
    pub preprocessor: NodePreprocessor,
    pub training: Option<TrainingLog>,
}

/// Structural causal model with one fitted mechanism per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScm {
    pub graph: CausalGraph,
    pub nodes: Vec<FittedNode>,
    pub seed: u64,
}

fn resolve_config<'a>(
    graph: &CausalGraph,
    node: usize,
    configs: &'a BTreeMap<String, MechanismConfig>,
) -> Result<&'a MechanismConfig> {
    static EMPIRICAL: MechanismConfig = MechanismConfig::Empirical;
    let name = graph.name(node);
    match configs.get(name) {
        Some(MechanismConfig::Empirical) if !graph.is_root(node) => Err(Error::Config(format!(
            "node '{name}' has parents and cannot be modeled empirically"
        ))),
        Some(c) => Ok(c),
        None if graph.is_root(node) => Ok(&EMPIRICAL),
        None => Err(Error::Config(format!(
            "no mechanism configured for '{name}'"
        ))),
    }
}

impl FittedScm {
    /// Fits every mechanism on `data`. Roots without a configuration are
    /// modeled empirically.
    pub fn fit(
        graph: &CausalGraph,
        data: &Dataset,
        configs: &BTreeMap<String, MechanismConfig>,
        seed: u64,
    ) -> Result<Self> {
        for name in configs.keys() {
            graph.index_of(name)?;
        }
        if data.n_rows() < 2 {
            return Err(Error::Data("fitting needs at least two rows".into()));
        }
        let mut nodes: Vec<Option<FittedNode>> = vec![None; graph.len()];
        for &v in graph.topo_order() {
            let config = resolve_config(graph, v, configs)?;
            nodes[v] = Some(fit_node(graph, v, data, config, seed)?);
        }
        Ok(FittedScm {
            graph: graph.clone(),
            nodes: nodes
                .into_iter()
                .map(|n| n.expect("every node fitted"))
                .collect(),
            seed,
        })
    }

    /// Copy with one node refitted under a new configuration; every other
    /// mechanism is kept as is.
    pub fn refit_node(
        &self,
        name: &str,
        data: &Dataset,
        config: &MechanismConfig,
    ) -> Result<FittedScm> {
        let v = self.graph.index_of(name)?;
        let mut configs = BTreeMap::new();
        configs.insert(name.to_string(), config.clone());
        let config = resolve_config(&self.graph, v, &configs)?;
        let mut out = self.clone();
        out.nodes[v] = fit_node(&self.graph, v, data, config, self.seed)?;
        Ok(out)
    }

    /// Same fitted networks with every diffusion node switched to `sampler`.
    pub fn with_sampler(&self, sampler: SamplerKind) -> FittedScm {
        let mut out = self.clone();
        for node in &mut out.nodes {
            if let Mechanism::Diffusion { sampler: s, .. } = &mut node.mechanism {
                *s = sampler;
            }
        }
        out
    }

    pub fn node(&self, name: &str) -> Result<&FittedNode> {
        Ok(&self.nodes[self.graph.index_of(name)?])
    }

    fn parent_columns<'a>(&self, v: usize, data: &'a Dataset) -> Result<Vec<&'a [f64]>> {
        self.nodes[v]
            .parents
            .iter()
            .map(|&p| data.column(self.graph.name(p)))
            .collect()
    }

    /// Conditioning matrix of node `v` from the parent values in `data`.
    pub fn conditions_for(&self, v: usize, data: &Dataset) -> Result<Matrix<f64>> {
        let cols = self.parent_columns(v, data)?;
        self.nodes[v]
            .preprocessor
            .conditions_n(data.n_rows(), &cols)
    }

    /// Abduction of one node's noise for every row of `data`.
    pub fn encode_noise(&self, name: &str, data: &Dataset) -> Result<Noise> {
        let v = self.graph.index_of(name)?;
        self.encode_node(v, data)
    }

    pub(crate) fn encode_node(&self, v: usize, data: &Dataset) -> Result<Noise> {
        let node = &self.nodes[v];
        let values = data.column(&node.name)?;
        match &node.mechanism {
            Mechanism::Empirical { .. } => Ok(Noise::Observed(values.to_vec())),
            Mechanism::Anm { regressor, .. } => {
                let cond = self.conditions_for(v, data)?;
                let f = regressor.predict(&cond)?;
                let y = node.preprocessor.normalize_target(values);
                Ok(Noise::Residual(
                    y.iter().zip(&f).map(|(a, b)| a - b).collect(),
                ))
            }
            Mechanism::Diffusion { denoiser, sampler } => {
                let cond = self.conditions_for(v, data)?;
                let x0 = node.preprocessor.normalize_target(values);
                let code = encode(*sampler, &x0, &cond, denoiser)?;
                Ok(Noise::Latent {
                    code,
                    conditions: cond,
                })
            }
        }
    }

    /// Node values from abducted noise under the parent values in `parents`.
    ///
    /// Diffusion rows whose condition equals the one they were encoded under
    /// are reconstructed from the full latent; other rows are regenerated
    /// from the terminal state alone.
    pub fn decode_value(&self, name: &str, noise: &Noise, parents: &Dataset) -> Result<Vec<f64>> {
        let v = self.graph.index_of(name)?;
        self.decode_node(v, noise, parents)
    }

    pub(crate) fn decode_node(
        &self,
        v: usize,
        noise: &Noise,
        parents: &Dataset,
    ) -> Result<Vec<f64>> {
        let node = &self.nodes[v];
        if noise.len() != parents.n_rows() {
            return Err(Error::dim("noise rows", parents.n_rows(), noise.len()));
        }
        match (&node.mechanism, noise) {
            (Mechanism::Empirical { .. }, Noise::Observed(vals)) => Ok(vals.clone()),
            (Mechanism::Anm { regressor, .. }, Noise::Residual(u)) => {
                let cond = self.conditions_for(v, parents)?;
                let f = regressor.predict(&cond)?;
                let y: Vec<f64> = f.iter().zip(u).map(|(a, b)| a + b).collect();
                Ok(node.preprocessor.denormalize_target(&y))
            }
            (Mechanism::Diffusion { denoiser, sampler }, Noise::Latent { code, conditions }) => {
                let cond = self.conditions_for(v, parents)?;
                let n = cond.rows();
                let (same, changed): (Vec<usize>, Vec<usize>) =
                    (0..n).partition(|&i| cond.row(i) == conditions.row(i));
                let mut out = vec![0.0; n];
                if !same.is_empty() {
                    let sub = LatentCode {
                        x_t: same.iter().map(|&i| code.x_t[i]).collect(),
                        x_aux: same.iter().map(|&i| code.x_aux[i]).collect(),
                        grid_t: code.grid_t,
                        sampler_kind: code.sampler_kind,
                    };
                    let x = decode(&sub, &cond.select_rows(&same), denoiser)?;
                    for (k, &i) in same.iter().enumerate() {
                        out[i] = x[k];
                    }
                }
                if !changed.is_empty() {
                    let x_t: Vec<f64> = changed.iter().map(|&i| code.x_t[i]).collect();
                    let x =
                        decode_generative(*sampler, &x_t, &cond.select_rows(&changed), denoiser)?;
                    for (k, &i) in changed.iter().enumerate() {
                        out[i] = x[k];
                    }
                }
                Ok(node.preprocessor.denormalize_target(&out))
            }
            _ => Err(Error::Data(format!(
                "noise of the wrong kind for node '{}'",
                node.name
            ))),
        }
    }

    /// Abducts noise for the nodes selected by `mask` (all nodes if `None`).
    pub fn abduct(&self, data: &Dataset, mask: Option<&[bool]>) -> Result<NoiseProfile> {
        let noises = (0..self.nodes.len())
            .map(|v| {
                if mask.is_none_or(|m| m[v]) {
                    self.encode_node(v, data).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NoiseProfile { noises })
    }

    /// Ancestral sampling of `n` units.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        for &v in self.graph.topo_order() {
            let node = &self.nodes[v];
            let mut rng = ChaCha8Rng::seed_from_u64(node_seed(seed, &node.name));
            let parent_data = Dataset::new(
                node.parents
                    .iter()
                    .map(|&p| self.graph.name(p).to_string())
                    .collect(),
                node.parents.iter().map(|&p| self.graph.kind(p)).collect(),
                node.parents.iter().map(|&p| cols[p].clone()).collect(),
            )?;
            let values = match &node.mechanism {
                Mechanism::Empirical { values } => (0..n)
                    .map(|_| values[rng.random_range(0..values.len())])
                    .collect(),
                Mechanism::Anm {
                    regressor,
                    residual_std,
                } => {
                    let cond = self.conditions_from(v, &parent_data, n)?;
                    let f = regressor.predict(&cond)?;
                    let y: Vec<f64> = f
                        .iter()
                        .map(|m| m + residual_std * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    node.preprocessor.denormalize_target(&y)
                }
                Mechanism::Diffusion { denoiser, sampler } => {
                    let cond = self.conditions_from(v, &parent_data, n)?;
                    let x_t: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                    let x = decode_generative(*sampler, &x_t, &cond, denoiser)?;
                    node.preprocessor.denormalize_target(&x)
                }
            };
            cols[v] = values;
        }
        Dataset::new(
            self.graph.names().to_vec(),
            (0..self.nodes.len()).map(|v| self.graph.kind(v)).collect(),
            cols,
        )
    }

    fn conditions_from(&self, v: usize, parent_data: &Dataset, n: usize) -> Result<Matrix<f64>> {
        let node = &self.nodes[v];
        let cols: Vec<&[f64]> = node
            .parents
            .iter()
            .map(|&p| parent_data.column(self.graph.name(p)))
            .collect::<Result<_>>()?;
        node.preprocessor.conditions_n(n, &cols)
    }
}

fn fit_node(
    graph: &CausalGraph,
    v: usize,
    data: &Dataset,
    config: &MechanismConfig,
    seed: u64,
) -> Result<FittedNode> {
    let name = graph.name(v);
    config.validate()?;
    let kind = graph.kind(v);
    let column = data.column(name)?;
    if data.kind_of(name)? != kind {
        return Err(Error::Data(format!(
            "column '{name}' kind disagrees with the graph"
        )));
    }
    let parent_cols: Vec<(&str, NodeKind, &[f64])> = graph
        .parents(v)
        .iter()
        .map(|&p| Ok((graph.name(p), graph.kind(p), data.column(graph.name(p))?)))
        .collect::<Result<_>>()?;
    let nseed = node_seed(seed, name);
    let (mechanism, preprocessor, training) = match config {
        MechanismConfig::Empirical => (
            Mechanism::Empirical {
                values: column.to_vec(),
            },
            NodePreprocessor {
                target: TargetTransform::Standardize {
                    mean: 0.0,
                    std: 1.0,
                },
                parents: Vec::new(),
            },
            None,
        ),
        MechanismConfig::Anm { regressor } => {
            let prep = NodePreprocessor::fit(name, kind, column, &parent_cols)?;
            let cond = conditions_of(&prep, &parent_cols, data.n_rows())?;
            let y = prep.normalize_target(column);
            let reg = Regressor::fit(regressor, &cond, &y, nseed)?;
            let fitted = reg.predict(&cond)?;
            let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            let (_, sd) = mean_std(&resid);
            (
                Mechanism::Anm {
                    regressor: reg,
                    residual_std: sd,
                },
                prep,
                None,
            )
        }
        MechanismConfig::Diffusion(cfg) => {
            let prep = NodePreprocessor::fit(name, kind, column, &parent_cols)?;
            let cond = conditions_of(&prep, &parent_cols, data.n_rows())?;
            let x0 = prep.normalize_target(column);
            let mut cfg = cfg.clone();
            cfg.target_kind = match kind {
                NodeKind::Continuous => TargetKind::Continuous,
                NodeKind::Categorical => TargetKind::Categorical,
            };
            let task = task_for(cfg.target_kind, &x0);
            let (denoiser, log) =
                train_denoiser(&x0, &cond, &cfg, task, nseed).map_err(|e| match e {
                    Error::Divergence { step, detail } => Error::Divergence {
                        step,
                        detail: format!("node '{name}': {detail}"),
                    },
                    other => other,
                })?;
            (
                Mechanism::Diffusion {
                    denoiser,
                    sampler: cfg.sampler_kind,
                },
                prep,
                Some(log),
            )
        }
    };
    Ok(FittedNode {
        name: name.to_string(),
        kind,
        parents: graph.parents(v).to_vec(),
        mechanism,
        preprocessor,
        training,
    })
}

fn conditions_of(
    prep: &NodePreprocessor,
    parents: &[(&str, NodeKind, &[f64])],
    n: usize,
) -> Result<Matrix<f64>> {
    let cols: Vec<&[f64]> = parents.iter().map(|p| p.2).collect();
    prep.conditions_n(n, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::mechanism::RegressorConfig;
    use rand::Rng;

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let t: Vec<f64> = w
            .iter()
            .map(|&wi| {
                if wi + rng.sample::<f64, _>(StandardNormal) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * t[i] + w[i] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::from_columns([
            ("W".to_string(), NodeKind::Continuous, w),
            ("T".to_string(), NodeKind::Categorical, t),
            ("Y".to_string(), NodeKind::Continuous, y),
        ])
        .unwrap()
    }

    fn linear_graph() -> CausalGraph {
        CausalGraph::from_edges(
            &[
                ("W", NodeKind::Continuous),
                ("T", NodeKind::Categorical),
                ("Y", NodeKind::Continuous),
            ],
            &[("W", "T"), ("T", "Y"), ("W", "Y")],
        )
        .unwrap()
    }

    fn anm_configs() -> BTreeMap<String, MechanismConfig> {
        let mut c = BTreeMap::new();
        let lin = MechanismConfig::Anm {
            regressor: RegressorConfig::Linear,
        };
        c.insert("T".to_string(), lin.clone());
        c.insert("Y".to_string(), lin);
        c
    }

    #[test]
    fn anm_residual_round_trip_exact() {
        let data = linear_data(300, 1);
        let scm = FittedScm::fit(&linear_graph(), &data, &anm_configs(), 0).unwrap();
        let noise = scm.encode_noise("Y", &data).unwrap();
        let back = scm.decode_value("Y", &noise, &data).unwrap();
        let y = data.column("Y").unwrap();
        for (a, b) in y.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let w_noise = scm.encode_noise("W", &data).unwrap();
        assert_eq!(w_noise.scalar(), data.column("W").unwrap());
    }

    #[test]
    fn missing_config_for_child_rejected() {
        let data = linear_data(50, 1);
        let mut c = anm_configs();
        c.remove("Y");
        assert!(matches!(
            FittedScm::fit(&linear_graph(), &data, &c, 0),
            Err(Error::Config(_))
        ));
        let mut c = anm_configs();
        c.insert("Y".into(), MechanismConfig::Empirical);
        assert!(FittedScm::fit(&linear_graph(), &data, &c, 0).is_err());
    }

    #[test]
    fn empirical_sampling_tracks_mean_and_codes_valid() {
        let data = linear_data(2000, 3);
        let scm = FittedScm::fit(&linear_graph(), &data, &anm_configs(), 0).unwrap();
        let s = scm.sample(4000, 11).unwrap();
        let (m_data, sd) = mean_std(data.column("W").unwrap());
        let (m_s, _) = mean_std(s.column("W").unwrap());
        assert!((m_s - m_data).abs() < 3.0 * sd / (4000f64).sqrt());
        assert!(s.column("T").unwrap().iter().all(|&t| t == 0.0 || t == 1.0));
        assert_eq!(s, scm.sample(4000, 11).unwrap());
    }

    #[test]
    fn node_seed_depends_on_name_and_seed() {
        assert_ne!(node_seed(1, "Y"), node_seed(1, "T"));
        assert_ne!(node_seed(1, "Y"), node_seed(2, "Y"));
        assert_eq!(node_seed(7, "abc"), node_seed(7, "abc"));
    }

    #[test]
    fn unknown_node_queries() {
        let data = linear_data(50, 1);
        let scm = FittedScm::fit(&linear_graph(), &data, &anm_configs(), 0).unwrap();
        assert!(matches!(
            scm.encode_noise("nope", &data),
            Err(Error::UnknownNode(_))
        ));
    }
}
