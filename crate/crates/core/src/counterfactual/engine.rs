use crate::error::{Error, Result};
use crate::scm::{Dataset, FittedScm, Mechanism, NodeKind, NoiseProfile, TargetTransform};

/// `do(node := values)` with one forced value per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub node: String,
    pub values: Vec<f64>,
}

impl Intervention {
    pub fn new(node: &str, values: Vec<f64>) -> Self {
        Intervention {
            node: node.to_string(),
            values,
        }
    }

    /// Same forced value for every unit.
    pub fn constant(node: &str, value: f64, n: usize) -> Self {
        Self::new(node, vec![value; n])
    }
}

/// Number of valid codes of a categorical node, if known.
fn class_limit(scm: &FittedScm, v: usize) -> Option<usize> {
    let node = &scm.nodes[v];
    if node.kind != NodeKind::Categorical {
        return None;
    }
    match (&node.mechanism, &node.preprocessor.target) {
        (_, TargetTransform::Codes { classes }) => Some(*classes),
        (Mechanism::Empirical { values }, _) => Some(crate::scm::class_count(values)),
        _ => None,
    }
}

fn validate_interventions(
    scm: &FittedScm,
    n: usize,
    interventions: &[Intervention],
) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::with_capacity(interventions.len());
    for iv in interventions {
        let v = scm.graph.index_of(&iv.node)?;
        if out.iter().any(|(u, _)| *u == v) {
            return Err(Error::Intervention {
                node: iv.node.clone(),
                reason: "node intervened twice".into(),
            });
        }
        if iv.values.len() != n {
            return Err(Error::Intervention {
                node: iv.node.clone(),
                reason: format!("{} values for {n} units", iv.values.len()),
            });
        }
        if let Some(bad) = iv.values.iter().find(|x| !x.is_finite()) {
            return Err(Error::Intervention {
                node: iv.node.clone(),
                reason: format!("non-finite value {bad}"),
            });
        }
        if scm.graph.kind(v) == NodeKind::Categorical {
            let limit = class_limit(scm, v);
            if let Some(bad) = iv
                .values
                .iter()
                .find(|&&x| x < 0.0 || x.fract() != 0.0 || limit.is_some_and(|k| x as usize >= k))
            {
                return Err(Error::Intervention {
                    node: iv.node.clone(),
                    reason: format!("{bad} is not a valid class code"),
                });
            }
        }
        out.push((v, iv.values.clone()));
    }
    Ok(out)
}

/// Re-simulates the nodes in `recompute` in topological order from `base`,
/// using `noise` for each recomputed node and forced values for intervened ones.
pub(crate) fn propagate(
    scm: &FittedScm,
    base: &Dataset,
    forced: &[(usize, Vec<f64>)],
    recompute: &[bool],
    noise: &NoiseProfile,
) -> Result<Dataset> {
    let mut out = base.clone();
    for (v, values) in forced {
        out.set_column(scm.graph.name(*v), values.clone())?;
    }
    for &v in scm.graph.topo_order() {
        if !recompute[v] || forced.iter().any(|(u, _)| *u == v) {
            continue;
        }
        let name = scm.graph.name(v);
        let nz = noise.noises[v]
            .as_ref()
            .ok_or_else(|| Error::Data(format!("no abducted noise for '{name}'")))?;
        let values = scm.decode_node(v, nz, &out)?;
        out.set_column(name, values)?;
    }
    Ok(out)
}

/// Counterfactual table under the given interventions, one unit per row.
///
/// Descendants of the intervened nodes are recomputed with their abducted
/// noise; every other column keeps its observed value.
pub fn counterfactual(
    scm: &FittedScm,
    data: &Dataset,
    interventions: &[Intervention],
) -> Result<Dataset> {
    let forced = validate_interventions(scm, data.n_rows(), interventions)?;
    let targets: Vec<usize> = forced.iter().map(|(v, _)| *v).collect();
    let mut recompute = scm.graph.descendants_of(&targets);
    for &t in &targets {
        recompute[t] = false;
    }
    let profile = scm.abduct(data, Some(&recompute))?;
    let mut mask = recompute;
    for &t in &targets {
        mask[t] = true;
    }
    propagate(scm, data, &forced, &mask, &profile)
}

/// Counterfactual for a single unit (`row` is a one-row table).
pub fn counterfactual_row(
    scm: &FittedScm,
    row: &Dataset,
    interventions: &[(String, f64)],
) -> Result<Dataset> {
    if row.n_rows() != 1 {
        return Err(Error::dim("counterfactual row", 1, row.n_rows()));
    }
    let iv: Vec<Intervention> = interventions
        .iter()
        .map(|(n, v)| Intervention::constant(n, *v, 1))
        .collect();
    counterfactual(scm, row, &iv)
}

/// Outcome change of `victim` when its exogenous noise is replaced by the
/// `donor`'s.
///
/// Noises are swapped at every non-root ancestor of `outcome` (or at the
/// outcome alone when `outcome_only`); root covariates keep the victim's
/// observed values.
pub fn attribute_exogenous(
    scm: &FittedScm,
    data: &Dataset,
    victim: usize,
    donor: usize,
    outcome: &str,
    outcome_only: bool,
) -> Result<f64> {
    let n = data.n_rows();
    for idx in [victim, donor] {
        if idx >= n {
            return Err(Error::OutOfRange {
                index: idx,
                max: n.saturating_sub(1),
            });
        }
    }
    let y = scm.graph.index_of(outcome)?;
    let mut swap = scm.graph.ancestors_of(y);
    for (v, s) in swap.iter_mut().enumerate() {
        if scm.graph.is_root(v) || (outcome_only && v != y) {
            *s = false;
        }
    }
    let swapped: Vec<usize> = (0..swap.len()).filter(|&v| swap[v]).collect();
    let recompute = scm.graph.descendants_of(&swapped);
    let victim_row = data.select_rows(&[victim]);
    let donor_row = data.select_rows(&[donor]);
    let victim_noise = scm.abduct(&victim_row, Some(&recompute))?;
    let donor_noise = scm.abduct(&donor_row, Some(&swap))?;
    let mut noise = victim_noise;
    for v in swapped {
        noise.noises[v] = donor_noise.noises[v].clone();
    }
    let cf = propagate(scm, &victim_row, &[], &recompute, &noise)?;
    Ok(cf.column(outcome)?[0] - victim_row.column(outcome)?[0])
}
