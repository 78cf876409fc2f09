use serde::{Deserialize, Serialize};

use super::ksg::{ksg_cmi, KSG_NEIGHBOURS};
use super::mmd::{median_heuristic, mmd2_unbiased};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scm::{mean_std, CausalGraph, Dataset};

/// Stabilizer in the CMI-score denominator.
pub const CMI_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub parent: String,
    pub child: String,
    pub i_obs: f64,
    pub i_cf: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmiScore {
    pub edges: Vec<EdgeScore>,
    /// Mean edge score per node with parents, in graph order.
    pub mechanisms: Vec<(String, f64)>,
    pub aggregate: f64,
}

/// Agreement of parent-child dependence between observational and
/// counterfactual tables.
///
/// Each edge `P -> V` compares `I(P; V | other parents of V)` on both tables.
/// Nodes without parents are skipped.
pub fn cmi_score(
    graph: &CausalGraph,
    observed: &Dataset,
    counterfactual: &Dataset,
) -> Result<CmiScore> {
    if observed.names() != counterfactual.names() {
        return Err(Error::Data("tables do not share a schema".into()));
    }
    let mut edges = Vec::new();
    let mut mechanisms = Vec::new();
    for v in 0..graph.len() {
        let parents = graph.parents(v);
        if parents.is_empty() {
            continue;
        }
        let child = graph.name(v);
        let mut scores = Vec::with_capacity(parents.len());
        for &p in parents {
            let others: Vec<&str> = parents
                .iter()
                .filter(|&&q| q != p)
                .map(|&q| graph.name(q))
                .collect();
            let mi = |d: &Dataset| -> Result<f64> {
                let z: Vec<&[f64]> = others.iter().map(|n| d.column(n)).collect::<Result<_>>()?;
                ksg_cmi(
                    d.column(graph.name(p))?,
                    d.column(child)?,
                    &z,
                    KSG_NEIGHBOURS,
                )
            };
            let i_obs = mi(observed)?;
            let i_cf = mi(counterfactual)?;
            let score = (1.0 - (i_obs - i_cf).abs() / (i_obs + CMI_EPSILON)).clamp(0.0, 1.0);
            scores.push(score);
            edges.push(EdgeScore {
                parent: graph.name(p).to_string(),
                child: child.to_string(),
                i_obs,
                i_cf,
                score,
            });
        }
        mechanisms.push((
            child.to_string(),
            scores.iter().sum::<f64>() / scores.len() as f64,
        ));
    }
    if mechanisms.is_empty() {
        return Err(Error::Graph("no node has parents".into()));
    }
    let aggregate = mechanisms.iter().map(|(_, s)| s).sum::<f64>() / mechanisms.len() as f64;
    Ok(CmiScore {
        edges,
        mechanisms,
        aggregate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmdScore {
    pub score: f64,
    pub mmd2: f64,
    pub bandwidth: f64,
    pub gamma: f64,
}

/// Kernel similarity of the joint `(node, parents)` block between observed
/// and generated tables, `exp(-γ max(0, MMD²))`.
///
/// Columns are standardized with the observed statistics and the bandwidth is
/// the median heuristic on the pooled block.
pub fn kmd_score(
    graph: &CausalGraph,
    observed: &Dataset,
    generated: &Dataset,
    node: &str,
    gamma: f64,
) -> Result<KmdScore> {
    if observed.n_rows() < 10 || generated.n_rows() < 10 {
        return Err(Error::Data(
            "kernel score needs at least 10 rows per table".into(),
        ));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
    }
    let v = graph.index_of(node)?;
    let mut names = vec![node];
    names.extend(graph.parents(v).iter().map(|&p| graph.name(p)));
    let block = |d: &Dataset, stats: &[(f64, f64)]| -> Result<Matrix<f64>> {
        let cols: Vec<Matrix<f64>> = names
            .iter()
            .zip(stats)
            .map(|(n, (m, s))| {
                Ok(Matrix::column(
                    &d.column(n)?.iter().map(|x| (x - m) / s).collect::<Vec<_>>(),
                ))
            })
            .collect::<Result<_>>()?;
        Matrix::hstack(&cols.iter().collect::<Vec<_>>())
    };
    let stats: Vec<(f64, f64)> = names
        .iter()
        .map(|n| {
            let (m, s) = mean_std(observed.column(n)?);
            Ok((m, if s > 0.0 { s } else { 1.0 }))
        })
        .collect::<Result<_>>()?;
    let a = block(observed, &stats)?;
    let b = block(generated, &stats)?;
    let bandwidth = median_heuristic(&Matrix::vstack(&[&a, &b])?)?;
    let mmd2 = mmd2_unbiased(&a, &b, bandwidth)?;
    Ok(KmdScore {
        score: (-gamma * mmd2.max(0.0)).exp(),
        mmd2,
        bandwidth,
        gamma,
    })
}

/// Mean squared norm of latent codes (rows); zero at the prior mode and
/// equal to the dimension for standard-normal codes.
pub fn prior_matching_diagnostic(latents: &Matrix<f64>) -> Result<f64> {
    if latents.rows() == 0 {
        return Err(Error::Data("no latent codes".into()));
    }
    Ok(latents.data().iter().map(|u| u * u).sum::<f64>() / latents.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::gen_metric_validation_scm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_tables_score_one() {
        let g = gen_metric_validation_scm(600, 0).unwrap();
        let s = cmi_score(&g.graph, &g.data, &g.data).unwrap();
        assert!(s.edges.iter().all(|e| e.score == 1.0));
        assert_eq!(s.aggregate, 1.0);
        let k = kmd_score(&g.graph, &g.data, &g.data, "Y", 1.0).unwrap();
        assert!(k.score >= 0.99);
    }

    #[test]
    fn independent_child_scores_near_zero() {
        let g = gen_metric_validation_scm(800, 1).unwrap();
        let mut cf = g.data.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        cf.set_column("Y", (0..800).map(|_| rng.sample(StandardNormal)).collect())
            .unwrap();
        let s = cmi_score(&g.graph, &g.data, &cf).unwrap();
        let wy = s
            .edges
            .iter()
            .find(|e| e.parent == "W" && e.child == "Y")
            .unwrap();
        assert!(wy.i_obs > 0.1);
        assert!(wy.score < 0.3, "{wy:?}");
        let k_bad = kmd_score(&g.graph, &g.data, &cf, "Y", 1.0).unwrap();
        let k_good = kmd_score(&g.graph, &g.data, &g.data, "Y", 1.0).unwrap();
        assert!(k_bad.score < k_good.score);
    }

    #[test]
    fn prior_diagnostic_values() {
        assert_eq!(
            prior_matching_diagnostic(&Matrix::zeros(4, 2)).unwrap(),
            0.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v: Vec<f64> = (0..40_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = prior_matching_diagnostic(&Matrix::from_vec(20_000, 2, v).unwrap()).unwrap();
        assert!((r - 2.0).abs() < 0.05);
    }
}
