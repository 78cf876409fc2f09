use super::{mean, model_inputs, node_sre, values, ExperimentConfig, Outcome, Table};
use crate::counterfactual::{estimate_ate, median, pehe, Aggregate};
use crate::dgp::{gen_psm_failure, gen_stress_noninvertible};
use crate::diffusion::SamplerKind;
use crate::error::{Error, Result};
use crate::scm::FittedScm;

/// PSM tolerance on the mean absolute ATE error.
pub const PSM_ERROR_TOLERANCE: f64 = 500.0;

/// BELM against DDIM on a mechanism whose noise cannot be recovered. Both
/// arms share the trained networks and differ only in the sampler.
pub(crate) fn run_stress(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    out.for_each_seed(&config.seeds, |seed| {
        let g = gen_stress_noninvertible(config.n, seed)?;
        let (graph, data) = model_inputs(config, &g.graph, &g.data)?;
        let scm = FittedScm::fit(&graph, &data, &config.mechanisms, seed)?;
        let truth = g
            .ite
            .as_deref()
            .ok_or_else(|| Error::Data("stress data has no ITE".into()))?;
        let mut v = values([("true_ate", g.true_ate)]);
        for (arm, kind) in [("belm", SamplerKind::Belm), ("ddim", SamplerKind::Ddim)] {
            let m = scm.with_sampler(kind);
            let est = estimate_ate(&m, &data, &g.treatment, &g.outcome)?;
            v.insert(format!("{arm}.pehe"), pehe(&est.ite, truth)?);
            v.insert(format!("{arm}.ate"), est.ate);
            v.insert(format!("{arm}.ate_abs_error"), (est.ate - g.true_ate).abs());
            v.insert(
                format!("{arm}.sre_measured"),
                node_sre(&m, &g.outcome, &data)?.1,
            );
        }
        Ok(v)
    })?;
    let mut t = Table::new(
        "stress",
        &[
            "arm",
            "pehe_mean",
            "pehe_std",
            "pehe_median",
            "ate_mean",
            "ate_std",
        ],
    );
    for arm in ["belm", "ddim"] {
        let p = Aggregate::from_values(&out.series(&format!("{arm}.pehe")));
        let a = Aggregate::from_values(&out.series(&format!("{arm}.ate")));
        t.push(arm, vec![p.mean, p.std, p.median(), a.mean, a.std]);
    }
    out.tables.push(t);
    let (b, d) = (out.series("belm.pehe"), out.series("ddim.pehe"));
    out.check(
        "belm_pehe_below_ddim",
        mean(&b) < mean(&d),
        format!("mean PEHE {:.4} (BELM) vs {:.4} (DDIM)", mean(&b), mean(&d)),
    );
    out.check(
        "belm_median_pehe_at_most_0.8_ddim",
        median(&b) <= 0.8 * median(&d),
        format!(
            "median PEHE {:.4} (BELM) vs 0.8 x {:.4} (DDIM)",
            median(&b),
            median(&d)
        ),
    );
    out.notes
        .push("Both arms use the same trained networks; only the sampler differs.".into());
    Ok(out)
}

/// ATE recovery under a confounded design with a categorical confounder.
pub(crate) fn run_psm(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    out.for_each_seed(&config.seeds, |seed| {
        let g = gen_psm_failure(config.n, seed)?;
        let (graph, data) = model_inputs(config, &g.graph, &g.data)?;
        let scm = FittedScm::fit(&graph, &data, &config.mechanisms, seed)?;
        let est = estimate_ate(&scm, &data, &g.treatment, &g.outcome)?;
        let truth = g
            .ite
            .as_deref()
            .ok_or_else(|| Error::Data("PSM data has no ITE".into()))?;
        Ok(values([
            ("ate", est.ate),
            ("ate_abs_error", (est.ate - g.true_ate).abs()),
            ("pehe", pehe(&est.ite, truth)?),
            (
                "naive_difference",
                naive_difference(&data, &g.treatment, &g.outcome)?,
            ),
        ]))
    })?;
    let err = mean(&out.series("ate_abs_error"));
    let ate = Aggregate::from_values(&out.series("ate"));
    let mut t = Table::new(
        "psm",
        &["estimator", "ate_mean", "ate_std", "abs_error_mean"],
    );
    t.push("model", vec![ate.mean, ate.std, err]);
    let naive = Aggregate::from_values(&out.series("naive_difference"));
    t.push(
        "difference_in_means",
        vec![naive.mean, naive.std, (naive.mean - 5000.0).abs()],
    );
    out.tables.push(t);
    out.check(
        "mean_abs_error_within_500",
        err <= PSM_ERROR_TOLERANCE,
        format!("mean |ATE - 5000| = {err:.2}"),
    );
    Ok(out)
}

fn naive_difference(data: &crate::scm::Dataset, treatment: &str, outcome: &str) -> Result<f64> {
    let t = data.column(treatment)?;
    let y = data.column(outcome)?;
    let pick = |arm: f64| {
        let v: Vec<f64> = t
            .iter()
            .zip(y)
            .filter(|(a, _)| **a == arm)
            .map(|(_, y)| *y)
            .collect();
        if v.is_empty() {
            Err(Error::Data(format!("no units with {treatment} = {arm}")))
        } else {
            Ok(mean(&v))
        }
    };
    Ok(pick(1.0)? - pick(0.0)?)
}
