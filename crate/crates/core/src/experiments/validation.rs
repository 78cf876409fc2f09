use std::collections::BTreeMap;

use super::{ExperimentConfig, Outcome, Table};
use crate::counterfactual::Aggregate;
use crate::error::Result;
use crate::metrics::{metric_validation_suite, ValidationModel};

const METRICS: [&str; 6] = ["delta_u", "delta_sre", "cic", "cmi", "kmd", "mmd2"];

/// Scores five simulated models of known quality with every metric.
pub(crate) fn run(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    out.for_each_seed(&config.seeds, |seed| {
        let r = metric_validation_suite(config.n, seed)?;
        let mut v = BTreeMap::new();
        for row in &r.rows {
            for (m, x) in METRICS.iter().zip([
                row.delta_u,
                row.delta_sre,
                row.cic,
                row.cmi,
                row.kmd,
                row.mmd2,
            ]) {
                v.insert(format!("{}.{m}", row.model), x);
            }
        }
        v.insert("kmd_monotone".into(), f64::from(u8::from(r.kmd_monotone)));
        Ok(v)
    })?;

    let mut cols = vec!["model"];
    cols.extend(METRICS);
    let mut t = Table::new("metric_validation", &cols);
    for m in ValidationModel::ALL {
        t.push(
            m.label(),
            METRICS
                .iter()
                .map(|k| Aggregate::from_values(&out.series(&format!("{}.{k}", m.label()))).mean)
                .collect(),
        );
    }
    out.tables.push(t);

    let all = |key: &str, f: &dyn Fn(f64) -> bool| out.series(key).into_iter().all(f);
    let monotone = all("kmd_monotone", &|x| x == 1.0);
    let cic_a = all("A.cic", &|x| x == 1.0);
    let cic_b = all("B.cic", &|x| x < 0.5);
    let cmi_e = all("E.cmi", &|x| x > 0.0);
    let n = config.seeds.len();
    out.check(
        "kmd_monotone_a_to_e",
        monotone,
        format!("KMD non-increasing from A to E in every one of {n} seeds: {monotone}"),
    );
    out.check(
        "cic_a_equals_one",
        cic_a,
        format!("CIC(A) = 1 in every seed: {cic_a}"),
    );
    out.check(
        "cic_b_below_half",
        cic_b,
        format!("CIC(B) < 0.5 in every seed: {cic_b}"),
    );
    out.check(
        "cmi_e_positive",
        cmi_e,
        format!("CMI(E) > 0 in every seed: {cmi_e}"),
    );
    for m in ValidationModel::ALL {
        out.notes
            .push(format!("Model {}: {}.", m.label(), m.description()));
    }
    Ok(out)
}
