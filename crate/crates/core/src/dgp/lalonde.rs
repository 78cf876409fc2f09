use std::collections::BTreeMap;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mean, normal, uniform, GeneratedData};
use crate::error::{Error, Result};
use crate::scm::{CausalGraph, Dataset, NodeKind};

/// Binary covariates and the treatment indicator; `married` is optional.
pub const LALONDE_BINARY: [&str; 5] = ["treat", "black", "hisp", "married", "nodegr"];
pub const LALONDE_CONTINUOUS: [&str; 4] = ["age", "educ", "re74", "re75"];
/// Name of the generated outcome column.
pub const LALONDE_OUTCOME: &str = "re78";

const OPTIONAL: &str = "married";

fn is_binary(name: &str) -> bool {
    LALONDE_BINARY.contains(&name)
}

/// Reads covariates from CSV. Extra columns are dropped; binary columns must
/// hold 0/1.
pub fn read_lalonde_covariates<R: Read>(reader: R) -> Result<Dataset> {
    let raw = Dataset::from_csv(reader, &BTreeMap::new())?;
    let mut cols = Vec::new();
    for name in LALONDE_BINARY.iter().chain(&LALONDE_CONTINUOUS) {
        let values = match raw.column(name) {
            Ok(v) => v.to_vec(),
            Err(_) if *name == OPTIONAL => continue,
            Err(_) => {
                return Err(Error::Data(format!(
                    "covariate file is missing column '{name}'"
                )))
            }
        };
        let kind = if is_binary(name) {
            if let Some(r) = values.iter().position(|&x| x != 0.0 && x != 1.0) {
                return Err(Error::Data(format!(
                    "column '{name}' row {}: '{}' is not 0 or 1",
                    r + 1,
                    values[r]
                )));
            }
            NodeKind::Categorical
        } else {
            NodeKind::Continuous
        };
        cols.push((name.to_string(), kind, values));
    }
    Dataset::from_columns(cols)
}

/// Standard confounding structure: every covariate causes both `treat` and
/// the outcome, and `treat` causes the outcome.
pub fn lalonde_graph(covariates: &Dataset) -> Result<CausalGraph> {
    let mut nodes: Vec<(&str, NodeKind)> = Vec::new();
    let mut edges = Vec::new();
    for (name, kind) in covariates.names().iter().zip(covariates.kinds()) {
        nodes.push((name, *kind));
        if name != "treat" {
            edges.push((name.as_str(), "treat"));
            edges.push((name.as_str(), LALONDE_OUTCOME));
        }
    }
    nodes.push((LALONDE_OUTCOME, NodeKind::Continuous));
    edges.push(("treat", LALONDE_OUTCOME));
    CausalGraph::from_edges(&nodes, &edges)
}

/// Heterogeneous unit effect of the semi-synthetic design.
pub fn semisynthetic_ite(
    age: f64,
    educ: f64,
    nodegr: f64,
    black: f64,
    re74: f64,
    mu_re74: f64,
) -> f64 {
    1500.0 + 350.0 * (1.0 + educ).ln() - 3.0 * (age - 40.0).powi(2)
        + 1200.0 * (1.0 - nodegr) * (1.0 - black)
        - 1000.0 * ((re74 - mu_re74) / 1000.0).tanh()
}

/// Noise-free untreated earnings of the semi-synthetic design.
pub fn semisynthetic_base(age: f64, educ: f64, black: f64, hisp: f64, re74: f64, re75: f64) -> f64 {
    2.0 * re74 + 1.5 * re75 + 100.0 * educ - 50.0 * age + 2000.0 * black - 1000.0 * hisp
}

/// Synthetic earnings outcome on real or synthetic covariates.
///
/// `re78 = Y_base + ITE * treat` with `U_base ~ N(0, 500²)`; the reported
/// truth is the sample mean of the unit effects.
pub fn gen_semisynthetic_lalonde(covariates: &Dataset, seed: u64) -> Result<GeneratedData> {
    let col = |name: &str| -> Result<&[f64]> {
        covariates
            .column(name)
            .map_err(|_| Error::Data(format!("covariates are missing column '{name}'")))
    };
    let treat = col("treat")?;
    let (age, educ, black, hisp) = (col("age")?, col("educ")?, col("black")?, col("hisp")?);
    let (nodegr, re74, re75) = (col("nodegr")?, col("re74")?, col("re75")?);
    let n = covariates.n_rows();
    if n < 2 {
        return Err(Error::Data(
            "semi-synthetic design needs at least two rows".into(),
        ));
    }
    if covariates.kind_of("treat")? != NodeKind::Categorical {
        return Err(Error::Data(
            "'treat' must be a categorical 0/1 column".into(),
        ));
    }
    let mu = mean(re74);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut y_cf, mut ite, mut u) = (vec![], vec![], vec![], vec![]);
    for i in 0..n {
        let ub = normal(&mut rng, 500.0);
        let base = semisynthetic_base(age[i], educ[i], black[i], hisp[i], re74[i], re75[i]) + ub;
        let e = semisynthetic_ite(age[i], educ[i], nodegr[i], black[i], re74[i], mu);
        y.push(base + e * treat[i]);
        y_cf.push(base + e * (1.0 - treat[i]));
        ite.push(e);
        u.push(ub);
    }
    let graph = lalonde_graph(covariates)?;
    let mut data = covariates.clone();
    data.push_column(LALONDE_OUTCOME, NodeKind::Continuous, y)?;
    let mut noises: BTreeMap<String, Vec<f64>> = covariates
        .names()
        .iter()
        .filter(|n| *n != "treat")
        .map(|n| Ok((n.clone(), covariates.column(n)?.to_vec())))
        .collect::<Result<_>>()?;
    noises.insert(LALONDE_OUTCOME.to_string(), u);
    Ok(GeneratedData {
        data,
        graph,
        treatment: "treat".into(),
        outcome: LALONDE_OUTCOME.into(),
        noises,
        true_ate: mean(&ite),
        ite: Some(ite),
        counterfactual_outcome: Some(y_cf),
        true_ate_se: 0.0,
        reference_ate: None,
    })
}

/// Covariates resembling the experimental job-training sample: young,
/// mostly Black, low schooling, and many zero earnings.
pub fn synthetic_lalonde_covariates(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config(format!("need at least two rows, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: [Vec<f64>; 9] = Default::default();
    let earnings = |rng: &mut ChaCha8Rng, p_zero: f64, log_mean: f64| {
        if uniform(rng) < p_zero {
            0.0
        } else {
            ((log_mean + normal(rng, 0.9)).exp() * 100.0).round() / 100.0
        }
    };
    for _ in 0..n {
        let treat = f64::from(uniform(&mut rng) < 0.416);
        let age = (17.0 + (8f64.ln() + normal(&mut rng, 0.6)).exp().round()).min(55.0);
        let educ = (10.2 + normal(&mut rng, 1.8)).round().clamp(3.0, 16.0);
        let race = uniform(&mut rng);
        let black = f64::from(race < 0.83);
        let hisp = f64::from((0.83..0.92).contains(&race));
        let married = f64::from(uniform(&mut rng) < 0.17);
        let nodegr = f64::from(educ < 12.0);
        let re74 = earnings(&mut rng, 0.73, 8.56);
        let re75 = earnings(&mut rng, 0.60, 7.86);
        for (c, v) in cols
            .iter_mut()
            .zip([treat, black, hisp, married, nodegr, age, educ, re74, re75])
        {
            c.push(v);
        }
    }
    let names = LALONDE_BINARY.iter().chain(&LALONDE_CONTINUOUS);
    Dataset::from_columns(names.zip(cols).map(|(name, v)| {
        let kind = if is_binary(name) {
            NodeKind::Categorical
        } else {
            NodeKind::Continuous
        };
        (name.to_string(), kind, v)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../../fixtures/lalonde_fixture.csv");

    #[test]
    fn hand_evaluated_effect() {
        let e = semisynthetic_ite(40.0, 12.0, 1.0, 0.0, 500.0, 500.0);
        assert!((e - (1500.0 + 350.0 * 13f64.ln())).abs() < 1e-9);
        assert!((e - 2397.7).abs() < 0.05);
        for re74 in [-5000.0, -800.0, 0.0, 2500.0, 9000.0] {
            let tanh_term = semisynthetic_ite(40.0, 0.0, 1.0, 1.0, re74, 0.0) - 1500.0;
            assert!(tanh_term > -1000.0 && tanh_term < 1000.0);
        }
    }

    #[test]
    fn fixture_round_trip() {
        let cov = read_lalonde_covariates(FIXTURE.as_bytes()).unwrap();
        assert_eq!(cov.n_rows(), 20);
        let g = gen_semisynthetic_lalonde(&cov, 4).unwrap();
        let y = g.data.column(LALONDE_OUTCOME).unwrap();
        let t = g.data.column("treat").unwrap();
        let cf = g.counterfactual_outcome.as_ref().unwrap();
        let ite = g.ite.as_ref().unwrap();
        for i in 0..20 {
            let signed = if t[i] == 1.0 {
                y[i] - cf[i]
            } else {
                cf[i] - y[i]
            };
            assert!((signed - ite[i]).abs() < 1e-6);
        }
        assert_eq!(g.true_ate, mean(ite));
        assert_eq!(g.graph.parents(g.graph.index_of("re78").unwrap()).len(), 9);
    }

    #[test]
    fn ingestion_errors_name_the_problem() {
        let missing = "treat,age,educ,black,hisp,nodegr,re74\n1,20,10,1,0,1,0\n";
        let e = read_lalonde_covariates(missing.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("re75"), "{e}");
        let bad = "treat,age,educ,black,hisp,nodegr,re74,re75\n1,20,ten,1,0,1,0,0\n";
        let e = read_lalonde_covariates(bad.as_bytes()).unwrap_err();
        assert!(
            e.to_string().contains("educ") && e.to_string().contains("row 1"),
            "{e}"
        );
        let nonbinary = "treat,age,educ,black,hisp,nodegr,re74,re75\n2,20,10,1,0,1,0,0\n";
        assert!(read_lalonde_covariates(nonbinary.as_bytes()).is_err());
    }

    #[test]
    fn synthetic_covariates_plausible() {
        let cov = synthetic_lalonde_covariates(4000, 0).unwrap();
        let black = mean(cov.column("black").unwrap());
        let zero74 = cov
            .column("re74")
            .unwrap()
            .iter()
            .filter(|&&x| x == 0.0)
            .count();
        assert!((black - 0.83).abs() < 0.03);
        assert!((zero74 as f64 / 4000.0 - 0.73).abs() < 0.03);
        let age = mean(cov.column("age").unwrap());
        assert!(age > 22.0 && age < 30.0, "{age}");
        let g = gen_semisynthetic_lalonde(&cov, 1).unwrap();
        let educ = cov.column("educ").unwrap();
        let ite = g.ite.as_ref().unwrap();
        let at12: Vec<f64> = (0..4000)
            .filter(|&i| educ[i] == 12.0)
            .map(|i| ite[i])
            .collect();
        let m = mean(&at12);
        assert!((m / 2384.44 - 1.0).abs() < 0.1, "{m}");
    }
}
