use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;

use super::{
    abducted_noise, anm_mechanisms, majority, mean, model_inputs, node_sre, values,
    ExperimentConfig, Outcome, Protocol, Table,
};
use crate::counterfactual::{
    attribute_exogenous, cate_from_ite, effects_from_counterfactual, ensemble_ite, fairness_audit,
    flip_treatment, pehe, Aggregate, EffectEstimate,
};
use crate::dgp::{
    gen_semisynthetic_lalonde, read_lalonde_covariates, semisynthetic_base, semisynthetic_ite,
    synthetic_lalonde_covariates, GeneratedData,
};
use crate::diffusion::SamplerKind;
use crate::error::{Error, Result};
use crate::metrics::{cic_score, cmi_score, delta_u, kmd_score};
use crate::scm::{CausalGraph, Dataset, FittedScm};

/// Covariates from the configured file (first `n` rows) or the synthetic
/// generator.
fn covariates(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    match &config.dataset_path {
        Some(path) => {
            let all = read_lalonde_covariates(File::open(path)?)?;
            if all.n_rows() < config.n {
                return Err(Error::Data(format!(
                    "{} has {} rows but n = {}",
                    path.display(),
                    all.n_rows(),
                    config.n
                )));
            }
            Ok(all.select_rows(&(0..config.n).collect::<Vec<_>>()))
        }
        None => synthetic_lalonde_covariates(config.n, seed),
    }
}

/// Semi-synthetic data for one seed. Under the ensemble protocol every seed
/// shares the data of the first seed.
fn seed_data(config: &ExperimentConfig, seed: u64) -> Result<GeneratedData> {
    let data_seed = match config.protocol {
        Protocol::Individual => seed,
        Protocol::Ensemble => config.seeds[0],
    };
    gen_semisynthetic_lalonde(&covariates(config, data_seed)?, data_seed)
}

struct Prepared {
    g: GeneratedData,
    graph: CausalGraph,
    data: Dataset,
}

fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let g = seed_data(config, seed)?;
    let (graph, data) = model_inputs(config, &g.graph, &g.data)?;
    Ok(Prepared { g, graph, data })
}

fn truth(g: &GeneratedData) -> Result<&[f64]> {
    g.ite
        .as_deref()
        .ok_or_else(|| Error::Data("semi-synthetic data has no unit effects".into()))
}

fn ensemble_note(out: &mut Outcome, config: &ExperimentConfig) {
    if config.protocol == Protocol::Ensemble {
        out.notes.push(format!(
            "Ensemble protocol: every model is fit to the data of seed {}; effects are averaged over models before scoring.",
            config.seeds[0]
        ));
    }
}

/// Scores of one arm on one seed.
struct ArmScores {
    est: EffectEstimate,
    values: BTreeMap<String, f64>,
}

fn score_arm(
    p: &Prepared,
    scm: &FittedScm,
    arm: &str,
    kmd_gamma: f64,
    seed: u64,
) -> Result<ArmScores> {
    let g = &p.g;
    let cf = flip_treatment(scm, &p.data, &g.treatment)?;
    let est = effects_from_counterfactual(&p.data, &cf, &g.treatment, &g.outcome)?;
    let du = delta_u(
        &abducted_noise(scm, &g.outcome, &p.data)?,
        g.noise(&g.outcome)?,
    )?;
    let (sre_reported, sre_measured) = node_sre(scm, &g.outcome, &p.data)?;
    let generated = scm.sample(p.data.n_rows(), seed)?;
    let kmd = kmd_score(&p.graph, &p.data, &generated, &g.outcome, kmd_gamma)?;
    let mut v = BTreeMap::new();
    for (k, x) in [
        ("pehe", pehe(&est.ite, truth(g)?)?),
        ("ate", est.ate),
        ("ate_abs_error", (est.ate - g.true_ate).abs()),
        ("delta_u", du),
        ("delta_sre", sre_reported),
        ("delta_sre_measured", sre_measured),
        ("cic", cic_score(du, sre_reported)?),
        ("cmi", cmi_score(&p.graph, &p.data, &cf)?.aggregate),
        ("kmd", kmd.score),
    ] {
        v.insert(format!("{arm}.{k}"), x);
    }
    Ok(ArmScores { est, values: v })
}

/// BELM, DDIM and additive-noise arms on the semi-synthetic benchmark.
pub(crate) fn run_golden(config: &ExperimentConfig) -> Result<Outcome> {
    const ARMS: [&str; 3] = ["belm", "ddim", "anm"];
    let mut out = Outcome::default();
    let anm = anm_mechanisms(&config.mechanisms, &config.options.anm_regressor);
    let mut ites: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut shared_truth = None;
    out.for_each_seed(&config.seeds, |seed| {
        let p = prepare(config, seed)?;
        let scm = FittedScm::fit(&p.graph, &p.data, &config.mechanisms, seed)?;
        let models = [
            ("belm", scm.with_sampler(SamplerKind::Belm)),
            ("ddim", scm.with_sampler(SamplerKind::Ddim)),
            ("anm", FittedScm::fit(&p.graph, &p.data, &anm, seed)?),
        ];
        let mut v = values([("true_ate", p.g.true_ate)]);
        for (arm, m) in &models {
            let s = score_arm(&p, m, arm, config.options.kmd_gamma, seed)?;
            ites.entry(arm).or_default().push(s.est.ite);
            v.extend(s.values);
        }
        shared_truth = Some(truth(&p.g)?.to_vec());
        Ok(v)
    })?;
    let metrics = [
        "cic",
        "delta_u",
        "delta_sre",
        "delta_sre_measured",
        "cmi",
        "kmd",
        "pehe",
        "ate_abs_error",
    ];
    let mut cols = vec!["arm"];
    cols.extend(metrics);
    let mut t = Table::new("golden", &cols);
    for arm in ARMS {
        t.push(
            arm,
            metrics
                .iter()
                .map(|m| mean(&out.series(&format!("{arm}.{m}"))))
                .collect(),
        );
    }
    out.tables.push(t);
    if config.protocol == Protocol::Ensemble {
        let tr = shared_truth.expect("at least one seed");
        for arm in ARMS {
            out.ensemble.insert(
                format!("{arm}.pehe"),
                pehe(&ensemble_ite(&ites[arm])?, &tr)?,
            );
        }
    }
    let n = config.seeds.len();
    let flags = |a: Vec<f64>, b: Vec<f64>, higher: bool| -> Vec<bool> {
        a.iter()
            .zip(b)
            .map(|(x, y)| if higher { *x > y } else { *x < y })
            .collect()
    };
    let (k, ok) = majority(&flags(out.series("belm.cic"), out.series("ddim.cic"), true));
    out.check(
        "belm_cic_above_ddim",
        ok,
        format!("BELM CIC above DDIM in {k}/{n} seeds"),
    );
    let (k, ok) = majority(&flags(
        out.series("belm.pehe"),
        out.series("ddim.pehe"),
        false,
    ));
    out.check(
        "belm_pehe_below_ddim",
        ok,
        format!("BELM PEHE below DDIM in {k}/{n} seeds"),
    );
    let reported = out.series("anm.delta_sre");
    let measured = out.series("anm.delta_sre_measured");
    let worst = measured.iter().fold(0.0f64, |m, x| m.max(*x));
    out.check(
        "anm_sre_exact",
        reported.iter().all(|&x| x == 0.0) && worst <= 1e-12,
        format!("ANM delta_SRE reported 0, largest measured {worst:.3e}"),
    );
    out.notes.push("Arms: BELM and DDIM share the trained diffusion networks; the additive-noise arm replaces every diffusion mechanism. A normalizing-flow arm is not included.".into());
    ensemble_note(&mut out, config);
    Ok(out)
}

/// ATE and PEHE of the configured model on the semi-synthetic benchmark.
pub(crate) fn run_semisynthetic(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut ites = Vec::new();
    let mut shared = None;
    out.for_each_seed(&config.seeds, |seed| {
        let p = prepare(config, seed)?;
        let scm = FittedScm::fit(&p.graph, &p.data, &config.mechanisms, seed)?;
        let est = crate::counterfactual::estimate_ate(&scm, &p.data, &p.g.treatment, &p.g.outcome)?;
        let tr = truth(&p.g)?;
        let v = values([
            ("ate", est.ate),
            ("true_ate", p.g.true_ate),
            ("ate_abs_error", (est.ate - p.g.true_ate).abs()),
            ("pehe", pehe(&est.ite, tr)?),
        ]);
        ites.push(est.ite);
        shared = Some((tr.to_vec(), p.g.true_ate));
        Ok(v)
    })?;
    if config.protocol == Protocol::Ensemble {
        let (tr, ate) = shared.expect("at least one seed");
        let ite = ensemble_ite(&ites)?;
        out.ensemble.insert("pehe".into(), pehe(&ite, &tr)?);
        out.ensemble
            .insert("ate_abs_error".into(), (mean(&ite) - ate).abs());
    }
    let mut t = Table::new("semisynthetic", &["metric", "mean", "std"]);
    for m in ["pehe", "ate_abs_error", "ate"] {
        let a = Aggregate::from_values(&out.series(m));
        t.push(m, vec![a.mean, a.std]);
    }
    out.tables.push(t);
    ensemble_note(&mut out, config);
    Ok(out)
}

fn group_key(column: &str, value: f64) -> String {
    format!("{column}={value}")
}

/// Subgroup effects over the configured grouping column.
pub(crate) fn run_cate(config: &ExperimentConfig) -> Result<Outcome> {
    let col = config.options.group_column.as_str();
    let mut present: Option<BTreeSet<u64>> = None;
    for &seed in &config.seeds {
        let g = seed_data(config, seed)?;
        let c = g.data.column(col)?;
        let here: BTreeSet<u64> = config
            .options
            .group_values
            .iter()
            .filter(|v| c.contains(v))
            .map(|v| v.to_bits())
            .collect();
        present = Some(match present {
            None => here,
            Some(p) => p.intersection(&here).copied().collect(),
        });
    }
    let groups: Vec<f64> = config
        .options
        .group_values
        .iter()
        .copied()
        .filter(|v| present.as_ref().is_some_and(|p| p.contains(&v.to_bits())))
        .collect();
    if groups.is_empty() {
        return Err(Error::Data(format!(
            "no requested value of '{col}' occurs in the data"
        )));
    }
    let mut out = Outcome::default();
    let skipped: Vec<String> = config
        .options
        .group_values
        .iter()
        .filter(|v| !groups.contains(v))
        .map(|v| v.to_string())
        .collect();
    if !skipped.is_empty() {
        out.notes.push(format!(
            "Groups without units were skipped: {col} in {{{}}}.",
            skipped.join(", ")
        ));
    }
    let mut ites = Vec::new();
    let mut shared = None;
    out.for_each_seed(&config.seeds, |seed| {
        let p = prepare(config, seed)?;
        let scm = FittedScm::fit(&p.graph, &p.data, &config.mechanisms, seed)?;
        let est = crate::counterfactual::estimate_ate(&scm, &p.data, &p.g.treatment, &p.g.outcome)?;
        let gcol = p.g.data.column(col)?;
        let tr = truth(&p.g)?;
        let est_g = cate_from_ite(&est.ite, gcol, &groups)?;
        let true_g = cate_from_ite(tr, gcol, &groups)?;
        let mut v = BTreeMap::new();
        for (e, t) in est_g.iter().zip(&true_g) {
            let key = group_key(col, e.group);
            v.insert(format!("cate[{key}]"), e.cate);
            v.insert(format!("true_cate[{key}]"), t.cate);
            v.insert(format!("units[{key}]"), e.n as f64);
        }
        v.insert("pehe".into(), pehe(&est.ite, tr)?);
        ites.push(est.ite);
        shared = Some((tr.to_vec(), gcol.to_vec()));
        Ok(v)
    })?;
    let mut t = Table::new(
        "cate",
        &[
            "group",
            "units",
            "true_cate",
            "cate_mean",
            "cate_std",
            "abs_error",
        ],
    );
    let ensemble = match (&shared, config.protocol) {
        (Some((_, gcol)), Protocol::Ensemble) => {
            Some(cate_from_ite(&ensemble_ite(&ites)?, gcol, &groups)?)
        }
        _ => None,
    };
    for (i, &gv) in groups.iter().enumerate() {
        let key = group_key(col, gv);
        let est = Aggregate::from_values(&out.series(&format!("cate[{key}]")));
        let tr = mean(&out.series(&format!("true_cate[{key}]")));
        let units = mean(&out.series(&format!("units[{key}]")));
        let centre = ensemble.as_ref().map_or(est.mean, |e| e[i].cate);
        t.push(
            &key,
            vec![units, tr, est.mean, est.std, (centre - tr).abs()],
        );
        if let Some(e) = &ensemble {
            out.ensemble.insert(format!("cate[{key}]"), e[i].cate);
        }
    }
    out.tables.push(t);
    ensemble_note(&mut out, config);
    Ok(out)
}

fn arg_extreme(v: &[f64], max: bool) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if (max && v[i] > v[best]) || (!max && v[i] < v[best]) {
            best = i;
        }
    }
    best
}

/// Replacing one unit's outcome noise with another's.
pub(crate) fn run_attribute(config: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    out.for_each_seed(&config.seeds, |seed| {
        let p = prepare(config, seed)?;
        let scm = FittedScm::fit(&p.graph, &p.data, &config.mechanisms, seed)?;
        let y = p.data.column(&p.g.outcome)?;
        let victim = config
            .options
            .victim
            .unwrap_or_else(|| arg_extreme(y, false));
        let donor = config.options.donor.unwrap_or_else(|| arg_extreme(y, true));
        if victim == donor {
            return Err(Error::Data("victim and donor are the same unit".into()));
        }
        let u = p.g.noise(&p.g.outcome)?;
        let est = attribute_exogenous(&scm, &p.data, victim, donor, &p.g.outcome, true)?;
        let true_change = u[donor] - u[victim];
        let all = attribute_exogenous(&scm, &p.data, victim, donor, &p.g.outcome, false)?;
        Ok(values([
            ("victim", victim as f64),
            ("donor", donor as f64),
            ("change", est),
            ("true_change", true_change),
            ("abs_error", (est - true_change).abs()),
            ("change_all_ancestors", all),
        ]))
    })?;
    let mut t = Table::new("attribution", &["quantity", "mean", "std"]);
    for k in ["change", "true_change", "abs_error", "change_all_ancestors"] {
        let a = Aggregate::from_values(&out.series(k));
        t.push(k, vec![a.mean, a.std]);
    }
    out.tables.push(t);
    out.notes.push("The true change swaps only the outcome noise with the treatment held fixed; 'change_all_ancestors' also swaps the treatment mechanism's noise.".into());
    Ok(out)
}

/// Outcome under the design with one binary covariate overridden.
fn outcome_with(
    data: &Dataset,
    noise: &[f64],
    attribute: &str,
    value: f64,
    mu_re74: f64,
) -> Result<Vec<f64>> {
    let col = |n: &str| -> Result<Vec<f64>> {
        let mut v = data.column(n)?.to_vec();
        if n == attribute {
            v.iter_mut().for_each(|x| *x = value);
        }
        Ok(v)
    };
    let (age, educ, black, hisp) = (col("age")?, col("educ")?, col("black")?, col("hisp")?);
    let (nodegr, re74, re75, treat) = (col("nodegr")?, col("re74")?, col("re75")?, col("treat")?);
    Ok((0..data.n_rows())
        .map(|i| {
            semisynthetic_base(age[i], educ[i], black[i], hisp[i], re74[i], re75[i])
                + treat[i]
                    * semisynthetic_ite(age[i], educ[i], nodegr[i], black[i], re74[i], mu_re74)
                + noise[i]
        })
        .collect())
}

/// Counterfactual flips of sensitive attributes.
pub(crate) fn run_fairness(config: &ExperimentConfig) -> Result<Outcome> {
    let attrs = &config.options.sensitive_attributes;
    let mut out = Outcome::default();
    out.for_each_seed(&config.seeds, |seed| {
        let p = prepare(config, seed)?;
        let scm = FittedScm::fit(&p.graph, &p.data, &config.mechanisms, seed)?;
        let u = p.g.noise(&p.g.outcome)?;
        let mu = mean(p.g.data.column("re74")?);
        let mut v = BTreeMap::new();
        for a in attrs {
            let r = fairness_audit(&scm, &p.data, a, &p.g.outcome)?;
            let y0 = outcome_with(&p.g.data, u, a, 0.0, mu)?;
            let y1 = outcome_with(&p.g.data, u, a, 1.0, mu)?;
            let gap: Vec<f64> = y0.iter().zip(&y1).map(|(a, b)| a - b).collect();
            let true_gap = mean(&gap);
            v.insert(format!("{a}.average_gap"), r.average_gap);
            v.insert(format!("{a}.true_gap"), true_gap);
            v.insert(format!("{a}.gap_error"), (r.average_gap - true_gap).abs());
        }
        Ok(v)
    })?;
    let mut t = Table::new(
        "fairness",
        &["attribute", "gap_mean", "gap_std", "true_gap"],
    );
    for a in attrs {
        let g = Aggregate::from_values(&out.series(&format!("{a}.average_gap")));
        t.push(
            a,
            vec![g.mean, g.std, mean(&out.series(&format!("{a}.true_gap")))],
        );
    }
    out.tables.push(t);
    out.notes.push("Gaps are mean Y(attribute = 0) - Y(attribute = 1) over all units. The true gap holds the treatment fixed; the model recomputes it because the graph lets covariates cause treatment.".into());
    Ok(out)
}
