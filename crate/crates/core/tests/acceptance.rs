//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 1 4 12` runs a subset. Criteria 6 to 9
//! train the desk-scale configurations in `configs/` and take a while.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use causal_roundtrip::counterfactual::{counterfactual, Intervention};
use causal_roundtrip::diffusion::{DiffusionConfig, SamplerKind};
use causal_roundtrip::experiments::{
    run_experiment, ExperimentConfig, ExperimentId, ExperimentReport,
};
use causal_roundtrip::metrics::{ksg_cmi, median_heuristic, mmd2_unbiased, mmd_permutation_test};
use causal_roundtrip::nn::{Activation, Matrix, MlpParams, MlpSpec};
use causal_roundtrip::scm::{
    CausalGraph, Dataset, FittedScm, MechanismConfig, NodeKind, RegressorConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn desk(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(format!("{name}.json")))
        .unwrap_or_else(|e| panic!("configs/{name}.json: {e}"))
}

fn run(config: &ExperimentConfig) -> ExperimentReport {
    run_experiment(config).unwrap_or_else(|e| panic!("{} failed: {e}", config.experiment))
}

fn check(r: &ExperimentReport, name: &str) -> (bool, String) {
    let c = r
        .check(name)
        .unwrap_or_else(|| panic!("report has no check '{name}'"));
    (c.passed, c.detail.clone())
}

fn within(elapsed: Duration, limit_s: u64) -> (bool, String) {
    let ok = elapsed.as_secs_f64() < limit_s as f64;
    (ok, format!("{:.1}s of {limit_s}s", elapsed.as_secs_f64()))
}

/// Runs `config` and joins the named checks with the runtime budget.
fn experiment_verdict(config: &ExperimentConfig, checks: &[&str], limit_s: u64) -> Verdict {
    let start = Instant::now();
    let r = run(config);
    let (t_ok, t) = within(start.elapsed(), limit_s);
    let mut ok = t_ok;
    let mut parts = Vec::new();
    for name in checks {
        let (p, d) = check(&r, name);
        ok &= p;
        parts.push(format!("{name} {}: {d}", if p { "ok" } else { "FAILED" }));
    }
    parts.push(format!("runtime {t}"));
    verdict(ok, parts.join("; "))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn c1_exact_inversion() -> Verdict {
    let mut cfg = desk("roundtrip");
    cfg.n = 1000;
    let start = Instant::now();
    let r = run(&cfg);
    let (t_ok, t) = within(start.elapsed(), 60);
    let (ok, d) = check(&r, "belm_max_rel_error_at_most_1e-8");
    verdict(ok && t_ok, format!("{d}; runtime {t}"))
}

fn c2_sre_scaling() -> Verdict {
    let mut cfg = desk("roundtrip");
    cfg.n = 1000;
    let start = Instant::now();
    let r = run(&cfg);
    let (t_ok, t) = within(start.elapsed(), 120);
    let (a, da) = check(&r, "ddim_error_above_1e-6_at_T50");
    let (b, db) = check(&r, "ddim_slope_in_range");
    verdict(a && b && t_ok, format!("{da}; {db}; runtime {t}"))
}

fn loss(net: &MlpParams<f64>, x: &Matrix<f64>, w: &Matrix<f64>) -> f64 {
    let out = net.forward(x).unwrap();
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn c3_gradients() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 1..=5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec {
            input_dim: 4,
            hidden_dim: 8,
            num_residual_blocks: 2,
            output_dim: 2,
            activation: Activation::Silu,
        };
        let net = MlpParams::<f64>::random(spec, 0.5, &mut rng).unwrap();
        let x =
            Matrix::from_vec(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // Loss = sum(w * output), so the upstream gradient is w.
        let w =
            Matrix::from_vec(6, 2, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (_, cache) = net.forward_cached(&x).unwrap();
        let (grad, _) = net.backward(&cache, &w).unwrap();
        let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.to_vec()).collect();
        let h = 1e-6;
        let mut k = 0;
        for ti in 0..net.tensors().len() {
            for j in 0..net.tensors()[ti].len() {
                let mut plus = net.clone();
                plus.tensors_mut()[ti][j] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[ti][j] -= h;
                let fd = (loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * h);
                let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
                worst = worst.max(rel);
                k += 1;
            }
        }
    }
    let (t_ok, t) = within(start.elapsed(), 60);
    verdict(
        worst <= 1e-4 && t_ok,
        format!("largest relative gradient error {worst:.2e} over 5 networks; runtime {t}"),
    )
}

fn c4_ksg() -> Verdict {
    let start = Instant::now();
    let truth = -0.5 * (1.0f64 - 0.36).ln();
    let (mut mi, mut ci) = (Vec::new(), Vec::new());
    for seed in 1..=10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2000;
        let a = normals(&mut rng, n);
        let e = normals(&mut rng, n);
        let b: Vec<f64> = a.iter().zip(&e).map(|(x, z)| 0.6 * x + 0.8 * z).collect();
        mi.push(ksg_cmi(&a, &b, &[], 3).unwrap());
        // X -> Z -> Y: X and Y are independent given Z.
        let z: Vec<f64> = a
            .iter()
            .zip(normals(&mut rng, n))
            .map(|(x, u)| x + u)
            .collect();
        let y: Vec<f64> = z
            .iter()
            .zip(normals(&mut rng, n))
            .map(|(x, u)| x + u)
            .collect();
        ci.push(ksg_cmi(&a, &y, &[&z], 3).unwrap());
    }
    let mi_err = (median(&mi) - truth).abs();
    let ci_med = median(&ci).abs();
    let (t_ok, t) = within(start.elapsed(), 120);
    verdict(
        mi_err <= 0.05 && ci_med <= 0.05 && t_ok,
        format!(
            "median MI {:.4} vs {truth:.4} (|err| {mi_err:.4}); median chain CMI {:.4}; runtime {t}",
            median(&mi),
            median(&ci)
        ),
    )
}

fn c5_mmd() -> Verdict {
    let start = Instant::now();
    let mut accepted = 0;
    let mut shift = Vec::new();
    for seed in 1..=10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::column(&normals(&mut rng, 500));
        let b = Matrix::column(&normals(&mut rng, 500));
        let c = Matrix::column(
            &normals(&mut rng, 500)
                .iter()
                .map(|v| v + 1.0)
                .collect::<Vec<_>>(),
        );
        let s = median_heuristic(&Matrix::vstack(&[&a, &b]).unwrap()).unwrap();
        if mmd_permutation_test(&a, &b, s, 200, seed).unwrap() > 0.01 {
            accepted += 1;
        }
        let s = median_heuristic(&Matrix::vstack(&[&a, &c]).unwrap()).unwrap();
        shift.push(mmd2_unbiased(&a, &c, s).unwrap());
    }
    let low = shift.iter().copied().fold(f64::INFINITY, f64::min);
    let (t_ok, t) = within(start.elapsed(), 120);
    verdict(
        accepted >= 9 && low > 0.1 && t_ok,
        format!("p > 0.01 in {accepted}/10 seeds; smallest shifted MMD^2 {low:.4}; runtime {t}"),
    )
}

fn c6_stress() -> Verdict {
    let cfg = desk("stress");
    let start = Instant::now();
    let r = run(&cfg);
    let (t_ok, t) = within(start.elapsed(), 45 * 60);
    let (ok, d) = check(&r, "belm_median_pehe_at_most_0.8_ddim");
    let m = r.aggregate("belm.pehe").unwrap().mean;
    let in_band = (0.4..=1.4).contains(&m);
    verdict(
        ok && in_band && t_ok,
        format!("{d}; BELM mean PEHE {m:.4} (band [0.4, 1.4]); runtime {t}"),
    )
}

fn c7_psm() -> Verdict {
    experiment_verdict(&desk("psm"), &["mean_abs_error_within_500"], 90 * 60)
}

fn c8_ablation() -> Verdict {
    experiment_verdict(
        &desk("ablation"),
        &["full_smallest_error_in_majority", "untargeted_largest_std"],
        120 * 60,
    )
}

fn c9_golden() -> Verdict {
    experiment_verdict(
        &desk("golden"),
        &[
            "belm_cic_above_ddim",
            "belm_pehe_below_ddim",
            "anm_sre_exact",
        ],
        120 * 60,
    )
}

fn c10_metric_validation() -> Verdict {
    experiment_verdict(
        &desk("validate-metrics"),
        &[
            "kmd_monotone_a_to_e",
            "cic_a_equals_one",
            "cic_b_below_half",
            "cmi_e_positive",
        ],
        10 * 60,
    )
}

fn linear_data(n: usize, seed: u64) -> (CausalGraph, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normals(&mut rng, n);
    let t: Vec<f64> = x
        .iter()
        .zip(normals(&mut rng, n))
        .map(|(x, u)| 0.5 * x + u)
        .collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&t)
        .zip(normals(&mut rng, n))
        .map(|((x, t), u)| 3.0 * x + 2.0 * t + u)
        .collect();
    let names = ["X", "T", "Y"].map(String::from);
    let graph = CausalGraph::new(
        names.iter().map(|n| (n.clone(), NodeKind::Continuous)),
        [("X", "T"), ("X", "Y"), ("T", "Y")].map(|(a, b)| (a.to_string(), b.to_string())),
    )
    .unwrap();
    let data = Dataset::new(names.to_vec(), vec![NodeKind::Continuous; 3], vec![x, t, y]).unwrap();
    (graph, data)
}

fn c11_engine() -> Verdict {
    let (graph, data) = linear_data(2000, 11);
    let anm = MechanismConfig::Anm {
        regressor: RegressorConfig::Linear,
    };
    let configs: BTreeMap<String, MechanismConfig> =
        [("T".to_string(), anm.clone()), ("Y".to_string(), anm)].into();
    let scm = FittedScm::fit(&graph, &data, &configs, 1).unwrap();
    // Raising T by one unit for everyone moves Y by the fitted slope.
    let t = data.column("T").unwrap();
    let shifted = Intervention::new("T", t.iter().map(|v| v + 1.0).collect());
    let cf = counterfactual(&scm, &data, &[shifted]).unwrap();
    let y0 = data.column("Y").unwrap();
    let y1 = cf.column("Y").unwrap();
    let effect = y1.iter().zip(y0).map(|(a, b)| a - b).sum::<f64>() / y0.len() as f64;
    let (beta, _) = ols_slope(&data);
    let slope_err = (effect - beta).abs();

    let null = Intervention::new("T", t.to_vec());
    let same = counterfactual(&scm, &data, std::slice::from_ref(&null)).unwrap();
    let anm_null = max_abs_diff(&same, &data);

    let diff = DiffusionConfig {
        timesteps: 50,
        hidden_dim: 16,
        num_blocks: 1,
        embed_dim: 8,
        epochs: 3,
        sampler_kind: SamplerKind::Belm,
        ..DiffusionConfig::default()
    };
    let dconfigs: BTreeMap<String, MechanismConfig> = [
        ("T".to_string(), MechanismConfig::Diffusion(diff.clone())),
        ("Y".to_string(), MechanismConfig::Diffusion(diff)),
    ]
    .into();
    let dscm = FittedScm::fit(&graph, &data, &dconfigs, 1).unwrap();
    let dsame = counterfactual(&dscm, &data, &[null]).unwrap();
    let belm_null = max_abs_diff(&dsame, &data) / max_abs(&data);
    let ok = slope_err <= 1e-6 && anm_null <= 1e-9 && belm_null <= 1e-8;
    verdict(
        ok,
        format!(
            "ATE {effect:.8} vs fitted coefficient {beta:.8} (|diff| {slope_err:.2e}, true 2); null intervention max error ANM {anm_null:.2e}, BELM relative {belm_null:.2e}"
        ),
    )
}

/// Coefficient of T in the least-squares fit of Y on (1, X, T).
fn ols_slope(data: &Dataset) -> (f64, f64) {
    let x = data.column("X").unwrap();
    let t = data.column("T").unwrap();
    let y = data.column("Y").unwrap();
    let n = x.len();
    let a = nalgebra::DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        _ => t[i],
    });
    let b = nalgebra::DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    (coef[2], coef[1])
}

fn max_abs_diff(a: &Dataset, b: &Dataset) -> f64 {
    let mut m = 0.0f64;
    for name in a.names() {
        for (x, y) in a.column(name).unwrap().iter().zip(b.column(name).unwrap()) {
            m = m.max((x - y).abs());
        }
    }
    m
}

fn max_abs(a: &Dataset) -> f64 {
    a.names()
        .iter()
        .flat_map(|n| {
            a.column(n)
                .unwrap()
                .iter()
                .map(|v| v.abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Smallest valid configuration of each experiment.
fn tiny(id: ExperimentId) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(&tiny_json(id)).unwrap();
    cfg.seeds = vec![3, 4];
    cfg
}

fn tiny_json(id: ExperimentId) -> String {
    let d = r#"{"kind": "diffusion", "timesteps": 50, "hidden_dim": 8, "num_blocks": 1, "embed_dim": 4, "epochs": 1, "batch_size": 64}"#;
    let lalonde = format!(r#"{{"treat": {d}, "re78": {d}}}"#);
    let (n, mech, extra) = match id {
        ExperimentId::Roundtrip => (100, format!(r#"{{"Y": {d}}}"#), ""),
        ExperimentId::Stress => (100, format!(r#"{{"T": {d}, "Y": {d}}}"#), ""),
        ExperimentId::Psm => (100, format!(r#"{{"C1": {d}, "T": {d}, "Y": {d}}}"#), ""),
        ExperimentId::Ablation => (
            100,
            format!(r#"{{"T": {d}, "M": {d}, "Y": {d}}}"#),
            r#", "options": {"anm_regressor": {"family": "linear"}}"#,
        ),
        ExperimentId::Golden => (
            60,
            lalonde.clone(),
            r#", "protocol": "ensemble", "options": {"anm_regressor": {"family": "linear"}}"#,
        ),
        ExperimentId::Cate => (200, lalonde.clone(), r#", "protocol": "ensemble""#),
        ExperimentId::ValidateMetrics => (500, "{}".to_string(), ""),
        _ => (60, lalonde.clone(), ""),
    };
    format!(
        r#"{{"experiment": "{}", "n": {n}, "seeds": [1], "mechanisms": {mech}{extra}}}"#,
        id.as_str()
    )
}

fn c12_determinism() -> Verdict {
    let mut diverged = Vec::new();
    for id in ExperimentId::ALL {
        let cfg = tiny(id);
        let a = run(&cfg).canonical_json().unwrap();
        let b = run(&cfg).canonical_json().unwrap();
        if a != b {
            diverged.push(id.as_str());
        }
    }
    // Same through the command line, byte for byte after dropping timing.
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, tiny_json(ExperimentId::Stress)).unwrap();
    let mut cli_reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_causal-roundtrip"))
            .arg("run")
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .arg("--seeds")
            .arg("5,6")
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "CLI run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        let text = std::fs::read_to_string(out.join("report.json")).unwrap();
        let report: ExperimentReport = serde_json::from_str(&text).unwrap();
        cli_reports.push(report.canonical_json().unwrap());
    }
    if cli_reports[0] != cli_reports[1] {
        diverged.push("cli");
    }
    verdict(
        diverged.is_empty(),
        if diverged.is_empty() {
            format!(
                "{} experiments and the CLI reproduce identical reports",
                ExperimentId::ALL.len()
            )
        } else {
            format!("reports differ between reruns: {}", diverged.join(", "))
        },
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 12] = [
    (1, "exact inversion", c1_exact_inversion),
    (2, "SRE existence and scaling", c2_sre_scaling),
    (3, "gradient correctness", c3_gradients),
    (4, "KSG oracle", c4_ksg),
    (5, "MMD oracle", c5_mmd),
    (6, "stress test", c6_stress),
    (7, "PSM-failure ATE", c7_psm),
    (8, "ablation directionality", c8_ablation),
    (9, "golden-table directionality", c9_golden),
    (10, "metric validation", c10_metric_validation),
    (11, "engine exactness", c11_engine),
    (12, "determinism", c12_determinism),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s)",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
