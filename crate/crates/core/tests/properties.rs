use causal_roundtrip::counterfactual::Aggregate;
use causal_roundtrip::diffusion::{q_sample, NoiseSchedule, SamplerKind};
use causal_roundtrip::experiments::{aggregate_seeds, SeedResult};
use causal_roundtrip::metrics::cic_score;
use causal_roundtrip::nn::Matrix;
use causal_roundtrip::samplers::{max_relative_error, round_trip, FnPredictor};
use causal_roundtrip::scm::{CausalGraph, NodeKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    (2usize..9).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::sample::subsequence(pairs, 0..=m),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topological_order_respects_every_edge((n, edges, perm) in dag()) {
        // Node k is named after its position in a shuffled order so the
        // declaration order differs from the causal order.
        let name = |k: usize| format!("v{}", perm[k]);
        let g = CausalGraph::new(
            (0..n).map(|k| (name(k), NodeKind::Continuous)),
            edges.iter().map(|&(a, b)| (name(a), name(b))),
        ).unwrap();
        let pos: Vec<usize> = {
            let mut p = vec![0; n];
            for (i, &v) in g.topo_order().iter().enumerate() {
                p[v] = i;
            }
            p
        };
        prop_assert_eq!(g.topo_order().len(), n);
        for v in 0..n {
            for &p in g.parents(v) {
                prop_assert!(pos[p] < pos[v]);
            }
        }
    }

    #[test]
    fn cyclic_edge_sets_rejected((n, edges, _) in dag()) {
        prop_assume!(!edges.is_empty());
        let (a, b) = edges[0];
        let mut all: Vec<(String, String)> = edges.iter().map(|&(x, y)| (format!("v{x}"), format!("v{y}"))).collect();
        all.push((format!("v{b}"), format!("v{a}")));
        let nodes = (0..n).map(|k| (format!("v{k}"), NodeKind::Continuous));
        let rejected = CausalGraph::new(nodes, all).is_err();
        prop_assert!(rejected);
    }

    #[test]
    fn belm_inverts_exactly(
        xs in proptest::collection::vec(-3.0f64..3.0, 1..40),
        amp in 0.0f64..1.0,
        freq in 0.0f64..2.0,
        shift in -1.0f64..1.0,
        steps in 4usize..120,
    ) {
        let model = FnPredictor::new(NoiseSchedule::linear(steps).unwrap(), move |x: &[f64], t, _: &Matrix<f64>| {
            x.iter().map(|v| amp * (freq * v).sin() + shift * t as f64 / steps as f64).collect()
        });
        let back = round_trip(SamplerKind::Belm, &xs, &Matrix::zeros(xs.len(), 0), &model).unwrap();
        prop_assert!(max_relative_error(&xs, &back) <= 1e-8);
    }

    #[test]
    fn q_sample_marginals(x0 in -2.0f64..2.0, frac in 0.01f64..1.0, seed in 0u64..1000) {
        let steps = 100;
        let t = ((frac * steps as f64).ceil() as usize).clamp(1, steps);
        let sched = NoiseSchedule::<f64>::linear(steps).unwrap();
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let xt = q_sample(&vec![x0; n], t, &eps, &sched).unwrap();
        let m = xt.iter().sum::<f64>() / n as f64;
        let v = xt.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        let sd = sched.sigma(t);
        // Five standard errors on the mean, 10% on the variance.
        prop_assert!((m - sched.gamma(t) * x0).abs() <= 5.0 * sd / (n as f64).sqrt());
        prop_assert!((v / (sd * sd) - 1.0).abs() <= 0.1);
    }

    #[test]
    fn aggregates_recompute_from_per_seed_values(
        rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 1..8),
    ) {
        let per_seed: Vec<SeedResult> = rows.iter().enumerate().map(|(i, r)| SeedResult {
            seed: i as u64 + 1,
            values: ["a", "b", "c"].iter().map(|k| k.to_string()).zip(r.iter().copied()).collect(),
        }).collect();
        let agg = aggregate_seeds(&per_seed).unwrap();
        for (j, key) in ["a", "b", "c"].iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let a = &agg[*key];
            prop_assert_eq!(&a.per_seed, &col);
            prop_assert_eq!(a, &Aggregate::from_values(&col));
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!((a.mean - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn cic_score_in_unit_interval(du in 0.0f64..50.0, ds in 0.0f64..50.0) {
        let c = cic_score(du, ds).unwrap();
        prop_assert!(c > 0.0 && c <= 1.0);
        prop_assert_eq!(c == 1.0, du == 0.0 && ds == 0.0);
    }
}
