mod common;

use expertscope::attribution::{dla, expert_update};
use expertscope::model::ModelConfig;
use expertscope::probing::{fit_logistic, rank_neurons, restrict};
use expertscope::specialization::{jsd, specialization_report, ClusterDistribution, DistributionKind, SpecializationParams};
use expertscope::Model;
use proptest::prelude::*;

fn probe_rows() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<bool>)> {
    (6usize..40, 2usize..12).prop_flat_map(|(n, w)| {
        (
            prop::collection::vec(prop::collection::vec(-4.0f32..4.0, w), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(rows, mut labels)| {
                labels[0] = true;
                labels[1] = false;
                (rows, labels)
            })
    })
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..12).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-9).then(|| v.iter().map(|x| x / s).collect())
    })
}

fn dists_from_counts(counts: &[Vec<u64>]) -> Vec<ClusterDistribution> {
    counts
        .iter()
        .enumerate()
        .map(|(e, c)| {
            let n: u64 = c.iter().sum();
            ClusterDistribution {
                layer: 0,
                expert: e,
                kind: DistributionKind::Routing,
                p: c.iter().map(|&x| if n == 0 { 0.0 } else { x as f64 / n as f64 }).collect(),
                n_tokens: n,
                empty: n == 0,
            }
        })
        .collect()
}

fn expert_counts() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..8, 3usize..9).prop_flat_map(|(k, m)| {
        prop::collection::vec(prop::collection::vec(0u64..30, k), m).prop_map(|mut c| {
            // at least one routed expert
            c[0][0] += 1;
            c
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selected_neuron_sets_are_nested((rows, labels) in probe_rows()) {
        let ranking = rank_neurons(&rows, &labels).unwrap();
        let width = rows[0].len();
        for k in 1..width {
            let small = ranking.top(k);
            let big = ranking.top(k + 1);
            prop_assert!(small.iter().all(|i| big.contains(i)));
        }
    }

    #[test]
    fn training_objective_does_not_increase_with_k((rows, labels) in probe_rows()) {
        let ranking = rank_neurons(&rows, &labels).unwrap();
        let lambda = 1.0 / rows.len() as f64;
        let mut last = f64::INFINITY;
        for k in 1..=rows[0].len() {
            let x = restrict(&rows, ranking.top(k));
            let fit = fit_logistic(&x, &labels, lambda, 500, 1e-10).unwrap();
            prop_assert!(fit.objective <= last + 1e-7, "k={k}: {} > {last}", fit.objective);
            last = fit.objective;
        }
    }

    #[test]
    fn ranking_is_scale_equivariant((rows, labels) in probe_rows(), e in -3i32..4) {
        let c = 2f32.powi(e);
        let scaled: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let a = rank_neurons(&rows, &labels).unwrap();
        let b = rank_neurons(&scaled, &labels).unwrap();
        prop_assert_eq!(&a.order, &b.order);
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((x * c as f64 - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn jsd_is_symmetric_and_bounded(p in distribution(), q in distribution()) {
        let n = p.len().min(q.len());
        let renorm = |v: &[f64]| {
            let s: f64 = v[..n].iter().sum();
            if s > 0.0 { v[..n].iter().map(|x| x / s).collect() } else { vec![1.0 / n as f64; n] }
        };
        let (p, q): (Vec<f64>, Vec<f64>) = (renorm(&p), renorm(&q));
        let a = jsd(&p, &q).unwrap();
        prop_assert!((a - jsd(&q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(jsd(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn scores_ignore_cluster_labels(counts in expert_counts(), seed in 0u64..1000, rot in 1usize..8) {
        let k = counts[0].len();
        let perm: Vec<usize> = (0..k).map(|i| (i * (2 * rot + 1) + rot) % k).collect();
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assume!(seen == (0..k).collect::<Vec<_>>());
        let permuted: Vec<Vec<u64>> = counts.iter().map(|c| perm.iter().map(|&j| c[j]).collect()).collect();
        let params = SpecializationParams { mc_samples: 20, seed, ..Default::default() };
        let a = specialization_report(&dists_from_counts(&counts), k, &params).unwrap();
        let b = specialization_report(&dists_from_counts(&permuted), k, &params).unwrap();
        for (x, y) in a.experts.iter().zip(&b.experts) {
            prop_assert!((x.raw - y.raw).abs() <= 1e-12);
            prop_assert!((x.baseline - y.baseline).abs() <= 1e-12);
            prop_assert!((x.adjusted - y.adjusted).abs() <= 1e-12);
        }
    }

    #[test]
    fn layer_mean_averages_routed_experts(mut counts in expert_counts(), empty in 1usize..8) {
        let last = counts.len() - 1;
        let zeroed = empty.min(last);
        for c in counts.iter_mut().skip(1).take(zeroed) {
            c.iter_mut().for_each(|x| *x = 0);
        }
        let k = counts[0].len();
        let params = SpecializationParams { mc_samples: 10, ..Default::default() };
        let report = specialization_report(&dists_from_counts(&counts), k, &params).unwrap();
        let routed: Vec<f64> = report.experts.iter().filter(|e| !e.unrouted).map(|e| e.adjusted).collect();
        prop_assert_eq!(routed.len(), counts.iter().filter(|c| c.iter().sum::<u64>() > 0).count());
        let mean = routed.iter().sum::<f64>() / routed.len() as f64;
        prop_assert!((report.layer_mean - mean).abs() <= 1e-12);
    }
}

fn expert_order(model: &Model, tokens: &[u32], target: u32) -> (Vec<usize>, Vec<f64>) {
    let trace = model.forward(tokens).unwrap();
    let p = tokens.len() - 1;
    let r = &trace.final_residual[p];
    let scores: Vec<f64> = (0..model.config.n_experts)
        .map(|e| dla(model, &expert_update(&trace, 0, e, p), r, target).unwrap())
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    (order, scores)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn expert_dla_ranking_survives_unembedding_scale(
        seed in 0u64..1000,
        tokens in prop::collection::vec(0u32..1024, 1..12),
        target in 0u32..1024,
        e in -2i32..4,
    ) {
        let config: ModelConfig = common::moe_config(8, 4, seed);
        let model = Model::random(config.clone()).unwrap();
        let mut weights = model.weights.clone();
        let c = 2f32.powi(e);
        weights.unembed.data.iter_mut().for_each(|v| *v *= c);
        let scaled = Model::new(config, weights).unwrap();
        let (a, sa) = expert_order(&model, &tokens, target);
        let (b, sb) = expert_order(&scaled, &tokens, target);
        prop_assert_eq!(a, b);
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!((x * c as f64 - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }
}
