use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};

use super::*;
use crate::agent::{dqn_loss, QNet, ReplayMemory, Transition};
use crate::flow::{matrix_to_vehicles, FlowMatrix};
use crate::gradcheck::{max_rel_err, numeric_grad, rel_err};
use crate::rng::seeded;
use crate::trafficsim::{
    build_grid, free_flow_time, single_intersection_routes, LaneParams, Roadnet, VehicleSpec, NUM_PHASES,
};

fn net() -> Arc<Roadnet> {
    Arc::new(build_grid(1, 1, LaneParams::default()).unwrap())
}

fn poisson_flow(net: &Roadnet, rate: f64, bins: usize, seed: u64) -> Vec<VehicleSpec> {
    let routes = single_intersection_routes(net).unwrap();
    let mut rng = seeded(seed, 200);
    let p = Poisson::new(rate).unwrap();
    let counts = routes
        .iter()
        .map(|_| (0..bins).map(|_| p.sample(&mut rng) as u64).collect())
        .collect();
    matrix_to_vehicles(&FlowMatrix::new(counts, routes, 30).unwrap(), seed)
}

fn small_cfg(seed: u64) -> MetaConfig {
    MetaConfig {
        clusters: 2,
        horizon: 300,
        learn_start: 60,
        rounds: 3,
        memory_budget: 2000,
        predictor_steps: 20,
        seed,
        ..MetaConfig::default()
    }
}

fn small_flows(net: &Roadnet) -> Vec<Vec<VehicleSpec>> {
    (0..4)
        .map(|k| poisson_flow(net, if k % 2 == 0 { 0.5 } else { 4.0 }, 8, k))
        .collect()
}

fn random_transitions(rng: &mut crate::rng::Rng, n: usize, dim: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            state: (0..dim).map(|_| rng.random::<f64>()).collect(),
            action: rng.random_range(0..NUM_PHASES),
            reward: -rng.random::<f64>(),
            next_state: (0..dim).map(|_| rng.random::<f64>()).collect(),
        })
        .collect()
}

#[test]
fn single_sample_features() {
    let c = collect_features(&[(vec![1.0, 2.0], 3, -0.5)]).unwrap();
    assert_eq!(c.state_mean(), &[1.0, 2.0]);
    assert_eq!(c.state_std(), vec![0.0, 0.0]);
    let mut hist = [0.0; NUM_PHASES];
    hist[3] = 1.0;
    assert_eq!(c.action_histogram(), hist);
    assert_eq!(c.reward_mean(), -0.5);
    assert_eq!(c.travel_time(), None);
}

#[test]
fn constant_action_histogram_is_one_hot() {
    let trace: Vec<_> = (0..7).map(|i| (vec![i as f64], 5, 0.0)).collect();
    let h = collect_features(&trace).unwrap().action_histogram();
    assert_eq!(h.iter().filter(|&&x| x == 1.0).count(), 1);
    assert_eq!(h[5], 1.0);
}

#[test]
fn empty_trace_rejected() {
    assert!(collect_features(&[]).is_err());
}

#[test]
fn streaming_matches_batch_statistics() {
    let mut rng = seeded(4, 0);
    for _ in 0..20 {
        let n = rng.random_range(1..200);
        let trace: Vec<(Vec<f64>, usize, f64)> = (0..n)
            .map(|_| {
                let s = (0..5).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect();
                (s, rng.random_range(0..NUM_PHASES), rng.random::<f64>() - 1.0)
            })
            .collect();
        let c = collect_features(&trace).unwrap();
        let nf = n as f64;
        for d in 0..5 {
            let mean = trace.iter().map(|t| t.0[d]).sum::<f64>() / nf;
            let var = trace.iter().map(|t| (t.0[d] - mean).powi(2)).sum::<f64>() / nf;
            assert!((c.state_mean()[d] - mean).abs() < 1e-10);
            assert!((c.state_std()[d] - var.sqrt()).abs() < 1e-10);
        }
        let r = trace.iter().map(|t| t.2).sum::<f64>() / nf;
        assert!((c.reward_mean() - r).abs() < 1e-10);
        for a in 0..NUM_PHASES {
            let f = trace.iter().filter(|t| t.1 == a).count() as f64 / nf;
            assert!((c.action_histogram()[a] - f).abs() < 1e-12);
        }

        let cut = rng.random_range(0..=n);
        let mut left = FeatureCollector::new(5);
        let mut right = FeatureCollector::new(5);
        for (i, (s, a, r)) in trace.iter().enumerate() {
            let side = if i < cut { &mut left } else { &mut right };
            side.push(s, *a, *r).unwrap();
        }
        left.merge(&right).unwrap();
        for (x, y) in left.experience_features().iter().zip(c.experience_features()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn zscore_floors_constant_dimensions() {
    let rows = vec![vec![1.0, 5.0, 2.0], vec![3.0, 5.0, 4.0], vec![5.0, 5.0, 9.0]];
    let z = ZScore::fit(&rows).unwrap();
    let out: Vec<Vec<f64>> = rows.iter().map(|r| z.apply(r).unwrap()).collect();
    for d in 0..3 {
        let mean = out.iter().map(|r| r[d]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
    }
    assert!(out.iter().all(|r| r[1] == 0.0 && r[1].is_finite()));
    let var0 = out.iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
    assert!((var0 - 1.0).abs() < 1e-12);
    // A prefix of the columns is accepted.
    assert_eq!(z.apply(&[3.0]).unwrap(), vec![0.0]);
    assert!(z.apply(&[1.0, 2.0, 3.0, 4.0]).is_err());
}

#[test]
fn two_separated_points() {
    let c = kmeans_recluster(&[vec![0.0, 0.0], vec![9.0, 9.0]], 2, 1).unwrap();
    assert_ne!(c.assignment[0], c.assignment[1]);
    assert_eq!(c.ssq, 0.0);
}

fn brute_force_ssq(features: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = features.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0..(1u32 << n) {
        let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let mut ssq = 0.0;
        for j in 0..2 {
            let members: Vec<&Vec<f64>> = features
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == j)
                .map(|(f, _)| f)
                .collect();
            if members.is_empty() {
                continue;
            }
            let dim = members[0].len();
            let mean: Vec<f64> = (0..dim)
                .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                .collect();
            ssq += members
                .iter()
                .map(|m| m.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum::<f64>();
        }
        if ssq < best.0 - 1e-12 {
            best = (ssq, labels);
        }
    }
    best
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn points_on_a_line_match_exhaustive_search() {
    let f: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 11.0].iter().map(|&x| vec![x]).collect();
    let c = kmeans_recluster(&f, 2, 0).unwrap();
    let (ssq, labels) = brute_force_ssq(&f);
    assert!(same_partition(&c.assignment, &labels));
    assert!((c.ssq - ssq).abs() < 1e-12);
    assert_eq!(c.assignment[0], c.assignment[1]);
    assert_ne!(c.assignment[1], c.assignment[2]);
}

#[test]
fn random_sets_match_exhaustive_search() {
    let mut rng = seeded(8, 0);
    for _ in 0..30 {
        let n = rng.random_range(2..9);
        let f: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
        let c = kmeans_recluster(&f, 2, rng.random()).unwrap();
        let (ssq, _) = brute_force_ssq(&f);
        assert!(c.ssq >= ssq - 1e-12);

        // Two well-separated blobs leave no room for a local optimum.
        let split = rng.random_range(1..n);
        let blobs: Vec<Vec<f64>> = f
            .iter()
            .enumerate()
            .map(|(i, x)| if i < split { x.clone() } else { vec![x[0] + 50.0, x[1]] })
            .collect();
        let c = kmeans_recluster(&blobs, 2, rng.random()).unwrap();
        let (ssq, labels) = brute_force_ssq(&blobs);
        assert!(same_partition(&c.assignment, &labels));
        assert!((c.ssq - ssq).abs() < 1e-9);
    }
}

#[test]
fn identical_features_collapse_to_cluster_zero() {
    let f = vec![vec![2.0, 2.0]; 5];
    let a = kmeans_recluster(&f, 3, 5).unwrap();
    let b = kmeans_recluster(&f, 3, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.assignment.iter().all(|&j| j == 0));
    assert_eq!(a.ssq, 0.0);
}

#[test]
fn fewer_flows_than_clusters_rejected() {
    assert!(kmeans_recluster(&[vec![1.0]], 2, 0).is_err());
    assert!(kmeans_recluster_from(&[vec![1.0], vec![2.0]], 2, &[0, 5], 0).is_err());
}

#[test]
fn centroids_are_member_means() {
    let mut rng = seeded(9, 0);
    for round in 0..20 {
        let n = rng.random_range(4..30);
        let k = rng.random_range(1..4);
        let f: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 5.0).collect())
            .collect();
        let prev: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let c = if round % 2 == 0 {
            kmeans_recluster(&f, k, round).unwrap()
        } else {
            kmeans_recluster_from(&f, k, &prev, round).unwrap()
        };
        for j in 0..k {
            let members: Vec<&Vec<f64>> = f
                .iter()
                .zip(&c.assignment)
                .filter(|(_, &a)| a == j)
                .map(|(x, _)| x)
                .collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..3 {
                let mean = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                assert!((c.centroids[j][d] - mean).abs() < 1e-10);
            }
        }
        assert!(c
            .assignment
            .iter()
            .enumerate()
            .all(|(i, &j)| nearest(&f[i], &c.centroids) == j));
    }
}

#[test]
fn warm_start_keeps_cluster_labels() {
    let f: Vec<Vec<f64>> = [0.0, 0.5, 10.0, 10.5, 20.0, 20.5].iter().map(|&x| vec![x]).collect();
    let prev = vec![2, 2, 0, 0, 1, 1];
    let c = kmeans_recluster_from(&f, 3, &prev, 3).unwrap();
    assert_eq!(c.assignment, prev);
    assert_eq!(c.centroids[2], vec![0.25]);
}

#[test]
fn lloyd_reseeds_empty_cluster_with_farthest_flow() {
    let f: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 9.0].iter().map(|&x| vec![x]).collect();
    // The second start is far from everything and attracts no member.
    let c = lloyd(&f, vec![vec![1.0], vec![100.0]]);
    assert!(c.ssq <= within_ssq(&f, &[0, 0, 0, 0], &[vec![3.0]]));
    assert!(c.assignment.contains(&1));
}

#[test]
fn predictor_zero_step_is_noop() {
    let mut p = PredictorNet::new(4, 3, &mut seeded(1, 2)).unwrap();
    let before = p.params.flat();
    predictor_update(&mut p, &[vec![1.0, 0.0, 2.0, 0.5]], &[2], 0.0).unwrap();
    assert_eq!(p.params.flat(), before);
}

#[test]
fn predictor_saturated_barely_moves() {
    let mut p = PredictorNet::new(2, 2, &mut seeded(1, 2)).unwrap();
    for (k, v) in p.params.iter_mut() {
        for x in v.data_mut() {
            *x = 0.0;
        }
        if k == "pred.out.b" {
            v.data_mut().copy_from_slice(&[40.0, -40.0]);
        }
    }
    let before = p.params.flat();
    predictor_update(&mut p, &[vec![1.0, 2.0], vec![-1.0, 0.5]], &[0, 0], 0.1).unwrap();
    let moved = p
        .params
        .flat()
        .iter()
        .zip(&before)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(moved < 1e-6);
}

#[test]
fn predictor_learns_separable_classes() {
    let mut rng = seeded(3, 0);
    let centers = [[3.0, 0.0], [-3.0, 1.0], [0.0, -3.0]];
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..60 {
        let j = rng.random_range(0..3);
        inputs.push(vec![
            centers[j][0] + rng.random::<f64>() - 0.5,
            centers[j][1] + rng.random::<f64>() - 0.5,
        ]);
        labels.push(j);
    }
    let mut p = PredictorNet::new(2, 3, &mut seeded(7, 2)).unwrap();
    for _ in 0..200 {
        predictor_update(&mut p, &inputs, &labels, 0.05).unwrap();
    }
    let right = inputs
        .iter()
        .zip(&labels)
        .filter(|(x, &l)| predict_cluster(&p, x).unwrap() == l)
        .count();
    assert!(right as f64 / 60.0 >= 0.9, "accuracy {right}/60");
}

#[test]
fn predict_cluster_is_argmax_of_scores() {
    let mut p = PredictorNet::new(3, 3, &mut seeded(1, 2)).unwrap();
    for (k, v) in p.params.iter_mut() {
        if k == "pred.out.w" {
            v.data_mut().fill(0.0);
        }
        if k == "pred.out.b" {
            v.data_mut().copy_from_slice(&[0.1, 0.9, 0.1]);
        }
    }
    assert_eq!(predict_cluster(&p, &[1.0, 2.0, 3.0]).unwrap(), 1);

    let mut rng = seeded(2, 0);
    let p = PredictorNet::new(3, 4, &mut seeded(5, 2)).unwrap();
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let s = p.scores(&x).unwrap();
        let mut best = 0;
        for j in 1..s.len() {
            if s[j] > s[best] {
                best = j;
            }
        }
        assert_eq!(predict_cluster(&p, &x).unwrap(), best);
    }
    let one = PredictorNet::new(3, 1, &mut seeded(5, 2)).unwrap();
    assert_eq!(predict_cluster(&one, &[9.0, -9.0, 0.0]).unwrap(), 0);
}

#[test]
fn predictor_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = seeded(seed, 0);
        let p = PredictorNet::new(5, 3, &mut rng).unwrap();
        let inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
        let (_, g) = predictor_loss_and_grads(&p, &inputs, &labels).unwrap();
        let err = max_rel_err(&g, &p.params, |params| {
            let q = PredictorNet::from_params(params.clone()).unwrap();
            predictor_loss_and_grads(&q, &inputs, &labels).unwrap().0
        });
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

fn bank_with(inits: Vec<crate::diffcore::ParamStore>, memory: Vec<Transition>) -> ClusterBank {
    let k = inits.len();
    let mut memories: Vec<ReplayMemory> = (0..k).map(|_| ReplayMemory::new(1000)).collect();
    for t in memory {
        memories[0].push(t);
    }
    ClusterBank {
        inits,
        mapping: vec![0; 2],
        memories,
        centroids: Vec::new(),
        normalizer: None,
    }
}

#[test]
fn outer_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = seeded(seed, 0);
        let a = QNet::new(6, 8, &mut rng);
        let mut b = QNet::new(6, 8, &mut rng);
        b.target = a.target.clone();
        let batch = random_transitions(&mut rng, 10, 6);
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, g) = outer_gradient(&[&a], &refs, 0.8).unwrap();
        let err = max_rel_err(&g, &a.online, |p| dqn_loss(p, &a.target, &refs, 0.8).unwrap());
        assert!(err < 1e-4, "seed {seed}: {err}");

        // Two learners: the mean of their individual gradients.
        let (_, g2) = outer_gradient(&[&a, &b], &refs, 0.8).unwrap();
        let na = numeric_grad(&a.online, |p| dqn_loss(p, &a.target, &refs, 0.8).unwrap());
        let nb = numeric_grad(&b.online, |p| dqn_loss(p, &b.target, &refs, 0.8).unwrap());
        for (x, (u, v)) in g2.flat().iter().zip(na.iter().zip(&nb)) {
            assert!(rel_err(*x, (u + v) / 2.0) < 1e-4);
        }
    }
}

#[test]
fn global_update_step_matches_finite_differences() {
    let mut rng = seeded(11, 0);
    let q = QNet::new(6, 8, &mut rng);
    let memory = random_transitions(&mut rng, 40, 6);
    let mut bank = bank_with(vec![q.online.clone()], memory);
    let beta = 0.1;
    // A batch as large as the memory is the memory itself, so the oracle can see it.
    let refs: Vec<&Transition> = bank.memories[0].iter().collect();
    let numeric = numeric_grad(&q.online, |p| dqn_loss(p, &q.target, &refs, 0.8).unwrap());
    let expect: Vec<f64> = q
        .online
        .flat()
        .iter()
        .zip(&numeric)
        .map(|(p, g)| p - beta * g)
        .collect();
    let out = global_update(&mut bank, 0, &[&q], beta, 40, 0.8, &mut seeded(1, 8)).unwrap();
    assert!(matches!(out, OuterOutcome::Applied { .. }));
    for (a, b) in bank.inits[0].flat().iter().zip(&expect) {
        assert!(rel_err(*a, *b) < 1e-4);
    }
}

#[test]
fn global_update_noop_cases() {
    let mut rng = seeded(12, 0);
    let q = QNet::new(6, 8, &mut rng);
    let memory = random_transitions(&mut rng, 40, 6);

    let mut bank = bank_with(vec![q.online.clone()], memory.clone());
    global_update(&mut bank, 0, &[&q], 0.0, 32, 0.8, &mut seeded(1, 8)).unwrap();
    assert_eq!(bank.inits[0], q.online);

    let mut short = bank_with(vec![q.online.clone()], memory[..10].to_vec());
    let out = global_update(&mut short, 0, &[&q], 0.5, 32, 0.8, &mut seeded(1, 8)).unwrap();
    assert_eq!(out, OuterOutcome::Skipped);
    assert_eq!(short.inits[0], q.online);
    assert_eq!(
        global_update(&mut short, 0, &[], 0.5, 4, 0.8, &mut seeded(1, 8)).unwrap(),
        OuterOutcome::Skipped
    );
    assert!(global_update(&mut short, 3, &[&q], 0.5, 4, 0.8, &mut seeded(1, 8)).is_err());

    // All-zero network and zero rewards: every TD error and thus the gradient vanishes.
    let mut zero = q.clone();
    for (_, v) in zero.online.iter_mut() {
        v.data_mut().fill(0.0);
    }
    zero.sync_target();
    let quiet: Vec<Transition> = memory
        .iter()
        .map(|t| Transition {
            reward: 0.0,
            ..t.clone()
        })
        .collect();
    let mut bank = bank_with(vec![zero.online.clone()], quiet);
    global_update(&mut bank, 0, &[&zero], 0.5, 32, 0.8, &mut seeded(1, 8)).unwrap();
    assert_eq!(bank.inits[0], zero.online);
}

#[test]
fn zero_rounds_returns_seeded_bank() {
    let net = net();
    let flows = small_flows(&net);
    let cfg = MetaConfig {
        rounds: 0,
        ..small_cfg(4)
    };
    let a = meta_train(&net, &flows, &cfg).unwrap();
    let b = meta_train(&net, &flows, &cfg).unwrap();
    assert_eq!(a.bank.inits, b.bank.inits);
    assert_eq!(a.bank.mapping, b.bank.mapping);
    assert_eq!(a.predictor.unwrap().params, b.predictor.unwrap().params);
    assert!(a.rounds.is_empty() && a.history.is_empty());
    let other = meta_train(&net, &flows, &MetaConfig { seed: 5, ..cfg.clone() }).unwrap();
    assert_ne!(a.bank.inits, other.bank.inits);
    let m = maml_train(&net, &flows, &cfg).unwrap();
    assert_eq!(m.bank.inits.len(), 1);
    assert_eq!(m.bank.inits[0], a.bank.inits[0]);
}

#[test]
fn single_cluster_equals_maml() {
    let net = net();
    let flows = small_flows(&net);
    let cfg = MetaConfig {
        clusters: 1,
        ..small_cfg(2)
    };
    let g = meta_train(&net, &flows, &cfg).unwrap();
    let m = maml_train(
        &net,
        &flows,
        &MetaConfig {
            clusters: 3,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(g.history, m.history);
    assert_eq!(g.bank.inits, m.bank.inits);
    assert_eq!(g.bank.mapping, m.bank.mapping);
    let ga: Vec<f64> = g.rounds.iter().map(|r| r.mean_travel_time).collect();
    let ma: Vec<f64> = m.rounds.iter().map(|r| r.mean_travel_time).collect();
    assert_eq!(ga, ma);
    assert!(m.predictor.is_none());
    // The outer loop did move the initialization.
    assert_ne!(g.history[0], g.history[2]);
}

#[test]
fn reclustering_only_on_period_boundaries() {
    let net = net();
    let flows = small_flows(&net);
    let cfg = MetaConfig {
        rounds: 5,
        recluster_every: 2,
        ..small_cfg(3)
    };
    let out = meta_train(&net, &flows, &cfg).unwrap();
    for r in &out.rounds {
        assert_eq!(r.reclustered, r.round % 2 == 1, "round {}", r.round);
        assert_eq!(r.predictor_loss.is_some(), r.reclustered);
    }
    let norm = out.bank.normalizer.as_ref().unwrap();
    let pred = out.predictor.as_ref().unwrap();
    // The predictor never sees the travel-time column.
    assert_eq!(pred.input_dim() + 1, norm.dim());
    assert_eq!(out.features.len(), flows.len());
    assert!(out.features.iter().all(|f| f.travel_time().is_some()));
}

#[test]
fn late_learning_start_is_bounded_by_free_flow() {
    let net = net();
    let flows: Vec<_> = (0..3).map(|k| poisson_flow(&net, 2.0, 8, 40 + k)).collect();
    let cfg = MetaConfig {
        learn_start: 299,
        ..small_cfg(1)
    };
    let out = maml_train(
        &net,
        &flows,
        &MetaConfig {
            rounds: 0,
            ..cfg.clone()
        },
    )
    .unwrap();
    let res = meta_test(&net, &flows, &out.bank, None, &cfg).unwrap();
    for (r, f) in res.iter().zip(&flows) {
        assert!(r.travel.seconds >= free_flow_time(&net, f).unwrap() - 1e-9);
    }
}

#[test]
fn identical_inits_make_prediction_irrelevant() {
    let net = net();
    let flows = small_flows(&net);
    let cfg = small_cfg(6);
    let trained = meta_train(&net, &flows, &cfg).unwrap();
    let mut bank = trained.bank.clone();
    bank.inits[1] = bank.inits[0].clone();
    let p1 = PredictorNet::new(trained.predictor.as_ref().unwrap().input_dim(), 2, &mut seeded(1, 2)).unwrap();
    let p2 = PredictorNet::new(p1.input_dim(), 2, &mut seeded(2, 2)).unwrap();
    let a = meta_test(&net, &flows, &bank, Some(&p1), &cfg).unwrap();
    let b = meta_test(&net, &flows, &bank, Some(&p2), &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.episode.log, y.episode.log);
        assert_eq!(x.travel, y.travel);
    }
}

#[test]
fn warm_up_actions_are_uniform() {
    let net = net();
    let flows: Vec<Vec<VehicleSpec>> = (0..40).map(|k| poisson_flow(&net, 0.3, 8, k)).collect();
    let cfg = MetaConfig {
        horizon: 3000,
        learn_start: 2990,
        ..small_cfg(0)
    };
    let out = maml_train(
        &net,
        &flows[..2],
        &MetaConfig {
            rounds: 0,
            ..cfg.clone()
        },
    )
    .unwrap();
    let res = meta_test(&net, &flows, &out.bank, None, &cfg).unwrap();
    let mut counts = [0usize; NUM_PHASES];
    for r in &res {
        for d in r.episode.decisions.iter().filter(|d| d.tick < cfg.learn_start) {
            counts[d.action] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    let p = 1.0 / NUM_PHASES as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn bank_checkpoint_round_trip() {
    let net = net();
    let flows = small_flows(&net);
    let cfg = MetaConfig {
        rounds: 2,
        ..small_cfg(7)
    };
    let out = meta_train(&net, &flows, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.bank.save_dir(dir.path(), out.predictor.as_ref()).unwrap();
    let (bank, pred) = ClusterBank::load_dir(dir.path(), 100).unwrap();
    assert_eq!(bank.inits, out.bank.inits);
    assert_eq!(bank.mapping, out.bank.mapping);
    assert_eq!(bank.normalizer, out.bank.normalizer);
    assert_eq!(bank.centroids.len(), out.bank.centroids.len());
    for (a, b) in bank.centroids.iter().flatten().zip(out.bank.centroids.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
    assert_eq!(pred.unwrap().params, out.predictor.unwrap().params);
    let a = meta_test(&net, &flows, &out.bank, None, &cfg).unwrap();
    let b = meta_test(&net, &flows, &bank, None, &cfg).unwrap();
    assert_eq!(a[0].travel, b[0].travel);
}

#[test]
fn config_validation() {
    assert!(MetaConfig::default().validate().is_ok());
    assert!(MetaConfig {
        clusters: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(MetaConfig {
        learn_start: 1200,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(MetaConfig {
        learn_start: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    let net = net();
    let flows = small_flows(&net);
    assert!(meta_train(&net, &flows[..1], &small_cfg(0)).is_err());
    let text = toml::to_string(&MetaConfig::default()).unwrap();
    assert_eq!(toml::from_str::<MetaConfig>(&text).unwrap(), MetaConfig::default());
}
