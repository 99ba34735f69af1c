use rand::Rng as _;
use rand_distr::{Distribution, Poisson};

use super::*;
use crate::diffcore::{sigmoid, NumArray};
use crate::flow::{FlowMatrix, FlowSet, Provenance};
use crate::gradcheck::max_rel_err;
use crate::rng::{self, seeded};

fn routes(n: usize) -> Vec<Vec<String>> {
    (0..n).map(|r| vec![format!("r{r}")]).collect()
}

fn poisson_set(seed: u64, n: usize, r: usize, t: usize) -> FlowSet {
    poisson_set_at(seed, n, r, t, 4.0)
}

fn poisson_set_at(seed: u64, n: usize, r: usize, t: usize, base: f64) -> FlowSet {
    let mut rng = seeded(seed, 0);
    let members = (0..n)
        .map(|_| {
            let counts = (0..r)
                .map(|k| {
                    let p = Poisson::new(base + 2.0 * k as f64).unwrap();
                    (0..t).map(|_| p.sample(&mut rng) as u64).collect()
                })
                .collect();
            FlowMatrix::new(counts, routes(r), 60).unwrap()
        })
        .collect();
    FlowSet::new(members, Provenance::Real).unwrap()
}

fn random_scaled(rng: &mut crate::rng::Rng, r: usize, t: usize) -> NumArray {
    NumArray::matrix(r, t, (0..r * t).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn layout(r: usize, t: usize) -> FlowLayout {
    FlowLayout {
        routes: routes(r),
        bins: t,
        interval: 60,
        cap: 30.0,
    }
}

fn zero(params: &mut crate::diffcore::ParamStore) {
    for (_, v) in params.iter_mut() {
        v.data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
}

#[test]
fn critic_needs_nine_intervals() {
    let mut rng = seeded(1, 0);
    assert!(CriticNet::new(2, 8, &mut rng).is_err());
    assert!(CriticNet::new(2, 9, &mut rng).is_ok());
    assert_eq!(MIN_BINS, 9);
}

#[test]
fn critic_bias_path_by_hand() {
    let mut rng = seeded(2, 0);
    let mut critic = CriticNet::new(3, 12, &mut rng).unwrap();
    zero(&mut critic.params);
    let x = random_scaled(&mut rng, 3, 12);
    assert_eq!(critic_forward(&critic, &x).unwrap(), 0.0);

    critic.params.get_mut("critic.c1.b").unwrap().data_mut()[0] = 0.3;
    critic.params.get_mut("critic.c2.b").unwrap().data_mut()[0] = -0.7;
    critic
        .params
        .get_mut("critic.out.w")
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|w| *w = 0.2);
    critic.params.get_mut("critic.out.b").unwrap().data_mut()[0] = 0.1;
    // Zero kernels: the second layer emits sigmoid(-0.7) everywhere, 3 * 4 embedding entries.
    let expect = 12.0 * 0.2 * sigmoid(-0.7) + 0.1;
    assert!((critic_forward(&critic, &x).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn critic_scores_are_deterministic_not_permutation_invariant() {
    let mut rng = seeded(3, 0);
    let critic = CriticNet::new(3, 12, &mut rng).unwrap();
    let x = random_scaled(&mut rng, 3, 12);
    let a = critic_forward(&critic, &x).unwrap();
    assert_eq!(a, critic_forward(&critic, &x.clone()).unwrap());
    let mut rows: Vec<f64> = x.row(2).to_vec();
    rows.extend_from_slice(x.row(1));
    rows.extend_from_slice(x.row(0));
    let swapped = NumArray::matrix(3, 12, rows).unwrap();
    assert_ne!(a, critic_forward(&critic, &swapped).unwrap());
    assert!(critic_forward(&critic, &random_scaled(&mut rng, 2, 12)).is_err());
}

#[test]
fn critic_loss_examples() {
    let mut rng = seeded(4, 0);
    let mut critic = CriticNet::new(2, 10, &mut rng).unwrap();
    let batch: Vec<NumArray> = (0..3).map(|_| random_scaled(&mut rng, 2, 10)).collect();
    assert_eq!(critic_loss(&critic, &batch, &batch).unwrap(), 0.0);
    let other: Vec<NumArray> = (0..2).map(|_| random_scaled(&mut rng, 2, 10)).collect();
    critic
        .params
        .get_mut("critic.out.w")
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|w| *w = 0.0);
    assert_eq!(critic_loss(&critic, &batch, &other).unwrap(), 0.0);
    assert_eq!(-wasserstein_estimate(&[0.0, 2.0], &[1.0, 3.0]), 1.0);
    assert!(critic_loss(&critic, &[], &other).is_err());
}

#[test]
fn constraint_examples() {
    let stats = RealStats {
        mean_total: 12.0,
        delta_max: 2.0,
    };
    let flat = NumArray::matrix(2, 3, vec![2.0; 6]).unwrap();
    assert_eq!(constraint_losses(&[flat], &stats).unwrap(), (0.0, 0.0));
    // One jump of 3·δ on the only pair: excess 2δ, squared over δ² = 4.
    let jump = NumArray::matrix(1, 2, vec![0.0, 6.0]).unwrap();
    let (l_sum, l_delta) = constraint_losses(&[jump], &stats).unwrap();
    assert_eq!(l_delta, 4.0);
    assert!((l_sum - (0.5f64).powi(2)).abs() < 1e-15);
}

#[test]
fn real_stats_from_flows() {
    let f = FlowMatrix::new(vec![vec![1, 4, 2], vec![0, 0, 1]], routes(2), 60).unwrap();
    let g = FlowMatrix::new(vec![vec![0, 0, 0], vec![0, 0, 0]], routes(2), 60).unwrap();
    let s = RealStats::from_flows(&[f, g.clone()]).unwrap();
    assert_eq!(s.mean_total, 4.0);
    assert_eq!(s.delta_max, 3.0);
    let flat = FlowMatrix::new(vec![vec![2, 2, 2], vec![0, 0, 0]], routes(2), 60).unwrap();
    assert_eq!(RealStats::from_flows(&[flat]).unwrap().delta_max, 1.0);
    assert!(RealStats::from_flows(&[g]).is_err());
}

#[test]
fn generator_objective_examples() {
    assert_eq!(generator_objective(0.2, 0.2, 0.0, 0.0, 3.0, 4.0), 0.0);
    assert_eq!(generator_objective(0.7, 0.0, 0.0, 0.0, 1.0, 1.0), 0.7f64.powi(2));
    assert!((generator_objective(0.3, 0.1, 1.0, 0.0, 0.5, 2.0) - 0.54).abs() < 1e-15);
}

#[test]
fn critic_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = seeded(100 + seed, 0);
        let critic = CriticNet::new(2, 11, &mut rng).unwrap();
        let real: Vec<NumArray> = (0..3).map(|_| random_scaled(&mut rng, 2, 11)).collect();
        let fake: Vec<NumArray> = (0..3).map(|_| random_scaled(&mut rng, 2, 11)).collect();
        let (value, grads) = critic_loss_and_grads(&critic, &real, &fake).unwrap();
        assert!((value - critic_loss(&critic, &real, &fake).unwrap()).abs() < 1e-12);
        let err = max_rel_err(&grads, &critic.params, |p| {
            let mut c = critic.clone();
            c.params = p.clone();
            critic_loss(&c, &real, &fake).unwrap()
        });
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn generator_gradient_matches_finite_differences() {
    let stats = RealStats {
        mean_total: 150.0,
        delta_max: 2.0,
    };
    for seed in 0..20 {
        let mut rng = seeded(200 + seed, 0);
        let critic = CriticNet::new(2, 10, &mut rng).unwrap();
        let generator = GeneratorNet::new(layout(2, 10), 6, &mut rng).unwrap();
        let real: Vec<NumArray> = (0..3).map(|_| random_scaled(&mut rng, 2, 10)).collect();
        let z = GeneratorNet::noise(3, &mut rng);
        let cfg = WganConfig {
            epsilon: 0.05,
            k1: 0.7,
            k2: 1.3,
            ..WganConfig::default()
        };
        let (parts, grads) = generator_loss_and_grads(&critic, &generator, &z, &real, &stats, &cfg).unwrap();
        let loss_of = |g: &GeneratorNet| {
            let fake = g.generate(&z).unwrap();
            generator_loss(&critic, &fake, &real, &stats, &cfg).unwrap().total
        };
        assert!((parts.total - loss_of(&generator)).abs() < 1e-10);
        let err = max_rel_err(&grads, &generator.params, |p| {
            let g = GeneratorNet::from_params(p.clone(), layout(2, 10)).unwrap();
            loss_of(&g)
        });
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

fn quick(cfg: WganConfig) -> WganConfig {
    WganConfig {
        iterations: 40,
        batch_size: 4,
        hidden: 16,
        ..cfg
    }
}

#[test]
fn zero_iterations_returns_seeded_generator() {
    let real = poisson_set(5, 6, 2, 12);
    let cfg = WganConfig {
        iterations: 0,
        seed: 9,
        ..quick(WganConfig::default())
    };
    let out = train_wgan(&real, &cfg).unwrap();
    assert!(out.trace.is_empty());
    let mut init = rng::seeded(9, rng::stream::INIT);
    let fresh = GeneratorNet::new(layout(2, 12), 16, &mut init).unwrap();
    assert_eq!(out.generator.params.flat(), fresh.params.flat());
}

#[test]
fn training_is_deterministic_and_clipped() {
    let real = poisson_set(6, 6, 2, 12);
    let cfg = quick(WganConfig {
        seed: 3,
        clip: 0.05,
        warmup_steps: 2,
        warmup_critic: 20,
        ..WganConfig::default()
    });
    let a = train_wgan(&real, &cfg).unwrap();
    let b = train_wgan(&real, &cfg).unwrap();
    assert_eq!(a.generator.params.flat(), b.generator.params.flat());
    assert_eq!(a.trace, b.trace);
    assert!(a.critic.params.max_abs() <= 0.05);
    assert_eq!(a.trace.len(), 40);
    let csv = a.trace_csv().unwrap();
    assert!(csv.starts_with("step,l_d,w_hat,l_sum,l_delta\n"));
}

#[test]
fn too_few_real_flows_rejected() {
    let real = poisson_set(7, 3, 2, 12);
    assert!(train_wgan(&real, &quick(WganConfig::default())).is_err());
    let bad = WganConfig {
        clip: 0.0,
        ..WganConfig::default()
    };
    assert!(train_wgan(&poisson_set(7, 10, 2, 12), &bad).is_err());
}

#[test]
fn one_route_distance_shrinks_at_zero_epsilon() {
    let real = poisson_set_at(8, 16, 1, 12, 15.0);
    let cfg = WganConfig {
        epsilon: 0.0,
        iterations: 600,
        seed: 1,
        ..WganConfig::default()
    };
    let out = train_wgan(&real, &cfg).unwrap();
    let early = out.trace[..10].iter().map(|r| r.w_hat.abs()).sum::<f64>() / 10.0;
    let late = out.trace[out.trace.len() - 10..]
        .iter()
        .map(|r| r.w_hat.abs())
        .sum::<f64>()
        / 10.0;
    assert!(late < early, "early {early} late {late}");
}

#[test]
fn sampling_produces_valid_flows() {
    let mut rng = seeded(10, 0);
    let mut generator = GeneratorNet::new(layout(3, 12), 8, &mut rng).unwrap();
    assert!(sample_flows(&generator, 0, 1, 0.1).unwrap().is_empty());
    let set = sample_flows(&generator, 5, 1, 0.1).unwrap();
    assert_eq!(set.len(), 5);
    assert_eq!(set.provenance(), Provenance::Generated { epsilon: 0.1 });
    for m in set.members() {
        assert_eq!((m.num_routes(), m.bins()), (3, 12));
    }
    assert_eq!(set, sample_flows(&generator, 5, 1, 0.1).unwrap());
    zero(&mut generator.params);
    for m in sample_flows(&generator, 4, 2, 0.0).unwrap().members() {
        assert_eq!(m.total(), 0);
    }
}

#[test]
fn generator_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = seeded(11, 0);
    let generator = GeneratorNet::new(layout(2, 9), 8, &mut rng).unwrap();
    let path = dir.path().join("gen.params");
    generator.save(&path).unwrap();
    assert!(dir.path().join("gen.params.layout.json").exists());
    let back = GeneratorNet::load(&path).unwrap();
    assert_eq!(back.params.flat(), generator.params.flat());
    assert_eq!(back.layout(), generator.layout());
}
