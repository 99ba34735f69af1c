use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::Rng as _;

use tsclab::agent::{ReplayMemory, Transition};
use tsclab::diffcore::ParamStore;
use tsclab::flow::FlowMatrix;
use tsclab::harness::{records_from_csv, records_to_csv, relative_improvement, Method, ResultRecord};
use tsclab::meta::{kmeans_recluster, kmeans_recluster_from, nearest, within_ssq, ZScore};
use tsclab::rng;
use tsclab::trafficsim::{build_grid, single_intersection_routes, LaneParams, SimWorld, VehicleSpec, NUM_PHASES};

fn points(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=max_n, 1usize..4).prop_flat_map(|(n, d)| vec(vec(-10.0f64..10.0, d), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn improvement_is_bounded_and_ordered(f in 1.0f64..100.0, a in 0.0f64..200.0, b in 0.0f64..200.0) {
        let (ours, baseline) = (f + a.min(b), f + a.max(b) + 1e-3);
        let i = relative_improvement(baseline, ours, f).unwrap();
        prop_assert!(i.raw >= 0.0 && i.relative >= i.raw);
        prop_assert!(i.relative <= 100.0 + 1e-9);
        let swapped = relative_improvement(ours + 1e-3, baseline, f);
        if let Ok(s) = swapped {
            prop_assert!(s.raw <= 0.0);
        }
    }

    #[test]
    fn params_text_is_exact(seed in 0u64..1000, inputs in 1usize..6, outputs in 1usize..6, scale in -1e6f64..1e6) {
        let mut r = rng::seeded(seed, 0);
        let mut p = ParamStore::new();
        p.init_dense("a", inputs, outputs, &mut r);
        p.init_conv("b", 5, &mut r);
        let v: Vec<f64> = p.flat().iter().map(|x| x * scale).collect();
        p.set_flat(&v).unwrap();
        let back = ParamStore::from_text(&p.to_text()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn flow_text_is_exact(counts in vec(vec(0u64..1000, 3), 1..5), interval in 1u64..600) {
        let routes = (0..counts.len()).map(|r| vec![format!("lane_{r}"), format!("out_{r}")]).collect();
        let m = FlowMatrix::new(counts, routes, interval).unwrap();
        prop_assert_eq!(FlowMatrix::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn kmeans_result_is_a_lloyd_fixed_point(x in points(12), k in 1usize..4, seed in 0u64..50) {
        prop_assume!(k <= x.len());
        let c = kmeans_recluster(&x, k, seed).unwrap();
        prop_assert!((c.ssq - within_ssq(&x, &c.assignment, &c.centroids)).abs() <= 1e-9 * (1.0 + c.ssq));
        for (p, &j) in x.iter().zip(&c.assignment) {
            let d = |m: usize| p.iter().zip(&c.centroids[m]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            prop_assert!(d(j) <= d(nearest(p, &c.centroids)) + 1e-9);
        }
        // One cluster is never better than k.
        let one = kmeans_recluster(&x, 1, seed).unwrap();
        prop_assert!(c.ssq <= one.ssq + 1e-9);
    }

    #[test]
    fn warm_start_never_loses_to_its_start(x in points(12), seed in 0u64..50) {
        let previous: Vec<usize> = (0..x.len()).map(|i| i % 2).collect();
        let c = kmeans_recluster_from(&x, 2, &previous, seed).unwrap();
        let d = x[0].len();
        let mut start = vec![vec![0.0; d]; 2];
        for (j, centre) in start.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = x.iter().zip(&previous).filter(|(_, &p)| p == j).map(|(p, _)| p).collect();
            for (k, c) in centre.iter_mut().enumerate() {
                *c = members.iter().map(|p| p[k]).sum::<f64>() / members.len() as f64;
            }
        }
        prop_assert!(c.ssq <= within_ssq(&x, &previous, &start) + 1e-9);
    }

    #[test]
    fn zscore_centres_and_scales(x in points(10)) {
        let z = ZScore::fit(&x).unwrap();
        let rows: Vec<Vec<f64>> = x.iter().map(|r| z.apply(r).unwrap()).collect();
        for k in 0..z.dim() {
            let n = rows.len() as f64;
            let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / n;
            prop_assert!(m.abs() <= 1e-9);
            prop_assert!(var <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn replay_keeps_the_newest_in_order(capacity in 1usize..20, pushes in 0usize..60) {
        let mut mem = ReplayMemory::new(capacity);
        for i in 0..pushes {
            mem.push(Transition { state: vec![i as f64], action: i % NUM_PHASES, reward: 0.0, next_state: vec![] });
        }
        prop_assert_eq!(mem.len(), pushes.min(capacity));
        let kept: Vec<f64> = mem.iter().map(|t| t.state[0]).collect();
        let want: Vec<f64> = (pushes - mem.len()..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn records_csv_round_trip(att in vec(0.0f64..1e4, 0..6), seed in any::<u64>(), free_flow in 0.0f64..100.0) {
        let records = vec![
            ResultRecord::new(Method::GeneraLight, "D_0.1", seed, att, free_flow),
            ResultRecord::failed(Method::Random, "D_0", seed, free_flow, "boom".into()),
        ];
        prop_assert_eq!(records_from_csv(&records_to_csv(&records).unwrap()).unwrap(), records);
    }

    #[test]
    fn cloned_worlds_stay_in_lockstep(seed in 0u64..500, n in 0usize..40, split in 0u64..200) {
        let net = Arc::new(build_grid(1, 1, LaneParams::default()).unwrap());
        let routes = single_intersection_routes(&net).unwrap();
        let mut r = rng::seeded(seed, 1);
        let flow: Vec<VehicleSpec> = (0..n)
            .map(|id| VehicleSpec { id, route: routes[r.random_range(0..routes.len())].clone(), depart: r.random_range(0..120) })
            .collect();
        let actions: Vec<usize> = (0..400).map(|_| r.random_range(0..NUM_PHASES)).collect();
        let mut a = SimWorld::new(net.clone(), &flow).unwrap();
        for &p in &actions[..split as usize] {
            a.step(&[p]).unwrap();
        }
        let mut b = a.clone();
        for &p in &actions[split as usize..] {
            a.step(&[p]).unwrap();
            b.step(&[p]).unwrap();
            prop_assert_eq!(a.observe(0).unwrap(), b.observe(0).unwrap());
            prop_assert_eq!(a.injected(), a.finished() + a.on_road());
        }
        prop_assert_eq!(a.travel_log(), b.travel_log());
    }
}
