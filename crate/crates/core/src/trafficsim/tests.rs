use std::sync::Arc;

use super::*;

fn one_by_one() -> Roadnet {
    build_grid(1, 1, LaneParams::default()).unwrap()
}

fn veh(id: usize, route: &[String], depart: u64) -> VehicleSpec {
    VehicleSpec {
        id,
        route: route.to_vec(),
        depart,
    }
}

#[test]
fn grid_shapes() {
    let net = one_by_one();
    assert_eq!(net.intersections.len(), 1);
    assert_eq!(net.intersections[0].incoming.len(), 8);
    assert_eq!(net.intersections[0].outgoing.len(), 8);
    assert_eq!(net.source_lanes().len(), 8);
    assert_eq!(net.sink_lanes().len(), 8);
    assert_eq!(net.intersections[0].phases.len(), NUM_PHASES);

    let row = build_grid(1, 5, LaneParams::default()).unwrap();
    assert_eq!(row.intersections.len(), 5);
    assert_eq!(row.internal_links(), 4);

    let grid = build_grid(4, 4, LaneParams::default()).unwrap();
    assert_eq!(grid.intersections.len(), 16);
    // 2·rows·(cols−1) horizontal + vertical adjacencies.
    assert_eq!(grid.internal_links(), 2 * 4 * 3);
    assert!(grid.intersections.iter().all(|i| i.phases.len() == 8));
}

#[test]
fn every_movement_is_in_exactly_two_phases() {
    let net = one_by_one();
    for m in 0..net.movements.len() {
        let n = (0..NUM_PHASES).filter(|&p| net.is_green(m, p)).count();
        assert_eq!(n, 2, "movement {m}");
    }
}

#[test]
fn empty_world_only_advances_clock() {
    let mut w = SimWorld::new(Arc::new(one_by_one()), &[]).unwrap();
    for a in 0..8 {
        w.step(&[a]).unwrap();
    }
    assert_eq!(w.clock(), 8);
    assert_eq!(w.on_road(), 0);
    assert_eq!(w.injected(), 0);
}

#[test]
fn invalid_phase_rejected() {
    let mut w = SimWorld::new(Arc::new(one_by_one()), &[]).unwrap();
    assert!(w.step(&[8]).is_err());
    assert!(w.step(&[0, 0]).is_err());
}

#[test]
fn green_ready_vehicle_advances() {
    let net = one_by_one();
    let route = grid_route(&net, 1, 1, (0, 0), Approach::N, &[Turn::Through]).unwrap();
    let mut w = SimWorld::new(Arc::new(net), &[]).unwrap();
    w.inject(1, &route, 0, 0).unwrap();
    let first = w.roadnet().lane_by_id(&route[0]).unwrap();
    let second = w.roadnet().lane_by_id(&route[1]).unwrap();
    // Dwell is 30 s; phase 0 is NS-through.
    for _ in 0..30 {
        w.step(&[0]).unwrap();
    }
    assert_eq!(w.lane_count(first), 1);
    w.step(&[0]).unwrap();
    assert_eq!(w.lane_count(first), 0);
    assert_eq!(w.lane_count(second), 1);
}

#[test]
fn red_vehicle_waits() {
    let net = one_by_one();
    let route = grid_route(&net, 1, 1, (0, 0), Approach::N, &[Turn::Through]).unwrap();
    let mut w = SimWorld::new(Arc::new(net), &[]).unwrap();
    w.inject(1, &route, 0, 0).unwrap();
    for _ in 0..40 {
        w.step(&[1]).unwrap();
    }
    assert_eq!(w.on_road(), 1);
    let lane = w.roadnet().lane_by_id(&route[0]).unwrap();
    assert_eq!(w.lane_count(lane), 1);
}

#[test]
fn capacity_limits_crossing_and_keeps_order() {
    let mut net = one_by_one();
    let route = grid_route(&net, 1, 1, (0, 0), Approach::N, &[Turn::Through]).unwrap();
    let target = net.lane_by_id(&route[1]).unwrap();
    net.lanes[target].x_max = 2;
    let mut w = SimWorld::new(Arc::new(net), &[]).unwrap();
    for id in [10, 11, 12] {
        w.inject(id, &route, 0, 0).unwrap();
    }
    for _ in 0..30 {
        w.step(&[1]).unwrap();
    }
    for _ in 0..3 {
        w.step(&[0]).unwrap();
    }
    assert_eq!(w.lane_count(target), 2);
    let src = w.roadnet().lane_by_id(&route[0]).unwrap();
    assert_eq!(w.lane_queue(src).collect::<Vec<_>>(), vec![12]);
    assert_eq!(w.lane_queue(target).collect::<Vec<_>>(), vec![10, 11]);
}

#[test]
fn observation_counts_and_phase() {
    let net = one_by_one();
    let route = grid_route(&net, 1, 1, (0, 0), Approach::W, &[Turn::Left]).unwrap();
    let mut w = SimWorld::new(Arc::new(net), &[]).unwrap();
    let o = w.observe(0).unwrap();
    assert_eq!(o.phase, 0);
    assert_eq!(o.phase_one_hot()[0], 1.0);
    assert!(o.incoming.iter().chain(&o.outgoing).all(|&c| c == 0));
    for k in 0..3 {
        w.inject(k, &route, 0, 0).unwrap();
    }
    w.step(&[5]).unwrap();
    let o = w.observe(0).unwrap();
    assert_eq!(o.phase, 5);
    let lane = w.roadnet().lane_by_id(&route[0]).unwrap();
    let slot = w.roadnet().intersections[0]
        .incoming
        .iter()
        .position(|&l| l == lane)
        .unwrap();
    assert_eq!(o.incoming[slot], 3);
    assert!(w.observe(1).is_err());
}

#[test]
fn pressure_empty_is_zero() {
    let w = SimWorld::new(Arc::new(one_by_one()), &[]).unwrap();
    let p = w.pressure(0, PressureMode::AbsOfSum).unwrap();
    assert!(p.movement_pressure.iter().all(|&x| x == 0.0));
    assert_eq!(p.pressure, 0.0);
    assert_eq!(p.reward, 0.0);
}

/// Intersection with a single movement between two lanes of capacity 8.
fn single_movement_net(extra: bool) -> Roadnet {
    let lane = |id: &str| Lane {
        id: id.to_string(),
        length: 100.0,
        speed: 10.0,
        x_max: 8,
    };
    let mut lanes = vec![lane("a"), lane("b")];
    let mut movements = vec![("X".to_string(), "a".to_string(), "b".to_string())];
    if extra {
        lanes.extend([lane("c"), lane("d")]);
        movements.push(("X".to_string(), "c".to_string(), "d".to_string()));
    }
    let all: Vec<usize> = (0..movements.len()).collect();
    let phases = (0..NUM_PHASES).map(|p| ("X".to_string(), p, all.clone())).collect();
    Roadnet::new(lanes, vec!["X".to_string()], movements, phases).unwrap()
}

fn fill(w: &mut SimWorld, from: &str, to: &str, pos: usize, n: usize, base: usize) {
    for k in 0..n {
        w.inject(base + k, &[from.to_string(), to.to_string()], pos, 0).unwrap();
    }
}

#[test]
fn pressure_single_movement() {
    let mut w = SimWorld::new(Arc::new(single_movement_net(false)), &[]).unwrap();
    fill(&mut w, "a", "b", 0, 4, 0);
    fill(&mut w, "a", "b", 1, 2, 100);
    let p = w.pressure(0, PressureMode::AbsOfSum).unwrap();
    assert_eq!(p.movement_pressure, vec![0.25]);
    assert_eq!(p.pressure, 0.25);
    assert_eq!(p.reward, -0.25);
}

#[test]
fn pressure_is_abs_of_sum_not_sum_of_abs() {
    let mut w = SimWorld::new(Arc::new(single_movement_net(true)), &[]).unwrap();
    // a→b: 4/8 − 2/8 = 0.25; c→d: 0/8 − 4/8 = −0.5
    fill(&mut w, "a", "b", 0, 4, 0);
    fill(&mut w, "a", "b", 1, 2, 100);
    fill(&mut w, "c", "d", 1, 4, 200);
    let p = w.pressure(0, PressureMode::AbsOfSum).unwrap();
    assert_eq!(p.movement_pressure, vec![0.25, -0.5]);
    assert_eq!(p.pressure, 0.25);
    assert_eq!(p.reward, -0.25);
    let alt = w.pressure(0, PressureMode::SumOfAbs).unwrap();
    assert_eq!(alt.pressure, 0.75);
}

#[test]
fn travel_time_examples() {
    let rec = |depart, finish| TravelRecord {
        vehicle: 0,
        depart,
        finish,
    };
    let one = TravelLog {
        records: vec![rec(0, Some(30))],
    };
    assert_eq!(average_travel_time(&one, 100).seconds, 30.0);
    let two = TravelLog {
        records: vec![rec(0, Some(30)), rec(10, Some(60))],
    };
    assert_eq!(average_travel_time(&two, 100).seconds, 40.0);
    let cut = TravelLog {
        records: vec![rec(0, Some(30)), rec(40, None)],
    };
    assert_eq!(average_travel_time(&cut, 100).seconds, 45.0);
    let empty = average_travel_time(&TravelLog::default(), 100);
    assert_eq!(empty.seconds, 0.0);
    assert!(empty.empty_flow);
}

#[test]
fn free_flow_examples() {
    let lane = |id: &str, length: f64| Lane {
        id: id.to_string(),
        length,
        speed: 10.0,
        x_max: 5,
    };
    let phases = (0..NUM_PHASES).map(|p| ("X".to_string(), p, vec![0])).collect();
    let net = Roadnet::new(
        vec![lane("a", 300.0), lane("b", 150.0)],
        vec!["X".into()],
        vec![("X".into(), "a".into(), "b".into())],
        phases,
    )
    .unwrap();
    let one = veh(0, &["a".into()], 0);
    assert_eq!(free_flow_time(&net, &[one]).unwrap(), 30.0);
    let two = veh(0, &["a".into(), "b".into()], 0);
    assert_eq!(free_flow_time(&net, &[two]).unwrap(), 45.0);
}

#[test]
fn free_flow_equals_oracle_simulation() {
    let net = Arc::new(
        build_grid(
            1,
            2,
            LaneParams {
                length: 130.0,
                speed: 9.0,
                x_max: 3,
            },
        )
        .unwrap(),
    );
    let routes = [
        grid_route(&net, 1, 2, (0, 0), Approach::W, &[Turn::Through, Turn::Through]).unwrap(),
        grid_route(&net, 1, 2, (0, 1), Approach::N, &[Turn::Through]).unwrap(),
        grid_route(&net, 1, 2, (0, 1), Approach::E, &[Turn::Through, Turn::Left]).unwrap(),
    ];
    // Several vehicles share a departure second on the same lane.
    let flow: Vec<VehicleSpec> = (0..30).map(|i| veh(i, &routes[i % 3], (i / 4) as u64 * 3)).collect();
    let mut w = SimWorld::with_options(Arc::clone(&net), &flow, SimOptions { free_flow_oracle: true }).unwrap();
    while !w.is_drained() {
        w.step(&[0, 0]).unwrap();
    }
    let att = average_travel_time(&w.travel_log(), w.clock()).seconds;
    assert_eq!(att, free_flow_time(&net, &flow).unwrap());
}

#[test]
fn source_lane_full_delays_departure() {
    let net = build_grid(
        1,
        1,
        LaneParams {
            length: 300.0,
            speed: 10.0,
            x_max: 2,
        },
    )
    .unwrap();
    let route = grid_route(&net, 1, 1, (0, 0), Approach::S, &[Turn::Through]).unwrap();
    let flow: Vec<VehicleSpec> = (0..3).map(|i| veh(i, &route, 0)).collect();
    let mut w = SimWorld::new(Arc::new(net), &flow).unwrap();
    w.step(&[1]).unwrap();
    assert_eq!(w.injected(), 2);
    assert_eq!(w.on_road(), 2);
}

#[test]
fn route_validation() {
    let net = one_by_one();
    let bad = vec!["I00_00.in.N.T".to_string(), "I00_00.out.N.T".to_string()];
    assert!(net.resolve_route(&bad).is_err());
    assert!(net.resolve_route(&["nope".to_string()]).is_err());
    assert_eq!(single_intersection_routes(&net).unwrap().len(), 8);
}

#[test]
fn roadnet_file_round_trip() {
    let net = build_grid(2, 2, LaneParams::default()).unwrap();
    let file = RoadnetFile::from_roadnet(&net);
    let text = serde_json::to_string(&file).unwrap();
    let back: RoadnetFile = serde_json::from_str(&text).unwrap();
    assert_eq!(back.into_roadnet().unwrap(), net);
    let mut wrong = file.clone();
    wrong.format = "tsclab-v0".into();
    assert!(wrong.into_roadnet().is_err());
}
