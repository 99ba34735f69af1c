use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Roadnet, NUM_PHASES};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: usize,
    /// Lane ids, first lane is where the vehicle enters.
    pub route: Vec<String>,
    /// Scheduled departure, seconds.
    pub depart: u64,
}

/// How movement pressures combine into the intersection pressure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PressureMode {
    /// `|Σ w|`
    #[default]
    AbsOfSum,
    /// `Σ |w|`
    SumOfAbs,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Every movement green, no capacity limits and unlimited discharge:
    /// the reference run whose travel times equal free-flow times.
    pub free_flow_oracle: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TravelRecord {
    pub vehicle: usize,
    pub depart: u64,
    pub finish: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TravelLog {
    pub records: Vec<TravelRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub phase: usize,
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub incoming_cap: Vec<usize>,
    pub outgoing_cap: Vec<usize>,
}

impl Observation {
    pub fn phase_one_hot(&self) -> [f64; NUM_PHASES] {
        let mut v = [0.0; NUM_PHASES];
        v[self.phase] = 1.0;
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureReport {
    /// One entry per movement of the intersection, in roadnet order.
    pub movement_pressure: Vec<f64>,
    pub pressure: f64,
    pub reward: f64,
}

#[derive(Clone, Debug)]
struct Vehicle {
    route: Vec<usize>,
    depart: u64,
    pos: usize,
    entered: u64,
}

/// Live simulation state. Cloning gives an independent copy.
#[derive(Clone, Debug)]
pub struct SimWorld {
    net: Arc<Roadnet>,
    options: SimOptions,
    dwell: Vec<u64>,
    queues: Vec<VecDeque<usize>>,
    vehicles: Vec<Vehicle>,
    /// Vehicle indices sorted by (depart, id); `next_departure` points at the first not yet released.
    schedule: Vec<usize>,
    next_departure: usize,
    /// Released vehicles waiting for room on their source lane.
    pending: Vec<VecDeque<usize>>,
    phases: Vec<usize>,
    clock: u64,
    log: Vec<TravelRecord>,
    injected: usize,
    finished: usize,
}

impl SimWorld {
    pub fn new(net: Arc<Roadnet>, flow: &[VehicleSpec]) -> Result<Self> {
        Self::with_options(net, flow, SimOptions::default())
    }

    pub fn with_options(net: Arc<Roadnet>, flow: &[VehicleSpec], options: SimOptions) -> Result<Self> {
        let sources = net.source_lanes();
        let mut is_source = vec![false; net.lanes.len()];
        for s in sources {
            is_source[s] = true;
        }
        let mut vehicles = Vec::with_capacity(flow.len());
        for spec in flow {
            let route = net.resolve_route(&spec.route)?;
            if !is_source[route[0]] {
                return Err(Error::invalid(format!(
                    "vehicle {} starts on `{}`, which is not a source lane",
                    spec.id, spec.route[0]
                )));
            }
            vehicles.push(Vehicle {
                route,
                depart: spec.depart,
                pos: 0,
                entered: 0,
            });
        }
        let mut schedule: Vec<usize> = (0..flow.len()).collect();
        schedule.sort_by_key(|&i| (flow[i].depart, flow[i].id, i));
        let log = flow
            .iter()
            .map(|s| TravelRecord {
                vehicle: s.id,
                depart: s.depart,
                finish: None,
            })
            .collect();
        let n_lanes = net.lanes.len();
        Ok(SimWorld {
            dwell: net.lanes.iter().map(|l| l.dwell()).collect(),
            options,
            queues: vec![VecDeque::new(); n_lanes],
            vehicles,
            schedule,
            next_departure: 0,
            pending: vec![VecDeque::new(); n_lanes],
            phases: vec![0; net.intersections.len()],
            clock: 0,
            log,
            injected: 0,
            finished: 0,
            net,
        })
    }

    pub fn roadnet(&self) -> &Roadnet {
        &self.net
    }

    pub fn shared_roadnet(&self) -> Arc<Roadnet> {
        Arc::clone(&self.net)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn phases(&self) -> &[usize] {
        &self.phases
    }

    pub fn lane_count(&self, lane: usize) -> usize {
        self.queues[lane].len()
    }

    /// Vehicle ids on `lane`, head first.
    pub fn lane_queue(&self, lane: usize) -> impl Iterator<Item = usize> + '_ {
        self.queues[lane].iter().map(|&v| self.log[v].vehicle)
    }

    pub fn injected(&self) -> usize {
        self.injected
    }

    pub fn finished(&self) -> usize {
        self.finished
    }

    pub fn on_road(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn total_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// True once every vehicle has finished.
    pub fn is_drained(&self) -> bool {
        self.finished == self.vehicles.len()
    }

    pub fn travel_log(&self) -> TravelLog {
        TravelLog {
            records: self.log.clone(),
        }
    }

    /// Places an already-departed vehicle directly on a lane, bypassing the
    /// schedule. Intended for tests and scenario construction.
    pub fn inject(&mut self, id: usize, route: &[String], lane_pos: usize, entered: u64) -> Result<()> {
        let resolved = self.net.resolve_route(route)?;
        let lane = *resolved
            .get(lane_pos)
            .ok_or_else(|| Error::invalid("lane position beyond route"))?;
        if self.queues[lane].len() >= self.net.lanes[lane].x_max {
            return Err(Error::invalid("lane is full"));
        }
        let idx = self.vehicles.len();
        self.vehicles.push(Vehicle {
            route: resolved,
            depart: entered,
            pos: lane_pos,
            entered,
        });
        self.log.push(TravelRecord {
            vehicle: id,
            depart: entered,
            finish: None,
        });
        self.queues[lane].push_back(idx);
        self.injected += 1;
        Ok(())
    }

    /// Advances one second with the given phase per intersection.
    pub fn step(&mut self, actions: &[usize]) -> Result<()> {
        if actions.len() != self.phases.len() {
            return Err(Error::invalid(format!(
                "expected {} actions, got {}",
                self.phases.len(),
                actions.len()
            )));
        }
        if let Some(&bad) = actions.iter().find(|&&a| a >= NUM_PHASES) {
            return Err(Error::invalid(format!("invalid phase id {bad}")));
        }
        self.phases.copy_from_slice(actions);
        let t = self.clock;
        self.finish_arrivals(t);
        self.cross(t);
        self.admit(t);
        self.clock += 1;
        Ok(())
    }

    fn ready(&self, v: usize, lane: usize, t: u64) -> bool {
        t >= self.vehicles[v].entered + self.dwell[lane]
    }

    fn finish_arrivals(&mut self, t: u64) {
        for lane in 0..self.queues.len() {
            while let Some(&v) = self.queues[lane].front() {
                let veh = &self.vehicles[v];
                if veh.pos + 1 != veh.route.len() || !self.ready(v, lane, t) {
                    break;
                }
                self.queues[lane].pop_front();
                self.log[v].finish = Some(t);
                self.finished += 1;
            }
        }
    }

    fn cross(&mut self, t: u64) {
        let net = Arc::clone(&self.net);
        for (i, inter) in net.intersections.iter().enumerate() {
            let phase = self.phases[i];
            for &lane in &inter.incoming {
                while let Some(&v) = self.queues[lane].front() {
                    let veh = &self.vehicles[v];
                    if veh.pos + 1 >= veh.route.len() || !self.ready(v, lane, t) {
                        break;
                    }
                    let next = veh.route[veh.pos + 1];
                    let Some(m) = net.movement_between(lane, next) else {
                        break;
                    };
                    let free = self.options.free_flow_oracle;
                    if !free && !net.is_green(m, phase) {
                        break;
                    }
                    if !free && self.queues[next].len() >= net.lanes[next].x_max {
                        break;
                    }
                    self.queues[lane].pop_front();
                    self.queues[next].push_back(v);
                    let veh = &mut self.vehicles[v];
                    veh.pos += 1;
                    veh.entered = t;
                    if !free {
                        break;
                    }
                }
            }
        }
    }

    fn admit(&mut self, t: u64) {
        while self.next_departure < self.schedule.len() {
            let v = self.schedule[self.next_departure];
            if self.vehicles[v].depart > t {
                break;
            }
            let lane = self.vehicles[v].route[0];
            self.pending[lane].push_back(v);
            self.next_departure += 1;
        }
        for lane in 0..self.pending.len() {
            while let Some(&v) = self.pending[lane].front() {
                if !self.options.free_flow_oracle && self.queues[lane].len() >= self.net.lanes[lane].x_max {
                    break;
                }
                self.pending[lane].pop_front();
                self.queues[lane].push_back(v);
                self.vehicles[v].entered = t;
                self.injected += 1;
            }
        }
    }

    pub fn observe(&self, intersection: usize) -> Result<Observation> {
        let inter = self
            .net
            .intersections
            .get(intersection)
            .ok_or_else(|| Error::invalid(format!("no intersection {intersection}")))?;
        let counts = |lanes: &[usize]| lanes.iter().map(|&l| self.queues[l].len()).collect();
        let caps = |lanes: &[usize]| lanes.iter().map(|&l| self.net.lanes[l].x_max).collect();
        Ok(Observation {
            phase: self.phases[intersection],
            incoming: counts(&inter.incoming),
            outgoing: counts(&inter.outgoing),
            incoming_cap: caps(&inter.incoming),
            outgoing_cap: caps(&inter.outgoing),
        })
    }

    pub fn pressure(&self, intersection: usize, mode: PressureMode) -> Result<PressureReport> {
        let inter = self
            .net
            .intersections
            .get(intersection)
            .ok_or_else(|| Error::invalid(format!("no intersection {intersection}")))?;
        let density = |l: usize| self.queues[l].len() as f64 / self.net.lanes[l].x_max as f64;
        let w: Vec<f64> = inter
            .movements
            .iter()
            .map(|&m| {
                let mv = self.net.movements[m];
                density(mv.from) - density(mv.to)
            })
            .collect();
        let pressure = match mode {
            PressureMode::AbsOfSum => w.iter().sum::<f64>().abs(),
            PressureMode::SumOfAbs => w.iter().map(|x| x.abs()).sum(),
        };
        Ok(PressureReport {
            movement_pressure: w,
            pressure,
            reward: -pressure,
        })
    }
}
