use serde::{Deserialize, Serialize};

use super::dqn::encode_state;
use super::replay::Transition;
use crate::trafficsim::{average_travel_time, PressureMode, SimWorld, TravelLog, TravelTime};
use crate::{Error, Result};

/// Sim-seconds between consecutive agent decisions.
pub const DECISION_INTERVAL: u64 = 10;

/// Anything that picks phases at decision points.
pub trait Controller {
    fn act(&mut self, intersection: usize, state: &[f64], tick: u64) -> Result<usize>;

    /// Called when the window opened by a previous `act` closes at `tick`.
    fn observe(&mut self, _intersection: usize, _transition: &Transition, _tick: u64) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub horizon: u64,
    pub decision_interval: u64,
    pub pressure: PressureMode,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 1200,
            decision_interval: DECISION_INTERVAL,
            pressure: PressureMode::AbsOfSum,
        }
    }
}

/// One closed action window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tick: u64,
    pub intersection: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub travel: TravelTime,
    pub log: TravelLog,
    pub decisions: Vec<DecisionRecord>,
    /// Vehicles on the road after each tick.
    pub on_road: Vec<usize>,
}

/// Runs `world` for `cfg.horizon` ticks under `controller`.
pub fn run_episode(
    mut world: SimWorld,
    cfg: &EpisodeConfig,
    controller: &mut dyn Controller,
) -> Result<EpisodeOutcome> {
    if cfg.decision_interval == 0 {
        return Err(Error::invalid("decision interval must be positive"));
    }
    let n = world.roadnet().intersections.len();
    let mut open: Vec<Option<(Vec<f64>, usize, u64)>> = vec![None; n];
    let mut reward_sum = vec![0.0; n];
    let mut window = 0u64;
    let mut actions = world.phases().to_vec();
    let mut decisions = Vec::new();
    let mut on_road = Vec::with_capacity(cfg.horizon as usize);

    let mut close = |world: &SimWorld,
                     controller: &mut dyn Controller,
                     open: &mut [Option<(Vec<f64>, usize, u64)>],
                     reward_sum: &mut [f64],
                     window: u64,
                     tick: u64,
                     act: bool,
                     actions: &mut [usize]|
     -> Result<()> {
        for i in 0..n {
            let state = encode_state(&world.observe(i)?);
            if let Some((s, a, start)) = open[i].take() {
                let reward = if window > 0 { reward_sum[i] / window as f64 } else { 0.0 };
                let t = Transition {
                    state: s,
                    action: a,
                    reward,
                    next_state: state.clone(),
                };
                controller.observe(i, &t, tick)?;
                decisions.push(DecisionRecord {
                    tick: start,
                    intersection: i,
                    action: a,
                    reward,
                });
            }
            reward_sum[i] = 0.0;
            if act {
                let a = controller.act(i, &state, tick)?;
                actions[i] = a;
                open[i] = Some((state, a, tick));
            }
        }
        Ok(())
    };

    for tick in 0..cfg.horizon {
        if tick % cfg.decision_interval == 0 {
            close(
                &world,
                controller,
                &mut open,
                &mut reward_sum,
                window,
                tick,
                true,
                &mut actions,
            )?;
            window = 0;
        }
        world.step(&actions)?;
        for (i, acc) in reward_sum.iter_mut().enumerate() {
            *acc += world.pressure(i, cfg.pressure)?.reward;
        }
        window += 1;
        on_road.push(world.on_road());
    }
    close(
        &world,
        controller,
        &mut open,
        &mut reward_sum,
        window,
        cfg.horizon,
        false,
        &mut actions,
    )?;

    let log = world.travel_log();
    Ok(EpisodeOutcome {
        travel: average_travel_time(&log, cfg.horizon),
        log,
        decisions,
        on_road,
    })
}

impl EpisodeOutcome {
    /// Decision log as CSV with columns tick, intersection, action, reward.
    pub fn decisions_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for d in &self.decisions {
            w.serialize(d).map_err(|e| Error::invalid(e.to_string()))?;
        }
        if self.decisions.is_empty() {
            w.write_record(["tick", "intersection", "action", "reward"])
                .map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
