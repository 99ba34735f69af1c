use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bank::{global_update, ClusterBank};
use super::features::{FeatureCollector, ZScore};
use super::kmeans::kmeans_recluster_from;
use super::predictor::{nearest_centroid, predict_cluster, predictor_update, PredictorNet};
use crate::agent::{
    encode_state, run_episode, Controller, DqnAgent, DqnConfig, DqnController, EpisodeConfig, EpisodeOutcome, QNet,
    ReplayMemory, Transition,
};
use crate::diffcore::ParamStore;
use crate::rng::{self, Rng};
use crate::trafficsim::{PressureMode, Roadnet, SimWorld, TravelTime, VehicleSpec, NUM_PHASES};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub clusters: usize,
    /// Rounds between reclusterings.
    pub recluster_every: usize,
    /// Episode length in sim-seconds.
    pub horizon: u64,
    /// Random warm-up length at test time.
    pub learn_start: u64,
    pub beta: f64,
    pub eta: f64,
    pub rounds: usize,
    /// Outer steps per cluster per round.
    pub outer_steps: usize,
    /// Predictor steps after each reclustering.
    pub predictor_steps: usize,
    /// Exploration rate of adapting agents.
    pub explore_eps: f64,
    /// Post-adaptation memory shared equally among clusters.
    pub memory_budget: usize,
    pub pressure: PressureMode,
    /// Inner-loop learner; `dqn.lr` is the inner step size.
    pub dqn: DqnConfig,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            clusters: 3,
            recluster_every: 2,
            horizon: 1200,
            learn_start: 120,
            beta: 1e-3,
            eta: 0.05,
            rounds: 10,
            outer_steps: 1,
            predictor_steps: 200,
            explore_eps: 0.1,
            memory_budget: 30_000,
            pressure: PressureMode::AbsOfSum,
            dqn: DqnConfig::default(),
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.recluster_every == 0 {
            return Err(Error::invalid("clusters and recluster period must be positive"));
        }
        if !(0 < self.learn_start && self.learn_start < self.horizon) {
            return Err(Error::invalid("learn start must lie strictly inside the horizon"));
        }
        if !(self.beta >= 0.0) || !(self.eta >= 0.0) || !(0.0..=1.0).contains(&self.explore_eps) {
            return Err(Error::invalid("beta, eta must be non-negative and epsilon in [0, 1]"));
        }
        if self.memory_budget < self.clusters {
            return Err(Error::invalid("memory budget smaller than the cluster count"));
        }
        self.dqn.validate()
    }

    fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            horizon: self.horizon,
            pressure: self.pressure,
            ..EpisodeConfig::default()
        }
    }

    fn learner(&self) -> DqnConfig {
        DqnConfig {
            seed: self.seed,
            ..self.dqn.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    /// Mean travel time of the adaptation episodes.
    pub mean_travel_time: f64,
    pub reclustered: bool,
    pub mapping: Vec<usize>,
    pub predictor_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MetaOutcome {
    pub bank: ClusterBank,
    pub predictor: Option<PredictorNet>,
    pub rounds: Vec<RoundTrace>,
    /// Flattened initializations after each round.
    pub history: Vec<Vec<f64>>,
    /// Per-flow collectors at the last reclustering.
    pub features: Vec<FeatureCollector>,
}

/// Collects the transitions a controller sees.
struct Recorder<C> {
    inner: C,
    transitions: Vec<Transition>,
}

impl<C: Controller> Controller for Recorder<C> {
    fn act(&mut self, i: usize, state: &[f64], tick: u64) -> Result<usize> {
        self.inner.act(i, state, tick)
    }

    fn observe(&mut self, i: usize, t: &Transition, tick: u64) -> Result<()> {
        self.transitions.push(t.clone());
        self.inner.observe(i, t, tick)
    }
}

/// Where an adapting episode takes its initialization from once the
/// warm-up is over.
enum Start<'a> {
    Fixed(&'a ParamStore),
    Predicted {
        bank: &'a ClusterBank,
        predictor: Option<&'a PredictorNet>,
    },
}

/// Random actions before the learning start while summarizing the
/// warm-up windows, then DQN agents adapting from the chosen init.
struct Adaptation<'a> {
    cfg: &'a MetaConfig,
    start: Start<'a>,
    round: usize,
    flow: usize,
    warm: FeatureCollector,
    warm_rng: Rng,
    warm_open: Vec<bool>,
    agents: Option<DqnController>,
    cluster: usize,
}

impl<'a> Adaptation<'a> {
    fn new(cfg: &'a MetaConfig, start: Start<'a>, round: usize, flow: usize, dim: usize, n: usize) -> Self {
        Adaptation {
            cfg,
            start,
            round,
            flow,
            warm: FeatureCollector::new(dim),
            warm_rng: rng::derived(cfg.seed, rng::stream::WARMUP, stream_index(round, flow, 0)),
            warm_open: vec![false; n],
            agents: None,
            cluster: 0,
        }
    }

    fn choose(&self) -> Result<(usize, &'a ParamStore)> {
        let (bank, predictor) = match self.start {
            Start::Fixed(init) => return Ok((self.cluster, init)),
            Start::Predicted { bank, predictor } => (bank, predictor),
        };
        let pick = || -> Result<usize> {
            if bank.clusters() == 1 || self.warm.is_empty() {
                return Ok(0);
            }
            let Some(norm) = bank.normalizer.as_ref() else {
                return Ok(0);
            };
            let x = norm.apply(&self.warm.experience_features())?;
            Ok(match predictor {
                Some(p) => predict_cluster(p, &x)?,
                None if !bank.centroids.is_empty() => nearest_centroid(&x, &bank.centroids),
                None => 0,
            })
        };
        let j = pick()?;
        Ok((j, &bank.inits[j]))
    }

    fn start_agents(&mut self) -> Result<()> {
        let (j, init) = self.choose()?;
        self.cluster = j;
        let learner = self.cfg.learner();
        let agents = (0..self.warm_open.len())
            .map(|i| {
                Ok(DqnAgent::with_qnet(
                    QNet::from_params(init.clone())?,
                    learner.clone(),
                    stream_index(self.round, self.flow, i),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        self.agents = Some(DqnController::new(agents, true, Some(self.cfg.explore_eps)));
        Ok(())
    }
}

impl Controller for Adaptation<'_> {
    fn act(&mut self, i: usize, state: &[f64], tick: u64) -> Result<usize> {
        if tick < self.cfg.learn_start {
            self.warm_open[i] = true;
            return Ok(self.warm_rng.random_range(0..NUM_PHASES));
        }
        if self.agents.is_none() {
            self.start_agents()?;
        }
        self.warm_open[i] = false;
        self.agents.as_mut().expect("agents started").act(i, state, tick)
    }

    fn observe(&mut self, i: usize, t: &Transition, tick: u64) -> Result<()> {
        if self.warm_open[i] {
            return self.warm.push(&t.state, t.action, t.reward);
        }
        match self.agents.as_mut() {
            Some(a) => a.observe(i, t, tick),
            None => Ok(()),
        }
    }
}

pub(crate) fn state_dim(net: &Arc<Roadnet>) -> Result<usize> {
    let world = SimWorld::new(net.clone(), &[])?;
    Ok(encode_state(&world.observe(0)?).len())
}

fn experience_dim(state_dim: usize) -> usize {
    2 * state_dim + NUM_PHASES + 1
}

/// Stream index reserved for test-time episodes.
const TEST_ROUND: usize = u32::MAX as usize;

fn stream_index(round: usize, flow: usize, intersection: usize) -> u64 {
    ((round as u64) << 32) | ((flow as u64) << 10) | intersection as u64
}

struct FlowRound {
    adapted: Vec<QNet>,
    collector: FeatureCollector,
    post: Vec<Transition>,
    travel: f64,
}

fn adapt_flow(
    net: &Arc<Roadnet>,
    flow: &[VehicleSpec],
    init: &ParamStore,
    cfg: &MetaConfig,
    round: usize,
    index: usize,
    dim: usize,
) -> Result<FlowRound> {
    let n = net.intersections.len();
    let mut ctl = Adaptation::new(cfg, Start::Fixed(init), round, index, dim, n);
    let out = run_episode(SimWorld::new(net.clone(), flow)?, &cfg.episode(), &mut ctl)?;
    let mut collector = ctl.warm;
    collector.push_travel_time(out.travel.seconds);
    let agents = ctl
        .agents
        .ok_or_else(|| Error::invalid("episode ended before the learning start"))?;

    let mut post = Recorder {
        inner: DqnController::new(agents.agents, false, Some(cfg.explore_eps)),
        transitions: Vec::new(),
    };
    run_episode(SimWorld::new(net.clone(), flow)?, &cfg.episode(), &mut post)?;
    Ok(FlowRound {
        adapted: post.inner.agents.into_iter().map(|a| a.qnet).collect(),
        collector,
        post: post.transitions,
        travel: out.travel.seconds,
    })
}

fn initial_bank(cfg: &MetaConfig, flows: usize, dim: usize) -> ClusterBank {
    let k = cfg.clusters;
    let inits = (0..k)
        .map(|j| {
            let mut r = rng::derived(cfg.seed, rng::stream::INIT, j as u64);
            QNet::new(dim, cfg.dqn.hidden, &mut r).online
        })
        .collect();
    let mut map_rng = rng::seeded(cfg.seed, rng::stream::CLUSTER_MAP);
    let mapping = (0..flows).map(|_| map_rng.random_range(0..k)).collect();
    let per = (cfg.memory_budget / k).max(1);
    ClusterBank {
        inits,
        mapping,
        memories: (0..k).map(|_| ReplayMemory::new(per)).collect(),
        centroids: Vec::new(),
        normalizer: None,
    }
}

fn train(
    net: &Arc<Roadnet>,
    flows: &[Vec<VehicleSpec>],
    cfg: &MetaConfig,
    with_predictor: bool,
) -> Result<MetaOutcome> {
    cfg.validate()?;
    let k = cfg.clusters;
    if flows.len() < k {
        return Err(Error::invalid(format!(
            "{} flows cannot fill {k} clusters",
            flows.len()
        )));
    }
    let dim = state_dim(net)?;
    let mut bank = initial_bank(cfg, flows.len(), dim);
    let mut predictor = if with_predictor {
        let mut r = rng::seeded(cfg.seed, rng::stream::PREDICTOR_INIT);
        Some(PredictorNet::new(experience_dim(dim), k, &mut r)?)
    } else {
        None
    };
    let mut batch_rngs: Vec<Rng> = (0..k)
        .map(|j| rng::derived(cfg.seed, rng::stream::BATCH, j as u64))
        .collect();
    let mut collectors: Vec<FeatureCollector> = vec![FeatureCollector::new(dim); flows.len()];
    let mut last_features = Vec::new();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut history = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let results: Vec<Result<FlowRound>> = flows
            .par_iter()
            .enumerate()
            .map(|(i, flow)| adapt_flow(net, flow, &bank.inits[bank.mapping[i]], cfg, round, i, dim))
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;

        let mut travel = 0.0;
        for (i, fr) in results.iter().enumerate() {
            collectors[i].merge(&fr.collector)?;
            let j = bank.mapping[i];
            for t in &fr.post {
                bank.memories[j].push(t.clone());
            }
            travel += fr.travel;
        }
        for (j, batch_rng) in batch_rngs.iter_mut().enumerate() {
            let adapted: Vec<&QNet> = results
                .iter()
                .zip(&bank.mapping)
                .filter(|(_, &m)| m == j)
                .flat_map(|(fr, _)| fr.adapted.iter())
                .collect();
            for _ in 0..cfg.outer_steps {
                global_update(
                    &mut bank,
                    j,
                    &adapted,
                    cfg.beta,
                    cfg.dqn.batch_size,
                    cfg.dqn.gamma,
                    batch_rng,
                )?;
            }
        }

        let mut reclustered = false;
        let mut predictor_loss = None;
        if round % cfg.recluster_every == cfg.recluster_every - 1 {
            let rows: Vec<Vec<f64>> = collectors.iter().map(|c| c.flow_features()).collect();
            let norm = ZScore::fit(&rows)?;
            let z = rows.iter().map(|r| norm.apply(r)).collect::<Result<Vec<_>>>()?;
            let seed = cfg.seed.wrapping_add(round as u64);
            let clustering = kmeans_recluster_from(&z, k, &bank.mapping, seed)?;
            bank.mapping = clustering.assignment;
            bank.centroids = clustering.centroids;
            bank.normalizer = Some(norm);
            if let Some(pred) = predictor.as_mut() {
                let inputs: Vec<Vec<f64>> = z.iter().map(|r| r[..r.len() - 1].to_vec()).collect();
                for _ in 0..cfg.predictor_steps {
                    predictor_loss = Some(predictor_update(pred, &inputs, &bank.mapping, cfg.eta)?);
                }
            }
            last_features = std::mem::replace(&mut collectors, vec![FeatureCollector::new(dim); flows.len()]);
            reclustered = true;
        }
        rounds.push(RoundTrace {
            round,
            mean_travel_time: travel / flows.len() as f64,
            reclustered,
            mapping: bank.mapping.clone(),
            predictor_loss,
        });
        history.push(bank.flat());
        log::info!(
            "round {round}: mean travel time {:.1}s{}",
            travel / flows.len() as f64,
            if reclustered { ", reclustered" } else { "" }
        );
    }
    Ok(MetaOutcome {
        bank,
        predictor,
        rounds,
        history,
        features: last_features,
    })
}

/// Clustered meta-training over the given training flows.
pub fn meta_train(net: &Arc<Roadnet>, flows: &[Vec<VehicleSpec>], cfg: &MetaConfig) -> Result<MetaOutcome> {
    train(net, flows, cfg, true)
}

/// Plain first-order MAML: the clustered procedure with one cluster and no predictor.
pub fn maml_train(net: &Arc<Roadnet>, flows: &[Vec<VehicleSpec>], cfg: &MetaConfig) -> Result<MetaOutcome> {
    let one = MetaConfig {
        clusters: 1,
        ..cfg.clone()
    };
    train(net, flows, &one, false)
}

/// Result of adapting to one test flow.
#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub travel: TravelTime,
    pub cluster: usize,
    /// Raw experience features gathered during the warm-up.
    pub warmup: Vec<f64>,
    pub episode: EpisodeOutcome,
}

/// Warm-up with random actions, pick a cluster, then adapt from its
/// initialization for the rest of the episode.
pub fn meta_test(
    net: &Arc<Roadnet>,
    flows: &[Vec<VehicleSpec>],
    bank: &ClusterBank,
    predictor: Option<&PredictorNet>,
    cfg: &MetaConfig,
) -> Result<Vec<TestOutcome>> {
    cfg.validate()?;
    let dim = state_dim(net)?;
    let n = net.intersections.len();
    flows
        .par_iter()
        .enumerate()
        .map(|(f, flow)| {
            let start = Start::Predicted { bank, predictor };
            let mut ctl = Adaptation::new(cfg, start, TEST_ROUND, f, dim, n);
            let episode = run_episode(SimWorld::new(net.clone(), flow)?, &cfg.episode(), &mut ctl)?;
            Ok(TestOutcome {
                travel: episode.travel,
                cluster: ctl.cluster,
                warmup: ctl.warm.experience_features(),
                episode,
            })
        })
        .collect()
}
