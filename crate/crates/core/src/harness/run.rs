use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, Method, RoadnetSpec};
use super::plots::{emit_plots, episode_series};
use super::report::{failures, records_to_csv, report_table, ResultRecord};
use crate::agent::{
    run_episode, DqnAgent, DqnConfig, DqnController, EpisodeConfig, EpisodeOutcome, FixedTime, RandomPolicy,
};
use crate::flow::{matrix_to_vehicles, FlowSet};
use crate::flowgen::{sample_flows, train_wgan, WganConfig};
use crate::meta::{maml_train, meta_test, meta_train, state_dim, MetaConfig};
use crate::trafficsim::{build_grid, free_flow_time, Roadnet, RoadnetFile, SimWorld, VehicleSpec};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct TestSet {
    pub label: String,
    pub flows: Vec<Vec<VehicleSpec>>,
    pub free_flow: f64,
}

/// Everything the method runs share: network, training flows and test sets.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub net: Arc<Roadnet>,
    pub training: Vec<Vec<VehicleSpec>>,
    pub tests: Vec<TestSet>,
}

fn vehicles(set: &FlowSet) -> Vec<Vec<VehicleSpec>> {
    set.members()
        .iter()
        .enumerate()
        .map(|(k, m)| matrix_to_vehicles(m, k as u64))
        .collect()
}

fn mean_free_flow(net: &Roadnet, flows: &[Vec<VehicleSpec>]) -> Result<f64> {
    if flows.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for f in flows {
        sum += free_flow_time(net, f)?;
    }
    Ok(sum / flows.len() as f64)
}

/// Loads the network and flows, generating the test sets that ask for it.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let net = Arc::new(match &cfg.roadnet {
        RoadnetSpec::Grid { rows, cols, lanes } => build_grid(*rows, *cols, *lanes)?,
        RoadnetSpec::File { path } => RoadnetFile::load(path)?,
    });
    let training_set = FlowSet::load_dir(&cfg.training)?;
    if training_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut tests = Vec::new();
    for (i, spec) in cfg.test.iter().enumerate() {
        let set = match (&spec.path, spec.epsilon) {
            (Some(p), _) => FlowSet::load_dir(p)?,
            (None, Some(eps)) => {
                log::info!("training generator for `{}` at epsilon {eps}", spec.label);
                let wgan = WganConfig {
                    epsilon: eps,
                    ..cfg.wgan.clone()
                };
                let g = train_wgan(&training_set, &wgan)?;
                sample_flows(&g.generator, spec.count, cfg.wgan.seed.wrapping_add(1 + i as u64), eps)?
            }
            (None, None) => return Err(Error::invalid(format!("test set `{}` has no source", spec.label))),
        };
        let flows = vehicles(&set);
        tests.push(TestSet {
            label: spec.label.clone(),
            free_flow: mean_free_flow(&net, &flows)?,
            flows,
        });
    }
    Ok(Prepared {
        training: vehicles(&training_set),
        net,
        tests,
    })
}

/// Per-intersection agents trained on the training flows in turn.
fn train_dqn(prep: &Prepared, cfg: &DqnConfig, episodes: usize, ep: &EpisodeConfig) -> Result<Vec<DqnAgent>> {
    let dim = state_dim(&prep.net)?;
    let agents = (0..prep.net.intersections.len())
        .map(|i| DqnAgent::new(dim, cfg.clone(), i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut ctl = DqnController::new(agents, true, None);
    for e in 0..episodes {
        let flow = &prep.training[e % prep.training.len()];
        let out = run_episode(SimWorld::new(prep.net.clone(), flow)?, ep, &mut ctl)?;
        log::debug!("dqn episode {e}: {:.1}s", out.travel.seconds);
    }
    Ok(ctl.agents)
}

fn episode_config(meta: &MetaConfig) -> EpisodeConfig {
    EpisodeConfig {
        horizon: meta.horizon,
        pressure: meta.pressure,
        ..EpisodeConfig::default()
    }
}

/// Runs one method under one seed on every test set.
fn run_cell(prep: &Prepared, cfg: &ExperimentConfig, method: Method, seed: u64) -> Result<Vec<Vec<EpisodeOutcome>>> {
    let meta = MetaConfig {
        seed,
        ..cfg.meta.clone()
    };
    let ep = episode_config(&meta);
    let net = &prep.net;
    let each = |f: &(dyn Fn(usize, &[VehicleSpec]) -> Result<EpisodeOutcome> + Sync)| {
        prep.tests
            .iter()
            .map(|t| {
                t.flows
                    .par_iter()
                    .enumerate()
                    .map(|(k, flow)| f(k, flow))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    };
    match method {
        Method::FixedTime => {
            each(&|_, flow| run_episode(SimWorld::new(net.clone(), flow)?, &ep, &mut FixedTime::default()))
        }
        Method::Random => each(&|k, flow| {
            let mut policy = RandomPolicy::new(seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
            run_episode(SimWorld::new(net.clone(), flow)?, &ep, &mut policy)
        }),
        Method::Dqn => {
            let dqn = DqnConfig {
                seed,
                ..cfg.dqn.clone()
            };
            let trained = train_dqn(prep, &dqn, cfg.dqn_episodes, &ep)?;
            each(&|_, flow| {
                let mut ctl = DqnController::new(trained.clone(), true, Some(meta.explore_eps));
                run_episode(SimWorld::new(net.clone(), flow)?, &ep, &mut ctl)
            })
        }
        Method::DqnMaml | Method::GeneraLight => {
            let trained = if method == Method::DqnMaml {
                maml_train(net, &prep.training, &meta)?
            } else {
                meta_train(net, &prep.training, &meta)?
            };
            prep.tests
                .iter()
                .map(|t| {
                    let res = meta_test(net, &t.flows, &trained.bank, trained.predictor.as_ref(), &meta)?;
                    Ok(res.into_iter().map(|r| r.episode).collect())
                })
                .collect()
        }
    }
}

/// The first test flow's episode of a (method, distribution, seed) cell.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub method: Method,
    pub label: String,
    pub seed: u64,
    pub episode: EpisodeOutcome,
}

impl RunTrace {
    pub fn stem(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
                .collect()
        };
        format!("{}_{}_seed{}", clean(self.method.name()), clean(&self.label), self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub records: Vec<ResultRecord>,
    pub traces: Vec<RunTrace>,
}

/// Runs every (method, seed) cell; a failing cell is recorded and the rest continue.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    run_prepared(&prep, cfg)
}

pub(crate) fn run_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<Experiment> {
    let cells: Vec<(Method, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<Vec<EpisodeOutcome>>>> =
        pool.install(|| cells.par_iter().map(|&(m, s)| run_cell(prep, cfg, m, s)).collect());

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for (&(method, seed), result) in cells.iter().zip(results) {
        match result {
            Ok(per_set) => {
                for (t, episodes) in prep.tests.iter().zip(per_set) {
                    let att = episodes.iter().map(|e| e.travel.seconds).collect();
                    records.push(ResultRecord::new(method, &t.label, seed, att, t.free_flow));
                    if let Some(first) = episodes.into_iter().next() {
                        traces.push(RunTrace {
                            method,
                            label: t.label.clone(),
                            seed,
                            episode: first,
                        });
                    }
                }
            }
            Err(e) => {
                log::error!("{method} seed {seed} failed: {e}");
                for t in &prep.tests {
                    records.push(ResultRecord::failed(method, &t.label, seed, t.free_flow, e.to_string()));
                }
            }
        }
    }
    for (cell, n) in failures(&records) {
        log::warn!("{cell}: {n} distribution(s) without results");
    }
    Ok(Experiment { records, traces })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `table.txt`/`table.csv`, `trace/*.csv` and `plots/*`.
pub fn write_outputs(dir: &Path, exp: &Experiment) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("results.csv"), &records_to_csv(&exp.records)?)?;
    if !exp.records.is_empty() {
        let table = report_table(&exp.records)?;
        write(&dir.join("table.txt"), &table.to_text())?;
        write(&dir.join("table.csv"), &table.to_csv()?)?;
    }
    let trace_dir = dir.join("trace");
    std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
    for t in &exp.traces {
        write(
            &trace_dir.join(format!("{}.csv", t.stem())),
            &t.episode.decisions_csv()?,
        )?;
        emit_plots(&dir.join("plots"), &t.stem(), &episode_series(&t.episode))?;
    }
    Ok(())
}
