use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::ZScore;
use super::predictor::PredictorNet;
use crate::agent::{dqn_loss_and_grads, QNet, ReplayMemory, Transition};
use crate::diffcore::{Grads, ParamStore};
use crate::rng::Rng;
use crate::{Error, Result};

pub const BANK_FORMAT: &str = "tsclab-bank-v1";

/// Per-cluster initializations and everything needed to route a flow to one.
#[derive(Clone, Debug)]
pub struct ClusterBank {
    pub inits: Vec<ParamStore>,
    /// Cluster of each training flow.
    pub mapping: Vec<usize>,
    pub memories: Vec<ReplayMemory>,
    /// Normalized flow features of each cluster centre (empty before clustering).
    pub centroids: Vec<Vec<f64>>,
    /// Feature normalizer from the latest clustering.
    pub normalizer: Option<ZScore>,
}

impl ClusterBank {
    pub fn clusters(&self) -> usize {
        self.inits.len()
    }

    /// Flattened initializations, cluster by cluster.
    pub fn flat(&self) -> Vec<f64> {
        self.inits.iter().flat_map(|p| p.flat()).collect()
    }

    /// Writes `init_J.params`, `centroids.csv` and `manifest.json` into `dir`,
    /// plus `predictor.params` when given.
    pub fn save_dir(&self, dir: &Path, predictor: Option<&PredictorNet>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (j, p) in self.inits.iter().enumerate() {
            let name = format!("init_{j}.params");
            p.save(&dir.join(&name))?;
            files.push(name);
        }
        if let Some(pred) = predictor {
            pred.params.save(&dir.join("predictor.params"))?;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.centroids {
            w.write_record(c.iter().map(|x| format!("{x:?}")))
                .map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        let cpath = dir.join("centroids.csv");
        std::fs::write(&cpath, bytes).map_err(|e| Error::io(&cpath, e))?;
        let manifest = Manifest {
            format: BANK_FORMAT.into(),
            inits: files,
            mapping: self.mapping.clone(),
            normalizer: self.normalizer.clone(),
            predictor: predictor.is_some(),
        };
        let mpath = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
    }

    /// Loads a bank written by [`ClusterBank::save_dir`]; replay memories
    /// are training state and come back empty with `memory_capacity` each.
    pub fn load_dir(dir: &Path, memory_capacity: usize) -> Result<(Self, Option<PredictorNet>)> {
        let mpath = dir.join("manifest.json");
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(mpath.display().to_string(), e.to_string()))?;
        if manifest.format != BANK_FORMAT {
            return Err(Error::parse(
                mpath.display().to_string(),
                format!("unknown format `{}`", manifest.format),
            ));
        }
        let inits = manifest
            .inits
            .iter()
            .map(|f| ParamStore::load(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let cpath = dir.join("centroids.csv");
        let mut centroids = Vec::new();
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(&cpath)
            .map_err(|e| Error::parse(cpath.display().to_string(), e.to_string()))?;
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::parse(cpath.display().to_string(), e.to_string()))?;
            let row = rec
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(cpath.display().to_string(), e.to_string()))?;
            centroids.push(row);
        }
        let predictor = if manifest.predictor {
            Some(PredictorNet::from_params(ParamStore::load(
                &dir.join("predictor.params"),
            )?)?)
        } else {
            None
        };
        if manifest.mapping.iter().any(|&j| j >= inits.len()) {
            return Err(Error::parse(
                mpath.display().to_string(),
                "mapping names a missing cluster",
            ));
        }
        let k = inits.len();
        Ok((
            ClusterBank {
                inits,
                mapping: manifest.mapping,
                memories: (0..k).map(|_| ReplayMemory::new(memory_capacity.max(1))).collect(),
                centroids,
                normalizer: manifest.normalizer,
            },
            predictor,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    inits: Vec<String>,
    mapping: Vec<usize>,
    normalizer: Option<ZScore>,
    predictor: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OuterOutcome {
    Applied {
        loss: f64,
    },
    /// Too few post-adaptation transitions, or no adapted learners.
    Skipped,
}

/// Mean over adapted learners of the TD-loss gradient on one shared batch,
/// each evaluated at the learner's own online and target parameters.
pub fn outer_gradient(adapted: &[&QNet], batch: &[&Transition], gamma: f64) -> Result<(f64, Grads)> {
    let first = adapted.first().ok_or_else(|| Error::invalid("no adapted learners"))?;
    let mut total = Grads::zeros_like(&first.online);
    let mut loss = 0.0;
    for q in adapted {
        let (l, g) = dqn_loss_and_grads(&q.online, &q.target, batch, gamma)?;
        total.add_scaled(&g, 1.0)?;
        loss += l;
    }
    let n = adapted.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// First-order outer step on cluster `j`: `θ_0^j ← θ_0^j − β·g`, with `g`
/// the [`outer_gradient`] on a batch drawn from `M′_j`.
pub fn global_update(
    bank: &mut ClusterBank,
    j: usize,
    adapted: &[&QNet],
    beta: f64,
    batch_size: usize,
    gamma: f64,
    rng: &mut Rng,
) -> Result<OuterOutcome> {
    if j >= bank.clusters() {
        return Err(Error::invalid(format!("no cluster {j}")));
    }
    if adapted.is_empty() {
        return Ok(OuterOutcome::Skipped);
    }
    let Some(batch) = bank.memories[j].sample(batch_size, rng) else {
        return Ok(OuterOutcome::Skipped);
    };
    let (loss, g) = outer_gradient(adapted, &batch, gamma)?;
    if !g.is_finite() {
        return Err(Error::NonFinite(format!("outer gradient for cluster {j}")));
    }
    let init = &mut bank.inits[j];
    for (key, value) in init.iter_mut() {
        let gk = g.get(key)?;
        for (p, d) in value.data_mut().iter_mut().zip(gk.data()) {
            *p -= beta * d;
        }
    }
    Ok(OuterOutcome::Applied { loss })
}
