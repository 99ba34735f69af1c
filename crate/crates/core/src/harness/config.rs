use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::DqnConfig;
use crate::flowgen::WganConfig;
use crate::meta::MetaConfig;
use crate::trafficsim::LaneParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fixed-time")]
    FixedTime,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "dqn+maml")]
    DqnMaml,
    #[serde(rename = "generalight")]
    GeneraLight,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FixedTime,
        Method::Random,
        Method::Dqn,
        Method::DqnMaml,
        Method::GeneraLight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FixedTime => "fixed-time",
            Method::Random => "random",
            Method::Dqn => "dqn",
            Method::DqnMaml => "dqn+maml",
            Method::GeneraLight => "generalight",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::parse("method", format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RoadnetSpec {
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default)]
        lanes: LaneParams,
    },
    File {
        path: PathBuf,
    },
}

/// A test distribution: a flow-set directory, or flows generated from the
/// training set at distance `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSetSpec {
    pub label: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Flows to generate when `epsilon` is given.
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_count() -> usize {
    8
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_dqn_episodes() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub roadnet: RoadnetSpec,
    /// Flow-set directory of training flows.
    pub training: PathBuf,
    #[serde(default)]
    pub test: Vec<TestSetSpec>,
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    /// Training episodes of the plain DQN baseline.
    #[serde(default = "default_dqn_episodes")]
    pub dqn_episodes: usize,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default)]
    pub wgan: WganConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("experiment config", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.training);
        fix(&mut self.output);
        if let RoadnetSpec::File { path } = &mut self.roadnet {
            fix(path);
        }
        for t in &mut self.test {
            if let Some(p) = t.path.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("config needs at least one method and one seed"));
        }
        let mut labels = HashSet::new();
        for t in &self.test {
            if !labels.insert(t.label.as_str()) {
                return Err(Error::invalid(format!("duplicate test label `{}`", t.label)));
            }
            match (&t.path, t.epsilon) {
                (Some(p), None) => {
                    if !p.exists() {
                        return Err(Error::invalid(format!(
                            "test set `{}` not found at {}",
                            t.label,
                            p.display()
                        )));
                    }
                }
                (None, Some(e)) if e >= 0.0 && t.count > 0 => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "test set `{}` needs either a path or a non-negative epsilon with a positive count",
                        t.label
                    )))
                }
            }
        }
        if !self.training.exists() {
            return Err(Error::invalid(format!(
                "training set not found at {}",
                self.training.display()
            )));
        }
        if let RoadnetSpec::File { path } = &self.roadnet {
            if !path.exists() {
                return Err(Error::invalid(format!("roadnet not found at {}", path.display())));
            }
        }
        self.dqn.validate()?;
        self.meta.validate()?;
        if self.test.iter().any(|t| t.epsilon.is_some()) {
            self.wgan.validate()?;
        }
        Ok(())
    }
}
