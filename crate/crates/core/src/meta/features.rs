use serde::{Deserialize, Serialize};

use crate::trafficsim::NUM_PHASES;
use crate::{Error, Result};

/// Streaming summaries of one flow's experience.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCollector {
    count: u64,
    state_mean: Vec<f64>,
    state_m2: Vec<f64>,
    actions: [u64; NUM_PHASES],
    reward_mean: f64,
    travel_sum: f64,
    travel_count: u64,
}

impl FeatureCollector {
    pub fn new(state_dim: usize) -> Self {
        FeatureCollector {
            count: 0,
            state_mean: vec![0.0; state_dim],
            state_m2: vec![0.0; state_dim],
            actions: [0; NUM_PHASES],
            reward_mean: 0.0,
            travel_sum: 0.0,
            travel_count: 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_mean.len()
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, state: &[f64], action: usize, reward: f64) -> Result<()> {
        if state.len() != self.state_dim() || action >= NUM_PHASES {
            return Err(Error::shape("sample does not match the collector"));
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.state_mean.iter_mut().zip(&mut self.state_m2).zip(state) {
            let d = x - *m;
            *m += d / n;
            *m2 += d * (x - *m);
        }
        self.actions[action] += 1;
        self.reward_mean += (reward - self.reward_mean) / n;
        Ok(())
    }

    /// Records an episode's average travel time at the horizon.
    pub fn push_travel_time(&mut self, seconds: f64) {
        self.travel_sum += seconds;
        self.travel_count += 1;
    }

    /// Folds another collector's samples into this one.
    pub fn merge(&mut self, other: &FeatureCollector) -> Result<()> {
        if other.state_dim() != self.state_dim() {
            return Err(Error::shape("collectors differ in state size"));
        }
        if other.count > 0 {
            let (na, nb) = (self.count as f64, other.count as f64);
            let n = na + nb;
            for i in 0..self.state_dim() {
                let d = other.state_mean[i] - self.state_mean[i];
                self.state_mean[i] += d * nb / n;
                self.state_m2[i] += other.state_m2[i] + d * d * na * nb / n;
            }
            self.reward_mean += (other.reward_mean - self.reward_mean) * nb / n;
            for (a, b) in self.actions.iter_mut().zip(other.actions) {
                *a += b;
            }
            self.count += other.count;
        }
        self.travel_sum += other.travel_sum;
        self.travel_count += other.travel_count;
        Ok(())
    }

    pub fn state_mean(&self) -> &[f64] {
        &self.state_mean
    }

    /// Population standard deviation per state entry.
    pub fn state_std(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.state_m2.iter().map(|m2| (m2 / n).max(0.0).sqrt()).collect()
    }

    pub fn action_histogram(&self) -> [f64; NUM_PHASES] {
        let mut h = [0.0; NUM_PHASES];
        if self.count > 0 {
            for (o, &c) in h.iter_mut().zip(&self.actions) {
                *o = c as f64 / self.count as f64;
            }
        }
        h
    }

    pub fn reward_mean(&self) -> f64 {
        self.reward_mean
    }

    pub fn travel_time(&self) -> Option<f64> {
        (self.travel_count > 0).then(|| self.travel_sum / self.travel_count as f64)
    }

    /// `[S-mean | S-std | A-hist | R-mean]`, the predictor's input.
    pub fn experience_features(&self) -> Vec<f64> {
        let mut v = self.state_mean.clone();
        v.extend(self.state_std());
        v.extend(self.action_histogram());
        v.push(self.reward_mean);
        v
    }

    /// Experience features followed by the travel time (0 if none recorded).
    pub fn flow_features(&self) -> Vec<f64> {
        let mut v = self.experience_features();
        v.push(self.travel_time().unwrap_or(0.0));
        v
    }
}

/// Collector over a finished `(state, action, reward)` trace.
pub fn collect_features(trace: &[(Vec<f64>, usize, f64)]) -> Result<FeatureCollector> {
    let first = trace.first().ok_or_else(|| Error::invalid("empty trace"))?;
    let mut c = FeatureCollector::new(first.0.len());
    for (s, a, r) in trace {
        c.push(s, *a, *r)?;
    }
    Ok(c)
}

/// Per-dimension z-score fitted on a population of feature vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl ZScore {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("no feature rows"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape("feature rows differ in length"));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(ZScore { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes the leading `row.len()` dimensions.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() > self.dim() {
            return Err(Error::shape("feature row longer than the normalizer"));
        }
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }
}
