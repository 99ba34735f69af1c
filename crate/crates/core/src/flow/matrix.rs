use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{derived, stream};
use crate::trafficsim::VehicleSpec;
use crate::{Error, Result};

/// Vehicle counts per route (rows) and time bin (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowMatrix {
    counts: Vec<Vec<u64>>,
    routes: Vec<Vec<String>>,
    interval: u64,
}

impl FlowMatrix {
    pub fn new(counts: Vec<Vec<u64>>, routes: Vec<Vec<String>>, interval: u64) -> Result<Self> {
        if counts.is_empty() || counts.len() != routes.len() {
            return Err(Error::invalid(format!(
                "{} count rows for {} routes",
                counts.len(),
                routes.len()
            )));
        }
        let bins = counts[0].len();
        if bins == 0 || counts.iter().any(|r| r.len() != bins) {
            return Err(Error::invalid("count rows must be non-empty and equally long"));
        }
        if interval == 0 {
            return Err(Error::invalid("interval must be positive"));
        }
        Ok(FlowMatrix {
            counts,
            routes,
            interval,
        })
    }

    pub fn zeros(routes: Vec<Vec<String>>, bins: usize, interval: u64) -> Result<Self> {
        Self::new(vec![vec![0; bins]; routes.len()], routes, interval)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.counts
    }

    pub fn routes(&self) -> &[Vec<String>] {
        &self.routes
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn num_routes(&self) -> usize {
        self.counts.len()
    }

    pub fn bins(&self) -> usize {
        self.counts[0].len()
    }

    /// Seconds covered by the departure window.
    pub fn horizon(&self) -> u64 {
        self.bins() as u64 * self.interval
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Row-major counts as reals.
    pub fn as_reals(&self) -> Vec<f64> {
        self.counts.iter().flatten().map(|&c| c as f64).collect()
    }

    pub fn same_layout(&self, other: &FlowMatrix) -> bool {
        self.routes == other.routes && self.bins() == other.bins() && self.interval == other.interval
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Real,
    Augmented,
    Generated { epsilon: f64 },
}

/// Flow samples regarded as an empirical distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSet {
    members: Vec<FlowMatrix>,
    provenance: Provenance,
}

impl FlowSet {
    pub fn new(members: Vec<FlowMatrix>, provenance: Provenance) -> Result<Self> {
        if let Some(first) = members.first() {
            if members.iter().any(|m| !m.same_layout(first)) {
                return Err(Error::invalid("flow set members differ in routes, bins or interval"));
            }
        }
        Ok(FlowSet { members, provenance })
    }

    pub fn members(&self) -> &[FlowMatrix] {
        &self.members
    }

    pub fn into_members(self) -> Vec<FlowMatrix> {
        self.members
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Mean of per-member vehicle totals.
    pub fn mean_total(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members.iter().map(|m| m.total() as f64).sum::<f64>() / self.members.len() as f64
    }
}

/// Counts vehicles per (route, `floor(depart / interval)`).
pub fn flow_matrix(vehicles: &[VehicleSpec], routes: &[Vec<String>], bins: usize, interval: u64) -> Result<FlowMatrix> {
    let mut m = FlowMatrix::zeros(routes.to_vec(), bins, interval)?;
    for v in vehicles {
        let r = routes
            .iter()
            .position(|route| *route == v.route)
            .ok_or_else(|| Error::invalid(format!("vehicle {} has an unknown route", v.id)))?;
        let t = (v.depart / interval) as usize;
        if t >= bins {
            return Err(Error::invalid(format!(
                "vehicle {} departs at {} beyond the {}-second horizon",
                v.id,
                v.depart,
                bins as u64 * interval
            )));
        }
        m.counts[r][t] += 1;
    }
    Ok(m)
}

/// Expands counts into vehicles with seeded uniform departures inside each bin.
/// Vehicles are ordered by departure and numbered from 0.
pub fn matrix_to_vehicles(flow: &FlowMatrix, seed: u64) -> Vec<VehicleSpec> {
    let mut rng = derived(seed, stream::FLOW, 0);
    let mut drawn = Vec::with_capacity(flow.total() as usize);
    for (r, row) in flow.counts.iter().enumerate() {
        for (t, &n) in row.iter().enumerate() {
            let start = t as u64 * flow.interval;
            for _ in 0..n {
                drawn.push((start + rng.random_range(0..flow.interval), r));
            }
        }
    }
    drawn.sort_unstable();
    drawn
        .into_iter()
        .enumerate()
        .map(|(id, (depart, r))| VehicleSpec {
            id,
            route: flow.routes[r].clone(),
            depart,
        })
        .collect()
}

/// Counts divided by their total, row-major.
pub fn normalize(flow: &FlowMatrix) -> Result<Vec<f64>> {
    let total = flow.total();
    if total == 0 {
        return Err(Error::invalid("cannot normalize a flow without vehicles"));
    }
    let t = total as f64;
    Ok(flow.counts.iter().flatten().map(|&c| c as f64 / t).collect())
}
