use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

use super::{FlowMatrix, FlowSet, Provenance};
use crate::rng::{seeded, stream, Rng};
use crate::{Error, Result};

/// Per-route count model for synthetic flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Synthetic {
    Poisson { lambda: f64 },
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, sd: f64 },
}

/// Draws one route's count series; negative draws clamp to 0, values are rounded.
pub fn synthesize_row(model: Synthetic, bins: usize, rng: &mut Rng) -> Result<Vec<u64>> {
    let to_count = |x: f64| x.max(0.0).round() as u64;
    match model {
        Synthetic::Poisson { lambda } => {
            if lambda < 0.0 || !lambda.is_finite() {
                return Err(Error::invalid(format!("Poisson rate {lambda}")));
            }
            if lambda == 0.0 {
                return Ok(vec![0; bins]);
            }
            let d = Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?;
            Ok((0..bins).map(|_| to_count(d.sample(rng))).collect())
        }
        Synthetic::Uniform { low, high } => {
            if !(low <= high) {
                return Err(Error::invalid(format!("uniform range [{low}, {high}]")));
            }
            Ok((0..bins)
                .map(|_| to_count(if low == high { low } else { rng.random_range(low..high) }))
                .collect())
        }
        Synthetic::Gaussian { mean, sd } => {
            let d = Normal::new(mean, sd).map_err(|e| Error::invalid(e.to_string()))?;
            Ok((0..bins).map(|_| to_count(d.sample(rng))).collect())
        }
    }
}

/// Copy with rows `i` and `j` exchanged: route `i` now carries what `j` did.
pub fn swap_routes(flow: &FlowMatrix, i: usize, j: usize) -> Result<FlowMatrix> {
    if i >= flow.num_routes() || j >= flow.num_routes() {
        return Err(Error::invalid("route index out of range"));
    }
    let mut out = flow.clone();
    out.counts_mut().swap(i, j);
    Ok(out)
}

/// Mean and standard deviation of per-bin counts, per route, pooled over flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouteStats {
    pub mean: f64,
    pub sd: f64,
}

pub fn fit_route_stats(flows: &[FlowMatrix]) -> Vec<RouteStats> {
    let Some(first) = flows.first() else { return vec![] };
    (0..first.num_routes())
        .map(|r| {
            let vals: Vec<f64> = flows
                .iter()
                .flat_map(|f| f.counts()[r].iter().map(|&c| c as f64))
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            RouteStats { mean, sd: var.sqrt() }
        })
        .collect()
}

fn models(stats: &RouteStats) -> [Synthetic; 3] {
    let half_width = 3f64.sqrt() * stats.sd;
    [
        Synthetic::Poisson { lambda: stats.mean },
        Synthetic::Uniform {
            low: (stats.mean - half_width).max(0.0),
            high: stats.mean + half_width,
        },
        Synthetic::Gaussian {
            mean: stats.mean,
            sd: stats.sd,
        },
    ]
}

/// Real flows followed by route-shuffled copies and Poisson / uniform /
/// Gaussian synthetic flows (fitted to the real per-route statistics), in
/// that rotation, until `n_target` members.
pub fn augment(real: &FlowSet, n_target: usize, seed: u64) -> Result<FlowSet> {
    let reals = real.members();
    let Some(template) = reals.first() else {
        return Err(Error::invalid("augmentation needs at least one real flow"));
    };
    let mut rng = seeded(seed, stream::AUGMENT);
    let stats = fit_route_stats(reals);
    let mut out: Vec<FlowMatrix> = reals.iter().take(n_target).cloned().collect();
    let mut k = 0usize;
    while out.len() < n_target {
        let member = match k % 4 {
            0 => {
                let base = &reals[rng.random_range(0..reals.len())];
                let mut order: Vec<usize> = (0..base.num_routes()).collect();
                order.shuffle(&mut rng);
                let counts = order.iter().map(|&r| base.counts()[r].clone()).collect();
                FlowMatrix::new(counts, base.routes().to_vec(), base.interval())?
            }
            kind => {
                let counts = stats
                    .iter()
                    .map(|s| synthesize_row(models(s)[kind - 1], template.bins(), &mut rng))
                    .collect::<Result<_>>()?;
                FlowMatrix::new(counts, template.routes().to_vec(), template.interval())?
            }
        };
        out.push(member);
        k += 1;
    }
    FlowSet::new(out, Provenance::Augmented)
}
