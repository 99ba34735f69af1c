use rand::Rng as _;

use crate::flow::assignment;
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
/// Seeded k-means++ starts tried besides any caller-supplied start.
pub const RESTARTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub ssq: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest centroid, lowest index on ties.
pub fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(x, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

pub fn within_ssq(features: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    features
        .iter()
        .zip(assignment)
        .map(|(x, &j)| dist2(x, &centroids[j]))
        .sum()
}

fn member_means(features: &[Vec<f64>], assign: &[usize], centroids: &mut [Vec<f64>]) -> Vec<bool> {
    let d = features[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (x, &j) in features.iter().zip(assign) {
        counts[j] += 1;
        for (s, v) in sums[j].iter_mut().zip(x) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        }
    }
    counts.iter().map(|&c| c == 0).collect()
}

/// Lloyd iterations from the given centroids.
pub fn lloyd(features: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Clustering {
    let mut assign: Vec<usize> = features.iter().map(|x| nearest(x, &centroids)).collect();
    for _ in 0..MAX_ITERATIONS {
        let empty = member_means(features, &assign, &mut centroids);
        for (j, _) in empty.iter().enumerate().filter(|(_, e)| **e) {
            // Farthest flow from its own centroid, lowest index on ties.
            let mut far = 0;
            let mut far_d = -1.0;
            for (i, x) in features.iter().enumerate() {
                let d = dist2(x, &centroids[assign[i]]);
                if d > far_d {
                    far = i;
                    far_d = d;
                }
            }
            centroids[j] = features[far].clone();
        }
        let next: Vec<usize> = features.iter().map(|x| nearest(x, &centroids)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    member_means(features, &assign, &mut centroids);
    Clustering {
        ssq: within_ssq(features, &assign, &centroids),
        assignment: assign,
        centroids,
    }
}

fn plus_plus(features: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![features[rng.random_range(0..features.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = features
            .iter()
            .map(|x| centroids.iter().map(|c| dist2(x, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = d.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    idx = i;
                    break;
                }
                u -= di;
            }
            idx
        } else {
            0
        };
        centroids.push(features[pick].clone());
    }
    centroids
}

fn check(features: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("need at least one cluster"));
    }
    if features.len() < k {
        return Err(Error::invalid(format!(
            "{} flows cannot fill {k} clusters",
            features.len()
        )));
    }
    let d = features[0].len();
    if features
        .iter()
        .any(|f| f.len() != d || f.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::invalid("features must be finite and equally long"));
    }
    Ok(())
}

/// Best of several seeded k-means++ starts by within-cluster SSQ
/// (earliest start wins ties).
pub fn kmeans_recluster(features: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    check(features, k)?;
    let mut rng = rng::seeded(seed, rng::stream::KMEANS);
    let mut best: Option<Clustering> = None;
    for _ in 0..RESTARTS {
        let c = lloyd(features, plus_plus(features, k, &mut rng));
        if best.as_ref().is_none_or(|b| c.ssq < b.ssq) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Like [`kmeans_recluster`] but also starts from the centroids of
/// `previous`, and relabels the result to overlap `previous` as much as
/// possible so cluster identities persist.
pub fn kmeans_recluster_from(features: &[Vec<f64>], k: usize, previous: &[usize], seed: u64) -> Result<Clustering> {
    check(features, k)?;
    if previous.len() != features.len() || previous.iter().any(|&j| j >= k) {
        return Err(Error::invalid("previous mapping does not match the flows"));
    }
    let mut start = vec![vec![0.0; features[0].len()]; k];
    let empty = member_means(features, previous, &mut start);
    let mut best = if empty.iter().any(|&e| e) {
        kmeans_recluster(features, k, seed)?
    } else {
        let warm = lloyd(features, start);
        let cold = kmeans_recluster(features, k, seed)?;
        if cold.ssq < warm.ssq {
            cold
        } else {
            warm
        }
    };
    relabel(&mut best, previous, k)?;
    Ok(best)
}

fn relabel(c: &mut Clustering, previous: &[usize], k: usize) -> Result<()> {
    let mut overlap = vec![vec![0.0; k]; k];
    for (&new, &old) in c.assignment.iter().zip(previous) {
        overlap[new][old] -= 1.0;
    }
    let m = assignment(&overlap)?;
    let mut centroids = vec![Vec::new(); k];
    for (new, &old) in m.row_to_col.iter().enumerate() {
        centroids[old] = c.centroids[new].clone();
    }
    for j in c.assignment.iter_mut() {
        *j = m.row_to_col[*j];
    }
    c.centroids = centroids;
    Ok(())
}
