use super::{normalize, FlowSet};
use crate::{Error, Result};

/// Optimal one-to-one matching of a square cost matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `row_to_col[i]` is the column matched with row `i`.
    pub row_to_col: Vec<usize>,
    /// Sum of matched costs, accumulated in row order.
    pub cost: f64,
}

/// Minimum-cost perfect matching (Hungarian method with potentials, O(n³)).
pub fn assignment(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::shape("assignment needs a square cost matrix"));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    if n == 0 {
        return Ok(Assignment {
            row_to_col: vec![],
            cost: 0.0,
        });
    }
    // 1-based potentials u (rows), v (cols); col_match[j] = row matched to col j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[col_match[j] - 1] = j - 1;
    }
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(Assignment {
        row_to_col,
        cost: total,
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// W-1 distance between two equally sized empirical flow distributions, with
/// Euclidean ground cost between unit-mass flow matrices.
pub fn exact_wasserstein(a: &FlowSet, b: &FlowSet) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "flow sets must have equal size ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("flow sets are empty"));
    }
    if let (Some(x), Some(y)) = (a.members().first(), b.members().first()) {
        if x.num_routes() != y.num_routes() || x.bins() != y.bins() {
            return Err(Error::shape("flow sets have different matrix shapes"));
        }
    }
    let na: Vec<Vec<f64>> = a.members().iter().map(normalize).collect::<Result<_>>()?;
    let nb: Vec<Vec<f64>> = b.members().iter().map(normalize).collect::<Result<_>>()?;
    let cost: Vec<Vec<f64>> = na.iter().map(|x| nb.iter().map(|y| euclid(x, y)).collect()).collect();
    Ok(assignment(&cost)?.cost / a.len() as f64)
}
