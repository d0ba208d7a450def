//! Distances between particle clouds used to monitor flows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{sq_dist, KernelSpec};
use crate::particles::{check_same_dim, ParticleSystem};
use crate::witness::mmd2_estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmd2: f64,
    /// `None` when the clouds have different sizes.
    pub w2: Option<f64>,
    pub iteration: usize,
    pub wall_ms: f64,
}

/// Exact Wasserstein-2 distance between two uniform empirical measures of
/// equal size, √(min_σ (1/N) Σ_i ‖a_i − b_σ(i)‖²).
pub fn w2_exact(a: &ParticleSystem, b: &ParticleSystem) -> Result<f64> {
    check_same_dim(a, b)?;
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "exact W2 needs equal cardinalities, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let cost: Vec<f64> = a
        .points()
        .flat_map(|p| b.points().map(move |q| sq_dist(p, q)))
        .collect();
    let (_, total) = assignment(&cost, n);
    Ok((total.max(0.0) / n as f64).sqrt())
}

/// Minimum-cost perfect matching on a dense `n × n` cost matrix (row-major).
/// Returns the column assigned to each row and the total cost.
///
/// Shortest augmenting paths with row/column potentials, O(n³).
pub fn assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    const NONE: usize = usize::MAX;
    // 1-based internally; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_row = vec![NONE; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_row[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == NONE {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_col = vec![0; n];
    for j in 1..=n {
        row_col[col_row[j] - 1] = j - 1;
    }
    // Sum the chosen entries directly so the total carries no potential drift.
    let total = row_col
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (row_col, total)
}

/// MMD² (and W2 when sizes match) of `source` against `target`.
pub fn report(
    source: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    iteration: usize,
) -> Result<MetricReport> {
    let start = std::time::Instant::now();
    let mmd2 = mmd2_estimate(source, target, kernel)?;
    let w2 = if source.len() == target.len() {
        Some(w2_exact(source, target)?)
    } else {
        None
    };
    Ok(MetricReport {
        mmd2,
        w2,
        iteration,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
