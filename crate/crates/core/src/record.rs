use serde::{Deserialize, Serialize};

use crate::particles::ParticleSystem;

/// One row of the per-iteration metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub iteration: usize,
    /// Regularization used for the update; `None` for the MMD baseline.
    pub lambda: Option<f64>,
    pub drmmd: Option<f64>,
    /// MMD² against the target under the flow kernel.
    pub mmd2: f64,
    /// Exact W2 against the target, on evaluation iterations when sizes match.
    pub w2: Option<f64>,
    /// MMD² under a held-out evaluation kernel, when one is configured.
    pub val_mmd2: Option<f64>,
    /// Time spent in the algorithm proper (fit, schedule, update).
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub positions: ParticleSystem,
}

/// Everything a flow run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<MetricRow>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: ParticleSystem,
    /// Gram factorizations performed over the run.
    pub factorizations: usize,
    pub seed: u64,
}

impl RunRecord {
    pub fn first(&self) -> &MetricRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &MetricRow {
        self.rows.last().expect("a run records at least one row")
    }
}
