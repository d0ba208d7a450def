//! (De)-regularized maximum mean discrepancy (DrMMD) particle descent.
//!
//! DrMMD between a source μ and a target π is
//! `(1+λ) ‖(Σ_π + λI)^{-1/2} (m_μ − m_π)‖²_H`: for large λ it behaves like
//! MMD², for small λ like the χ² divergence. Descending it with particles
//! transports a source cloud toward a target known only through samples; with
//! empirical measures every quantity reduces to Gram-matrix algebra.
//!
//! * [`kernel`]: Gaussian, inverse multiquadric and neural-feature kernels.
//! * [`regsolve`]: one-time factorization of the target Gram matrix.
//! * [`witness`]: the witness h*, its gradient, DrMMD and MMD² estimators.
//! * [`flow`]: forward-Euler descent with adaptive λ, plus the MMD flow.
//! * [`metrics`]: exact W2 and metric reports.
//! * [`harness`]: datasets, experiment configs and run directories.
//!
//! ```
//! use drmmd::{flow, FlowConfig, KernelSpec, LambdaMode, ParticleSystem};
//!
//! let target = ParticleSystem::from_rows(&[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]]).unwrap();
//! let init = target.translated(&[1.0, 1.0]).unwrap();
//! let kernel = KernelSpec::gaussian(0.5).unwrap();
//! let cfg = FlowConfig::new(0.05, 50, LambdaMode::adaptive(0.1, 0.5));
//! let record = flow::run(&init, &target, &kernel, &cfg).unwrap();
//! assert!(record.last().mmd2 < record.first().mmd2);
//! ```

pub mod error;
pub mod flow;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod particles;
pub mod record;
pub mod regsolve;
pub mod witness;

pub use error::{Error, Result};
pub use flow::{
    run, run_algorithm, schedule_lambda, step, step_mmd_baseline, Algorithm, FlowConfig,
    LambdaMode, Monitor, ScheduleState,
};
pub use kernel::{GramMatrix, KernelFamily, KernelSpec, NeuralFeatureNet};
pub use metrics::{report, w2_exact, MetricReport};
pub use particles::ParticleSystem;
pub use record::{MetricRow, RunRecord, Snapshot};
pub use regsolve::{GramCache, SolveMode};
pub use witness::{
    drmmd_estimate, drmmd_from_witness, eval_witness, fit_witness, grad_witness, mmd2_estimate,
    WitnessModel, WitnessProblem,
};
