//! Forward-Euler particle descent on DrMMD, with the MMD flow as baseline.
//!
//! One DrMMD iteration at state μ̂_n:
//!
//! 1. summarize the Gram matrices of (μ̂_n, π̂) and fit the witness at λ_{n−1};
//! 2. evaluate DrMMD(μ̂_n‖π̂) from the same shifted solve;
//! 3. rescale λ_n = clamp(λ₀ (DrMMD_n / DrMMD_0)^{1/(r+1)}, λ_min, λ_max) and
//!    refit the witness at λ_n if it moved;
//! 4. move every particle by −γ(1+λ_n)∇h*(y).

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::metrics::w2_exact;
use crate::particles::{check_same_dim, ParticleSystem};
use crate::record::{MetricRow, RunRecord, Snapshot};
use crate::regsolve::{check_lambda, GramCache, SolveMode};
use crate::witness::{mmd2_estimate, WitnessModel, WitnessProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed {
        value: f64,
    },
    Adaptive {
        initial: f64,
        regularity: f64,
        #[serde(default = "default_lambda_min")]
        min: f64,
        #[serde(default = "default_lambda_max")]
        max: f64,
    },
}

fn default_lambda_min() -> f64 {
    1e-3
}

fn default_lambda_max() -> f64 {
    1.0
}

impl LambdaMode {
    pub fn adaptive(initial: f64, regularity: f64) -> Self {
        LambdaMode::Adaptive {
            initial,
            regularity,
            min: default_lambda_min(),
            max: default_lambda_max(),
        }
    }

    pub fn initial(&self) -> f64 {
        match *self {
            LambdaMode::Fixed { value } => value,
            LambdaMode::Adaptive { initial, .. } => initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step_size: f64,
    pub n_max: usize,
    pub lambda: LambdaMode,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Noise and probe-resampling seed; experiment files set it from the
    /// top-level `seed`.
    #[serde(skip)]
    pub seed: u64,
    /// Cadence of the W2 and held-out MMD² columns; 0 evaluates only the
    /// first and last iterations.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_snapshot_every() -> usize {
    1000
}

fn default_eval_every() -> usize {
    1
}

impl FlowConfig {
    pub fn new(step_size: f64, n_max: usize, lambda: LambdaMode) -> Self {
        Self {
            step_size,
            n_max,
            lambda,
            noise_level: 0.0,
            snapshot_every: default_snapshot_every(),
            seed: 0,
            eval_every: default_eval_every(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be nonnegative, got {}", self.step_size));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise level must be nonnegative, got {}", self.noise_level));
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be positive".into());
        }
        match self.lambda {
            LambdaMode::Fixed { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return bad(format!("fixed λ must be positive, got {value}"));
                }
            }
            LambdaMode::Adaptive {
                initial,
                regularity,
                min,
                max,
            } => {
                if !(min > 0.0 && min <= initial && initial <= max && max.is_finite()) {
                    return bad(format!(
                        "adaptive λ needs 0 < λ_min ≤ λ₀ ≤ λ_max, got {min} / {initial} / {max}"
                    ));
                }
                if !(regularity > 0.0 && regularity.is_finite()) {
                    return bad(format!("regularity must be positive, got {regularity}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub lambda: f64,
    pub drmmd_0: f64,
    pub drmmd_n: f64,
}

/// λ for the next update. The proportionality constant of the λ ∝ DrMMD^{1/(r+1)}
/// rule is fixed by λ = λ₀ at the first iteration.
pub fn schedule_lambda(state: &ScheduleState, lambda: &LambdaMode) -> f64 {
    match *lambda {
        LambdaMode::Fixed { value } => value,
        LambdaMode::Adaptive {
            initial,
            regularity,
            min,
            max,
        } => {
            if state.drmmd_0.is_nan() || state.drmmd_0 <= 0.0 {
                return min;
            }
            let ratio = (state.drmmd_n / state.drmmd_0).max(0.0);
            (initial * ratio.powf(1.0 / (regularity + 1.0))).clamp(min, max)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[default]
    #[serde(rename = "drmmd")]
    DrMmd,
    #[serde(rename = "mmd")]
    MmdFlow,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DrMmd => "drmmd",
            Algorithm::MmdFlow => "mmd",
        }
    }
}

/// `y_i ← y_i − factor · ∇f(y_i + σ u_i)`, u_i ~ N(0, I), where `grad_at`
/// fills ∇f at a whole cloud.
fn descend<F>(
    state: &ParticleSystem,
    factor: f64,
    noise_level: f64,
    rng: &mut impl Rng,
    grad_at: F,
) -> Result<ParticleSystem>
where
    F: FnOnce(&ParticleSystem) -> Result<Vec<f64>>,
{
    let grads = if noise_level > 0.0 {
        let mut probe = state.clone();
        for v in probe.as_flat_mut() {
            let u: f64 = rng.sample(StandardNormal);
            *v += noise_level * u;
        }
        grad_at(&probe)?
    } else {
        grad_at(state)?
    };
    let d = state.dim();
    let mut next = state.clone();
    next.as_flat_mut()
        .par_iter_mut()
        .zip(grads.par_iter())
        .for_each(|(y, g)| *y -= factor * g);
    if let Some(pos) = next.as_flat().iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "non-finite update for particle {}",
            pos / d
        )));
    }
    next.generation = state.generation + 1;
    Ok(next)
}

/// Moves each particle by −γ(1+λ)∇h*, with h* already fitted to `state`.
pub fn apply_witness_step(
    state: &ParticleSystem,
    model: &WitnessModel,
    step_size: f64,
    noise_level: f64,
    rng: &mut impl Rng,
) -> Result<ParticleSystem> {
    let factor = step_size * (1.0 + model.lambda());
    descend(state, factor, noise_level, rng, |at| model.grad_all(at))
}

/// One DrMMD descent step at regularization `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn step(
    state: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    cache: &GramCache,
    lambda: f64,
    cfg: &FlowConfig,
    rng: &mut impl Rng,
) -> Result<ParticleSystem> {
    check_lambda(lambda)?;
    let model = WitnessProblem::new(state, target, kernel, cache, false)?
        .witness(state, target, kernel, cache, lambda)?;
    apply_witness_step(state, &model, cfg.step_size, cfg.noise_level, rng)
}

/// ∇(m_μ̂ − m_π̂) at every point of `at`, with μ̂ = `state`.
pub fn mmd_drift(
    state: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    at: &ParticleSystem,
) -> Result<Vec<f64>> {
    check_same_dim(state, target)?;
    check_same_dim(state, at)?;
    let n = state.len();
    let m = target.len();
    let d = state.dim();
    let mut centers = Vec::with_capacity((n + m) * d);
    centers.extend_from_slice(state.as_flat());
    centers.extend_from_slice(target.as_flat());
    let centers = ParticleSystem::from_flat(centers, d)?;
    let weights: Vec<f64> = std::iter::repeat_n(1.0 / n as f64, n)
        .chain(std::iter::repeat_n(-1.0 / m as f64, m))
        .collect();
    let sections = kernel.section_sum(centers, weights);
    let mut out = vec![0.0; at.as_flat().len()];
    out.par_chunks_exact_mut(d)
        .zip(at.as_flat().par_chunks_exact(d))
        .for_each(|(g, z)| sections.add_grad(z, 1.0, g));
    Ok(out)
}

/// One forward-Euler step of the MMD flow, `y ← y − γ ∇(m_μ̂ − m_π̂)(y)`.
pub fn step_mmd_baseline(
    state: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    step_size: f64,
    noise_level: f64,
    rng: &mut impl Rng,
) -> Result<ParticleSystem> {
    descend(state, step_size, noise_level, rng, |at| {
        mmd_drift(state, target, kernel, at)
    })
}

/// Optional monitoring beyond the flow's own quantities.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    /// Kernel for the held-out MMD² column.
    pub eval_kernel: Option<KernelSpec>,
    /// Skip the W2 column entirely.
    pub skip_w2: bool,
}

/// Runs DrMMD descent for `cfg.n_max` iterations.
pub fn run(
    init: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    cfg: &FlowConfig,
) -> Result<RunRecord> {
    run_algorithm(Algorithm::DrMmd, init, target, kernel, cfg, &Monitor::default())
}

pub fn run_algorithm(
    algorithm: Algorithm,
    init: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    cfg: &FlowConfig,
    monitor: &Monitor,
) -> Result<RunRecord> {
    cfg.validate()?;
    check_same_dim(init, target)?;
    if let Some(d) = kernel.required_dim() {
        if d != init.dim() {
            return Err(Error::input(format!(
                "kernel expects points of dimension {d}, particles have {}",
                init.dim()
            )));
        }
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut kernel_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    kernel_rng.set_stream(1);
    let mut kernel = kernel.clone();
    let resampled = kernel.is_resampled();

    let mode = match cfg.lambda {
        LambdaMode::Fixed { value } => SolveMode::FixedCholesky(value),
        LambdaMode::Adaptive { .. } => SolveMode::Eigen,
    };
    let mut factorizations = 0;
    let mut cache = None;

    let mut state = init.clone();
    state.generation = 0;
    let mut rows = Vec::with_capacity(cfg.n_max + 1);
    let mut snapshots = Vec::new();
    let mut lambda = cfg.lambda.initial();
    let mut drmmd_0 = 0.0;

    for n in 0..=cfg.n_max {
        let started = Instant::now();
        let annotate = |e: Error| e.at_iteration(n);

        if resampled {
            kernel.resample(&mut kernel_rng);
        }
        let (row_lambda, drmmd, mmd2, next) = match algorithm {
            Algorithm::DrMmd => {
                if cache.is_none() || resampled {
                    cache = Some(GramCache::for_target(&kernel, target, mode).map_err(annotate)?);
                    factorizations += 1;
                }
                let cache = cache.as_ref().expect("cache built above");
                let problem =
                    WitnessProblem::new(&state, target, &kernel, cache, true).map_err(annotate)?;
                let (mut model, drmmd) = problem
                    .witness_and_drmmd(&state, target, &kernel, cache, lambda)
                    .map_err(annotate)?;
                if n == 0 {
                    drmmd_0 = drmmd;
                }
                let scheduled = schedule_lambda(
                    &ScheduleState {
                        lambda,
                        drmmd_0,
                        drmmd_n: drmmd,
                    },
                    &cfg.lambda,
                );
                if scheduled != lambda {
                    model = problem
                        .witness(&state, target, &kernel, cache, scheduled)
                        .map_err(annotate)?;
                    lambda = scheduled;
                }
                let mmd2 = problem.mmd2().expect("source summary requested");
                let next = if n < cfg.n_max {
                    Some(
                        apply_witness_step(&state, &model, cfg.step_size, cfg.noise_level, &mut noise_rng)
                            .map_err(annotate)?,
                    )
                } else {
                    None
                };
                (Some(lambda), Some(drmmd), mmd2, next)
            }
            Algorithm::MmdFlow => {
                let mmd2 = mmd2_estimate(&state, target, &kernel).map_err(annotate)?;
                let next = if n < cfg.n_max {
                    Some(
                        step_mmd_baseline(
                            &state,
                            target,
                            &kernel,
                            cfg.step_size,
                            cfg.noise_level,
                            &mut noise_rng,
                        )
                        .map_err(annotate)?,
                    )
                } else {
                    None
                };
                (None, None, mmd2, next)
            }
        };
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;

        let evaluate = n == 0
            || n == cfg.n_max
            || (cfg.eval_every > 0 && n % cfg.eval_every == 0);
        let w2 = if evaluate && !monitor.skip_w2 && state.len() == target.len() {
            Some(w2_exact(&state, target).map_err(annotate)?)
        } else {
            None
        };
        let val_mmd2 = match (&monitor.eval_kernel, evaluate) {
            (Some(k), true) => Some(mmd2_estimate(&state, target, k).map_err(annotate)?),
            _ => None,
        };
        rows.push(MetricRow {
            iteration: n,
            lambda: row_lambda,
            drmmd,
            mmd2,
            w2,
            val_mmd2,
            wall_ms,
        });
        if n % cfg.snapshot_every == 0 || n == cfg.n_max {
            snapshots.push(Snapshot {
                iteration: n,
                positions: state.clone(),
            });
        }
        if let Some(next) = next {
            state = next;
        }
    }

    Ok(RunRecord {
        rows,
        snapshots,
        final_state: state,
        factorizations,
        seed: cfg.seed,
    })
}
