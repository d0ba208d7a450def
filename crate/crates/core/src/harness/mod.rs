//! Datasets, experiment orchestration and persistence.

pub mod config;
pub mod datasets;
pub mod output;

use std::path::PathBuf;

use crate::error::Result;
use crate::flow::{run_algorithm, Algorithm, Monitor};
use crate::kernel::KernelSpec;
use crate::particles::ParticleSystem;
use crate::record::RunRecord;

pub use config::{AlgorithmEntry, ExperimentConfig, KernelConfig, RunPlan, Scenario};
pub use datasets::{
    gen_gaussian, gen_mixture, gen_three_rings, setup_student_teacher, stream_rng, StudentTeacher,
};

use datasets::{SOURCE_STREAM, TARGET_STREAM};

/// The shared inputs of every run of an experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub init: ParticleSystem,
    pub target: ParticleSystem,
    pub kernel: KernelSpec,
    pub validation_kernel: Option<KernelSpec>,
}

/// Samples the (init, target) pair and kernel for a configuration.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let seed = cfg.seed;
    let source_rng = || stream_rng(seed, SOURCE_STREAM);
    let target_rng = || stream_rng(seed, TARGET_STREAM);
    Ok(match cfg.scenario {
        Scenario::ThreeRings => {
            let r = &cfg.data.three_rings;
            Problem {
                target: gen_three_rings(cfg.m, r, seed)?,
                init: gen_gaussian(cfg.n, &r.source_mean, r.source_cov, &mut source_rng())?,
                kernel: cfg.kernel.build_static()?,
                validation_kernel: None,
            }
        }
        Scenario::GaussianShift => {
            let g = &cfg.data.gaussian_shift;
            Problem {
                target: gen_gaussian(cfg.m, &g.target_mean, g.target_cov, &mut target_rng())?,
                init: gen_gaussian(cfg.n, &g.source_mean, g.source_cov, &mut source_rng())?,
                kernel: cfg.kernel.build_static()?,
                validation_kernel: None,
            }
        }
        Scenario::GaussianMixture => {
            let g = &cfg.data.gaussian_mixture;
            Problem {
                target: gen_mixture(cfg.m, &g.centers, g.component_cov, &mut target_rng())?,
                init: gen_gaussian(cfg.n, &g.source_mean, g.source_cov, &mut source_rng())?,
                kernel: cfg.kernel.build_static()?,
                validation_kernel: None,
            }
        }
        Scenario::StudentTeacher => {
            let s = &cfg.data.student_teacher;
            let st = setup_student_teacher(&cfg.kernel, cfg.n, cfg.m, s.teacher_cov, s.student_cov, seed)?;
            Problem {
                init: st.student,
                target: st.teacher,
                kernel: st.kernel,
                validation_kernel: Some(st.validation_kernel),
            }
        }
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub name: String,
    pub algorithm: Algorithm,
    pub dir: PathBuf,
    pub record: RunRecord,
}

/// Runs every configured algorithm on one shared (init, target) pair and
/// writes a directory per run under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRun>> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], calling `on_done` after each run is written.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut on_done: impl FnMut(&ExperimentRun),
) -> Result<Vec<ExperimentRun>> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let echo = cfg.to_toml()?;
    let monitor = Monitor {
        eval_kernel: problem.validation_kernel.clone(),
        skip_w2: false,
    };
    let mut runs = Vec::new();
    for plan in cfg.plans()? {
        let record = run_algorithm(
            plan.algorithm,
            &problem.init,
            &problem.target,
            &problem.kernel,
            &plan.flow,
            &monitor,
        )?;
        let dir = output::write_run(
            &cfg.output_dir,
            &plan.name,
            plan.algorithm,
            &plan.flow,
            &echo,
            problem.target.len(),
            &record,
        )?;
        let run = ExperimentRun {
            name: plan.name,
            algorithm: plan.algorithm,
            dir,
            record,
        };
        on_done(&run);
        runs.push(run);
    }
    Ok(runs)
}
