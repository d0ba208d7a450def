//! Experiment configuration files (TOML).
//!
//! ```toml
//! schema_version = 1
//! scenario = "three_rings"
//! n = 300
//! m = 300
//! seed = 0
//! output_dir = "runs/three_rings"
//!
//! [kernel]
//! family = "gaussian"
//! bandwidth = 0.3
//!
//! [flow]
//! step_size = 1e-3
//! n_max = 100000
//! snapshot_every = 1000
//! eval_every = 100
//! lambda = { mode = "adaptive", initial = 0.1, regularity = 0.5, min = 1e-3, max = 1.0 }
//!
//! [[algorithms]]
//! kind = "drmmd"
//! regularity_sweep = [0.1, 0.5, 1.0]
//!
//! [[algorithms]]
//! kind = "mmd"
//! step_size = 1e-2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Algorithm, FlowConfig, LambdaMode};
use crate::kernel::KernelSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ThreeRings,
    GaussianShift,
    GaussianMixture,
    StudentTeacher,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "three_rings" | "three-rings" => Ok(Scenario::ThreeRings),
            "gaussian_shift" | "gaussian-shift" => Ok(Scenario::GaussianShift),
            "gaussian_mixture" | "gaussian-mixture" => Ok(Scenario::GaussianMixture),
            "student_teacher" | "student-teacher" => Ok(Scenario::StudentTeacher),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        bandwidth: f64,
    },
    Imq {
        #[serde(default = "one")]
        bandwidth: f64,
        #[serde(default = "one")]
        offset: f64,
    },
    /// Network feature kernel; probe inputs are drawn uniformly on the unit
    /// sphere in ℝ^input_dim.
    NeuralFeature {
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default = "default_input_dim")]
        input_dim: usize,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_pool")]
        train_size: usize,
        #[serde(default = "default_pool")]
        val_size: usize,
    },
}

fn one() -> f64 {
    1.0
}
fn default_hidden() -> usize {
    3
}
fn default_input_dim() -> usize {
    50
}
fn default_batch() -> usize {
    100
}
fn default_pool() -> usize {
    1000
}

impl KernelConfig {
    /// Builds a static kernel. Neural-feature kernels need sampled probe data
    /// and are built by the student/teacher setup instead.
    pub fn build_static(&self) -> Result<KernelSpec> {
        match *self {
            KernelConfig::Gaussian { bandwidth } => KernelSpec::gaussian(bandwidth),
            KernelConfig::Imq { bandwidth, offset } => {
                KernelSpec::inverse_multiquadric(bandwidth, offset)
            }
            KernelConfig::NeuralFeature { .. } => Err(Error::Config(
                "the neural_feature kernel is only available in the student_teacher scenario".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub kind: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Runs one adaptive DrMMD flow per listed regularity r.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularity_sweep: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingsConfig {
    pub radius: f64,
    pub centers: Vec<[f64; 2]>,
    pub noise: f64,
    pub source_mean: [f64; 2],
    pub source_cov: f64,
}

impl Default for RingsConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            centers: vec![[0.0, 0.0], [2.5, 0.0], [5.0, 0.0]],
            noise: 0.02,
            source_mean: [0.0, 1.2],
            source_cov: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianShiftConfig {
    pub target_mean: Vec<f64>,
    pub target_cov: f64,
    pub source_mean: Vec<f64>,
    pub source_cov: f64,
}

impl Default for GaussianShiftConfig {
    fn default() -> Self {
        Self {
            target_mean: vec![0.0, 0.0],
            target_cov: 1.0,
            source_mean: vec![3.0, 3.0],
            source_cov: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub centers: Vec<Vec<f64>>,
    pub component_cov: f64,
    pub source_mean: Vec<f64>,
    pub source_cov: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            centers: vec![
                vec![-2.0, -2.0],
                vec![-2.0, 2.0],
                vec![2.0, -2.0],
                vec![2.0, 2.0],
            ],
            component_cov: 0.1,
            source_mean: vec![0.0, 0.0],
            source_cov: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentTeacherConfig {
    pub teacher_cov: f64,
    pub student_cov: f64,
}

impl Default for StudentTeacherConfig {
    fn default() -> Self {
        Self {
            teacher_cov: 1.0,
            student_cov: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub three_rings: RingsConfig,
    pub gaussian_shift: GaussianShiftConfig,
    pub gaussian_mixture: MixtureConfig,
    pub student_teacher: StudentTeacherConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    /// Number of source particles.
    pub n: usize,
    /// Number of target samples.
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub kernel: KernelConfig,
    pub flow: FlowConfig,
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default)]
    pub data: DataConfig,
}

/// One fully resolved flow run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub name: String,
    pub algorithm: Algorithm,
    pub flow: FlowConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be at least 1".into()));
        }
        if self.scenario == Scenario::ThreeRings && self.m < 3 {
            return Err(Error::Config("three_rings needs at least 3 target samples".into()));
        }
        match (&self.kernel, self.scenario) {
            (KernelConfig::NeuralFeature { .. }, Scenario::StudentTeacher) => {}
            (_, Scenario::StudentTeacher) => {
                return Err(Error::Config(
                    "student_teacher requires the neural_feature kernel".into(),
                ))
            }
            (k, _) => {
                k.build_static().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        if let KernelConfig::NeuralFeature {
            hidden,
            input_dim,
            batch_size,
            train_size,
            val_size,
        } = self.kernel
        {
            if hidden == 0 || input_dim == 0 || batch_size == 0 || val_size == 0 {
                return Err(Error::Config("neural_feature sizes must be positive".into()));
            }
            if batch_size > train_size {
                return Err(Error::Config(format!(
                    "batch_size {batch_size} exceeds train_size {train_size}"
                )));
            }
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm must be configured".into()));
        }
        for plan in self.plans()? {
            plan.flow
                .validate()
                .map_err(|e| Error::Config(format!("run `{}`: {e}", plan.name)))?;
        }
        Ok(())
    }

    /// Expands algorithm entries, overrides and regularity sweeps.
    pub fn plans(&self) -> Result<Vec<RunPlan>> {
        let mut plans = Vec::new();
        for entry in &self.algorithms {
            let mut flow = self.flow.clone();
            flow.seed = self.seed;
            if let Some(s) = entry.step_size {
                flow.step_size = s;
            }
            if let Some(l) = entry.lambda {
                flow.lambda = l;
            }
            if let Some(s) = entry.noise_level {
                flow.noise_level = s;
            }
            if let Some(n) = entry.n_max {
                flow.n_max = n;
            }
            let base = entry
                .name
                .clone()
                .unwrap_or_else(|| entry.kind.name().to_string());
            match (&entry.regularity_sweep, entry.kind) {
                (Some(rs), Algorithm::DrMmd) => {
                    let LambdaMode::Adaptive {
                        initial, min, max, ..
                    } = flow.lambda
                    else {
                        return Err(Error::Config(format!(
                            "`{base}`: regularity_sweep needs adaptive λ"
                        )));
                    };
                    for &r in rs {
                        let mut f = flow.clone();
                        f.lambda = LambdaMode::Adaptive {
                            initial,
                            regularity: r,
                            min,
                            max,
                        };
                        plans.push(RunPlan {
                            name: format!("{base}_r{r}"),
                            algorithm: entry.kind,
                            flow: f,
                        });
                    }
                }
                (Some(_), Algorithm::MmdFlow) => {
                    return Err(Error::Config(format!(
                        "`{base}`: regularity_sweep only applies to drmmd"
                    )))
                }
                (None, kind) => plans.push(RunPlan {
                    name: base,
                    algorithm: kind,
                    flow,
                }),
            }
        }
        let mut names: Vec<&str> = plans.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("run names must be unique".into()));
        }
        Ok(plans)
    }

    /// Three-rings defaults: N = M = 300, l = 0.3, DrMMD with adaptive λ at
    /// step 1e-3 over r ∈ {0.1, 0.5, 1}, MMD flow at step 1e-2.
    pub fn three_rings_default() -> Self {
        let mut flow = FlowConfig::new(1e-3, 100_000, LambdaMode::adaptive(0.1, 0.5));
        flow.eval_every = 100;
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: Scenario::ThreeRings,
            n: 300,
            m: 300,
            seed: 0,
            output_dir: PathBuf::from("runs/three_rings"),
            kernel: KernelConfig::Gaussian { bandwidth: 0.3 },
            flow,
            algorithms: vec![
                AlgorithmEntry {
                    kind: Algorithm::DrMmd,
                    regularity_sweep: Some(vec![0.1, 0.5, 1.0]),
                    ..Default::default()
                },
                AlgorithmEntry {
                    kind: Algorithm::MmdFlow,
                    step_size: Some(1e-2),
                    ..Default::default()
                },
            ],
            data: DataConfig::default(),
        }
    }

    /// Student/teacher defaults: M = 10 teachers, N = 1000 students,
    /// λ₀ = 0.1, γ = 0.1, 15 000 iterations.
    pub fn student_teacher_default() -> Self {
        let mut flow = FlowConfig::new(0.1, 15_000, LambdaMode::adaptive(0.1, 0.5));
        flow.eval_every = 100;
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: Scenario::StudentTeacher,
            n: 1000,
            m: 10,
            seed: 0,
            output_dir: PathBuf::from("runs/student_teacher"),
            kernel: KernelConfig::NeuralFeature {
                hidden: 3,
                input_dim: 50,
                batch_size: 100,
                train_size: 1000,
                val_size: 1000,
            },
            flow,
            algorithms: vec![
                AlgorithmEntry {
                    kind: Algorithm::DrMmd,
                    regularity_sweep: Some(vec![0.1, 0.5, 1.0]),
                    ..Default::default()
                },
                AlgorithmEntry {
                    kind: Algorithm::MmdFlow,
                    ..Default::default()
                },
            ],
            data: DataConfig::default(),
        }
    }
}
