//! Synthetic point clouds.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, NeuralFeatureNet};
use crate::particles::ParticleSystem;

use super::config::{KernelConfig, RingsConfig};

/// Generator for one named RNG stream of an experiment seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const TARGET_STREAM: u64 = 10;
pub(crate) const SOURCE_STREAM: u64 = 11;
pub(crate) const PROBE_STREAM: u64 = 12;

/// `n` points spread round-robin over three circles of radius `radius`, each
/// pushed radially by N(0, noise²).
pub fn gen_three_rings(n: usize, rings: &RingsConfig, seed: u64) -> Result<ParticleSystem> {
    if n < 3 {
        return Err(Error::input("three rings need at least 3 points"));
    }
    if rings.centers.is_empty() {
        return Err(Error::input("ring list is empty"));
    }
    let mut rng = stream_rng(seed, TARGET_STREAM);
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..n {
        let c = rings.centers[i % rings.centers.len()];
        let angle = rng.random::<f64>() * TAU;
        let eps: f64 = rng.sample(StandardNormal);
        let r = rings.radius + rings.noise * eps;
        data.push(c[0] + r * angle.cos());
        data.push(c[1] + r * angle.sin());
    }
    ParticleSystem::from_flat(data, 2)
}

/// `n` i.i.d. draws from N(mean, cov_scale · I).
pub fn gen_gaussian<R: Rng + ?Sized>(
    n: usize,
    mean: &[f64],
    cov_scale: f64,
    rng: &mut R,
) -> Result<ParticleSystem> {
    if n == 0 || mean.is_empty() {
        return Err(Error::input("need at least one point of positive dimension"));
    }
    if cov_scale.is_nan() || cov_scale < 0.0 {
        return Err(Error::input("covariance scale must be nonnegative"));
    }
    let sd = cov_scale.sqrt();
    let mut data = Vec::with_capacity(n * mean.len());
    for _ in 0..n {
        for m in mean {
            let e: f64 = rng.sample(StandardNormal);
            data.push(m + sd * e);
        }
    }
    ParticleSystem::from_flat(data, mean.len())
}

/// Equal-weight mixture of isotropic Gaussians, components assigned round-robin.
pub fn gen_mixture<R: Rng + ?Sized>(
    n: usize,
    centers: &[Vec<f64>],
    cov_scale: f64,
    rng: &mut R,
) -> Result<ParticleSystem> {
    let d = centers.first().map(Vec::len).unwrap_or(0);
    if n == 0 || d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::input("mixture needs equal-dimension centers and n ≥ 1"));
    }
    let sd = cov_scale.sqrt();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for m in &centers[i % centers.len()] {
            let e: f64 = rng.sample(StandardNormal);
            data.push(m + sd * e);
        }
    }
    ParticleSystem::from_flat(data, d)
}

/// `n` points uniform on the unit sphere in ℝ^p, row-major.
pub fn sphere_samples<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * p);
    for _ in 0..n {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.extend(v.iter().map(|x| x / norm));
    }
    out
}

/// Teacher and student parameter clouds with the kernels that compare them.
#[derive(Debug, Clone)]
pub struct StudentTeacher {
    /// `M` teacher networks, the target.
    pub teacher: ParticleSystem,
    /// `N` student networks, the initial source.
    pub student: ParticleSystem,
    /// Flow kernel: probe batches drawn from the training inputs.
    pub kernel: KernelSpec,
    /// Evaluation kernel over the whole held-out input set.
    pub validation_kernel: KernelSpec,
}

pub fn setup_student_teacher(
    kernel: &KernelConfig,
    n: usize,
    m: usize,
    teacher_cov: f64,
    student_cov: f64,
    seed: u64,
) -> Result<StudentTeacher> {
    let KernelConfig::NeuralFeature {
        hidden,
        input_dim,
        batch_size,
        train_size,
        val_size,
    } = *kernel
    else {
        return Err(Error::Config(
            "student_teacher requires the neural_feature kernel".into(),
        ));
    };
    let mut probe_rng = stream_rng(seed, PROBE_STREAM);
    let train = sphere_samples(train_size, input_dim, &mut probe_rng);
    let val = sphere_samples(val_size, input_dim, &mut probe_rng);
    let net = NeuralFeatureNet::with_pool(hidden, input_dim, Arc::new(train), batch_size)?;
    let d = net.param_dim();
    let validation = NeuralFeatureNet::new(hidden, input_dim, val)?;

    let teacher = gen_gaussian(m, &vec![0.0; d], teacher_cov, &mut stream_rng(seed, TARGET_STREAM))?;
    let student = gen_gaussian(n, &vec![0.0; d], student_cov, &mut stream_rng(seed, SOURCE_STREAM))?;
    Ok(StudentTeacher {
        teacher,
        student,
        kernel: KernelSpec::neural_feature(net),
        validation_kernel: KernelSpec::neural_feature(validation),
    })
}
