//! Independent reference implementations for the integration tests.
//!
//! Nothing here calls into the crate's kernel or solver code: kernels are
//! re-derived from their closed forms and the witness is obtained by a dense
//! solve on the span of all kernel sections.

#![allow(dead_code)]

use drmmd::ParticleSystem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform in `[lo, hi]^d`.
pub fn uniform_cloud(rng: &mut impl Rng, n: usize, d: usize, lo: f64, hi: f64) -> ParticleSystem {
    let data = (0..n * d).map(|_| rng.random_range(lo..hi)).collect();
    ParticleSystem::from_flat(data, d).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub enum RefKernel {
    Gaussian { l: f64 },
    Imq { l: f64, c: f64 },
}

fn sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl RefKernel {
    pub fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            RefKernel::Gaussian { l } => (-0.5 * sq(x, y) / (l * l)).exp(),
            RefKernel::Imq { l, c } => 1.0 / (c + sq(x, y) / (l * l)).sqrt(),
        }
    }

    /// ∇ with respect to the first argument.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let f = match *self {
            RefKernel::Gaussian { l } => -self.k(x, y) / (l * l),
            RefKernel::Imq { l, c } => -(c + sq(x, y) / (l * l)).powf(-1.5) / (l * l),
        };
        x.iter().zip(y).map(|(a, b)| f * (a - b)).collect()
    }

    pub fn bound(&self) -> f64 {
        match *self {
            RefKernel::Gaussian { .. } => 1.0,
            RefKernel::Imq { c, .. } => c.powf(-0.5),
        }
    }

    /// sup ‖∇₁∇₂ k‖ trace bound K₁d.
    pub fn k1d(&self, d: usize) -> f64 {
        match *self {
            RefKernel::Gaussian { l } => d as f64 / (l * l),
            RefKernel::Imq { l, c } => d as f64 * c.powf(-1.5) / (l * l),
        }
    }

    pub fn spec(&self) -> drmmd::KernelSpec {
        match *self {
            RefKernel::Gaussian { l } => drmmd::KernelSpec::gaussian(l).unwrap(),
            RefKernel::Imq { l, c } => drmmd::KernelSpec::inverse_multiquadric(l, c).unwrap(),
        }
    }
}

/// Witness obtained on span{k(·,x_i)} ∪ {k(·,y_j)}.
///
/// With basis φ_a and Gram G, the empirical covariance acts on coefficients
/// as P = [G[x, :] / M; 0]; the mean-embedding difference has coefficients
/// b = [−1/M; 1/N]. Then c solves (P + λI)c = b, h* = 2 Σ c_a φ_a and
/// DrMMD = (1+λ) bᵀGc.
pub struct DenseOracle {
    kernel: RefKernel,
    centers: Vec<Vec<f64>>,
    coeffs: DVector<f64>,
    pub drmmd: f64,
    pub mmd2: f64,
}

impl DenseOracle {
    pub fn new(kernel: RefKernel, source: &ParticleSystem, target: &ParticleSystem, lambda: f64) -> Self {
        let m = target.len();
        let n = source.len();
        let centers: Vec<Vec<f64>> = target.points().chain(source.points()).map(<[f64]>::to_vec).collect();
        let t = m + n;
        let g = DMatrix::from_fn(t, t, |a, b| kernel.k(&centers[a], &centers[b]));
        let mut p = DMatrix::zeros(t, t);
        for i in 0..m {
            for a in 0..t {
                p[(i, a)] = g[(i, a)] / m as f64;
            }
        }
        let b = DVector::from_fn(t, |a, _| if a < m { -1.0 / m as f64 } else { 1.0 / n as f64 });
        let lhs = p + DMatrix::identity(t, t) * lambda;
        let c = lhs.lu().solve(&b).expect("P + λI is invertible for λ > 0");
        let gb = &g * &b;
        let drmmd = (1.0 + lambda) * gb.dot(&c);
        let mmd2 = b.dot(&gb);
        Self {
            kernel,
            centers,
            coeffs: c * 2.0,
            drmmd,
            mmd2,
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(self.coeffs.iter())
            .map(|(x, c)| c * self.kernel.k(z, x))
            .sum()
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        for (x, c) in self.centers.iter().zip(self.coeffs.iter()) {
            for (o, g) in out.iter_mut().zip(self.kernel.grad1(z, x)) {
                *o += c * g;
            }
        }
        out
    }
}

/// Minimum over all permutations of the squared-distance assignment cost,
/// returned as the W2 value.
pub fn brute_w2(a: &ParticleSystem, b: &ParticleSystem) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| sq(a.point(i), b.point(j)))
            .sum::<f64>()
    };
    let mut best = cost(&perm);
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best / n as f64).sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(1e-300)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖).
pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-300)
}
