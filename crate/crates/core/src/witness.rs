//! The DrMMD witness function and the sample estimators built on it.
//!
//! For source samples `y_1..y_N`, target samples `x_1..x_M` and λ > 0 the
//! witness `h* = 2(Σ_π̂ + λI)⁻¹(m_μ̂ − m_π̂)` lies in the span of the kernel
//! sections at the samples. Writing
//!
//! ```text
//! u = K_xy 𝟙_N / N − K_xx 𝟙_M / M,    w = (K_xx + Mλ I)⁻¹ u,
//! ```
//!
//! the coefficients are `2/(Nλ)` on every `k(·, y_j)` and `(2/λ)(−1/M − w_i)`
//! on `k(·, x_i)`, and
//!
//! ```text
//! DrMMD(μ̂‖π̂) = (1+λ)/λ · (MMD²(μ̂‖π̂) − uᵀw).
//! ```

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SectionSum};
use crate::particles::{check_same_dim, ParticleSystem};
use crate::regsolve::{check_lambda, GramCache};

/// Relative slack on the witness bounds checked in debug builds.
const BOUND_SLACK: f64 = 1e-9;

/// The λ-independent part of a witness fit: Gram-matrix summaries of one
/// (source, target) pair. Re-deriving the witness for another λ costs one
/// shifted solve.
#[derive(Debug, Clone)]
pub struct WitnessProblem {
    n: usize,
    m: usize,
    /// `K_xy 𝟙 / N − K_xx 𝟙 / M`.
    u: DVector<f64>,
    mean_yy: Option<f64>,
    mean_xy: f64,
    mean_xx: f64,
}

impl WitnessProblem {
    /// Collects the summaries needed for the witness. `with_source_gram`
    /// additionally computes `𝟙ᵀK_yy𝟙 / N²`, which only the DrMMD and MMD²
    /// values need.
    pub fn new(
        source: &ParticleSystem,
        target: &ParticleSystem,
        kernel: &KernelSpec,
        cache: &GramCache,
        with_source_gram: bool,
    ) -> Result<Self> {
        check_same_dim(source, target)?;
        cache.check_target(kernel, target)?;
        let cross = kernel.row_means(target, source)?;
        let mean_xy = cross.iter().sum::<f64>() / cross.len() as f64;
        let u = DVector::from_vec(cross) - cache.target_row_means();
        let mean_yy = if with_source_gram {
            Some(kernel.pair_mean(source, source)?)
        } else {
            None
        };
        Ok(Self {
            n: source.len(),
            m: target.len(),
            u,
            mean_yy,
            mean_xy,
            mean_xx: cache.target_mean(),
        })
    }

    /// Plug-in V-statistic MMD², if the source Gram summary was computed.
    pub fn mmd2(&self) -> Option<f64> {
        self.mean_yy
            .map(|yy| yy - 2.0 * self.mean_xy + self.mean_xx)
    }

    fn solve(&self, cache: &GramCache, lambda: f64) -> Result<DVector<f64>> {
        cache.solve_shifted(lambda, &self.u)
    }

    /// DrMMD via the explicit quadratic form.
    pub fn drmmd(&self, cache: &GramCache, lambda: f64) -> Result<f64> {
        let w = self.solve(cache, lambda)?;
        self.drmmd_from_solution(lambda, &w)
    }

    fn drmmd_from_solution(&self, lambda: f64, w: &DVector<f64>) -> Result<f64> {
        let mean_yy = self
            .mean_yy
            .ok_or_else(|| Error::usage("DrMMD requires the source Gram summary"))?;
        let mmd2 = mean_yy - 2.0 * self.mean_xy + self.mean_xx;
        let scale = (1.0 + lambda) / lambda;
        let value = scale * (mmd2 - self.u.dot(w));
        let tol = 1e-12 * (scale * (mean_yy + self.mean_xx + 2.0 * self.mean_xy.abs())).max(1.0);
        if value < -tol || !value.is_finite() {
            return Err(Error::numerical(format!(
                "DrMMD estimate {value:e} is negative beyond round-off (λ = {lambda:e})"
            )));
        }
        Ok(value)
    }

    /// The witness at `lambda`.
    pub fn witness(
        &self,
        source: &ParticleSystem,
        target: &ParticleSystem,
        kernel: &KernelSpec,
        cache: &GramCache,
        lambda: f64,
    ) -> Result<WitnessModel> {
        check_lambda(lambda)?;
        let w = self.solve(cache, lambda)?;
        Ok(self.model_from_solution(source, target, kernel, lambda, &w))
    }

    /// Witness and DrMMD from one shifted solve.
    pub fn witness_and_drmmd(
        &self,
        source: &ParticleSystem,
        target: &ParticleSystem,
        kernel: &KernelSpec,
        cache: &GramCache,
        lambda: f64,
    ) -> Result<(WitnessModel, f64)> {
        check_lambda(lambda)?;
        let w = self.solve(cache, lambda)?;
        let d = self.drmmd_from_solution(lambda, &w)?;
        Ok((self.model_from_solution(source, target, kernel, lambda, &w), d))
    }

    fn model_from_solution(
        &self,
        source: &ParticleSystem,
        target: &ParticleSystem,
        kernel: &KernelSpec,
        lambda: f64,
        w: &DVector<f64>,
    ) -> WitnessModel {
        let coeff_y = vec![2.0 / (self.n as f64 * lambda); self.n];
        let inv_m = 1.0 / self.m as f64;
        let coeff_x: Vec<f64> = w.iter().map(|wi| 2.0 / lambda * (-inv_m - wi)).collect();

        let dim = source.dim();
        let mut centers = Vec::with_capacity((self.n + self.m) * dim);
        centers.extend_from_slice(source.as_flat());
        centers.extend_from_slice(target.as_flat());
        let centers = ParticleSystem::from_flat(centers, dim).expect("finite sample sets");
        let weights: Vec<f64> = coeff_y.iter().chain(&coeff_x).copied().collect();

        // ‖m_μ̂ − m_π̂‖_H, available when the source Gram summary is.
        let disc_norm = self.mmd2().map(|v| v.max(0.0).sqrt());
        let coeff_l1 = weights.iter().map(|w| w.abs()).sum();
        WitnessModel {
            lambda,
            coeff_y,
            coeff_x,
            sections: kernel.section_sum(centers, weights),
            kernel_bound: kernel.bound(),
            grad_bound_sq: kernel.grad_bound_sq(dim),
            disc_norm,
            coeff_l1,
        }
    }
}

/// h* as a combination of kernel sections at the source and target samples.
#[derive(Debug, Clone)]
pub struct WitnessModel {
    lambda: f64,
    coeff_y: Vec<f64>,
    coeff_x: Vec<f64>,
    sections: SectionSum,
    kernel_bound: f64,
    grad_bound_sq: Option<f64>,
    disc_norm: Option<f64>,
    /// Σ |coefficients|, scaling the round-off allowance of the bound checks.
    coeff_l1: f64,
}

impl WitnessModel {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Coefficients on `k(·, y_j)`.
    pub fn coeff_y(&self) -> &[f64] {
        &self.coeff_y
    }

    /// Coefficients on `k(·, x_i)`.
    pub fn coeff_x(&self) -> &[f64] {
        &self.coeff_x
    }

    pub fn dim(&self) -> usize {
        self.sections.dim()
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::input(format!(
                "probe has dimension {}, witness expects {}",
                z.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Upper bounds on |h*| and ‖∇h*‖ from ‖h*‖_H ≤ 2‖m_μ̂ − m_π̂‖_H / λ.
    /// Each bound carries an absolute round-off allowance proportional to the
    /// coefficient mass.
    fn bounds(&self) -> (f64, Option<f64>) {
        let norm = 2.0 * self.disc_norm.unwrap_or(2.0 * self.kernel_bound.sqrt()) / self.lambda;
        let slack = 1e-10 * self.coeff_l1;
        (
            norm * self.kernel_bound.sqrt() * (1.0 + BOUND_SLACK) + slack * self.kernel_bound,
            self.grad_bound_sq
                .map(|g| norm * g.sqrt() * (1.0 + BOUND_SLACK) + slack * g.sqrt()),
        )
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.value_unchecked(z))
    }

    pub fn grad(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let mut out = vec![0.0; z.len()];
        self.add_grad_unchecked(z, 1.0, &mut out);
        Ok(out)
    }

    pub(crate) fn value_unchecked(&self, z: &[f64]) -> f64 {
        let v = self.sections.value(z);
        debug_assert!(
            !v.is_finite() || v.abs() <= self.bounds().0,
            "witness value {v:e} exceeds its RKHS bound {:e}",
            self.bounds().0
        );
        v
    }

    pub(crate) fn add_grad_unchecked(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        self.sections.add_grad(z, scale, out);
        #[cfg(debug_assertions)]
        if let (Some(gb), true) = (self.bounds().1, scale == 1.0) {
            let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            debug_assert!(
                !n.is_finite() || n <= gb,
                "witness gradient norm {n:e} exceeds its RKHS bound {gb:e}"
            );
        }
    }

    /// ∇h* at every point of `at`, row-major.
    pub fn grad_all(&self, at: &ParticleSystem) -> Result<Vec<f64>> {
        if at.dim() != self.dim() {
            return Err(Error::input("dimension mismatch between witness and points"));
        }
        let d = at.dim();
        let mut out = vec![0.0; at.as_flat().len()];
        out.par_chunks_exact_mut(d)
            .zip(at.as_flat().par_chunks_exact(d))
            .for_each(|(g, z)| self.add_grad_unchecked(z, 1.0, g));
        Ok(out)
    }
}

/// Fits h* for (source, target) at `lambda`.
pub fn fit_witness(
    source: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    cache: &GramCache,
    lambda: f64,
) -> Result<WitnessModel> {
    check_lambda(lambda)?;
    WitnessProblem::new(source, target, kernel, cache, false)?
        .witness(source, target, kernel, cache, lambda)
}

pub fn eval_witness(model: &WitnessModel, z: &[f64]) -> Result<f64> {
    model.eval(z)
}

pub fn grad_witness(model: &WitnessModel, z: &[f64]) -> Result<Vec<f64>> {
    model.grad(z)
}

/// DrMMD(μ̂‖π̂) through the closed-form quadratic form.
pub fn drmmd_estimate(
    source: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
    cache: &GramCache,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    WitnessProblem::new(source, target, kernel, cache, true)?.drmmd(cache, lambda)
}

/// DrMMD(μ̂‖π̂) as (1+λ)/2 · (mean_j h*(y_j) − mean_i h*(x_i)).
pub fn drmmd_from_witness(
    model: &WitnessModel,
    source: &ParticleSystem,
    target: &ParticleSystem,
) -> Result<f64> {
    check_same_dim(source, target)?;
    let mean = |p: &ParticleSystem| -> Result<f64> {
        let mut s = 0.0;
        for z in p.points() {
            s += model.eval(z)?;
        }
        Ok(s / p.len() as f64)
    };
    Ok((1.0 + model.lambda) / 2.0 * (mean(source)? - mean(target)?))
}

/// ‖m_μ̂ − m_π̂‖²_H = mean(K_yy) − 2 mean(K_xy) + mean(K_xx).
pub fn mmd2_estimate(
    source: &ParticleSystem,
    target: &ParticleSystem,
    kernel: &KernelSpec,
) -> Result<f64> {
    check_same_dim(source, target)?;
    let yy = kernel.pair_mean(source, source)?;
    let xy = kernel.pair_mean(target, source)?;
    let xx = kernel.pair_mean(target, target)?;
    Ok(yy - 2.0 * xy + xx)
}
