//! Shifted solves against the target Gram matrix.
//!
//! Every witness fit needs `(K_xx + Mλ I)⁻¹ v`. The target samples never move,
//! so `K_xx` is factorized once per run:
//!
//! * [`SolveMode::Eigen`] keeps `K_xx = U Λ Uᵀ`, after which any shift costs
//!   two matrix-vector products. Used when λ changes between iterations.
//! * [`SolveMode::FixedCholesky`] factors `K_xx + Mλ I` for one λ only.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, KernelSpec};
use crate::particles::ParticleSystem;

/// Relative magnitude (against the trace) below which negative eigenvalues are
/// treated as round-off and clipped to zero.
pub const CLIP_RELATIVE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    Eigen,
    FixedCholesky(f64),
}

#[derive(Debug, Clone)]
enum Factor {
    Eigen {
        /// Descending, clipped at zero.
        values: DVector<f64>,
        vectors: DMatrix<f64>,
    },
    Cholesky {
        lambda: f64,
        factor: Cholesky<f64, Dyn>,
    },
}

#[derive(Debug, Clone)]
pub struct GramCache {
    factor: Factor,
    m: usize,
    /// Row sums of `K_xx` divided by M.
    row_means: DVector<f64>,
    /// Mean of all `K_xx` entries.
    mean: f64,
    target_tag: Option<u64>,
}

impl GramCache {
    /// Factorizes a square symmetric Gram matrix.
    pub fn build(kxx: &GramMatrix, mode: SolveMode) -> Result<Self> {
        let k = &kxx.values;
        let m = k.nrows();
        if m == 0 || k.ncols() != m {
            return Err(Error::input(format!(
                "target Gram matrix must be square and nonempty, got {}×{}",
                k.nrows(),
                k.ncols()
            )));
        }
        let trace = k.trace();
        let asym = (k - k.transpose()).amax();
        if asym > 1e-12 * trace.abs().max(1.0) {
            return Err(Error::input(format!(
                "target Gram matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let row_means = DVector::from_iterator(m, k.row_iter().map(|r| r.sum() / m as f64));
        let mean = row_means.sum() / m as f64;

        let factor = match mode {
            SolveMode::Eigen => {
                let eig = SymmetricEigen::try_new(k.clone(), f64::EPSILON, 0).ok_or_else(|| {
                    Error::numerical(format!(
                        "symmetric eigendecomposition did not converge (M = {m}, trace = {trace:e}, max |K| = {:e})",
                        k.amax()
                    ))
                })?;
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                let clip = CLIP_RELATIVE * trace.abs();
                let mut values = DVector::zeros(m);
                let mut vectors = DMatrix::zeros(m, m);
                for (dst, &src) in order.iter().enumerate() {
                    let v = eig.eigenvalues[src];
                    if v < -clip {
                        return Err(Error::numerical(format!(
                            "target Gram matrix is not positive semi-definite: eigenvalue {v:e} below −{clip:e}"
                        )));
                    }
                    values[dst] = v.max(0.0);
                    vectors.set_column(dst, &eig.eigenvectors.column(src));
                }
                Factor::Eigen { values, vectors }
            }
            SolveMode::FixedCholesky(lambda) => {
                check_lambda(lambda)?;
                let shifted = k + DMatrix::identity(m, m) * (m as f64 * lambda);
                let factor = Cholesky::new(shifted).ok_or_else(|| {
                    Error::numerical(format!(
                        "Cholesky factorization of K_xx + Mλ I failed (M = {m}, λ = {lambda:e}, trace = {trace:e})"
                    ))
                })?;
                Factor::Cholesky { lambda, factor }
            }
        };
        Ok(Self {
            factor,
            m,
            row_means,
            mean,
            target_tag: None,
        })
    }

    /// Assembles `K_xx` for `target` and factorizes it, remembering which
    /// target and kernel it belongs to.
    pub fn for_target(kernel: &KernelSpec, target: &ParticleSystem, mode: SolveMode) -> Result<Self> {
        let kxx = kernel.gram(target, target)?;
        let mut cache = Self::build(&kxx, mode)?;
        cache.target_tag = Some(target_tag(kernel, target));
        Ok(cache)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode(&self) -> SolveMode {
        match &self.factor {
            Factor::Eigen { .. } => SolveMode::Eigen,
            Factor::Cholesky { lambda, .. } => SolveMode::FixedCholesky(*lambda),
        }
    }

    /// Descending eigenvalues in Eigen mode.
    pub fn eigenvalues(&self) -> Option<&DVector<f64>> {
        match &self.factor {
            Factor::Eigen { values, .. } => Some(values),
            Factor::Cholesky { .. } => None,
        }
    }

    pub fn eigenvectors(&self) -> Option<&DMatrix<f64>> {
        match &self.factor {
            Factor::Eigen { vectors, .. } => Some(vectors),
            Factor::Cholesky { .. } => None,
        }
    }

    /// `K_xx 𝟙 / M`.
    pub fn target_row_means(&self) -> &DVector<f64> {
        &self.row_means
    }

    /// `𝟙ᵀ K_xx 𝟙 / M²`.
    pub fn target_mean(&self) -> f64 {
        self.mean
    }

    pub(crate) fn check_target(&self, kernel: &KernelSpec, target: &ParticleSystem) -> Result<()> {
        if target.len() != self.m {
            return Err(Error::usage(format!(
                "cache was built for {} target samples, got {}",
                self.m,
                target.len()
            )));
        }
        if let Some(tag) = self.target_tag {
            if tag != target_tag(kernel, target) {
                return Err(Error::usage(
                    "cache was built for a different target set or kernel",
                ));
            }
        }
        Ok(())
    }

    /// Solves `(K_xx + Mλ I) w = v`.
    pub fn solve_shifted(&self, lambda: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_lambda(lambda)?;
        if v.len() != self.m {
            return Err(Error::input(format!(
                "right-hand side has length {}, expected {}",
                v.len(),
                self.m
            )));
        }
        let shift = self.m as f64 * lambda;
        match &self.factor {
            Factor::Eigen { values, vectors } => {
                let mut coef = vectors.tr_mul(v);
                for (c, s) in coef.iter_mut().zip(values.iter()) {
                    *c /= s + shift;
                }
                Ok(vectors * coef)
            }
            Factor::Cholesky { lambda: cached, factor } => {
                if *cached != lambda {
                    return Err(Error::usage(format!(
                        "cache factorized for λ = {cached:e}, solve requested at λ = {lambda:e}"
                    )));
                }
                Ok(factor.solve(v))
            }
        }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!(
            "regularization λ must be positive and finite, got {lambda}"
        )))
    }
}

fn target_tag(kernel: &KernelSpec, target: &ParticleSystem) -> u64 {
    let mut h = DefaultHasher::new();
    target.dim().hash(&mut h);
    for v in target.as_flat() {
        v.to_bits().hash(&mut h);
    }
    match kernel {
        KernelSpec::Gaussian { bandwidth } => {
            0u8.hash(&mut h);
            bandwidth.to_bits().hash(&mut h);
        }
        KernelSpec::InverseMultiquadric { bandwidth, offset } => {
            1u8.hash(&mut h);
            bandwidth.to_bits().hash(&mut h);
            offset.to_bits().hash(&mut h);
        }
        KernelSpec::NeuralFeature(net) => {
            2u8.hash(&mut h);
            net.hidden().hash(&mut h);
            for v in net.z_batch() {
                v.to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}
