//! Kernel families, first-argument gradients and Gram assembly.
//!
//! Three families are provided:
//!
//! | family | k(x, y) | sup k(x, x) |
//! |--------|---------|-------------|
//! | Gaussian | exp(−½‖x−y‖²/l²) | 1 |
//! | inverse multiquadric | (c + ‖x−y‖²/l²)^(−1/2) | c^(−1/2) |
//! | neural feature | mean_b ψ(z_b, x) ψ(z_b, y) | 1 |
//!
//! The neural-feature kernel treats a point `x` as the flattened parameter
//! vector `(b1, W1, b0, W0)` of a one-hidden-layer ReLU network with scalar
//! output squashed by G(u) = exp(−u²/4), evaluated on a stored batch of probe
//! inputs `z_b`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::particles::{check_same_dim, ParticleSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KernelFamily {
    Gaussian,
    InverseMultiquadric,
    NeuralFeature,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
    InverseMultiquadric { bandwidth: f64, offset: f64 },
    NeuralFeature(NeuralFeatureNet),
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        check_positive("bandwidth", bandwidth)?;
        Ok(KernelSpec::Gaussian { bandwidth })
    }

    pub fn inverse_multiquadric(bandwidth: f64, offset: f64) -> Result<Self> {
        check_positive("bandwidth", bandwidth)?;
        check_positive("imq offset", offset)?;
        Ok(KernelSpec::InverseMultiquadric { bandwidth, offset })
    }

    pub fn neural_feature(net: NeuralFeatureNet) -> Self {
        KernelSpec::NeuralFeature(net)
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::Gaussian { .. } => KernelFamily::Gaussian,
            KernelSpec::InverseMultiquadric { .. } => KernelFamily::InverseMultiquadric,
            KernelSpec::NeuralFeature(_) => KernelFamily::NeuralFeature,
        }
    }

    /// The dimension points must have, if the family fixes one.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::NeuralFeature(net) => Some(net.param_dim()),
            _ => None,
        }
    }

    /// K with k(x, x) ≤ K for every x.
    pub fn bound(&self) -> f64 {
        match self {
            KernelSpec::Gaussian { .. } => 1.0,
            KernelSpec::InverseMultiquadric { offset, .. } => offset.powf(-0.5),
            KernelSpec::NeuralFeature(_) => 1.0,
        }
    }

    /// Σ_i ‖∂_i k(x, ·)‖²_H in dimension `dim`, i.e. the trace of the mixed
    /// Hessian ∂_{x}∂_{y} k at x = y. `None` when no closed form exists.
    pub fn grad_bound_sq(&self, dim: usize) -> Option<f64> {
        let d = dim as f64;
        match *self {
            KernelSpec::Gaussian { bandwidth } => Some(d / (bandwidth * bandwidth)),
            KernelSpec::InverseMultiquadric { bandwidth, offset } => {
                Some(d * offset.powf(-1.5) / (bandwidth * bandwidth))
            }
            KernelSpec::NeuralFeature(_) => None,
        }
    }

    fn check_point_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::input(format!(
                "point dimensions differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if let Some(d) = self.required_dim() {
            if x.len() != d {
                return Err(Error::input(format!(
                    "kernel expects points of dimension {d}, got {}",
                    x.len()
                )));
            }
        }
        Ok(())
    }

    fn check_system(&self, p: &ParticleSystem) -> Result<()> {
        match self.required_dim() {
            Some(d) if d != p.dim() => Err(Error::input(format!(
                "kernel expects points of dimension {d}, got {}",
                p.dim()
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point_dims(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point_dims(x, y)?;
        let mut out = vec![0.0; x.len()];
        self.add_grad1(x, y, 1.0, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                (-0.5 * sq_dist(x, y) / (bandwidth * bandwidth)).exp()
            }
            KernelSpec::InverseMultiquadric { bandwidth, offset } => {
                (offset + sq_dist(x, y) / (bandwidth * bandwidth)).powf(-0.5)
            }
            KernelSpec::NeuralFeature(ref net) => net.eval(x, y),
        }
    }

    /// `out += scale · ∇₁k(x, y)`.
    #[inline]
    pub(crate) fn add_grad1(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let l2 = bandwidth * bandwidth;
                let k = (-0.5 * sq_dist(x, y) / l2).exp();
                let c = -scale * k / l2;
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += c * (a - b);
                }
            }
            KernelSpec::InverseMultiquadric { bandwidth, offset } => {
                let l2 = bandwidth * bandwidth;
                let base = offset + sq_dist(x, y) / l2;
                let c = -scale * base.powf(-1.5) / l2;
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += c * (a - b);
                }
            }
            KernelSpec::NeuralFeature(ref net) => net.add_grad1(x, y, scale, out),
        }
    }

    /// Dense matrix of k(rows[i], cols[j]).
    pub fn gram(&self, rows: &ParticleSystem, cols: &ParticleSystem) -> Result<GramMatrix> {
        check_same_dim(rows, cols)?;
        self.check_system(rows)?;
        let values = match self {
            KernelSpec::NeuralFeature(net) => {
                let fr = net.features(rows);
                let fc = net.features(cols);
                net.gram_from_features(&fr, rows.len(), &fc, cols.len())
            }
            _ => {
                let nc = cols.len();
                let flat: Vec<f64> = rows
                    .as_flat()
                    .par_chunks_exact(rows.dim())
                    .flat_map_iter(|r| cols.points().map(move |c| self.eval_unchecked(r, c)))
                    .collect();
                DMatrix::from_row_iterator(rows.len(), nc, flat)
            }
        };
        Ok(GramMatrix {
            values,
            symmetric: std::ptr::eq(rows, cols) || rows == cols,
        })
    }

    /// `out[i] = mean_j k(rows[i], cols[j])`.
    pub fn row_means(&self, rows: &ParticleSystem, cols: &ParticleSystem) -> Result<Vec<f64>> {
        check_same_dim(rows, cols)?;
        self.check_system(rows)?;
        let nc = cols.len() as f64;
        Ok(match self {
            KernelSpec::NeuralFeature(net) => {
                let fr = net.features(rows);
                let fc = net.features(cols);
                let b = net.batch_len();
                let col_mean = feature_column_means(&fc, b);
                fr.chunks_exact(b)
                    .map(|f| dot(f, &col_mean) / b as f64)
                    .collect()
            }
            _ => rows
                .as_flat()
                .par_chunks_exact(rows.dim())
                .map(|r| cols.points().map(|c| self.eval_unchecked(r, c)).sum::<f64>() / nc)
                .collect(),
        })
    }

    /// mean over all pairs of k(a_i, b_j).
    pub fn pair_mean(&self, a: &ParticleSystem, b: &ParticleSystem) -> Result<f64> {
        let rows = self.row_means(a, b)?;
        Ok(rows.iter().sum::<f64>() / rows.len() as f64)
    }

    /// Prepares `z ↦ Σ_a w_a k(z, c_a)` and its gradient for repeated
    /// evaluation.
    pub(crate) fn section_sum(&self, centers: ParticleSystem, weights: Vec<f64>) -> SectionSum {
        debug_assert_eq!(centers.len(), weights.len());
        match self {
            KernelSpec::NeuralFeature(net) => {
                let b = net.batch_len();
                let f = net.features(&centers);
                let mut s = vec![0.0; b];
                for (row, w) in f.chunks_exact(b).zip(&weights) {
                    for (acc, v) in s.iter_mut().zip(row) {
                        *acc += w * v;
                    }
                }
                s.iter_mut().for_each(|v| *v /= b as f64);
                SectionSum::Features {
                    net: net.clone(),
                    embedding: s,
                    dim: centers.dim(),
                }
            }
            _ => SectionSum::Direct {
                kernel: self.clone(),
                centers,
                weights,
            },
        }
    }

    /// Refreshes the probe batch of a neural-feature kernel from its pool.
    /// Returns `false` for families without a pool.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        match self {
            KernelSpec::NeuralFeature(net) => net.resample(rng),
            _ => false,
        }
    }

    pub fn is_resampled(&self) -> bool {
        matches!(self, KernelSpec::NeuralFeature(net) if net.pool.is_some())
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive and finite, got {v}")))
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn feature_column_means(f: &[f64], b: usize) -> Vec<f64> {
    let n = f.len() / b;
    let mut m = vec![0.0; b];
    for row in f.chunks_exact(b) {
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}

/// Gram matrix with a record of whether both sides came from the same set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub symmetric: bool,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }
}

/// A fixed linear combination of kernel sections.
#[derive(Debug, Clone)]
pub(crate) enum SectionSum {
    Direct {
        kernel: KernelSpec,
        centers: ParticleSystem,
        weights: Vec<f64>,
    },
    /// Neural-feature kernels collapse the sum to one vector over the batch:
    /// Σ_a w_a k(z, c_a) = Σ_b s_b ψ(z_b, z) with s_b = mean-weighted features.
    Features {
        net: NeuralFeatureNet,
        embedding: Vec<f64>,
        dim: usize,
    },
}

impl SectionSum {
    pub(crate) fn dim(&self) -> usize {
        match self {
            SectionSum::Direct { centers, .. } => centers.dim(),
            SectionSum::Features { dim, .. } => *dim,
        }
    }

    pub(crate) fn value(&self, z: &[f64]) -> f64 {
        match self {
            SectionSum::Direct {
                kernel,
                centers,
                weights,
            } => centers
                .points()
                .zip(weights)
                .map(|(c, w)| w * kernel.eval_unchecked(z, c))
                .sum(),
            SectionSum::Features { net, embedding, .. } => net
                .z_batch
                .chunks_exact(net.input_dim)
                .zip(embedding)
                .map(|(zb, s)| s * net.psi(zb, z))
                .sum(),
        }
    }

    pub(crate) fn add_grad(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            SectionSum::Direct {
                kernel,
                centers,
                weights,
            } => {
                for (c, w) in centers.points().zip(weights) {
                    kernel.add_grad1(z, c, scale * w, out);
                }
            }
            SectionSum::Features { net, embedding, .. } => {
                for (zb, s) in net.z_batch.chunks_exact(net.input_dim).zip(embedding) {
                    net.add_psi_grad(zb, z, scale * s, out);
                }
            }
        }
    }
}

/// Architecture and probe batch of the neural-feature kernel.
///
/// Parameter layout of a point: `[b1, W1 (hidden), b0 (hidden), W0 (hidden × p, row-major)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFeatureNet {
    hidden: usize,
    input_dim: usize,
    /// `B × p` probe inputs, row-major.
    z_batch: Vec<f64>,
    /// Optional pool the batch is redrawn from.
    pool: Option<Arc<Vec<f64>>>,
    batch_size: usize,
}

impl NeuralFeatureNet {
    /// A net over a fixed probe batch.
    pub fn new(hidden: usize, input_dim: usize, z_batch: Vec<f64>) -> Result<Self> {
        if hidden == 0 || input_dim == 0 {
            return Err(Error::input("hidden width and input dimension must be positive"));
        }
        if z_batch.is_empty() || !z_batch.len().is_multiple_of(input_dim) {
            return Err(Error::input("probe batch must hold a positive number of inputs"));
        }
        let batch_size = z_batch.len() / input_dim;
        Ok(Self {
            hidden,
            input_dim,
            z_batch,
            pool: None,
            batch_size,
        })
    }

    /// A net whose batch of `batch_size` probes is drawn from `pool` on each
    /// call to [`KernelSpec::resample`]. The initial batch is the first
    /// `batch_size` pool entries.
    pub fn with_pool(
        hidden: usize,
        input_dim: usize,
        pool: Arc<Vec<f64>>,
        batch_size: usize,
    ) -> Result<Self> {
        let pool_len = pool.len() / input_dim.max(1);
        if batch_size == 0 || batch_size > pool_len || !pool.len().is_multiple_of(input_dim.max(1)) {
            return Err(Error::input(format!(
                "batch size {batch_size} incompatible with a pool of {pool_len} inputs"
            )));
        }
        let mut net = Self::new(hidden, input_dim, pool[..batch_size * input_dim].to_vec())?;
        net.pool = Some(pool);
        Ok(net)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn batch_len(&self) -> usize {
        self.z_batch.len() / self.input_dim
    }

    pub fn z_batch(&self) -> &[f64] {
        &self.z_batch
    }

    /// Number of network parameters, the dimension of kernel inputs.
    pub fn param_dim(&self) -> usize {
        1 + self.hidden + self.hidden + self.hidden * self.input_dim
    }

    fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let Some(pool) = &self.pool else {
            return false;
        };
        let p = self.input_dim;
        let pool_len = pool.len() / p;
        let picks = rand::seq::index::sample(rng, pool_len, self.batch_size);
        let mut batch = Vec::with_capacity(self.batch_size * p);
        for i in picks.iter() {
            batch.extend_from_slice(&pool[i * p..(i + 1) * p]);
        }
        self.z_batch = batch;
        true
    }

    /// Network output before the squashing nonlinearity G.
    #[inline]
    fn forward(&self, z: &[f64], x: &[f64]) -> f64 {
        let h = self.hidden;
        let p = self.input_dim;
        let (b1, rest) = x.split_at(1);
        let (w1, rest) = rest.split_at(h);
        let (b0, w0) = rest.split_at(h);
        let mut u = b1[0];
        for k in 0..h {
            let pre = b0[k] + dot(&w0[k * p..(k + 1) * p], z);
            if pre > 0.0 {
                u += w1[k] * pre;
            }
        }
        u
    }

    /// ψ(z, x) = G(b1 + W1 σ(W0 z + b0)).
    #[inline]
    pub fn psi(&self, z: &[f64], x: &[f64]) -> f64 {
        let u = self.forward(z, x);
        (-0.25 * u * u).exp()
    }

    /// `out += scale · ∇_x ψ(z, x)`; the ReLU derivative at 0 is taken as 0.
    fn add_psi_grad(&self, z: &[f64], x: &[f64], scale: f64, out: &mut [f64]) {
        let h = self.hidden;
        let p = self.input_dim;
        let w1 = &x[1..1 + h];
        let b0 = &x[1 + h..1 + 2 * h];
        let w0 = &x[1 + 2 * h..];
        let mut u = x[0];
        let mut pre = [0.0f64; 64];
        let mut pre_dyn;
        let pre: &mut [f64] = if h <= 64 {
            &mut pre[..h]
        } else {
            pre_dyn = vec![0.0; h];
            &mut pre_dyn
        };
        for k in 0..h {
            pre[k] = b0[k] + dot(&w0[k * p..(k + 1) * p], z);
            if pre[k] > 0.0 {
                u += w1[k] * pre[k];
            }
        }
        // G'(u) = −(u/2) G(u)
        let gp = scale * (-0.5 * u) * (-0.25 * u * u).exp();
        out[0] += gp;
        for k in 0..h {
            if pre[k] > 0.0 {
                out[1 + k] += gp * pre[k];
                let c = gp * w1[k];
                out[1 + h + k] += c;
                let row = &mut out[1 + 2 * h + k * p..1 + 2 * h + (k + 1) * p];
                for (o, zj) in row.iter_mut().zip(z) {
                    *o += c * zj;
                }
            }
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let b = self.batch_len();
        let s: f64 = self
            .z_batch
            .chunks_exact(self.input_dim)
            .map(|z| self.psi(z, x) * self.psi(z, y))
            .sum();
        s / b as f64
    }

    fn add_grad1(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let b = self.batch_len() as f64;
        for z in self.z_batch.chunks_exact(self.input_dim) {
            let w = self.psi(z, y);
            self.add_psi_grad(z, x, scale * w / b, out);
        }
    }

    /// Row-major `n × B` matrix of ψ(z_b, x_i).
    pub fn features(&self, points: &ParticleSystem) -> Vec<f64> {
        let b = self.batch_len();
        let mut f = vec![0.0; points.len() * b];
        f.par_chunks_exact_mut(b)
            .zip(points.as_flat().par_chunks_exact(points.dim()))
            .for_each(|(row, x)| {
                for (v, z) in row.iter_mut().zip(self.z_batch.chunks_exact(self.input_dim)) {
                    *v = self.psi(z, x);
                }
            });
        f
    }

    fn gram_from_features(&self, fr: &[f64], nr: usize, fc: &[f64], nc: usize) -> DMatrix<f64> {
        let b = self.batch_len();
        let flat: Vec<f64> = fr
            .par_chunks_exact(b)
            .flat_map_iter(|r| {
                fc.chunks_exact(b).map(move |c| {
                    let s: f64 = r.iter().zip(c).map(|(a, b)| a * b).sum();
                    s / b as f64
                })
            })
            .collect();
        DMatrix::from_row_iterator(nr, nc, flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn small_net(rng: &mut ChaCha8Rng) -> NeuralFeatureNet {
        NeuralFeatureNet::new(3, 4, randn(rng, 4 * 8)).unwrap()
    }

    fn families(rng: &mut ChaCha8Rng) -> Vec<(KernelSpec, usize)> {
        let net = small_net(rng);
        let d = net.param_dim();
        vec![
            (KernelSpec::gaussian(0.7).unwrap(), 3),
            (KernelSpec::inverse_multiquadric(1.3, 0.8).unwrap(), 3),
            (KernelSpec::neural_feature(net), d),
        ]
    }

    #[test]
    fn gaussian_values() {
        let k = KernelSpec::gaussian(0.3).unwrap();
        assert_eq!(k.eval(&[0.4, -1.0], &[0.4, -1.0]).unwrap(), 1.0);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let v = k.eval(&[0.0, 0.0], &[2f64.sqrt(), 0.0]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert!((v - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn gaussian_gradient_values() {
        let k = KernelSpec::gaussian(0.3).unwrap();
        assert_eq!(k.grad1(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let g = k.grad1(&[1.0], &[0.0]).unwrap();
        assert!((g[0] + (-0.5f64).exp()).abs() < 1e-15);
        assert!((g[0] + 0.6065307).abs() < 1e-7);
    }

    #[test]
    fn degenerate_net_is_constant_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = small_net(&mut rng);
        let d = net.param_dim();
        let k = KernelSpec::neural_feature(net);
        let mut x = randn(&mut rng, d);
        let mut y = randn(&mut rng, d);
        // b1 = 0 and W1 = 0 make the output G(0) = 1
        for v in x.iter_mut().take(4).chain(y.iter_mut().take(4)) {
            *v = 0.0;
        }
        assert_eq!(k.eval(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn bounds() {
        assert_eq!(KernelSpec::gaussian(0.1).unwrap().bound(), 1.0);
        assert_eq!(KernelSpec::gaussian(10.0).unwrap().bound(), 1.0);
        assert_eq!(KernelSpec::inverse_multiquadric(1.0, 1.0).unwrap().bound(), 1.0);
        assert!((KernelSpec::inverse_multiquadric(1.0, 4.0).unwrap().bound() - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(KernelSpec::neural_feature(small_net(&mut rng)).bound(), 1.0);
    }

    #[test]
    fn imq_unit_offset_matches_closed_form() {
        let k = KernelSpec::inverse_multiquadric(1.0, 1.0).unwrap();
        let v = k.eval(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!((v - 6f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters_and_dims() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::inverse_multiquadric(1.0, 0.0).is_err());
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(Error::Input(_))));
        assert!(matches!(k.grad1(&[0.0], &[0.0, 1.0]), Err(Error::Input(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nf = KernelSpec::neural_feature(small_net(&mut rng));
        assert!(nf.eval(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = ParticleSystem::from_rows(&[[0.5]]).unwrap();
        let g = k.gram(&x, &x).unwrap();
        assert_eq!(g.values.as_slice(), &[1.0]);
        assert!(g.symmetric);
        let a = ParticleSystem::from_rows(&[[0.0]]).unwrap();
        let b = ParticleSystem::from_rows(&[[1.0]]).unwrap();
        let g = k.gram(&a, &b).unwrap();
        assert!((g.get(0, 0) - (-0.5f64).exp()).abs() < 1e-16);
        assert!(!g.symmetric);
    }

    #[test]
    fn gram_is_bit_exact_against_eval_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, d) in families(&mut rng) {
            let n = 20;
            let p = ParticleSystem::from_flat(randn(&mut rng, n * d), d).unwrap();
            let q = ParticleSystem::from_flat(randn(&mut rng, 7 * d), d).unwrap();
            let g = k.gram(&p, &p).unwrap();
            let h = k.gram(&p, &q).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(g.get(i, j), k.eval(p.point(i), p.point(j)).unwrap());
                }
                for j in 0..7 {
                    assert_eq!(h.get(i, j), k.eval(p.point(i), q.point(j)).unwrap());
                }
            }
        }
    }

    #[test]
    fn row_means_match_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, d) in families(&mut rng) {
            let p = ParticleSystem::from_flat(randn(&mut rng, 9 * d), d).unwrap();
            let q = ParticleSystem::from_flat(randn(&mut rng, 5 * d), d).unwrap();
            let g = k.gram(&p, &q).unwrap();
            let rm = k.row_means(&p, &q).unwrap();
            for (i, r) in rm.iter().enumerate() {
                let want: f64 = (0..5).map(|j| g.get(i, j)).sum::<f64>() / 5.0;
                assert!((r - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_gram_rejected() {
        assert!(ParticleSystem::from_flat(vec![], 1).is_err());
    }

    #[test]
    fn resample_draws_from_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool: Vec<f64> = (0..40).map(|v| v as f64).collect();
        let net = NeuralFeatureNet::with_pool(2, 2, Arc::new(pool), 5).unwrap();
        let mut k = KernelSpec::neural_feature(net);
        assert!(k.is_resampled());
        assert!(k.resample(&mut rng));
        let KernelSpec::NeuralFeature(net) = &k else { unreachable!() };
        assert_eq!(net.batch_len(), 5);
        for z in net.z_batch().chunks_exact(2) {
            assert_eq!(z[0] % 2.0, 0.0);
            assert_eq!(z[1], z[0] + 1.0);
        }
        assert!(!KernelSpec::gaussian(1.0).unwrap().resample(&mut rng));
    }
}
