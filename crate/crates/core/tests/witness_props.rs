mod common;

use common::{rel_err, rel_err_vec, uniform_cloud, DenseOracle, RefKernel};
use drmmd::{
    drmmd_estimate, drmmd_from_witness, fit_witness, mmd2_estimate, GramCache, ParticleSystem,
    SolveMode, WitnessProblem,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    kernel: RefKernel,
    source: ParticleSystem,
    target: ParticleSystem,
    lambda: f64,
}

fn cloud(n: std::ops::RangeInclusive<usize>, d: usize, lo: f64, hi: f64) -> impl Strategy<Value = ParticleSystem> {
    n.prop_flat_map(move |n| prop::collection::vec(lo..hi, n * d))
        .prop_map(move |v| ParticleSystem::from_flat(v, d).unwrap())
}

fn instance() -> impl Strategy<Value = Instance> {
    let kernel = prop_oneof![
        (0.3f64..2.0).prop_map(|l| RefKernel::Gaussian { l }),
        (0.3f64..2.0, 0.5f64..2.0).prop_map(|(l, c)| RefKernel::Imq { l, c }),
    ];
    (1usize..=3)
        .prop_flat_map(move |d| {
            (
                kernel.clone(),
                cloud(2..=20, d, -1.0, 1.0),
                cloud(2..=20, d, -0.5, 1.5),
                -3.0f64..1.0,
            )
        })
        .prop_map(|(kernel, source, target, e)| Instance {
            kernel,
            source,
            target,
            lambda: 10f64.powf(e),
        })
}

impl Instance {
    fn cache(&self) -> GramCache {
        GramCache::for_target(&self.kernel.spec(), &self.target, SolveMode::Eigen).unwrap()
    }

    fn fit(&self) -> drmmd::WitnessModel {
        fit_witness(&self.source, &self.target, &self.kernel.spec(), &self.cache(), self.lambda).unwrap()
    }

    fn drmmd(&self, lambda: f64) -> f64 {
        drmmd_estimate(&self.source, &self.target, &self.kernel.spec(), &self.cache(), lambda).unwrap()
    }

    fn probes(&self) -> Vec<Vec<f64>> {
        let d = self.source.dim();
        let mut r = common::rng(self.source.len() as u64);
        let extra = uniform_cloud(&mut r, 10, d, -2.0, 2.5);
        self.source
            .points()
            .chain(extra.points())
            .map(<[f64]>::to_vec)
            .collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_dense_subspace_oracle(inst in instance()) {
        let model = inst.fit();
        let oracle = DenseOracle::new(inst.kernel, &inst.source, &inst.target, inst.lambda);
        let scale = inst.probes().iter().map(|z| oracle.eval(z).abs()).fold(0.0, f64::max);
        for z in inst.probes() {
            prop_assert!((model.eval(&z).unwrap() - oracle.eval(&z)).abs() <= 1e-8 * scale);
            prop_assert!(rel_err_vec(&model.grad(&z).unwrap(), &oracle.grad(&z)) <= 1e-8
                || common::norm(&oracle.grad(&z)) <= 1e-8 * scale);
        }
        prop_assert!(rel_err(inst.drmmd(inst.lambda), oracle.drmmd) <= 1e-8);
        let mmd2 = mmd2_estimate(&inst.source, &inst.target, &inst.kernel.spec()).unwrap();
        prop_assert!((mmd2 - oracle.mmd2).abs() <= 1e-12);
    }

    #[test]
    fn estimator_paths_agree(inst in instance()) {
        let model = inst.fit();
        let via_h = drmmd_from_witness(&model, &inst.source, &inst.target).unwrap();
        prop_assert!(rel_err(inst.drmmd(inst.lambda), via_h) <= 1e-10);
    }

    #[test]
    fn nonnegative_and_sandwiched(inst in instance()) {
        let spec = inst.kernel.spec();
        let k = spec.bound();
        let mmd2 = mmd2_estimate(&inst.source, &inst.target, &spec).unwrap();
        prop_assert!(mmd2 >= -1e-12);
        for lambda in [1e-2, 1.0, 1e2, 1e4] {
            let d = inst.drmmd(lambda);
            prop_assert!(d >= -1e-12);
            // Σ ≤ K·I gives (1+λ)/(K+λ)·MMD² ≤ DrMMD ≤ (1+λ)/λ·MMD².
            prop_assert!(d <= (1.0 + lambda) / lambda * mmd2 * (1.0 + 1e-10) + 1e-14);
            prop_assert!(d >= (1.0 + lambda) / (k + lambda) * mmd2 * (1.0 - 1e-10) - 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences(inst in instance()) {
        let model = inst.fit();
        for z in inst.probes() {
            let g = model.grad(&z).unwrap();
            let fd: Vec<f64> = (0..z.len()).map(|j| {
                let h = 1e-5;
                let mut p = z.clone();
                let mut m = z.clone();
                p[j] += h;
                m[j] -= h;
                (model.eval(&p).unwrap() - model.eval(&m).unwrap()) / (2.0 * h)
            }).collect();
            let scale = common::norm(&g).max(1e-3 / inst.lambda);
            let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
            prop_assert!(common::norm(&diff) / scale <= 1e-5);
        }
    }

    #[test]
    fn pointwise_bounds(inst in instance()) {
        let model = inst.fit();
        let k = inst.kernel.bound();
        let d = inst.source.dim();
        for z in inst.probes() {
            prop_assert!(model.eval(&z).unwrap().abs() <= 2.0 * k / inst.lambda);
            prop_assert!(common::norm(&model.grad(&z).unwrap())
                <= 2.0 * (k * inst.kernel.k1d(d)).sqrt() / inst.lambda);
        }
    }

    #[test]
    fn equals_naive_section_sum(inst in instance()) {
        let model = inst.fit();
        let scale: f64 = model.coeff_y().iter().chain(model.coeff_x()).map(|c| c.abs()).sum();
        for z in inst.probes() {
            let direct: f64 = inst.source.points().zip(model.coeff_y())
                .chain(inst.target.points().zip(model.coeff_x()))
                .map(|(p, c)| c * inst.kernel.k(&z, p))
                .sum();
            prop_assert!((model.eval(&z).unwrap() - direct).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn large_lambda_recovers_mmd_witness(inst in instance()) {
        let lambda = 1e6;
        let spec = inst.kernel.spec();
        let model = fit_witness(&inst.source, &inst.target, &spec, &inst.cache(), lambda).unwrap();
        let mean = |p: &ParticleSystem, z: &[f64]| p.points().map(|q| inst.kernel.k(z, q)).sum::<f64>() / p.len() as f64;
        let probes = inst.probes();
        let mmd_witness: Vec<f64> = probes.iter().map(|z| mean(&inst.source, z) - mean(&inst.target, z)).collect();
        let scale = mmd_witness.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (z, want) in probes.iter().zip(&mmd_witness) {
            let got = lambda / 2.0 * model.eval(z).unwrap();
            prop_assert!((got - want).abs() <= 1e-4 * scale.max(1e-12));
        }
    }

    #[test]
    fn identical_sets_give_zero(p in cloud(1..=20, 2, -1.0, 1.0), e in -3.0f64..1.0) {
        let spec = drmmd::KernelSpec::gaussian(0.7).unwrap();
        let cache = GramCache::for_target(&spec, &p, SolveMode::Eigen).unwrap();
        prop_assert!(drmmd_estimate(&p, &p, &spec, &cache, 10f64.powf(e)).unwrap() <= 1e-12);
        prop_assert!(mmd2_estimate(&p, &p, &spec).unwrap().abs() <= 1e-12);
    }
}

/// Spectral form (1+λ) Σ_i ⟨m_μ̂ − m_π̂, u_i⟩² / (σ_i + λ) on the (M+N)-dim
/// subspace: N = M = 10 points in 1-D, λ = 1.
#[test]
fn spectral_oracle_one_dimensional() {
    use nalgebra::{DMatrix, DVector, SymmetricEigen};
    let k = RefKernel::Gaussian { l: 1.0 };
    let mut r = common::rng(31);
    let y = uniform_cloud(&mut r, 10, 1, -1.0, 2.0);
    let x = uniform_cloud(&mut r, 10, 1, -2.0, 1.0);
    let lambda = 1.0;
    let pts: Vec<&[f64]> = x.points().chain(y.points()).collect();
    let t = pts.len();
    let g = DMatrix::from_fn(t, t, |a, b| k.k(pts[a], pts[b]));
    // Orthonormal coordinates through G = V D Vᵀ: φ ↦ D^{1/2} Vᵀ e.
    let eig = SymmetricEigen::new(g.clone());
    let keep: Vec<usize> = (0..t).filter(|&i| eig.eigenvalues[i] > 1e-12 * eig.eigenvalues.max()).collect();
    let r_dim = keep.len();
    let coords = DMatrix::from_fn(r_dim, t, |i, a| {
        eig.eigenvalues[keep[i]].sqrt() * eig.eigenvectors[(a, keep[i])]
    });
    let mut cov = DMatrix::zeros(r_dim, r_dim);
    for i in 0..10 {
        let c = coords.column(i);
        cov += c * c.transpose() / 10.0;
    }
    let b = DVector::from_fn(t, |a, _| if a < 10 { -0.1 } else { 0.1 });
    let d = &coords * b;
    let s = SymmetricEigen::new(cov);
    let spectral: f64 = (0..r_dim)
        .map(|i| (1.0 + lambda) * s.eigenvectors.column(i).dot(&d).powi(2) / (s.eigenvalues[i] + lambda))
        .sum();
    let spec = k.spec();
    let cache = GramCache::for_target(&spec, &x, SolveMode::Eigen).unwrap();
    let got = drmmd_estimate(&y, &x, &spec, &cache, lambda).unwrap();
    assert!(rel_err(got, spectral) <= 1e-8, "{got} vs {spectral}");
}

/// A source point far outside the target's span makes DrMMD blow up as λ ↓.
#[test]
fn diverges_as_lambda_vanishes() {
    let spec = drmmd::KernelSpec::gaussian(0.5).unwrap();
    let x = uniform_cloud(&mut common::rng(41), 10, 2, -0.5, 0.5);
    let mut y = uniform_cloud(&mut common::rng(42), 9, 2, -0.5, 0.5).as_flat().to_vec();
    y.extend([6.0, 6.0]);
    let y = ParticleSystem::from_flat(y, 2).unwrap();
    let cache = GramCache::for_target(&spec, &x, SolveMode::Eigen).unwrap();
    let values: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&l| drmmd_estimate(&y, &x, &spec, &cache, l).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
    assert!(values[3] > 100.0 * values[0], "{values:?}");
}

#[test]
fn single_point_mmd() {
    let spec = drmmd::KernelSpec::gaussian(1.0).unwrap();
    let x = ParticleSystem::from_rows(&[[0.0]]).unwrap();
    let y = ParticleSystem::from_rows(&[[1.0]]).unwrap();
    let want = 2.0 - 2.0 * (-0.5f64).exp();
    assert!((mmd2_estimate(&y, &x, &spec).unwrap() - want).abs() < 1e-15);
    assert!((want - 0.7869387).abs() < 1e-7);
}

#[test]
fn problem_reuses_summaries_across_lambdas() {
    let spec = drmmd::KernelSpec::gaussian(0.8).unwrap();
    let mut r = common::rng(51);
    let y = uniform_cloud(&mut r, 8, 2, -1.0, 1.0);
    let x = uniform_cloud(&mut r, 12, 2, 0.0, 2.0);
    let cache = GramCache::for_target(&spec, &x, SolveMode::Eigen).unwrap();
    let problem = WitnessProblem::new(&y, &x, &spec, &cache, true).unwrap();
    for l in [1e-3, 0.1, 10.0] {
        let d = problem.drmmd(&cache, l).unwrap();
        assert_eq!(d, drmmd_estimate(&y, &x, &spec, &cache, l).unwrap());
    }
}
