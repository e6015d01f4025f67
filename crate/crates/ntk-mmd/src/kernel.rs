//! Kernel evaluations and Gram-block assembly.
//!
//! Three kernels are supported: the empirical NTK as a feature-map dot
//! product `⟨∇_θ f(x;θ), ∇_θ f(x';θ)⟩`, the closed-form two-layer NTK
//! `(Σ_k a_k² σ'(w_k·x+b_k) σ'(w_k·x'+b_k)) (1 + x·x')`, and the Gaussian RBF
//! `exp(-‖x-x'‖²/(2h²))` with a median-heuristic bandwidth. The feature-map
//! and closed-form routes agree to near machine precision on two-layer
//! networks with a fixed output layer; both are kept so each can check the
//! other.
//!
//! Gram blocks are materialized densely. Same-list blocks are assembled from
//! the upper triangle so they are exactly symmetric.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::net::NetworkParams;
use crate::{Error, Result};

/// Kernel function choice. NTK variants snapshot the supplied parameters.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    /// Empirical NTK via parameter-gradient feature maps.
    NtkFeature(NetworkParams),
    /// Closed-form two-layer NTK; requires depth 2 with a fixed output layer.
    NtkAnalytic2(NetworkParams),
    /// Gaussian RBF with bandwidth `h`: `exp(-‖x-x'‖²/(2h²))`.
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn ntk_feature(params: NetworkParams) -> Self {
        KernelSpec::NtkFeature(params)
    }

    pub fn ntk_analytic2(params: NetworkParams) -> Result<Self> {
        check_analytic2(&params)?;
        Ok(KernelSpec::NtkAnalytic2(params))
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gaussian bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec::Gaussian { bandwidth })
    }

    /// Input dimension the kernel expects, if it is constrained.
    fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::NtkFeature(p) | KernelSpec::NtkAnalytic2(p) => {
                Some(p.config().input_dim())
            }
            KernelSpec::Gaussian { .. } => None,
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if let Some(expected) = self.input_dim() {
            if expected != d {
                return Err(Error::DimensionMismatch { expected, got: d });
            }
        }
        Ok(())
    }

    /// K(x, x').
    pub fn pair(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        self.check_dim(x.len())?;
        match self {
            KernelSpec::NtkFeature(p) => {
                let gx = p.param_gradient(x)?;
                let gy = p.param_gradient(y)?;
                Ok(gx.dot(&gy))
            }
            KernelSpec::NtkAnalytic2(p) => ntk_analytic2(p, x, y),
            KernelSpec::Gaussian { bandwidth } => {
                let mut sq = 0.0;
                for (a, b) in x.iter().zip(y.iter()) {
                    let d = a - b;
                    sq += d * d;
                }
                Ok((-sq / (2.0 * bandwidth * bandwidth)).exp())
            }
        }
    }

    /// Dense kernel matrix between the rows of `a` and the rows of `b`.
    pub fn gram(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<GramBlock> {
        self.gram_impl(a, b, same_view(&a, &b))
    }

    /// Gram block computed through the generic two-list path even when `a`
    /// and `b` are the same array. MMD estimators use this so that blocks
    /// over bitwise-equal lists are themselves bitwise equal and statistics
    /// on identical samples cancel exactly.
    pub(crate) fn gram_uniform(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<GramBlock> {
        self.gram_impl(a, b, false)
    }

    fn gram_impl(&self, a: ArrayView2<f64>, b: ArrayView2<f64>, same: bool) -> Result<GramBlock> {
        if a.nrows() == 0 || b.nrows() == 0 {
            return Err(Error::EmptyInput("gram sample list"));
        }
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.ncols(),
                got: b.ncols(),
            });
        }
        self.check_dim(a.ncols())?;
        let values = match self {
            KernelSpec::NtkFeature(p) => {
                let fa = feature_matrix(p, a)?;
                let product = if same {
                    fa.dot(&fa.t())
                } else {
                    let fb = feature_matrix(p, b)?;
                    fa.dot(&fb.t())
                };
                if same {
                    symmetrized(product)
                } else {
                    product
                }
            }
            KernelSpec::NtkAnalytic2(p) => {
                let sa = analytic2_slopes(p, a);
                let cross_inputs;
                let cross_slopes;
                if same {
                    cross_inputs = a.dot(&a.t());
                    cross_slopes = sa.dot(&sa.t());
                } else {
                    let sb = analytic2_slopes(p, b);
                    cross_inputs = a.dot(&b.t());
                    cross_slopes = sa.dot(&sb.t());
                }
                let mut values = cross_slopes;
                values.zip_mut_with(&cross_inputs, |v, &ip| *v *= 1.0 + ip);
                if same {
                    symmetrized(values)
                } else {
                    values
                }
            }
            KernelSpec::Gaussian { bandwidth } => {
                let denom = 2.0 * bandwidth * bandwidth;
                let a_sq: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
                if same {
                    let cross = a.dot(&a.t());
                    let n = a.nrows();
                    let mut values = Array2::zeros((n, n));
                    for i in 0..n {
                        values[(i, i)] = 1.0;
                        for j in (i + 1)..n {
                            let sq = (a_sq[i] + a_sq[j] - 2.0 * cross[(i, j)]).max(0.0);
                            let k = (-sq / denom).exp();
                            values[(i, j)] = k;
                            values[(j, i)] = k;
                        }
                    }
                    values
                } else {
                    let b_sq: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
                    let mut values = a.dot(&b.t());
                    for (i, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            let sq = (a_sq[i] + b_sq[j] - 2.0 * *v).max(0.0);
                            *v = (-sq / denom).exp();
                        }
                    }
                    values
                }
            }
        };
        Ok(GramBlock { values })
    }
}

fn same_view(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> bool {
    a.as_ptr() == b.as_ptr() && a.dim() == b.dim() && a.strides() == b.strides()
}

fn symmetrized(mut m: Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = m[(i, j)];
            m[(j, i)] = v;
        }
    }
    m
}

fn check_analytic2(params: &NetworkParams) -> Result<()> {
    let cfg = params.config();
    if cfg.depth() != 2 || cfg.train_output_layer() {
        return Err(Error::InvalidConfig(
            "closed-form NTK requires a two-layer network with fixed output weights".into(),
        ));
    }
    Ok(())
}

/// Closed-form two-layer NTK at the given parameters:
/// `(Σ_k a_k² σ'(w_k·x+b_k) σ'(w_k·x'+b_k)) (1 + x·x')`.
/// O(m·d) per pair; no gradient vectors are materialized.
pub fn ntk_analytic2(params: &NetworkParams, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    check_analytic2(params)?;
    let d = params.config().input_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if y.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: y.len() });
    }
    let act = params.config().activation();
    let w = params.layer_weights(0);
    let bias = params.layer_bias(0);
    let a = params.output_weights();
    let zx = w.dot(&x);
    let zy = w.dot(&y);
    let mut slope_sum = 0.0;
    for k in 0..a.len() {
        slope_sum +=
            a[k] * a[k] * act.derivative(zx[k] + bias[k]) * act.derivative(zy[k] + bias[k]);
    }
    Ok(slope_sum * (1.0 + x.dot(&y)))
}

/// Rows of parameter gradients: an (n × P) matrix whose i-th row is
/// ∇_θ f(z_i; θ) in the documented flattening.
fn feature_matrix(params: &NetworkParams, samples: ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = params.trainable_len();
    let n = samples.nrows();
    let mut features = Array2::zeros((n, p));
    for (row, sample) in features.axis_iter_mut(Axis(0)).zip(samples.rows()) {
        let row = row.into_slice().expect("contiguous");
        params.write_param_gradient(sample, row);
    }
    Ok(features)
}

/// Per-sample slope features `a_k σ'(w_k·z + b_k)` for the closed-form NTK:
/// the kernel is `⟨s(x), s(x')⟩ (1 + x·x')`.
fn analytic2_slopes(params: &NetworkParams, samples: ArrayView2<f64>) -> Array2<f64> {
    let act = params.config().activation();
    let a = params.output_weights();
    let bias = params.layer_bias(0);
    let mut z = samples.dot(&params.layer_weights(0).t());
    for mut row in z.axis_iter_mut(Axis(0)) {
        for (k, v) in row.iter_mut().enumerate() {
            *v = a[k] * act.derivative(*v + bias[k]);
        }
    }
    z
}

/// Dense rectangular kernel-evaluation matrix between two sample lists.
#[derive(Debug, Clone)]
pub struct GramBlock {
    values: Array2<f64>,
}

impl GramBlock {
    /// Wrap precomputed kernel values; entries must be finite.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gram values"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    /// Sum over entries with i ≠ j; meaningful for square same-list blocks.
    pub fn off_diagonal_sum(&self) -> f64 {
        let mut s = 0.0;
        for (idx, v) in self.values.indexed_iter() {
            if idx.0 != idx.1 {
                s += v;
            }
        }
        s
    }

    /// Largest self-kernel value K(z,z); square blocks only.
    pub fn max_diagonal(&self) -> Result<f64> {
        if self.nrows() != self.ncols() {
            return Err(Error::InvalidConfig(
                "max_diagonal requires a square block".into(),
            ));
        }
        Ok(self
            .values
            .diag()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// All entries divided by `factor`. Used to normalize kernels so
    /// `sup K(x,x) ≤ 1` when evaluating theoretical thresholds.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.mapv_inplace(|v| v / factor);
        self
    }
}

/// Median of pairwise Euclidean distances over unordered distinct pairs. For
/// even pair counts, the mean of the two central order statistics.
pub fn median_bandwidth(samples: ArrayView2<f64>) -> Result<f64> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let ri = samples.row(i);
        for j in (i + 1)..n {
            let rj = samples.row(j);
            let mut sq = 0.0;
            for (a, b) in ri.iter().zip(rj.iter()) {
                let d = a - b;
                sq += d * d;
            }
            dists.push(sq.sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let len = dists.len();
    let median = if len % 2 == 1 {
        dists[len / 2]
    } else {
        0.5 * (dists[len / 2 - 1] + dists[len / 2])
    };
    Ok(median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, NetworkConfig};
    use crate::seed::rng_from;
    use ndarray::{arr1, Array1};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_samples(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    fn two_layer(d: usize, m: usize, act: Activation, seed: u64) -> NetworkParams {
        NetworkParams::init(&NetworkConfig::new(d, &[m], act).unwrap(), seed)
    }

    #[test]
    fn gaussian_zero_distance_is_one() {
        let k = KernelSpec::gaussian(0.7).unwrap();
        let x = arr1(&[1.0, -2.0, 3.0]);
        assert_eq!(k.pair(x.view(), x.view()).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_rejects_bad_bandwidth() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn ntk_feature_relu_closed_form() {
        // single unit, a=1, w=e1, b=0.1: both preactivations positive, so
        // K(x,x') = (x·x' + 1)
        let config = NetworkConfig::new(2, &[1], Activation::Relu).unwrap();
        let params = NetworkParams::from_parts(
            &config,
            vec![(
                Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap(),
                arr1(&[0.1]),
            )],
            arr1(&[1.0]),
        )
        .unwrap();
        let k = KernelSpec::ntk_feature(params);
        let v = k
            .pair(arr1(&[1.0, 0.0]).view(), arr1(&[2.0, 0.0]).view())
            .unwrap();
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn analytic2_closed_forms() {
        // a=1, w=0, b=0, softplus: σ'(0)² = 1/4, orthogonal inputs
        let config = NetworkConfig::new(2, &[1], Activation::Softplus).unwrap();
        let params = NetworkParams::from_parts(
            &config,
            vec![(Array2::zeros((1, 2)), arr1(&[0.0]))],
            arr1(&[1.0]),
        )
        .unwrap();
        let v = ntk_analytic2(&params, arr1(&[1.0, 0.0]).view(), arr1(&[0.0, 1.0]).view()).unwrap();
        assert!((v - 0.25).abs() < 1e-15);

        let config = NetworkConfig::new(2, &[1], Activation::Relu).unwrap();
        let params = NetworkParams::from_parts(
            &config,
            vec![(
                Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap(),
                arr1(&[0.0]),
            )],
            arr1(&[1.0]),
        )
        .unwrap();
        let e1 = arr1(&[1.0, 0.0]);
        let v = ntk_analytic2(&params, e1.view(), e1.view()).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn analytic2_requires_two_layer_fixed_output() {
        let three = NetworkParams::init(
            &NetworkConfig::new(2, &[3, 3], Activation::Softplus).unwrap(),
            1,
        );
        assert!(KernelSpec::ntk_analytic2(three).is_err());
        let trainable = NetworkParams::init(
            &NetworkConfig::new(2, &[3], Activation::Softplus)
                .unwrap()
                .with_trainable_output(true),
            1,
        );
        assert!(KernelSpec::ntk_analytic2(trainable).is_err());
    }

    #[test]
    fn analytic_equals_feature_map() {
        // the two NTK routes are independent implementations of the same
        // kernel; they must agree to near machine precision
        for (m, seed) in [(8, 1u64), (64, 2)] {
            let params = two_layer(5, m, Activation::Softplus, seed);
            let feature = KernelSpec::ntk_feature(params.clone());
            let analytic = KernelSpec::ntk_analytic2(params).unwrap();
            let mut rng = rng_from(100 + seed);
            for _ in 0..50 {
                let x = Array1::from_shape_simple_fn(5, || StandardNormal.sample(&mut rng));
                let y = Array1::from_shape_simple_fn(5, || StandardNormal.sample(&mut rng));
                let kf = feature.pair(x.view(), y.view()).unwrap();
                let ka = analytic.pair(x.view(), y.view()).unwrap();
                assert!(
                    (kf - ka).abs() <= 1e-10 * kf.abs().max(ka.abs()).max(1e-300),
                    "feature {kf} vs analytic {ka}"
                );
            }
        }
    }

    #[test]
    fn gram_same_list_gaussian_is_symmetric_with_unit_diagonal() {
        let samples = random_samples(17, 4, 3);
        let k = KernelSpec::gaussian(1.3).unwrap();
        let g = k.gram(samples.view(), samples.view()).unwrap();
        let v = g.values();
        for i in 0..17 {
            assert_eq!(v[(i, i)], 1.0);
            for j in 0..17 {
                assert_eq!(v[(i, j)], v[(j, i)]);
            }
        }
    }

    #[test]
    fn gram_matches_pairwise_evaluation() {
        let a = random_samples(6, 3, 10);
        let b = random_samples(4, 3, 11);
        let params = two_layer(3, 16, Activation::Softplus, 12);
        for spec in [
            KernelSpec::gaussian(0.9).unwrap(),
            KernelSpec::ntk_feature(params.clone()),
            KernelSpec::ntk_analytic2(params).unwrap(),
        ] {
            let g = spec.gram(a.view(), b.view()).unwrap();
            for i in 0..6 {
                for j in 0..4 {
                    let direct = spec.pair(a.row(i), b.row(j)).unwrap();
                    let tol = 1e-12 * direct.abs().max(1.0);
                    assert!((g.values()[(i, j)] - direct).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn gram_single_row_block() {
        let a = random_samples(1, 3, 20);
        let b = random_samples(2, 3, 21);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let g = k.gram(a.view(), b.view()).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (1, 2));
        assert_eq!(g.values()[(0, 0)], k.pair(a.row(0), b.row(0)).unwrap());
        assert_eq!(g.values()[(0, 1)], k.pair(a.row(0), b.row(1)).unwrap());
    }

    #[test]
    fn gram_rejects_empty_and_mismatched() {
        let a = random_samples(3, 2, 30);
        let empty = Array2::<f64>::zeros((0, 2));
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(k.gram(empty.view(), a.view()).is_err());
        let wrong = random_samples(3, 4, 31);
        assert!(k.gram(a.view(), wrong.view()).is_err());
    }

    fn min_eigenvalue(m: &Array2<f64>) -> f64 {
        let n = m.nrows();
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
        let eig = nalgebra::SymmetricEigen::new(dm);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn same_list_grams_are_positive_semidefinite() {
        let samples = random_samples(20, 4, 40);
        let params = two_layer(4, 24, Activation::Softplus, 41);
        for spec in [
            KernelSpec::gaussian(1.1).unwrap(),
            KernelSpec::ntk_feature(params.clone()),
            KernelSpec::ntk_analytic2(params).unwrap(),
        ] {
            let g = spec.gram(samples.view(), samples.view()).unwrap();
            let max_diag = g.max_diagonal().unwrap();
            let min_eig = min_eigenvalue(g.values());
            assert!(
                min_eig >= -1e-8 * max_diag.max(1.0),
                "min eigenvalue {min_eig} for max diagonal {max_diag}"
            );
        }
    }

    #[test]
    fn normalized_gram_has_unit_sup() {
        let samples = random_samples(12, 6, 50);
        let params = two_layer(6, 32, Activation::Softplus, 51);
        let spec = KernelSpec::ntk_analytic2(params).unwrap();
        let g = spec.gram(samples.view(), samples.view()).unwrap();
        let scale = g.max_diagonal().unwrap();
        assert!(scale > 1.0);
        let normalized = g.scaled(scale);
        assert!((normalized.max_diagonal().unwrap() - 1.0).abs() < 1e-15);
        assert!(normalized.values().iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn median_bandwidth_small_cases() {
        let z = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(median_bandwidth(z.view()).unwrap(), 2.0);
        let z = Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap();
        assert_eq!(median_bandwidth(z.view()).unwrap(), 1.0);
        let single = Array2::from_shape_vec((1, 1), vec![0.0]).unwrap();
        assert!(median_bandwidth(single.view()).is_err());
        // even pair count: distances {1,2,3,1,2,1} sorted {1,1,1,2,2,3}
        let z = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(median_bandwidth(z.view()).unwrap(), 1.5);
    }

    #[test]
    fn median_bandwidth_concentrates_at_sqrt_2d() {
        // pairwise distances of standard normals in high dimension
        // concentrate at sqrt(2d)
        let d = 100;
        let samples = random_samples(1000, d, 60);
        let med = median_bandwidth(samples.view()).unwrap();
        let target = (2.0 * d as f64).sqrt();
        assert!(
            (med - target).abs() <= 0.05 * target,
            "median {med} vs sqrt(2d) {target}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn kernel_pair_is_symmetric(seed in 0u64..1000, d in 1usize..5) {
            let params = two_layer(d, 6, Activation::Softplus, seed);
            let mut rng = rng_from(seed ^ 0x5555);
            let x = Array1::from_shape_simple_fn(d, || StandardNormal.sample(&mut rng));
            let y = Array1::from_shape_simple_fn(d, || StandardNormal.sample(&mut rng));
            for spec in [
                KernelSpec::gaussian(0.8).unwrap(),
                KernelSpec::ntk_feature(params.clone()),
                KernelSpec::ntk_analytic2(params.clone()).unwrap(),
            ] {
                let kxy = spec.pair(x.view(), y.view()).unwrap();
                let kyx = spec.pair(y.view(), x.view()).unwrap();
                prop_assert!((kxy - kyx).abs() <= 1e-12 * kxy.abs().max(1.0));
            }
        }

        #[test]
        fn gaussian_kernel_is_bounded(seed in 0u64..1000) {
            let samples = random_samples(8, 3, seed);
            let k = KernelSpec::gaussian(1.0).unwrap();
            let g = k.gram(samples.view(), samples.view()).unwrap();
            prop_assert!(g.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }
}
