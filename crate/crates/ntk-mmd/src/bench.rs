//! Synthetic benchmarks: Gaussian shift generators, Hotelling and
//! Gaussian-MMD baselines, end-to-end test execution, Monte Carlo power
//! estimation, and the training-time approximation-error study.
//!
//! Replicas are embarrassingly parallel; every replica derives its RNG
//! streams from the root seed by replica index, so results are
//! bit-reproducible regardless of the parallelism degree.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::calibrate::{
    bootstrap_full_gram, bootstrap_full_retrain, bootstrap_test_only, class_labels,
    empirical_quantile, BootstrapResult, GramStatistic,
};
use crate::kernel::{median_bandwidth, KernelSpec};
use crate::mmd::{mmd2_asymmetric, mmd2_biased, mmd2_linear_time, TwoSample};
use crate::net::{Activation, NetworkConfig, NetworkParams};
use crate::seed::{child_seed, rng_from};
use crate::train::{t_net, train_online, train_online_with_checkpoints, SampleOrder, TrainConfig};
use crate::{Error, Result};

/// Distribution pair to generate: `X ~ N(0, I_d)` and `Y` per the shift.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShiftKind {
    /// Y from the same `N(0, I_d)`.
    Null,
    /// Y ~ N(δ·e₁, I_d); the direction is immaterial because X's law and all
    /// the isotropic methods here are rotation-invariant, so only ‖μ‖ = δ
    /// matters.
    MeanShift { delta: f64 },
    /// Y ~ N(0, I_d + ρE) with E the all-ones matrix, sampled as
    /// `y = z + sqrt(ρ)·g·1` with scalar g ~ N(0,1); the covariance is
    /// exactly I + ρE.
    CovShift { rho: f64 },
}

/// Synthetic two-sample specification.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub dim: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub seed: u64,
}

impl ShiftSpec {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_x == 0 || self.n_y == 0 {
            return Err(Error::InvalidConfig(
                "dimension and group sizes must be positive".into(),
            ));
        }
        match self.kind {
            ShiftKind::MeanShift { delta } if !(delta >= 0.0) || !delta.is_finite() => {
                Err(Error::InvalidConfig(format!("delta must be ≥ 0, got {delta}")))
            }
            ShiftKind::CovShift { rho } if !(rho >= 0.0) || !rho.is_finite() => {
                Err(Error::InvalidConfig(format!("rho must be ≥ 0, got {rho}")))
            }
            _ => Ok(()),
        }
    }
}

/// Draw the two samples. X uses stream 0 of the spec seed, Y stream 1.
pub fn generate(spec: &ShiftSpec) -> Result<TwoSample> {
    spec.validate()?;
    let mut rng_x = rng_from(child_seed(spec.seed, 0));
    let x = Array2::from_shape_simple_fn((spec.n_x, spec.dim), || {
        StandardNormal.sample(&mut rng_x)
    });
    let mut rng_y = rng_from(child_seed(spec.seed, 1));
    let mut y = Array2::zeros((spec.n_y, spec.dim));
    for mut row in y.axis_iter_mut(Axis(0)) {
        match spec.kind {
            ShiftKind::Null => {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng_y);
                }
            }
            ShiftKind::MeanShift { delta } => {
                for (j, v) in row.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng_y);
                    *v = if j == 0 { z + delta } else { z };
                }
            }
            ShiftKind::CovShift { rho } => {
                let g: f64 = StandardNormal.sample(&mut rng_y);
                let common = rho.sqrt() * g;
                for v in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng_y);
                    *v = z + common;
                }
            }
        }
    }
    TwoSample::new(x, y)
}

/// Two-sample Hotelling statistic
/// `(n_x n_y/(n_x+n_y)) (x̄-ȳ)ᵀ S⁻¹ (x̄-ȳ)` with pooled covariance `S`.
pub fn hotelling_t2(s: &TwoSample) -> Result<f64> {
    let d = s.dim();
    let dof = s.n_x() + s.n_y() - 2;
    if dof < d {
        return Err(Error::SingularCovariance { dof, dim: d });
    }
    let x_mean = s.x().mean_axis(Axis(0)).expect("nonempty");
    let y_mean = s.y().mean_axis(Axis(0)).expect("nonempty");
    let mut scatter = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut accumulate = |data: ArrayView2<f64>, mean: &Array1<f64>| {
        for row in data.rows() {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in i..d {
                    let v = di * (row[j] - mean[j]);
                    scatter[(i, j)] += v;
                }
            }
        }
    };
    accumulate(s.x(), &x_mean);
    accumulate(s.y(), &y_mean);
    for i in 0..d {
        for j in 0..i {
            scatter[(i, j)] = scatter[(j, i)];
        }
    }
    let pooled = scatter / dof as f64;
    let chol = nalgebra::Cholesky::new(pooled)
        .ok_or(Error::SingularCovariance { dof, dim: d })?;
    let diff = nalgebra::DVector::from_fn(d, |i, _| x_mean[i] - y_mean[i]);
    let solved = chol.solve(&diff);
    let factor = (s.n_x() * s.n_y()) as f64 / (s.n_x() + s.n_y()) as f64;
    Ok(factor * diff.dot(&solved))
}

/// Hotelling statistic from pooled sufficient statistics under a label
/// assignment (first `n_x` indices of `assignment` are X). Used by the
/// permutation calibration so each draw costs O(nd + d³).
fn hotelling_from_sufficient(
    pooled: &Array2<f64>,
    total_sum: &Array1<f64>,
    total_scatter: &nalgebra::DMatrix<f64>,
    assignment: &[usize],
    n_x: usize,
) -> Result<f64> {
    let d = pooled.ncols();
    let n = pooled.nrows();
    let n_y = n - n_x;
    let dof = n - 2;
    let mut sum_x = Array1::<f64>::zeros(d);
    for &i in &assignment[..n_x] {
        sum_x += &pooled.row(i);
    }
    let x_mean = &sum_x / n_x as f64;
    let y_mean = (total_sum - &sum_x) / n_y as f64;
    let mut scatter = total_scatter.clone();
    for i in 0..d {
        for j in 0..d {
            scatter[(i, j)] -= n_x as f64 * x_mean[i] * x_mean[j]
                + n_y as f64 * y_mean[i] * y_mean[j];
        }
    }
    let pooled_cov = scatter / dof as f64;
    let chol = nalgebra::Cholesky::new(pooled_cov)
        .ok_or(Error::SingularCovariance { dof, dim: d })?;
    let diff = nalgebra::DVector::from_fn(d, |i, _| x_mean[i] - y_mean[i]);
    let solved = chol.solve(&diff);
    let factor = (n_x * n_y) as f64 / n as f64;
    Ok(factor * diff.dot(&solved))
}

/// Test statistic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Trained-network statistic with train/test split.
    NtkNet,
    /// Exact initial-NTK kernel statistic.
    NtkExact,
    /// Gaussian-kernel MMD with median-heuristic bandwidth.
    GaussianMmd,
    /// Linear-time paired Gaussian-MMD estimator.
    GaussianMmdLinear,
    /// Hotelling two-sample statistic.
    Hotelling,
}

/// Threshold calibration route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Split the data, train or evaluate the witness on the training part,
    /// and bootstrap only the test-part labels.
    TestOnly,
    /// Permute all labels: Gram permutation for exact-kernel methods,
    /// retraining for the network statistic, recomputation for Hotelling and
    /// the linear-time estimator.
    Full,
}

/// Network architecture settings independent of the data dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetSettings {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train_output_layer: bool,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            hidden: vec![512],
            activation: Activation::Softplus,
            train_output_layer: false,
        }
    }
}

impl NetSettings {
    pub fn to_config(&self, input_dim: usize) -> Result<NetworkConfig> {
        Ok(NetworkConfig::new(input_dim, &self.hidden, self.activation)?
            .with_trainable_output(self.train_output_layer))
    }
}

/// Everything a single test run needs besides the data and the seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub net: NetSettings,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub train_fraction: f64,
    pub n_boot: usize,
    pub alpha_level: f64,
    /// Sample counts at which the network statistic is also reported
    /// (network method only).
    pub checkpoints: Option<Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            net: NetSettings::default(),
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 1,
            momentum: 0.0,
            train_fraction: 0.5,
            n_boot: 400,
            alpha_level: 0.05,
            checkpoints: None,
        }
    }
}

impl RunConfig {
    fn train_config(&self, order_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            sample_order: SampleOrder::Shuffled(order_seed),
            momentum: self.momentum,
            max_samples: None,
        }
    }
}

/// Statistic value at a training checkpoint.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TracePoint {
    pub samples_seen: usize,
    pub statistic: f64,
}

/// Outcome of one test run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TestOutcome {
    pub method: Method,
    pub calibration: CalibrationMode,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub bootstrap: Option<BootstrapResult>,
    pub samples_seen_trace: Option<Vec<TracePoint>>,
}

// seed streams within one run
const STREAM_SPLIT: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const STREAM_BOOT: u64 = 3;

/// Run one two-sample test: split/train/evaluate as the method requires,
/// calibrate the threshold, decide. Deterministic given the seed.
pub fn run_test(
    data: &TwoSample,
    method: Method,
    calibration: CalibrationMode,
    cfg: &RunConfig,
    seed: u64,
) -> Result<TestOutcome> {
    let outcome = match (method, calibration) {
        (Method::NtkNet, CalibrationMode::TestOnly) => run_ntk_net_test_only(data, cfg, seed)?,
        (Method::NtkNet, CalibrationMode::Full) => run_ntk_net_full(data, cfg, seed)?,
        (Method::NtkExact, CalibrationMode::TestOnly) => {
            let spec = exact_kernel(data, cfg, seed)?;
            run_exact_test_only(data, &spec, cfg, seed, Method::NtkExact)?
        }
        (Method::NtkExact, CalibrationMode::Full) => {
            let spec = exact_kernel(data, cfg, seed)?;
            run_exact_full_asymmetric(data, &spec, cfg, seed, Method::NtkExact)?
        }
        (Method::GaussianMmd, CalibrationMode::TestOnly) => {
            let spec = gaussian_kernel(data)?;
            run_exact_test_only(data, &spec, cfg, seed, Method::GaussianMmd)?
        }
        (Method::GaussianMmd, CalibrationMode::Full) => {
            let spec = gaussian_kernel(data)?;
            run_gaussian_full(data, &spec, cfg, seed)?
        }
        (Method::GaussianMmdLinear, CalibrationMode::Full) => {
            run_linear_time_full(data, cfg, seed)?
        }
        (Method::Hotelling, CalibrationMode::Full) => run_hotelling_full(data, cfg, seed)?,
        (m, c) => {
            return Err(Error::InvalidConfig(format!(
                "method {m:?} does not support {c:?} calibration"
            )))
        }
    };
    Ok(outcome)
}

fn gaussian_kernel(data: &TwoSample) -> Result<KernelSpec> {
    let bandwidth = median_bandwidth(data.pooled().view())?;
    // degenerate data has zero median distance; any positive bandwidth then
    // yields the constant kernel on the observed points
    KernelSpec::gaussian(if bandwidth > 0.0 { bandwidth } else { 1.0 })
}

/// Exact-NTK kernel at freshly initialized parameters: closed form for the
/// two-layer fixed-output architecture, feature maps otherwise.
fn exact_kernel(data: &TwoSample, cfg: &RunConfig, seed: u64) -> Result<KernelSpec> {
    let net_cfg = cfg.net.to_config(data.dim())?;
    let params = NetworkParams::init(&net_cfg, child_seed(seed, STREAM_INIT));
    if net_cfg.depth() == 2 && !net_cfg.train_output_layer() {
        KernelSpec::ntk_analytic2(params)
    } else {
        Ok(KernelSpec::ntk_feature(params))
    }
}

fn run_ntk_net_test_only(data: &TwoSample, cfg: &RunConfig, seed: u64) -> Result<TestOutcome> {
    let split = data.split(cfg.train_fraction, child_seed(seed, STREAM_SPLIT))?;
    let net_cfg = cfg.net.to_config(data.dim())?;
    let params0 = NetworkParams::init(&net_cfg, child_seed(seed, STREAM_INIT));
    let train_cfg = cfg.train_config(child_seed(seed, STREAM_ORDER));
    let marks = cfg.checkpoints.clone().unwrap_or_default();
    let (tp, snapshots) =
        train_online_with_checkpoints(&params0, split.train(), &train_cfg, &marks)?;

    let test = split.test();
    let mut witness = Vec::with_capacity(test.n_x() + test.n_y());
    for row in test.x().rows() {
        witness.push(crate::train::witness_net(&tp, row)?);
    }
    for row in test.y().rows() {
        witness.push(crate::train::witness_net(&tp, row)?);
    }
    let labels = class_labels(test.n_x(), test.n_y());
    let boot = bootstrap_test_only(
        &witness,
        &labels,
        cfg.n_boot,
        cfg.alpha_level,
        child_seed(seed, STREAM_BOOT),
    )?;
    let statistic = t_net(&tp, test)?;
    let trace = if marks.is_empty() {
        None
    } else {
        let mut points = Vec::with_capacity(snapshots.len());
        for snap in &snapshots {
            points.push(TracePoint {
                samples_seen: snap.samples_seen(),
                statistic: t_net(snap, test)?,
            });
        }
        Some(points)
    };
    Ok(TestOutcome {
        method: Method::NtkNet,
        calibration: CalibrationMode::TestOnly,
        statistic,
        threshold: boot.threshold,
        reject: statistic > boot.threshold,
        bootstrap: Some(boot),
        samples_seen_trace: trace,
    })
}

fn run_ntk_net_full(data: &TwoSample, cfg: &RunConfig, seed: u64) -> Result<TestOutcome> {
    let split = data.split(cfg.train_fraction, child_seed(seed, STREAM_SPLIT))?;
    let net_cfg = cfg.net.to_config(data.dim())?;
    let params0 = NetworkParams::init(&net_cfg, child_seed(seed, STREAM_INIT));
    let train_cfg = cfg.train_config(child_seed(seed, STREAM_ORDER));
    let tp = train_online(&params0, split.train(), &train_cfg)?;
    let statistic = t_net(&tp, split.test())?;
    let boot = bootstrap_full_retrain(
        data,
        cfg.train_fraction,
        &params0,
        &train_cfg,
        cfg.n_boot,
        cfg.alpha_level,
        child_seed(seed, STREAM_BOOT),
    )?;
    Ok(TestOutcome {
        method: Method::NtkNet,
        calibration: CalibrationMode::Full,
        statistic,
        threshold: boot.threshold,
        reject: statistic > boot.threshold,
        bootstrap: Some(boot),
        samples_seen_trace: None,
    })
}

/// Split pipeline for a fixed kernel: witness from the training part,
/// test-only bootstrap over the test labels.
fn run_exact_test_only(
    data: &TwoSample,
    spec: &KernelSpec,
    cfg: &RunConfig,
    seed: u64,
    method: Method,
) -> Result<TestOutcome> {
    let split = data.split(cfg.train_fraction, child_seed(seed, STREAM_SPLIT))?;
    let train = split.train();
    let test = split.test();
    let kx_x = spec.gram(test.x(), train.x())?;
    let kx_y = spec.gram(test.x(), train.y())?;
    let ky_x = spec.gram(test.y(), train.x())?;
    let ky_y = spec.gram(test.y(), train.y())?;
    let mut witness = crate::mmd::witness_values_from_gram(&kx_x, &kx_y)?;
    witness.extend(crate::mmd::witness_values_from_gram(&ky_x, &ky_y)?);
    let labels = class_labels(test.n_x(), test.n_y());
    let boot = bootstrap_test_only(
        &witness,
        &labels,
        cfg.n_boot,
        cfg.alpha_level,
        child_seed(seed, STREAM_BOOT),
    )?;
    let statistic = crate::mmd::mmd2_asymmetric_from_gram(&kx_x, &kx_y, &ky_x, &ky_y)?;
    Ok(TestOutcome {
        method,
        calibration: CalibrationMode::TestOnly,
        statistic,
        threshold: boot.threshold,
        reject: statistic > boot.threshold,
        bootstrap: Some(boot),
        samples_seen_trace: None,
    })
}

/// Asymmetric split statistic with the full Gram-permutation bootstrap.
fn run_exact_full_asymmetric(
    data: &TwoSample,
    spec: &KernelSpec,
    cfg: &RunConfig,
    seed: u64,
    method: Method,
) -> Result<TestOutcome> {
    let split = data.split(cfg.train_fraction, child_seed(seed, STREAM_SPLIT))?;
    let statistic = mmd2_asymmetric(spec, &split)?;
    let ordered = ndarray::concatenate(
        Axis(0),
        &[
            split.train().x(),
            split.train().y(),
            split.test().x(),
            split.test().y(),
        ],
    )
    .expect("matching dims");
    let pooled = spec.gram(ordered.view(), ordered.view())?;
    let stat = GramStatistic::Asymmetric {
        n_x1: split.train().n_x(),
        n_y1: split.train().n_y(),
        n_x2: split.test().n_x(),
        n_y2: split.test().n_y(),
    };
    let boot = bootstrap_full_gram(
        &pooled,
        stat,
        cfg.n_boot,
        cfg.alpha_level,
        child_seed(seed, STREAM_BOOT),
    )?;
    Ok(TestOutcome {
        method,
        calibration: CalibrationMode::Full,
        statistic,
        threshold: boot.threshold,
        reject: statistic > boot.threshold,
        bootstrap: Some(boot),
        samples_seen_trace: None,
    })
}

/// Pooled symmetric statistic with the full Gram-permutation bootstrap.
fn run_gaussian_full(
    data: &TwoSample,
    spec: &KernelSpec,
    cfg: &RunConfig,
    seed: u64,
) -> Result<TestOutcome> {
    let statistic = mmd2_biased(spec, data)?;
    let pooled_samples = data.pooled();
    let pooled = spec.gram(pooled_samples.view(), pooled_samples.view())?;
    let boot = bootstrap_full_gram(
        &pooled,
        GramStatistic::Symmetric {
            n_x: data.n_x(),
            n_y: data.n_y(),
        },
        cfg.n_boot,
        cfg.alpha_level,
        child_seed(seed, STREAM_BOOT),
    )?;
    Ok(TestOutcome {
        method: Method::GaussianMmd,
        calibration: CalibrationMode::Full,
        statistic,
        threshold: boot.threshold,
        reject: statistic > boot.threshold,
        bootstrap: Some(boot),
        samples_seen_trace: None,
    })
}

fn run_linear_time_full(data: &TwoSample, cfg: &RunConfig, seed: u64) -> Result<TestOutcome> {
    let spec = gaussian_kernel(data)?;
    let statistic = mmd2_linear_time(&spec, data)?.value;
    let pooled = data.pooled();
    let n = pooled.nrows();
    let n_x = data.n_x();
    let null_samples: Vec<f64> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|draw| -> Result<f64> {
            let mut rng = crate::seed::child_rng(child_seed(seed, STREAM_BOOT), draw as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut rng);
            let x = pooled.select(Axis(0), &idx[..n_x]);
            let y = pooled.select(Axis(0), &idx[n_x..]);
            Ok(mmd2_linear_time(&spec, &TwoSample::new(x, y)?)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = empirical_quantile(&null_samples, 1.0 - cfg.alpha_level)?;
    Ok(TestOutcome {
        method: Method::GaussianMmdLinear,
        calibration: CalibrationMode::Full,
        statistic,
        threshold,
        reject: statistic > threshold,
        bootstrap: Some(BootstrapResult {
            null_samples,
            threshold,
            alpha_level: cfg.alpha_level,
            mode: crate::calibrate::BootstrapMode::FullGram,
        }),
        samples_seen_trace: None,
    })
}

fn run_hotelling_full(data: &TwoSample, cfg: &RunConfig, seed: u64) -> Result<TestOutcome> {
    let statistic = hotelling_t2(data)?;
    let pooled = data.pooled();
    let n = pooled.nrows();
    let n_x = data.n_x();
    let d = pooled.ncols();
    let total_sum = pooled.sum_axis(Axis(0));
    let mut total_scatter = nalgebra::DMatrix::<f64>::zeros(d, d);
    for row in pooled.rows() {
        for i in 0..d {
            for j in 0..d {
                total_scatter[(i, j)] += row[i] * row[j];
            }
        }
    }
    let null_samples: Vec<f64> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|draw| -> Result<f64> {
            let mut rng = crate::seed::child_rng(child_seed(seed, STREAM_BOOT), draw as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut rng);
            hotelling_from_sufficient(&pooled, &total_sum, &total_scatter, &idx, n_x)
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = empirical_quantile(&null_samples, 1.0 - cfg.alpha_level)?;
    Ok(TestOutcome {
        method: Method::Hotelling,
        calibration: CalibrationMode::Full,
        statistic,
        threshold,
        reject: statistic > threshold,
        bootstrap: Some(BootstrapResult {
            null_samples,
            threshold,
            alpha_level: cfg.alpha_level,
            mode: crate::calibrate::BootstrapMode::FullGram,
        }),
        samples_seen_trace: None,
    })
}

/// Monte Carlo power estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PowerEstimate {
    pub n_run: usize,
    pub rejections: usize,
    pub power: f64,
    pub wilson_ci_95: (f64, f64),
}

impl PowerEstimate {
    fn from_rejections(rejections: usize, n_run: usize) -> Self {
        let n = n_run as f64;
        let p = rejections as f64 / n;
        let z = 1.959_963_984_540_054f64;
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Self {
            n_run,
            rejections,
            power: p,
            wilson_ci_95: ((center - half).max(0.0), (center + half).min(1.0)),
        }
    }

    pub fn ci_overlaps(&self, other: &PowerEstimate) -> bool {
        self.wilson_ci_95.0 <= other.wilson_ci_95.1 && other.wilson_ci_95.0 <= self.wilson_ci_95.1
    }
}

/// Estimate rejection probability over independent replicas. Replica `i`
/// draws data with seed `child(root, 2i)` and runs the test with seed
/// `child(root, 2i+1)`; the spec's own seed field is ignored.
pub fn estimate_power(
    spec: &ShiftSpec,
    method: Method,
    calibration: CalibrationMode,
    cfg: &RunConfig,
    n_run: usize,
    root_seed: u64,
) -> Result<PowerEstimate> {
    if n_run == 0 {
        return Err(Error::InvalidConfig("n_run must be positive".into()));
    }
    let rejections = (0..n_run)
        .into_par_iter()
        .map(|rep| -> Result<usize> {
            let mut replica_spec = *spec;
            replica_spec.seed = child_seed(root_seed, 2 * rep as u64);
            let data = generate(&replica_spec)?;
            let outcome = run_test(
                &data,
                method,
                calibration,
                cfg,
                child_seed(root_seed, 2 * rep as u64 + 1),
            )?;
            Ok(outcome.reject as usize)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    Ok(PowerEstimate::from_rejections(rejections, n_run))
}

/// Power at each training checkpoint, reusing one training pass per replica
/// (prefix consistency of the trainer makes this exact). Network method with
/// test-only bootstrap; each checkpoint is calibrated on its own witness.
pub fn power_curve(
    spec: &ShiftSpec,
    cfg: &RunConfig,
    checkpoints: &[usize],
    n_run: usize,
    root_seed: u64,
) -> Result<Vec<(usize, PowerEstimate)>> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyInput("checkpoints"));
    }
    if n_run == 0 {
        return Err(Error::InvalidConfig("n_run must be positive".into()));
    }
    let per_replica: Vec<Vec<(usize, bool)>> = (0..n_run)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(usize, bool)>> {
            let mut replica_spec = *spec;
            replica_spec.seed = child_seed(root_seed, 2 * rep as u64);
            let data = generate(&replica_spec)?;
            let seed = child_seed(root_seed, 2 * rep as u64 + 1);
            let split = data.split(cfg.train_fraction, child_seed(seed, STREAM_SPLIT))?;
            let net_cfg = cfg.net.to_config(data.dim())?;
            let params0 = NetworkParams::init(&net_cfg, child_seed(seed, STREAM_INIT));
            let train_cfg = cfg.train_config(child_seed(seed, STREAM_ORDER));
            let (_, snapshots) =
                train_online_with_checkpoints(&params0, split.train(), &train_cfg, checkpoints)?;
            let test = split.test();
            let labels = class_labels(test.n_x(), test.n_y());
            let mut decisions = Vec::with_capacity(snapshots.len());
            for snap in &snapshots {
                let mut witness = Vec::with_capacity(test.n_x() + test.n_y());
                for row in test.x().rows() {
                    witness.push(crate::train::witness_net(snap, row)?);
                }
                for row in test.y().rows() {
                    witness.push(crate::train::witness_net(snap, row)?);
                }
                let boot = bootstrap_test_only(
                    &witness,
                    &labels,
                    cfg.n_boot,
                    cfg.alpha_level,
                    child_seed(seed, STREAM_BOOT),
                )?;
                let stat = t_net(snap, test)?;
                decisions.push((snap.samples_seen(), stat > boot.threshold));
            }
            Ok(decisions)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_points = per_replica[0].len();
    let mut out = Vec::with_capacity(n_points);
    for point in 0..n_points {
        let samples_seen = per_replica[0][point].0;
        let rejections = per_replica
            .iter()
            .map(|r| r[point].1 as usize)
            .sum::<usize>();
        out.push((samples_seen, PowerEstimate::from_rejections(rejections, n_run)));
    }
    Ok(out)
}

/// Per-rate relative approximation error of the trained statistic against
/// the exact initial-NTK statistic, and the fitted log-log slope.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorStudy {
    /// (learning rate, relative error) pairs in the given rate order.
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares slope of log error against log rate.
    pub slope: f64,
    /// The exact-kernel reference value.
    pub t_ntk: f64,
}

/// Compare the trained statistic against the exact NTK statistic at several
/// learning rates. The reference is computed once from feature-map Gram
/// blocks at θ₀; every training run starts from the same θ₀ and processes
/// samples in the same order.
pub fn ntk_error_study(
    spec: &ShiftSpec,
    net: &NetSettings,
    alphas: &[f64],
    seed: u64,
) -> Result<ErrorStudy> {
    if alphas.len() < 3 {
        return Err(Error::InvalidConfig(
            "error study needs at least 3 learning rates".into(),
        ));
    }
    if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidConfig("learning rates must be positive".into()));
    }
    let lo = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alphas.iter().copied().fold(0.0f64, f64::max);
    if hi / lo < 10.0 {
        return Err(Error::InvalidConfig(
            "learning rates must span at least one decade".into(),
        ));
    }
    let data = generate(spec)?;
    let net_cfg = net.to_config(data.dim())?;
    let params0 = NetworkParams::init(&net_cfg, child_seed(seed, 0));
    let order_seed = child_seed(seed, 1);

    let t_ntk = mmd2_biased(&KernelSpec::ntk_feature(params0.clone()), &data)?;
    if t_ntk.abs() < 1e-12 {
        return Err(Error::IllPosed(format!(
            "reference NTK statistic is {t_ntk}; relative error is undefined"
        )));
    }
    let pairs: Vec<(f64, f64)> = alphas
        .par_iter()
        .map(|&alpha| -> Result<(f64, f64)> {
            let cfg = TrainConfig::new(alpha, order_seed);
            let tp = train_online(&params0, &data, &cfg)?;
            let t = t_net(&tp, &data)?;
            Ok((alpha, (t - t_ntk).abs() / t_ntk.abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&pairs);
    Ok(ErrorStudy { pairs, slope, t_ntk })
}

/// Least-squares slope of ln(y) against ln(x).
pub fn log_log_slope(pairs: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in logs {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}
