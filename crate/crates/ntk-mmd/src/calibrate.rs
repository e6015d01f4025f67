//! Test-threshold estimation: empirical quantiles, the test-only label
//! bootstrap, full bootstraps (from a fixed Gram matrix or with retraining),
//! plug-in estimates of the squared kernel integrals, and closed-form
//! thresholds.
//!
//! The quantile convention is `k = ⌈level·(n+1)⌉` (clamped), which for
//! exchangeable permutation draws gives finite-sample Type-I control at the
//! nominal level without pooling the observed statistic into the null list.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::kernel::{GramBlock, KernelSpec};
use crate::mmd::TwoSample;
use crate::net::NetworkParams;
use crate::seed::{child_rng, child_seed, rng_from};
use crate::train::{t_net, train_online, SampleOrder, TrainConfig};
use crate::{Error, Result};

/// Class label of a pooled sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SampleLabel {
    X,
    Y,
}

/// `n_x` X labels followed by `n_y` Y labels.
pub fn class_labels(n_x: usize, n_y: usize) -> Vec<SampleLabel> {
    let mut labels = vec![SampleLabel::X; n_x];
    labels.extend(std::iter::repeat(SampleLabel::Y).take(n_y));
    labels
}

/// How a null distribution was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    TestOnly,
    FullGram,
    FullRetrain,
}

/// Null-distribution samples and the threshold taken from them.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BootstrapResult {
    pub null_samples: Vec<f64>,
    pub threshold: f64,
    pub alpha_level: f64,
    pub mode: BootstrapMode,
}

/// Order statistic at `k = ⌈level·(n+1)⌉`, clamped to `[1, n]`. Ties resolve
/// through the order statistics themselves.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile values"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "quantile level must be in (0,1), got {level}"
        )));
    }
    let n = values.len();
    let k = ((level * (n + 1) as f64).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

fn check_bootstrap_args(n_boot: usize, alpha_level: f64) -> Result<()> {
    if n_boot == 0 {
        return Err(Error::InvalidConfig("n_boot must be positive".into()));
    }
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha level must be in (0,1), got {alpha_level}"
        )));
    }
    Ok(())
}

/// Mean difference of `values` over the X and Y labels.
fn label_mean_difference(values: &[f64], labels: &[SampleLabel], n_x: usize, n_y: usize) -> f64 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (&v, &l) in values.iter().zip(labels) {
        match l {
            SampleLabel::X => sx += v,
            SampleLabel::Y => sy += v,
        }
    }
    sx / n_x as f64 - sy / n_y as f64
}

/// Test-only bootstrap: permute the test-split class labels and re-average
/// the fixed witness values; the network and kernel are never re-evaluated.
/// Draw `i` uses the seed-indexed stream `child(seed, i)`, so the null
/// sample list is identical under any execution order.
pub fn bootstrap_test_only(
    witness_values: &[f64],
    labels: &[SampleLabel],
    n_boot: usize,
    alpha_level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    check_bootstrap_args(n_boot, alpha_level)?;
    if witness_values.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: witness_values.len(),
            got: labels.len(),
        });
    }
    let n_x = labels.iter().filter(|&&l| l == SampleLabel::X).count();
    let n_y = labels.len() - n_x;
    if n_x == 0 || n_y == 0 {
        return Err(Error::InvalidConfig(
            "test-only bootstrap needs both classes present".into(),
        ));
    }
    let null_samples: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|draw| {
            let mut rng = child_rng(seed, draw as u64);
            let mut permuted = labels.to_vec();
            permuted.shuffle(&mut rng);
            label_mean_difference(witness_values, &permuted, n_x, n_y)
        })
        .collect();
    let threshold = empirical_quantile(&null_samples, 1.0 - alpha_level)?;
    Ok(BootstrapResult {
        null_samples,
        threshold,
        alpha_level,
        mode: BootstrapMode::TestOnly,
    })
}

/// Which statistic a pooled-Gram bootstrap recomputes per permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramStatistic {
    /// Biased symmetric MMD² over a pooled sample of `n_x + n_y` points.
    Symmetric { n_x: usize, n_y: usize },
    /// Asymmetric split MMD²; the permutation reassigns pooled points to all
    /// four parts (labels and split membership).
    Asymmetric {
        n_x1: usize,
        n_y1: usize,
        n_x2: usize,
        n_y2: usize,
    },
}

impl GramStatistic {
    fn total(&self) -> usize {
        match *self {
            GramStatistic::Symmetric { n_x, n_y } => n_x + n_y,
            GramStatistic::Asymmetric {
                n_x1,
                n_y1,
                n_x2,
                n_y2,
            } => n_x1 + n_y1 + n_x2 + n_y2,
        }
    }
}

/// Statistic value from a pooled Gram matrix under an index assignment. For
/// the symmetric statistic the first `n_x` entries of `assignment` are the X
/// indices; for the asymmetric statistic the entries are X₁, Y₁, X₂, Y₂ in
/// order. The assignment may cover a subset of the pooled points (used when
/// drawing sub-blocks from a pilot pool); the identity assignment over the
/// full pool reproduces the observed statistic.
pub fn statistic_from_pooled_gram(
    pooled: &GramBlock,
    stat: GramStatistic,
    assignment: &[usize],
) -> Result<f64> {
    let n = stat.total();
    if pooled.nrows() != pooled.ncols() {
        return Err(Error::InvalidConfig("pooled gram must be square".into()));
    }
    if assignment.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: assignment.len(),
        });
    }
    if assignment.iter().any(|&i| i >= pooled.nrows()) {
        return Err(Error::InvalidConfig(
            "assignment index out of range of the pooled gram".into(),
        ));
    }
    let g = pooled.values();
    let block_sum = |rows: &[usize], cols: &[usize]| -> f64 {
        let mut s = 0.0;
        for &i in rows {
            for &j in cols {
                s += g[(i, j)];
            }
        }
        s
    };
    match stat {
        GramStatistic::Symmetric { n_x, n_y } => {
            let (xs, ys) = assignment.split_at(n_x);
            let xx = block_sum(xs, xs) / (n_x * n_x) as f64;
            let yy = block_sum(ys, ys) / (n_y * n_y) as f64;
            let xy = block_sum(xs, ys) / (n_x * n_y) as f64;
            Ok(xx + yy - 2.0 * xy)
        }
        GramStatistic::Asymmetric {
            n_x1,
            n_y1,
            n_x2,
            n_y2,
        } => {
            let (x1, rest) = assignment.split_at(n_x1);
            let (y1, rest) = rest.split_at(n_y1);
            let (x2, y2) = rest.split_at(n_x2);
            debug_assert_eq!(y2.len(), n_y2);
            let xx = block_sum(x2, x1) / (n_x2 * n_x1) as f64;
            let xy = block_sum(x2, y1) / (n_x2 * n_y1) as f64;
            let yx = block_sum(y2, x1) / (n_y2 * n_x1) as f64;
            let yy = block_sum(y2, y1) / (n_y2 * n_y1) as f64;
            Ok(xx - xy - yx + yy)
        }
    }
}

/// Full bootstrap over a fixed pooled Gram matrix: each draw permutes the
/// pooled labels (and split membership for the asymmetric statistic) and
/// recomputes the statistic from the stored kernel values — no kernel
/// re-evaluation.
pub fn bootstrap_full_gram(
    pooled: &GramBlock,
    stat: GramStatistic,
    n_boot: usize,
    alpha_level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    check_bootstrap_args(n_boot, alpha_level)?;
    let n = stat.total();
    if pooled.nrows() != n || pooled.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pooled.nrows(),
        });
    }
    let null_samples: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|draw| {
            let mut rng = child_rng(seed, draw as u64);
            let mut assignment: Vec<usize> = (0..n).collect();
            assignment.shuffle(&mut rng);
            statistic_from_pooled_gram(pooled, stat, &assignment).expect("validated shapes")
        })
        .collect();
    let threshold = empirical_quantile(&null_samples, 1.0 - alpha_level)?;
    Ok(BootstrapResult {
        null_samples,
        threshold,
        alpha_level,
        mode: BootstrapMode::FullGram,
    })
}

/// Rough cost of a retraining bootstrap in floating-point operations, for
/// reporting before committing to a run.
pub fn retrain_cost_estimate(n_boot: usize, n_train: usize, trainable_len: usize) -> u64 {
    (n_boot as u64) * (n_train as u64) * (trainable_len as u64) * 6
}

/// Full bootstrap with retraining: each draw reassigns the pooled samples to
/// the four split parts, retrains from the same `params0`, and recomputes
/// the split statistic on the permuted test part. Training failures carry
/// the draw index.
pub fn bootstrap_full_retrain(
    data: &TwoSample,
    train_fraction: f64,
    params0: &NetworkParams,
    train_cfg: &TrainConfig,
    n_boot: usize,
    alpha_level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    check_bootstrap_args(n_boot, alpha_level)?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    if data.n_x() < 2 || data.n_y() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: data.n_x().min(data.n_y()),
        });
    }
    let n_x1 = ((train_fraction * data.n_x() as f64).round() as usize).clamp(1, data.n_x() - 1);
    let n_y1 = ((train_fraction * data.n_y() as f64).round() as usize).clamp(1, data.n_y() - 1);
    let n_x2 = data.n_x() - n_x1;
    let pooled = data.pooled();
    let n = pooled.nrows();

    let null_samples: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|draw| -> Result<f64> {
            let draw_seed = child_seed(seed, draw as u64);
            let mut assignment: Vec<usize> = (0..n).collect();
            assignment.shuffle(&mut rng_from(child_seed(draw_seed, 0)));
            let part = |idx: &[usize]| pooled.select(ndarray::Axis(0), idx);
            let (x1, rest) = assignment.split_at(n_x1);
            let (y1, rest) = rest.split_at(n_y1);
            let (x2, y2) = rest.split_at(n_x2);
            let train = TwoSample::new(part(x1), part(y1))?;
            let test = TwoSample::new(part(x2), part(y2))?;
            let mut cfg = train_cfg.clone();
            if let SampleOrder::Shuffled(_) = cfg.sample_order {
                cfg.sample_order = SampleOrder::Shuffled(child_seed(draw_seed, 1));
            }
            let tp = train_online(params0, &train, &cfg).map_err(|e| Error::BootstrapDraw {
                draw,
                source: Box::new(e),
            })?;
            t_net(&tp, &test)
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = empirical_quantile(&null_samples, 1.0 - alpha_level)?;
    Ok(BootstrapResult {
        null_samples,
        threshold,
        alpha_level,
        mode: BootstrapMode::FullRetrain,
    })
}

/// Plug-in estimates of the squared kernel integrals: means of K² over
/// off-diagonal within-group pairs and over all cross pairs.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct NuEstimates {
    pub pp: f64,
    pub pq: f64,
    pub qq: f64,
    pub max: f64,
}

pub fn estimate_nu(spec: &KernelSpec, s: &TwoSample) -> Result<NuEstimates> {
    if s.n_x() < 2 || s.n_y() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: s.n_x().min(s.n_y()),
        });
    }
    let gxx = spec.gram_uniform(s.x(), s.x())?;
    let gyy = spec.gram_uniform(s.y(), s.y())?;
    let gxy = spec.gram_uniform(s.x(), s.y())?;
    Ok(estimate_nu_from_gram(&gxx, &gyy, &gxy))
}

/// As [`estimate_nu`], from precomputed blocks (for normalized kernels).
pub fn estimate_nu_from_gram(gxx: &GramBlock, gyy: &GramBlock, gxy: &GramBlock) -> NuEstimates {
    let off_sq_mean = |g: &GramBlock| {
        let n = g.nrows();
        let mut s = 0.0;
        for (idx, v) in g.values().indexed_iter() {
            if idx.0 != idx.1 {
                s += v * v;
            }
        }
        s / (n * (n - 1)) as f64
    };
    let pp = off_sq_mean(gxx);
    let qq = off_sq_mean(gyy);
    let pq =
        gxy.values().iter().map(|v| v * v).sum::<f64>() / (gxy.nrows() * gxy.ncols()) as f64;
    NuEstimates {
        pp,
        pq,
        qq,
        max: pp.max(pq).max(qq),
    }
}

/// Which closed-form threshold to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdVariant {
    /// Symmetric statistic, no splitting: `4/(cn) + 4λ₁√(ν/(cn))` with
    /// `λ₁ = √(8 ln(4/α))`.
    Thm1,
    /// Split statistic with test-only bootstrap:
    /// `4(√1.1·λ₍₂₎,₁ + λ₍₁₎)√(ν/(cn))` with `λ₍₂₎,₁ = √(4 ln(4/α))` and
    /// `λ₍₁₎ = √(4 ln(8/γ))`; γ bounds the bad-event probability over the
    /// training split and has no empirical estimator.
    Thm2 { gamma: f64 },
    /// Split statistic with full bootstrap: `4λ₁√(ν/(cn))`,
    /// `λ₁ = √(8 ln(4/α))`.
    Thm3,
}

/// Inputs of the closed-form thresholds. `c` is the balance constant
/// (`cn ≤ n_X, n_Y`, or its split analogue), `nu` bounds the squared kernel
/// integrals for a kernel normalized to `sup K(x,x) ≤ 1`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ThresholdParams {
    pub n: usize,
    pub c: f64,
    pub nu: f64,
    pub alpha_level: f64,
    pub variant: ThresholdVariant,
}

impl ThresholdParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "balance constant must be in (0,1), got {}",
                self.c
            )));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nu must be in (0,1], got {}",
                self.nu
            )));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha level must be in (0,1), got {}",
                self.alpha_level
            )));
        }
        if let ThresholdVariant::Thm2 { gamma } = self.variant {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "gamma must be in (0,1), got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

/// Closed-form threshold for the chosen variant.
pub fn theoretical_threshold(tp: &ThresholdParams) -> Result<f64> {
    tp.validate()?;
    let cn = tp.c * tp.n as f64;
    let root = (tp.nu / cn).sqrt();
    let value = match tp.variant {
        ThresholdVariant::Thm1 => {
            let lambda1 = (8.0 * (4.0 / tp.alpha_level).ln()).sqrt();
            4.0 / cn + 4.0 * lambda1 * root
        }
        ThresholdVariant::Thm2 { gamma } => {
            let lambda21 = (4.0 * (4.0 / tp.alpha_level).ln()).sqrt();
            let lambda1 = (4.0 * (8.0 / gamma).ln()).sqrt();
            4.0 * (1.1f64.sqrt() * lambda21 + lambda1) * root
        }
        ThresholdVariant::Thm3 => {
            let lambda1 = (8.0 * (4.0 / tp.alpha_level).ln()).sqrt();
            4.0 * lambda1 * root
        }
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantile_order_statistics() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(empirical_quantile(&values, 0.95).unwrap(), 96.0);
        assert_eq!(empirical_quantile(&[5.0], 0.2).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&[5.0], 0.99).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&[4.0, 2.0, 1.0, 3.0], 0.5).unwrap(), 3.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn quantile_invariant_to_input_order() {
        let mut values: Vec<f64> = (0..50).map(|v| (v as f64).sin()).collect();
        let q1 = empirical_quantile(&values, 0.9).unwrap();
        values.reverse();
        let q2 = empirical_quantile(&values, 0.9).unwrap();
        values.shuffle(&mut rng_from(1));
        let q3 = empirical_quantile(&values, 0.9).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(q1, q3);
    }

    #[test]
    fn test_only_two_point_enumeration() {
        let witness = [1.0, 0.0];
        let labels = class_labels(1, 1);
        let result = bootstrap_test_only(&witness, &labels, 400, 0.05, 7).unwrap();
        let mut uniq = result.null_samples.clone();
        uniq.sort_unstable_by(f64::total_cmp);
        uniq.dedup();
        assert_eq!(uniq, vec![-1.0, 1.0]);
    }

    #[test]
    fn test_only_constant_witness_gives_zero_threshold() {
        let witness = [0.4; 10];
        let labels = class_labels(4, 6);
        let result = bootstrap_test_only(&witness, &labels, 100, 0.1, 3).unwrap();
        assert!(result.null_samples.iter().all(|v| v.abs() < 1e-15));
        assert!(result.threshold.abs() < 1e-15);
    }

    #[test]
    fn test_only_rejects_single_class() {
        let witness = [1.0, 2.0];
        let labels = vec![SampleLabel::X, SampleLabel::X];
        assert!(bootstrap_test_only(&witness, &labels, 10, 0.05, 0).is_err());
    }

    #[test]
    fn test_only_is_deterministic_per_seed() {
        let witness: Vec<f64> = (0..12).map(|v| (v as f64).cos()).collect();
        let labels = class_labels(6, 6);
        let a = bootstrap_test_only(&witness, &labels, 50, 0.05, 9).unwrap();
        let b = bootstrap_test_only(&witness, &labels, 50, 0.05, 9).unwrap();
        assert_eq!(a.null_samples, b.null_samples);
    }

    fn random_gram(n: usize, seed: u64) -> GramBlock {
        // PSD by construction: G = V Vᵀ
        let mut rng = rng_from(seed);
        let v = Array2::from_shape_simple_fn((n, n + 2), || StandardNormal.sample(&mut rng));
        GramBlock::from_values(v.dot(&v.t())).unwrap()
    }

    #[test]
    fn full_gram_identity_assignment_reproduces_observed() {
        let n_x = 4;
        let n_y = 5;
        let pooled = random_gram(n_x + n_y, 11);
        let identity: Vec<usize> = (0..n_x + n_y).collect();
        let stat = GramStatistic::Symmetric { n_x, n_y };
        let observed = statistic_from_pooled_gram(&pooled, stat, &identity).unwrap();
        let g = pooled.values();
        let mut xx = 0.0;
        let mut yy = 0.0;
        let mut xy = 0.0;
        for i in 0..n_x {
            for j in 0..n_x {
                xx += g[(i, j)];
            }
            for j in 0..n_y {
                xy += g[(i, n_x + j)];
            }
        }
        for i in 0..n_y {
            for j in 0..n_y {
                yy += g[(n_x + i, n_x + j)];
            }
        }
        let direct = xx / (n_x * n_x) as f64 + yy / (n_y * n_y) as f64
            - 2.0 * xy / (n_x * n_y) as f64;
        assert!((observed - direct).abs() < 1e-12);
    }

    #[test]
    fn full_gram_constant_kernel_gives_zero_null() {
        let pooled = GramBlock::from_values(Array2::from_elem((8, 8), 1.0)).unwrap();
        let result = bootstrap_full_gram(
            &pooled,
            GramStatistic::Symmetric { n_x: 3, n_y: 5 },
            64,
            0.05,
            5,
        )
        .unwrap();
        assert!(result.null_samples.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn full_gram_asymmetric_invariant_within_parts() {
        let sizes = (2usize, 3usize, 4usize, 3usize);
        let n = sizes.0 + sizes.1 + sizes.2 + sizes.3;
        let pooled = random_gram(n, 13);
        let stat = GramStatistic::Asymmetric {
            n_x1: sizes.0,
            n_y1: sizes.1,
            n_x2: sizes.2,
            n_y2: sizes.3,
        };
        let identity: Vec<usize> = (0..n).collect();
        let v = statistic_from_pooled_gram(&pooled, stat, &identity).unwrap();
        assert!(v.is_finite());
        // permuting within a part leaves the statistic unchanged
        let mut swapped = identity.clone();
        swapped.swap(sizes.0 + sizes.1, sizes.0 + sizes.1 + 1);
        let v2 = statistic_from_pooled_gram(&pooled, stat, &swapped).unwrap();
        assert!((v - v2).abs() <= 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn nu_estimates_small_cases() {
        let ones = GramBlock::from_values(Array2::from_elem((3, 3), 1.0)).unwrap();
        let cross = GramBlock::from_values(Array2::from_elem((3, 4), 1.0)).unwrap();
        let within_y = GramBlock::from_values(Array2::from_elem((4, 4), 1.0)).unwrap();
        let nu = estimate_nu_from_gram(&ones, &within_y, &cross);
        assert_eq!((nu.pp, nu.pq, nu.qq, nu.max), (1.0, 1.0, 1.0, 1.0));

        // two X points with K(x1,x2) = 0.5: the only off-diagonal pair
        let mut gxx = Array2::from_elem((2, 2), 0.5);
        gxx[(0, 0)] = 1.0;
        gxx[(1, 1)] = 1.0;
        let gxx = GramBlock::from_values(gxx).unwrap();
        let zero_cross = GramBlock::from_values(Array2::zeros((2, 3))).unwrap();
        let nu = estimate_nu_from_gram(&gxx, &ones, &zero_cross);
        assert_eq!(nu.pp, 0.25);
    }

    #[test]
    fn nu_vanishes_for_separated_groups() {
        let mut rng = rng_from(17);
        let x = Array2::from_shape_simple_fn((10, 2), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let y = x.mapv(|v| v + 100.0);
        let s = TwoSample::new(x, y).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let nu = estimate_nu(&spec, &s).unwrap();
        assert!(nu.pq < 1e-30);
        assert!(nu.pp > 0.0 && nu.pp <= 1.0);
    }

    #[test]
    fn threshold_formula_examples() {
        // independently computed with 30-digit arithmetic
        let thm1 = ThresholdParams {
            n: 400,
            c: 0.5,
            nu: 1.0,
            alpha_level: 0.05,
            variant: ThresholdVariant::Thm1,
        };
        let v = theoretical_threshold(&thm1).unwrap();
        assert!((v - 1.694_663_263_522_337).abs() <= 1e-12 * v);

        let thm3 = ThresholdParams {
            n: 400,
            c: 0.25,
            nu: 1.0,
            alpha_level: 0.05,
            variant: ThresholdVariant::Thm3,
        };
        let v = theoretical_threshold(&thm3).unwrap();
        assert!((v - 2.368_331_499_681_277_4).abs() <= 1e-12 * v);
    }

    #[test]
    fn threshold_limits_as_nu_vanishes() {
        let mut tp = ThresholdParams {
            n: 1000,
            c: 0.4,
            nu: 1e-30,
            alpha_level: 0.05,
            variant: ThresholdVariant::Thm1,
        };
        let v = theoretical_threshold(&tp).unwrap();
        assert!((v - 4.0 / (0.4 * 1000.0)).abs() < 1e-12);
        tp.variant = ThresholdVariant::Thm3;
        assert!(theoretical_threshold(&tp).unwrap() < 1e-10);
        tp.variant = ThresholdVariant::Thm2 { gamma: 0.05 };
        assert!(theoretical_threshold(&tp).unwrap() < 1e-10);
    }

    #[test]
    fn threshold_monotonicity_on_grid() {
        let base = ThresholdParams {
            n: 500,
            c: 0.4,
            nu: 0.5,
            alpha_level: 0.05,
            variant: ThresholdVariant::Thm1,
        };
        for variant in [
            ThresholdVariant::Thm1,
            ThresholdVariant::Thm2 { gamma: 0.1 },
            ThresholdVariant::Thm3,
        ] {
            let at = |f: &dyn Fn(&mut ThresholdParams)| {
                let mut tp = base;
                tp.variant = variant;
                f(&mut tp);
                theoretical_threshold(&tp).unwrap()
            };
            // nondecreasing in nu
            assert!(at(&|t| t.nu = 0.2) <= at(&|t| t.nu = 0.8));
            // nondecreasing as alpha shrinks
            assert!(at(&|t| t.alpha_level = 0.1) <= at(&|t| t.alpha_level = 0.01));
            // nonincreasing in n and c
            assert!(at(&|t| t.n = 4000) <= at(&|t| t.n = 250));
            assert!(at(&|t| t.c = 0.8) <= at(&|t| t.c = 0.2));
        }
    }

    #[test]
    fn threshold_validation() {
        let mut tp = ThresholdParams {
            n: 100,
            c: 0.5,
            nu: 1.0,
            alpha_level: 0.05,
            variant: ThresholdVariant::Thm2 { gamma: 1.5 },
        };
        assert!(theoretical_threshold(&tp).is_err());
        tp.variant = ThresholdVariant::Thm1;
        tp.nu = 1.5;
        assert!(theoretical_threshold(&tp).is_err());
        tp.nu = 0.5;
        tp.c = 1.0;
        assert!(theoretical_threshold(&tp).is_err());
    }

    #[test]
    fn bootstrap_threshold_is_an_order_statistic() {
        let witness: Vec<f64> = (0..20).map(|v| ((v * 7) % 13) as f64).collect();
        let labels = class_labels(10, 10);
        let result = bootstrap_test_only(&witness, &labels, 99, 0.05, 21).unwrap();
        let mut sorted = result.null_samples.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        // k = ceil(0.95 * 100) = 95
        assert_eq!(result.threshold, sorted[94]);
    }
}
