//! Two-sample containers and MMD estimators.
//!
//! The squared MMD between the empirical measures of `X` and `Y` under a
//! kernel `K` comes in several forms: the biased V-statistic (diagonal terms
//! included), the unbiased U-statistic, the asymmetric train/test-split
//! variant, and a linear-time paired estimator. The exact kernel witness
//! `w(q) = mean_i K(q, x_i) - mean_j K(q, y_j)` is evaluated directly.
//!
//! Estimators either evaluate a [`KernelSpec`] on demand or consume
//! precomputed [`GramBlock`]s (the `_from_gram` variants), which the
//! bootstrap calibrators reuse heavily.

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::kernel::{GramBlock, KernelSpec};
use crate::seed::child_rng;
use crate::{Error, Result};

/// The datasets `X` (n_x × d) and `Y` (n_y × d).
#[derive(Debug, Clone)]
pub struct TwoSample {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl TwoSample {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || y.nrows() == 0 {
            return Err(Error::EmptyInput("two-sample group"));
        }
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: y.ncols(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("two-sample data"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.y.nrows()
    }

    /// X rows followed by Y rows.
    pub fn pooled(&self) -> Array2<f64> {
        concatenate(Axis(0), &[self.x.view(), self.y.view()]).expect("matching dims")
    }

    /// The same data with the roles of X and Y exchanged.
    pub fn swapped(&self) -> TwoSample {
        TwoSample {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }

    /// Random disjoint train/test split of each group. Both groups are split
    /// with the same seeded permutation stream, so equal-length identical
    /// groups receive identical index splits. The train part gets
    /// `round(fraction · n)` samples, clamped so both parts are nonempty.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<SplitTwoSample> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must be in (0,1), got {train_fraction}"
            )));
        }
        if self.n_x() < 2 || self.n_y() < 2 {
            return Err(Error::TooFewSamples {
                need: 2,
                got: self.n_x().min(self.n_y()),
            });
        }
        let split_group = |data: &Array2<f64>| {
            let n = data.nrows();
            let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut child_rng(seed, 0));
            let train = data.select(Axis(0), &idx[..n_train]);
            let test = data.select(Axis(0), &idx[n_train..]);
            (train, test)
        };
        let (x_train, x_test) = split_group(&self.x);
        let (y_train, y_test) = split_group(&self.y);
        Ok(SplitTwoSample {
            train: TwoSample::new(x_train, y_train)?,
            test: TwoSample::new(x_test, y_test)?,
            split_seed: seed,
        })
    }
}

/// A train/test split of a [`TwoSample`]; the parts are disjoint by
/// construction when produced by [`TwoSample::split`].
#[derive(Debug, Clone)]
pub struct SplitTwoSample {
    train: TwoSample,
    test: TwoSample,
    split_seed: u64,
}

impl SplitTwoSample {
    /// Assemble a split from explicit parts. The caller is responsible for
    /// the parts being disjoint subsets of one originating sample.
    pub fn from_parts(train: TwoSample, test: TwoSample, split_seed: u64) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(Error::DimensionMismatch {
                expected: train.dim(),
                got: test.dim(),
            });
        }
        Ok(Self {
            train,
            test,
            split_seed,
        })
    }

    pub fn train(&self) -> &TwoSample {
        &self.train
    }

    pub fn test(&self) -> &TwoSample {
        &self.test
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }
}

/// Biased (V-statistic) squared MMD: diagonal terms included.
pub fn mmd2_biased(spec: &KernelSpec, s: &TwoSample) -> Result<f64> {
    let gxx = spec.gram_uniform(s.x(), s.x())?;
    let gyy = spec.gram_uniform(s.y(), s.y())?;
    let gxy = spec.gram_uniform(s.x(), s.y())?;
    mmd2_biased_from_gram(&gxx, &gyy, &gxy)
}

/// Biased squared MMD from precomputed blocks K(X,X), K(Y,Y), K(X,Y).
pub fn mmd2_biased_from_gram(gxx: &GramBlock, gyy: &GramBlock, gxy: &GramBlock) -> Result<f64> {
    check_block_shapes(gxx, gyy, gxy)?;
    Ok(gxx.mean() + gyy.mean() - 2.0 * gxy.mean())
}

/// Unbiased (U-statistic) squared MMD: within-group diagonals excluded and
/// normalized by n(n-1); the cross term is unchanged.
pub fn mmd2_unbiased(spec: &KernelSpec, s: &TwoSample) -> Result<f64> {
    if s.n_x() < 2 || s.n_y() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: s.n_x().min(s.n_y()),
        });
    }
    let gxx = spec.gram_uniform(s.x(), s.x())?;
    let gyy = spec.gram_uniform(s.y(), s.y())?;
    let gxy = spec.gram_uniform(s.x(), s.y())?;
    mmd2_unbiased_from_gram(&gxx, &gyy, &gxy)
}

/// Unbiased squared MMD from precomputed blocks.
pub fn mmd2_unbiased_from_gram(gxx: &GramBlock, gyy: &GramBlock, gxy: &GramBlock) -> Result<f64> {
    check_block_shapes(gxx, gyy, gxy)?;
    let n_x = gxx.nrows();
    let n_y = gyy.nrows();
    if n_x < 2 || n_y < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: n_x.min(n_y),
        });
    }
    let xx = gxx.off_diagonal_sum() / (n_x * (n_x - 1)) as f64;
    let yy = gyy.off_diagonal_sum() / (n_y * (n_y - 1)) as f64;
    Ok(xx + yy - 2.0 * gxy.mean())
}

fn check_block_shapes(gxx: &GramBlock, gyy: &GramBlock, gxy: &GramBlock) -> Result<()> {
    if gxx.nrows() != gxx.ncols() || gyy.nrows() != gyy.ncols() {
        return Err(Error::InvalidConfig(
            "within-group gram blocks must be square".into(),
        ));
    }
    if gxy.nrows() != gxx.nrows() || gxy.ncols() != gyy.nrows() {
        return Err(Error::DimensionMismatch {
            expected: gxx.nrows(),
            got: gxy.nrows(),
        });
    }
    Ok(())
}

/// Asymmetric split MMD: the kernel integrated against
/// `(p̂₁ - q̂₁) ⊗ (p̂₂ - q̂₂)`, i.e. the four cross-split block means
/// `T_XX - T_YX - T_XY + T_YY`. Unbiased for the population MMD².
pub fn mmd2_asymmetric(spec: &KernelSpec, s: &SplitTwoSample) -> Result<f64> {
    let x1 = s.train().x();
    let y1 = s.train().y();
    let x2 = s.test().x();
    let y2 = s.test().y();
    let xx = spec.gram_uniform(x2, x1)?;
    let xy = spec.gram_uniform(x2, y1)?;
    let yx = spec.gram_uniform(y2, x1)?;
    let yy = spec.gram_uniform(y2, y1)?;
    mmd2_asymmetric_from_gram(&xx, &xy, &yx, &yy)
}

/// Asymmetric split MMD from the four (test × train) blocks
/// K(X₂,X₁), K(X₂,Y₁), K(Y₂,X₁), K(Y₂,Y₁).
pub fn mmd2_asymmetric_from_gram(
    xx: &GramBlock,
    xy: &GramBlock,
    yx: &GramBlock,
    yy: &GramBlock,
) -> Result<f64> {
    if xx.nrows() != xy.nrows() || yx.nrows() != yy.nrows() {
        return Err(Error::InvalidConfig(
            "asymmetric blocks disagree on test sizes".into(),
        ));
    }
    if xx.ncols() != yx.ncols() || xy.ncols() != yy.ncols() {
        return Err(Error::InvalidConfig(
            "asymmetric blocks disagree on train sizes".into(),
        ));
    }
    Ok(xx.mean() - xy.mean() - yx.mean() + yy.mean())
}

/// Result of the linear-time estimator; `dropped_tail` flags that an odd
/// trailing sample pair was discarded.
#[derive(Debug, Clone, Copy)]
pub struct LinearTimeMmd {
    pub value: f64,
    pub dropped_tail: bool,
}

/// Linear-time squared-MMD estimator over disjoint consecutive pairs:
/// `h((x₁,y₁),(x₂,y₂)) = K(x₁,x₂) + K(y₁,y₂) - K(x₁,y₂) - K(x₂,y₁)`
/// averaged over pairs `(2i-1, 2i)` in the given sample order. Requires
/// `n_x = n_y`; an odd trailing pair is dropped and flagged. Callers wanting
/// randomized pairing shuffle the samples first with a seeded RNG.
pub fn mmd2_linear_time(spec: &KernelSpec, s: &TwoSample) -> Result<LinearTimeMmd> {
    if s.n_x() != s.n_y() {
        return Err(Error::InvalidConfig(format!(
            "linear-time estimator needs equal group sizes, got {} and {}",
            s.n_x(),
            s.n_y()
        )));
    }
    let n = s.n_x();
    let pairs = n / 2;
    if pairs == 0 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let xs = s.x();
    let ys = s.y();
    let mut acc = 0.0;
    for i in 0..pairs {
        let x1 = xs.row(2 * i);
        let x2 = xs.row(2 * i + 1);
        let y1 = ys.row(2 * i);
        let y2 = ys.row(2 * i + 1);
        acc += spec.pair(x1, x2)? + spec.pair(y1, y2)?
            - spec.pair(x1, y2)?
            - spec.pair(x2, y1)?;
    }
    Ok(LinearTimeMmd {
        value: acc / pairs as f64,
        dropped_tail: n % 2 == 1,
    })
}

/// Exact kernel witness of the training sample at a query point:
/// `w(q) = mean_i K(q, x_i) - mean_j K(q, y_j)`.
pub fn witness_exact(spec: &KernelSpec, train: &TwoSample, query: ArrayView1<f64>) -> Result<f64> {
    if query.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: query.len(),
        });
    }
    let mut x_mean = 0.0;
    for row in train.x().rows() {
        x_mean += spec.pair(query, row)?;
    }
    x_mean /= train.n_x() as f64;
    let mut y_mean = 0.0;
    for row in train.y().rows() {
        y_mean += spec.pair(query, row)?;
    }
    y_mean /= train.n_y() as f64;
    Ok(x_mean - y_mean)
}

/// Witness values for a list of points from precomputed blocks
/// K(points, X_train) and K(points, Y_train): per-row mean difference.
pub fn witness_values_from_gram(kx: &GramBlock, ky: &GramBlock) -> Result<Vec<f64>> {
    if kx.nrows() != ky.nrows() {
        return Err(Error::DimensionMismatch {
            expected: kx.nrows(),
            got: ky.nrows(),
        });
    }
    let n_x = kx.ncols() as f64;
    let n_y = ky.ncols() as f64;
    Ok(kx
        .values()
        .rows()
        .into_iter()
        .zip(ky.values().rows())
        .map(|(rx, ry)| rx.sum() / n_x - ry.sum() / n_y)
        .collect())
}
