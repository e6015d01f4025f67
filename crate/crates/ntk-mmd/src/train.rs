//! Online SGD under the mean-difference objective and the training-based
//! test statistics.
//!
//! The objective is `L(θ) = -mean_X f(x;θ) + mean_Y f(y;θ)`; written per
//! sample, `L(θ) = Σ_i b_i f(z_i;θ)` with `b_i = -1/n_X` for X samples and
//! `+1/n_Y` for Y samples. One SGD step on sample `z_k` is
//! `θ ← θ - α b_k ∇f(z_k;θ)`; batches sum the per-sample terms, so one epoch
//! at any batch size accumulates the same first-order displacement and
//! `batch_size = n` realizes full-batch gradient descent.
//!
//! The statistic is the objective *decrease* divided by the training scale,
//! `(L(θ₀) - L(θ_t)) / scale`; equivalently the sample average of the
//! network witness `(f(·;θ_t) - f(·;θ₀)) / scale`. Under SGD the learning
//! rate plays the role of training time, so `scale = epochs · α`; full-batch
//! GD with `s` passes accordingly has `scale = s · α`.

use ndarray::ArrayView1;
use rand::seq::SliceRandom;

use crate::mmd::TwoSample;
use crate::net::NetworkParams;
use crate::seed::child_rng;
use crate::{Error, Result};

/// Processing order of the interleaved X and Y samples: as given (all X rows
/// then all Y rows) or uniformly shuffled per epoch from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SampleOrder {
    Given,
    Shuffled(u64),
}

/// SGD settings. `learning_rate` is the theoretical rate α; with the
/// `1/n_group` normalization inside the objective the effective per-sample
/// rate is `α / n_group`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sample_order: SampleOrder,
    pub momentum: f64,
    /// Stop after this many samples (across epochs); `None` runs to the end.
    pub max_samples: Option<usize>,
}

impl TrainConfig {
    /// One epoch, batch size one, no momentum, shuffled sample order.
    pub fn new(learning_rate: f64, shuffle_seed: u64) -> Self {
        Self {
            learning_rate,
            epochs: 1,
            batch_size: 1,
            sample_order: SampleOrder::Shuffled(shuffle_seed),
            momentum: 0.0,
            max_samples: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Training scale corresponding to continuous time: `epochs · α`.
    pub fn scale(&self) -> f64 {
        self.learning_rate * self.epochs as f64
    }
}

/// Parameters before and after a training run, with the time scale of the
/// run and the largest per-sample gradient norm seen (the empirical
/// counterpart of the gradient bound in the displacement estimate
/// `‖θ_t - θ₀‖ ≤ 2 · max‖∇f‖ · scale`).
#[derive(Debug, Clone)]
pub struct TrainedPair {
    initial: NetworkParams,
    trained: NetworkParams,
    scale: f64,
    samples_seen: usize,
    max_grad_norm: f64,
}

impl TrainedPair {
    pub fn initial(&self) -> &NetworkParams {
        &self.initial
    }

    pub fn trained(&self) -> &NetworkParams {
        &self.trained
    }

    /// Nominal training time of the configured run (`epochs · α`), shared by
    /// every checkpoint of the run.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn samples_seen(&self) -> usize {
        self.samples_seen
    }

    pub fn max_grad_norm(&self) -> f64 {
        self.max_grad_norm
    }

    /// ‖θ_trained − θ₀‖.
    pub fn displacement(&self) -> f64 {
        self.initial.l2_distance(&self.trained)
    }
}

/// The training objective `L(θ) = -mean_X f(x;θ) + mean_Y f(y;θ)`.
pub fn objective(params: &NetworkParams, s: &TwoSample) -> Result<f64> {
    let mut x_mean = 0.0;
    for row in s.x().rows() {
        x_mean += params.forward(row)?;
    }
    x_mean /= s.n_x() as f64;
    let mut y_mean = 0.0;
    for row in s.y().rows() {
        y_mean += params.forward(row)?;
    }
    y_mean /= s.n_y() as f64;
    Ok(y_mean - x_mean)
}

/// Run SGD from `params0` over the training pair. Deterministic given the
/// config. Any non-finite parameter aborts with the offending step index.
pub fn train_online(
    params0: &NetworkParams,
    train: &TwoSample,
    cfg: &TrainConfig,
) -> Result<TrainedPair> {
    let (pair, _) = train_online_with_checkpoints(params0, train, cfg, &[])?;
    Ok(pair)
}

/// As [`train_online`], also snapshotting the parameters at the requested
/// sample counts (sorted ascending). With `batch_size > 1` a snapshot is
/// taken at the first batch boundary reaching the mark.
pub fn train_online_with_checkpoints(
    params0: &NetworkParams,
    train: &TwoSample,
    cfg: &TrainConfig,
    checkpoint_marks: &[usize],
) -> Result<(TrainedPair, Vec<TrainedPair>)> {
    cfg.validate()?;
    if params0.config().input_dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: params0.config().input_dim(),
            got: train.dim(),
        });
    }
    debug_assert!(checkpoint_marks.windows(2).all(|w| w[0] <= w[1]));

    let xs = train.x();
    let ys = train.y();
    let n_x = train.n_x();
    let n_y = train.n_y();
    let n = n_x + n_y;
    let scale = cfg.scale();

    let mut params = params0.clone();
    let p_len = params.trainable_len();
    let mut velocity = vec![0.0; if cfg.momentum > 0.0 { p_len } else { 0 }];
    let mut grad_buf = vec![0.0; p_len];
    let mut gx = vec![0.0; p_len];
    let mut gy = vec![0.0; p_len];

    let mut deck: Vec<(bool, usize)> = (0..n_x)
        .map(|i| (true, i))
        .chain((0..n_y).map(|j| (false, j)))
        .collect();

    let budget = cfg.max_samples.unwrap_or(usize::MAX);
    let mut seen = 0usize;
    let mut max_grad_norm = 0.0f64;
    let mut checkpoints = Vec::with_capacity(checkpoint_marks.len());
    let mut next_mark = 0usize;

    let snapshot = |params: &NetworkParams, seen: usize, max_grad_norm: f64| TrainedPair {
        initial: params0.clone(),
        trained: params.clone(),
        scale,
        samples_seen: seen,
        max_grad_norm,
    };

    // marks at zero samples are satisfied by the initial parameters
    while next_mark < checkpoint_marks.len() && checkpoint_marks[next_mark] == 0 {
        checkpoints.push(snapshot(&params, 0, 0.0));
        next_mark += 1;
    }

    'epochs: for epoch in 0..cfg.epochs {
        if let SampleOrder::Shuffled(seed) = cfg.sample_order {
            deck.shuffle(&mut child_rng(seed, epoch as u64));
        }
        let mut cursor = 0;
        while cursor < n {
            if seen >= budget {
                break 'epochs;
            }
            let take = cfg.batch_size.min(n - cursor).min(budget - seen);
            let batch = &deck[cursor..cursor + take];
            cursor += take;

            if cfg.momentum == 0.0 && take == 1 {
                let (is_x, idx) = batch[0];
                let (row, coeff) = if is_x {
                    (xs.row(idx), cfg.learning_rate / n_x as f64)
                } else {
                    (ys.row(idx), -cfg.learning_rate / n_y as f64)
                };
                let norm = params.add_scaled_gradient(row, coeff);
                max_grad_norm = max_grad_norm.max(norm);
            } else {
                // accumulate per group so the exact cancellation of the full
                // objective gradient survives in floating point
                gx.iter_mut().for_each(|v| *v = 0.0);
                gy.iter_mut().for_each(|v| *v = 0.0);
                for &(is_x, idx) in batch {
                    let row = if is_x { xs.row(idx) } else { ys.row(idx) };
                    params.write_param_gradient(row, &mut grad_buf);
                    let norm = grad_buf.iter().map(|v| v * v).sum::<f64>().sqrt();
                    max_grad_norm = max_grad_norm.max(norm);
                    let (acc, denom) = if is_x {
                        (&mut gx, n_x as f64)
                    } else {
                        (&mut gy, n_y as f64)
                    };
                    for (a, &g) in acc.iter_mut().zip(&grad_buf) {
                        *a += g / denom;
                    }
                }
                if cfg.momentum > 0.0 {
                    for ((v, &x_part), &y_part) in velocity.iter_mut().zip(&gx).zip(&gy) {
                        *v = cfg.momentum * *v + (y_part - x_part);
                    }
                    params.add_scaled_flat(&velocity, -cfg.learning_rate);
                } else {
                    for (slot, &y_part) in gx.iter_mut().zip(&gy) {
                        *slot -= y_part;
                    }
                    params.add_scaled_flat(&gx, cfg.learning_rate);
                }
            }
            seen += take;

            if !params.all_finite() {
                return Err(Error::Diverged { step: seen });
            }
            while next_mark < checkpoint_marks.len() && checkpoint_marks[next_mark] <= seen {
                checkpoints.push(snapshot(&params, seen, max_grad_norm));
                next_mark += 1;
            }
        }
    }

    Ok((snapshot(&params, seen, max_grad_norm), checkpoints))
}

/// Network witness function `(f(q;θ_t) - f(q;θ₀)) / scale`.
pub fn witness_net(tp: &TrainedPair, query: ArrayView1<f64>) -> Result<f64> {
    if tp.scale <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "training scale must be positive, got {}",
            tp.scale
        )));
    }
    Ok((tp.trained.forward(query)? - tp.initial.forward(query)?) / tp.scale)
}

/// Training-based statistic: the witness averaged against the evaluation
/// sample, `mean_X w - mean_Y w`. When `eval` is the training pair this
/// equals the objective decrease over the scale.
pub fn t_net(tp: &TrainedPair, eval: &TwoSample) -> Result<f64> {
    let mut x_mean = 0.0;
    for row in eval.x().rows() {
        x_mean += witness_net(tp, row)?;
    }
    x_mean /= eval.n_x() as f64;
    let mut y_mean = 0.0;
    for row in eval.y().rows() {
        y_mean += witness_net(tp, row)?;
    }
    y_mean /= eval.n_y() as f64;
    Ok(x_mean - y_mean)
}
