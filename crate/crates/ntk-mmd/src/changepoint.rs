//! Sliding-window change-point scanning with pilot-data calibration.
//!
//! A reference block of `window` frames taken from the end of the pilot
//! interval is compared against the current window at every stride step; the
//! comparison statistic is the symmetric biased MMD (Gaussian or exact NTK
//! kernel), the Hotelling statistic, or the trained-network statistic
//! (retrained per position from a shared θ₀). The per-window threshold comes
//! from null statistics on disjoint sub-block pairs drawn from the pilot
//! pool; this is offline pre-computation and may retrain freely.
//!
//! When the pool is shorter than two windows the null draws use blocks of
//! `w' = ⌊pool/2⌋` frames and the quantile is rescaled by `w'/window`,
//! following the `1/n` scaling of the null MMD distribution (the Hotelling
//! statistic is pivotal in `n` and is not rescaled).
//!
//! Attributes are standardized by pilot-interval mean and deviation before
//! any kernel work (on by default); zero-deviation attributes are centered
//! only.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::bench::NetSettings;
use crate::calibrate::{empirical_quantile, statistic_from_pooled_gram, GramStatistic};
use crate::kernel::{median_bandwidth, KernelSpec};
use crate::mmd::TwoSample;
use crate::net::NetworkParams;
use crate::seed::{child_seed, rng_from};
use crate::train::{t_net, train_online, SampleOrder, TrainConfig};
use crate::{Error, Result};

/// Detection statistic of the scanner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanStatistic {
    NtkNet,
    NtkExact,
    GaussianMmd,
    Hotelling,
}

/// Scanner configuration. The pilot interval is `[pilot_start, pilot_end)`;
/// its last `window` frames form the reference block and the scanned region
/// starts at `pilot_end`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScanConfig {
    pub window: usize,
    pub stride: usize,
    pub pilot_start: usize,
    pub pilot_end: usize,
    pub statistic: ScanStatistic,
    pub net: NetSettings,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl ScanConfig {
    pub fn new(window: usize, pilot_start: usize, pilot_end: usize, statistic: ScanStatistic) -> Self {
        Self {
            window,
            stride: 10,
            pilot_start,
            pilot_end,
            statistic,
            net: NetSettings::default(),
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 1,
            standardize: true,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidConfig("window must be at least 2".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be positive".into()));
        }
        if self.pilot_start >= self.pilot_end {
            return Err(Error::InvalidConfig(
                "pilot interval must be nonempty".into(),
            ));
        }
        if self.pilot_end - self.pilot_start < self.window {
            return Err(Error::InvalidConfig(format!(
                "pilot block length {} is shorter than the window {}",
                self.pilot_end - self.pilot_start,
                self.window
            )));
        }
        Ok(())
    }
}

/// Time-indexed detection-statistic values. `times` are window end indices
/// (frames seen when the value became available), strictly increasing by the
/// stride. `first_alarm` is the least time whose value exceeds the
/// threshold.
#[derive(Debug, Clone)]
pub struct ChangePointTrace {
    pub times: Vec<usize>,
    pub values: Vec<f64>,
    pub threshold: Option<f64>,
    pub first_alarm: Option<usize>,
}

// seed streams under ScanConfig::seed
const STREAM_SCAN: u64 = 0;
const STREAM_CAL: u64 = 1;
const STREAM_NET: u64 = 2;

/// Per-attribute affine standardization fitted on the pilot interval.
struct Standardizer {
    mean: Array1<f64>,
    inv_dev: Array1<f64>,
}

impl Standardizer {
    fn fit(pilot: ArrayView2<f64>) -> Self {
        let n = pilot.nrows() as f64;
        let mean = pilot.mean_axis(Axis(0)).expect("nonempty pilot");
        let mut inv_dev = Array1::zeros(pilot.ncols());
        for j in 0..pilot.ncols() {
            let col = pilot.column(j);
            let var = col.iter().map(|v| (v - mean[j]) * (v - mean[j])).sum::<f64>()
                / (n - 1.0).max(1.0);
            let dev = var.sqrt();
            inv_dev[j] = if dev > 0.0 { 1.0 / dev } else { 1.0 };
        }
        Self { mean, inv_dev }
    }

    fn apply(&self, data: ArrayView2<f64>) -> Array2<f64> {
        let mut out = data.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.inv_dev[j];
            }
        }
        out
    }
}

/// Statistic evaluator shared by the scan and the pilot calibration.
enum Evaluator {
    Mmd(KernelSpec),
    Hotelling,
    Net {
        params0: NetworkParams,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
    },
}

impl Evaluator {
    fn build(cfg: &ScanConfig, pilot: ArrayView2<f64>, dim: usize) -> Result<Self> {
        match cfg.statistic {
            ScanStatistic::GaussianMmd => {
                let bw = median_bandwidth(pilot)?;
                Ok(Evaluator::Mmd(KernelSpec::gaussian(if bw > 0.0 {
                    bw
                } else {
                    1.0
                })?))
            }
            ScanStatistic::NtkExact => {
                let net_cfg = cfg.net.to_config(dim)?;
                let params = NetworkParams::init(&net_cfg, child_seed(cfg.seed, STREAM_NET));
                if net_cfg.depth() == 2 && !net_cfg.train_output_layer() {
                    Ok(Evaluator::Mmd(KernelSpec::ntk_analytic2(params)?))
                } else {
                    Ok(Evaluator::Mmd(KernelSpec::ntk_feature(params)))
                }
            }
            ScanStatistic::Hotelling => Ok(Evaluator::Hotelling),
            ScanStatistic::NtkNet => {
                let net_cfg = cfg.net.to_config(dim)?;
                Ok(Evaluator::Net {
                    params0: NetworkParams::init(&net_cfg, child_seed(cfg.seed, STREAM_NET)),
                    learning_rate: cfg.learning_rate,
                    epochs: cfg.epochs,
                    batch_size: cfg.batch_size,
                })
            }
        }
    }

    /// Detection statistic between the reference block and a window.
    fn evaluate(
        &self,
        reference: ArrayView2<f64>,
        window: ArrayView2<f64>,
        cached_ref_mean: Option<f64>,
        pos_seed: u64,
    ) -> Result<f64> {
        match self {
            Evaluator::Mmd(spec) => {
                let rr = match cached_ref_mean {
                    Some(m) => m,
                    None => spec.gram_uniform(reference, reference)?.mean(),
                };
                let ww = spec.gram_uniform(window, window)?.mean();
                let rw = spec.gram_uniform(reference, window)?.mean();
                Ok(rr + ww - 2.0 * rw)
            }
            Evaluator::Hotelling => {
                crate::bench::hotelling_t2(&TwoSample::new(
                    reference.to_owned(),
                    window.to_owned(),
                )?)
            }
            Evaluator::Net {
                params0,
                learning_rate,
                epochs,
                batch_size,
            } => {
                let pair = TwoSample::new(reference.to_owned(), window.to_owned())?;
                let cfg = TrainConfig {
                    learning_rate: *learning_rate,
                    epochs: *epochs,
                    batch_size: *batch_size,
                    sample_order: SampleOrder::Shuffled(pos_seed),
                    momentum: 0.0,
                    max_samples: None,
                };
                let tp = train_online(params0, &pair, &cfg)?;
                t_net(&tp, &pair)
            }
        }
    }

    fn ref_self_mean(&self, reference: ArrayView2<f64>) -> Result<Option<f64>> {
        match self {
            Evaluator::Mmd(spec) => Ok(Some(spec.gram_uniform(reference, reference)?.mean())),
            _ => Ok(None),
        }
    }
}

/// Scan the series: compare the pilot reference block against the window
/// ending at each stride step. Deterministic given the config; the per
/// position RNG stream is indexed by the window end, so the trace restricted
/// to common times does not depend on the stride.
pub fn scan(
    series: ArrayView2<f64>,
    cfg: &ScanConfig,
    threshold: Option<f64>,
) -> Result<ChangePointTrace> {
    cfg.validate()?;
    let t_len = series.nrows();
    if t_len < cfg.pilot_end + cfg.window {
        return Err(Error::TooFewSamples {
            need: cfg.pilot_end + cfg.window,
            got: t_len,
        });
    }
    let pilot_raw = series.slice(ndarray::s![cfg.pilot_start..cfg.pilot_end, ..]);
    let standardized;
    let data: ArrayView2<f64> = if cfg.standardize {
        let std = Standardizer::fit(pilot_raw);
        standardized = std.apply(series);
        standardized.view()
    } else {
        series
    };
    let pilot = data.slice(ndarray::s![cfg.pilot_start..cfg.pilot_end, ..]);
    let evaluator = Evaluator::build(cfg, pilot, series.ncols())?;
    let reference = data.slice(ndarray::s![cfg.pilot_end - cfg.window..cfg.pilot_end, ..]);
    let ref_mean = evaluator.ref_self_mean(reference)?;

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut end = cfg.pilot_end + cfg.window;
    while end <= t_len {
        let window = data.slice(ndarray::s![end - cfg.window..end, ..]);
        let pos_seed = child_seed(child_seed(cfg.seed, STREAM_SCAN), end as u64);
        let value = evaluator.evaluate(reference, window, ref_mean, pos_seed)?;
        times.push(end);
        values.push(value);
        end += cfg.stride;
    }
    let first_alarm = threshold.and_then(|thr| {
        times
            .iter()
            .zip(&values)
            .find(|(_, &v)| v > thr)
            .map(|(&t, _)| t)
    });
    Ok(ChangePointTrace {
        times,
        values,
        threshold,
        first_alarm,
    })
}

/// Null statistics on disjoint sub-block pairs drawn from the pilot pool,
/// at the block size the pool supports (`w' = min(window, ⌊pool/2⌋)`).
/// Returns the draw values and the rescale factor that maps their quantiles
/// to the scan's window size.
pub fn pilot_null_statistics(
    pilot: ArrayView2<f64>,
    cfg: &ScanConfig,
    n_boot: usize,
) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    if n_boot == 0 {
        return Err(Error::InvalidConfig("n_boot must be positive".into()));
    }
    let pool = pilot.nrows();
    let sub = cfg.window.min(pool / 2);
    if sub < 2 {
        return Err(Error::TooFewSamples { need: 4, got: pool });
    }
    let standardized;
    let data: ArrayView2<f64> = if cfg.standardize {
        let std = Standardizer::fit(pilot);
        standardized = std.apply(pilot);
        standardized.view()
    } else {
        pilot
    };
    let evaluator = Evaluator::build(cfg, data, pilot.ncols())?;
    let factor = match cfg.statistic {
        // the null MMD scales as 1/n; Hotelling is pivotal in n
        ScanStatistic::Hotelling => 1.0,
        _ => sub as f64 / cfg.window as f64,
    };
    let cal_root = child_seed(cfg.seed, STREAM_CAL);

    // exact-kernel statistics reuse one pooled Gram across draws
    let pooled_gram = match &evaluator {
        Evaluator::Mmd(spec) => Some(spec.gram(data, data)?),
        _ => None,
    };
    let mut draws = Vec::with_capacity(n_boot);
    for i in 0..n_boot {
        let mut rng = rng_from(child_seed(cal_root, i as u64));
        let picked = rand::seq::index::sample(&mut rng, pool, 2 * sub).into_vec();
        let value = match (&evaluator, &pooled_gram) {
            (Evaluator::Mmd(_), Some(gram)) => statistic_from_pooled_gram(
                gram,
                GramStatistic::Symmetric { n_x: sub, n_y: sub },
                &picked,
            )?,
            _ => {
                let x = data.select(Axis(0), &picked[..sub]);
                let y = data.select(Axis(0), &picked[sub..]);
                evaluator.evaluate(
                    x.view(),
                    y.view(),
                    None,
                    child_seed(cal_root, (n_boot + i) as u64),
                )?
            }
        };
        draws.push(value);
    }
    Ok((draws, factor))
}

/// Threshold for the scan: the `1 - alpha_level` quantile of the pilot null
/// statistics, rescaled to the scan's window size when the pool only
/// supports smaller draws.
pub fn calibrate_pilot(
    pilot: ArrayView2<f64>,
    cfg: &ScanConfig,
    n_boot: usize,
    alpha_level: f64,
) -> Result<f64> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha level must be in (0,1), got {alpha_level}"
        )));
    }
    let (draws, factor) = pilot_null_statistics(pilot, cfg, n_boot)?;
    Ok(empirical_quantile(&draws, 1.0 - alpha_level)? * factor)
}
