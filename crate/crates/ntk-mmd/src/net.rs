//! Scalar-output fully-connected networks with explicit parameter gradients.
//!
//! The network is `f(x;θ) = a · σ(...)` with one or two hidden layers and a
//! linear output layer. The output weights are fixed after initialization by
//! default; only hidden-layer weights and biases are trainable. The gradient
//! of `f` with respect to the trainable parameters is the tangent feature
//! map, so its pairwise dot products are the empirical NTK.
//!
//! Flattening order of the trainable parameter vector: hidden layers in
//! order; within a layer the weight matrix row-major (one row per unit,
//! columns over fan-in) followed by the bias vector; the output weights come
//! last and only when they are trainable. The order is fixed so feature-map
//! dot products are reproducible.
//!
//! All arithmetic is `f64`.

use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::seed::rng_from;
use crate::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Relu,
}

impl Activation {
    /// σ(z). Softplus is computed as `max(z,0) + ln(1+exp(-|z|))`, which is
    /// overflow-safe and equals `z` to machine precision for large `z`.
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => {
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Relu => z.max(0.0),
        }
    }

    /// σ'(z). The relu derivative at exactly 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => {
                // logistic sigmoid, stable in both tails
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Architecture of a network: input dimension, hidden widths (one or two
/// hidden layers), activation, and whether the output layer is trained.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetworkConfig {
    input_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    train_output_layer: bool,
}

impl NetworkConfig {
    /// A network with the given input dimension and hidden widths. One hidden
    /// width gives the two-layer network, two widths the three-layer one.
    /// The output layer is fixed after initialization unless enabled with
    /// [`NetworkConfig::with_trainable_output`].
    pub fn new(input_dim: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be positive".into()));
        }
        if hidden.is_empty() || hidden.len() > 2 {
            return Err(Error::InvalidConfig(format!(
                "expected 1 or 2 hidden layers, got {}",
                hidden.len()
            )));
        }
        if hidden.iter().any(|&m| m == 0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            train_output_layer: false,
        })
    }

    pub fn with_trainable_output(mut self, train: bool) -> Self {
        self.train_output_layer = train;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn train_output_layer(&self) -> bool {
        self.train_output_layer
    }

    /// Number of fully-connected layers (hidden layers plus the output).
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Length of the flattened trainable parameter vector.
    pub fn trainable_len(&self) -> usize {
        let mut fan_in = self.input_dim;
        let mut p = 0;
        for &m in &self.hidden {
            p += m * (fan_in + 1);
            fan_in = m;
        }
        if self.train_output_layer {
            p += fan_in;
        }
        p
    }
}

#[derive(Debug, Clone)]
struct DenseLayer {
    /// width × fan-in
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Network parameters θ: per hidden layer a weight matrix and bias vector,
/// plus the output weight vector. Immutable through the public API; the
/// trainer mutates a private copy.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    config: NetworkConfig,
    layers: Vec<DenseLayer>,
    output: Array1<f64>,
}

impl NetworkParams {
    /// Draw initial parameters: first-layer weight rows have standard-normal
    /// entries with zero bias, intermediate layers use N(0, 1/fan_in) entries
    /// so preactivations stay O(1), and output weights are N(0, 1/m_last).
    /// Deterministic given `seed`.
    pub fn init(config: &NetworkConfig, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut layers = Vec::with_capacity(config.hidden.len());
        let mut fan_in = config.input_dim;
        for (idx, &m) in config.hidden.iter().enumerate() {
            let weights = if idx == 0 {
                Array2::from_shape_simple_fn((m, fan_in), || StandardNormal.sample(&mut rng))
            } else {
                let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).unwrap();
                Array2::from_shape_simple_fn((m, fan_in), || dist.sample(&mut rng))
            };
            layers.push(DenseLayer {
                weights,
                bias: Array1::zeros(m),
            });
            fan_in = m;
        }
        let out_dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).unwrap();
        let output = Array1::from_shape_simple_fn(fan_in, || out_dist.sample(&mut rng));
        Self {
            config: config.clone(),
            layers,
            output,
        }
    }

    /// Build parameters from explicit values; shapes must match the config.
    /// `layers` holds per hidden layer a (width × fan-in) weight matrix and a
    /// bias vector.
    pub fn from_parts(
        config: &NetworkConfig,
        layers: Vec<(Array2<f64>, Array1<f64>)>,
        output: Array1<f64>,
    ) -> Result<Self> {
        if layers.len() != config.hidden.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} hidden layers, got {}",
                config.hidden.len(),
                layers.len()
            )));
        }
        let mut fan_in = config.input_dim;
        for ((w, b), &m) in layers.iter().zip(&config.hidden) {
            if w.nrows() != m || w.ncols() != fan_in || b.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "layer shape mismatch: weights {}x{}, bias {}, expected {}x{} and {}",
                    w.nrows(),
                    w.ncols(),
                    b.len(),
                    m,
                    fan_in,
                    m
                )));
            }
            fan_in = m;
        }
        if output.len() != fan_in {
            return Err(Error::InvalidConfig(format!(
                "output weights length {} does not match last width {}",
                output.len(),
                fan_in
            )));
        }
        let params = Self {
            config: config.clone(),
            layers: layers
                .into_iter()
                .map(|(weights, bias)| DenseLayer { weights, bias })
                .collect(),
            output,
        };
        if !params.all_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(params)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn output_weights(&self) -> ArrayView1<'_, f64> {
        self.output.view()
    }

    pub fn layer_weights(&self, layer: usize) -> &Array2<f64> {
        &self.layers[layer].weights
    }

    pub fn layer_bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        self.layers[layer].bias.view()
    }

    pub fn trainable_len(&self) -> usize {
        self.config.trainable_len()
    }

    fn check_input(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// f(x;θ).
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_input(x)?;
        let act = self.config.activation;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = layer.weights.dot(&h);
            z += &layer.bias;
            z.mapv_inplace(|v| act.value(v));
            h = z;
        }
        Ok(self.output.dot(&h))
    }

    /// Preactivations and activations per hidden layer.
    fn forward_trace(&self, x: ArrayView1<f64>) -> (Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let act = self.config.activation;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = layer.weights.dot(&h);
            z += &layer.bias;
            h = z.mapv(|v| act.value(v));
            pre.push(z);
            post.push(h.clone());
        }
        (pre, post)
    }

    /// Per-layer backpropagated deltas: δ_ℓ[k] = ∂f/∂z_ℓ[k].
    fn deltas(&self, pre: &[Array1<f64>]) -> Vec<Array1<f64>> {
        let act = self.config.activation;
        let n_layers = self.layers.len();
        let mut deltas = vec![Array1::zeros(0); n_layers];
        let mut upstream = self.output.clone();
        for l in (0..n_layers).rev() {
            let delta = &upstream * &pre[l].mapv(|z| act.derivative(z));
            if l > 0 {
                upstream = self.layers[l].weights.t().dot(&delta);
            }
            deltas[l] = delta;
        }
        deltas
    }

    /// ∇_θ f(x;θ) over the trainable parameters, flattened in the documented
    /// order. For the two-layer network with fixed output this is
    /// `(a_k σ'(w_k·x+b_k)·x, a_k σ'(w_k·x+b_k))` per hidden unit k.
    pub fn param_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let mut flat = Array1::zeros(self.trainable_len());
        self.write_param_gradient(x, flat.as_slice_mut().expect("contiguous"));
        Ok(flat)
    }

    /// Write ∇_θ f(x;θ) into `out` (length `trainable_len`). Input dimension
    /// must already be checked.
    pub(crate) fn write_param_gradient(&self, x: ArrayView1<f64>, out: &mut [f64]) {
        let (pre, post) = self.forward_trace(x);
        let deltas = self.deltas(&pre);
        let mut offset = 0;
        for (l, delta) in deltas.iter().enumerate() {
            let input = if l == 0 { x } else { post[l - 1].view() };
            let fan_in = input.len();
            for (k, &dk) in delta.iter().enumerate() {
                let row = &mut out[offset + k * fan_in..offset + (k + 1) * fan_in];
                for (slot, &xi) in row.iter_mut().zip(input.iter()) {
                    *slot = dk * xi;
                }
            }
            offset += delta.len() * fan_in;
            out[offset..offset + delta.len()]
                .copy_from_slice(delta.as_slice().expect("contiguous"));
            offset += delta.len();
        }
        if self.config.train_output_layer {
            let last = post.last().expect("at least one hidden layer");
            out[offset..offset + last.len()].copy_from_slice(last.as_slice().expect("contiguous"));
            offset += last.len();
        }
        debug_assert_eq!(offset, self.trainable_len());
    }

    /// θ ← θ + coeff · ∇_θ f(x;θ), updating in place. Returns the Euclidean
    /// norm of ∇_θ f(x;θ).
    pub(crate) fn add_scaled_gradient(&mut self, x: ArrayView1<f64>, coeff: f64) -> f64 {
        let (pre, post) = self.forward_trace(x);
        let deltas = self.deltas(&pre);
        let mut sq_norm = 0.0;
        for (l, delta) in deltas.iter().enumerate() {
            let input = if l == 0 { x } else { post[l - 1].view() };
            let input_sq = input.dot(&input);
            let layer = &mut self.layers[l];
            for (k, &dk) in delta.iter().enumerate() {
                layer.weights.row_mut(k).scaled_add(coeff * dk, &input);
                layer.bias[k] += coeff * dk;
                sq_norm += dk * dk * (input_sq + 1.0);
            }
        }
        if self.config.train_output_layer {
            let last = post.last().expect("at least one hidden layer");
            sq_norm += last.dot(last);
            self.output.scaled_add(coeff, last);
        }
        sq_norm.sqrt()
    }

    /// θ ← θ + coeff · v for a flat vector in the documented order.
    pub(crate) fn add_scaled_flat(&mut self, v: &[f64], coeff: f64) {
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.as_slice_mut().expect("contiguous");
            for (slot, &vi) in w.iter_mut().zip(&v[offset..]) {
                *slot += coeff * vi;
            }
            offset += w.len();
            let b = layer.bias.as_slice_mut().expect("contiguous");
            for (slot, &vi) in b.iter_mut().zip(&v[offset..]) {
                *slot += coeff * vi;
            }
            offset += b.len();
        }
        if self.config.train_output_layer {
            let o = self.output.as_slice_mut().expect("contiguous");
            for (slot, &vi) in o.iter_mut().zip(&v[offset..]) {
                *slot += coeff * vi;
            }
            offset += o.len();
        }
        debug_assert_eq!(offset, v.len());
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
            && self.output.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the full parameter vector (all layers and output).
    pub fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        for l in &self.layers {
            s += l.weights.iter().map(|v| v * v).sum::<f64>();
            s += l.bias.iter().map(|v| v * v).sum::<f64>();
        }
        s += self.output.iter().map(|v| v * v).sum::<f64>();
        s.sqrt()
    }

    /// Euclidean distance ‖θ − θ'‖ over all parameters.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            s += a
                .weights
                .iter()
                .zip(b.weights.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
            s += a
                .bias
                .iter()
                .zip(b.bias.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
        s += self
            .output
            .iter()
            .zip(other.output.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
        s.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn unit_net(activation: Activation, a: f64, w: &[f64], b: f64) -> NetworkParams {
        let config = NetworkConfig::new(w.len(), &[1], activation).unwrap();
        NetworkParams::from_parts(
            &config,
            vec![(
                Array2::from_shape_vec((1, w.len()), w.to_vec()).unwrap(),
                arr1(&[b]),
            )],
            arr1(&[a]),
        )
        .unwrap()
    }

    #[test]
    fn softplus_is_stable_and_matches_closed_form() {
        assert!((Activation::Softplus.value(0.0) - 2f64.ln()).abs() < 1e-15);
        // beyond the overflow point of exp
        let z = 800.0;
        assert_eq!(Activation::Softplus.value(z), z);
        assert!((Activation::Softplus.value(31.0) - 31.0).abs() < 1e-12);
        assert!(Activation::Softplus.value(-800.0) >= 0.0);
        assert!((Activation::Softplus.derivative(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-12), 1.0);
        assert_eq!(Activation::Relu.derivative(-1e-12), 0.0);
    }

    #[test]
    fn init_is_deterministic() {
        let config = NetworkConfig::new(2, &[4], Activation::Softplus).unwrap();
        let a = NetworkParams::init(&config, 7);
        let b = NetworkParams::init(&config, 7);
        assert_eq!(a.layer_weights(0), b.layer_weights(0));
        assert_eq!(a.output_weights(), b.output_weights());
        assert_eq!(a.l2_distance(&b), 0.0);
        let c = NetworkParams::init(&config, 8);
        assert!(a.l2_distance(&c) > 0.0);
    }

    #[test]
    fn init_biases_are_exactly_zero() {
        let config = NetworkConfig::new(100, &[512], Activation::Softplus).unwrap();
        let p = NetworkParams::init(&config, 3);
        assert!(p.layer_bias(0).iter().all(|&b| b == 0.0));
        let config3 = NetworkConfig::new(10, &[16, 8], Activation::Relu).unwrap();
        let p3 = NetworkParams::init(&config3, 3);
        assert!(p3.layer_bias(0).iter().all(|&b| b == 0.0));
        assert!(p3.layer_bias(1).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn output_weight_variance_matches_scheme() {
        // law-of-large-numbers check on the N(0, 1/m) output weights
        let m = 100_000;
        let config = NetworkConfig::new(10, &[m], Activation::Softplus).unwrap();
        let p = NetworkParams::init(&config, 11);
        let var = p.output_weights().iter().map(|a| a * a).sum::<f64>() / m as f64;
        let target = 1.0 / m as f64;
        assert!(
            (var - target).abs() <= 0.05 * target,
            "sample variance {var} vs {target}"
        );
    }

    #[test]
    fn forward_closed_forms() {
        let p = unit_net(Activation::Softplus, 1.0, &[0.0, 0.0], 0.0);
        let v = p.forward(arr1(&[3.0, -4.0]).view()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);

        let p = unit_net(Activation::Relu, 2.0, &[1.0, 0.0], 0.0);
        assert_eq!(p.forward(arr1(&[3.0, 0.0]).view()).unwrap(), 6.0);
        assert_eq!(p.forward(arr1(&[-3.0, 0.0]).view()).unwrap(), 0.0);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let p = unit_net(Activation::Softplus, 1.0, &[0.0, 0.0], 0.0);
        assert!(matches!(
            p.forward(arr1(&[1.0]).view()),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(p.param_gradient(arr1(&[1.0, 2.0, 3.0]).view()).is_err());
    }

    #[test]
    fn gradient_closed_form_softplus() {
        // σ'(0) = 1/2: gradient (w1, w2, b) = (0.5, 0, 0.5)
        let p = unit_net(Activation::Softplus, 1.0, &[0.0, 0.0], 0.0);
        let g = p.param_gradient(arr1(&[1.0, 0.0]).view()).unwrap();
        let expected = arr1(&[0.5, 0.0, 0.5]);
        for (a, b) in g.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_relu_dead_unit_contributes_zero() {
        let p = unit_net(Activation::Relu, 1.5, &[1.0, 1.0], 0.0);
        // preactivation exactly 0
        let g = p.param_gradient(arr1(&[1.0, -1.0]).view()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    fn finite_difference(p: &NetworkParams, x: ArrayView1<f64>, step: f64) -> Array1<f64> {
        // central differences on the flattened trainable vector, independent
        // of the backprop path
        let n = p.trainable_len();
        let mut grad = Array1::zeros(n);
        let mut basis = vec![0.0; n];
        for i in 0..n {
            basis[i] = 1.0;
            let mut plus = p.clone();
            plus.add_scaled_flat(&basis, step);
            let mut minus = p.clone();
            minus.add_scaled_flat(&basis, -step);
            grad[i] = (plus.forward(x).unwrap() - minus.forward(x).unwrap()) / (2.0 * step);
            basis[i] = 0.0;
        }
        grad
    }

    fn assert_gradient_matches_fd(config: &NetworkConfig, seed: u64, rel_tol: f64) {
        let p = NetworkParams::init(config, seed);
        let mut rng = rng_from(seed ^ 0xabcd);
        let x = Array1::from_shape_simple_fn(config.input_dim(), || {
            StandardNormal.sample(&mut rng)
        });
        let analytic = p.param_gradient(x.view()).unwrap();
        let fd = finite_difference(&p, x.view(), 1e-5);
        let scale = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, f) in analytic.iter().zip(fd.iter()) {
            let denom = a.abs().max(scale * 1e-6).max(1e-12);
            assert!(
                (a - f).abs() / denom <= rel_tol,
                "gradient {a} vs finite difference {f}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences_two_layer() {
        let config = NetworkConfig::new(3, &[5], Activation::Softplus).unwrap();
        assert_gradient_matches_fd(&config, 1, 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences_three_layer_trainable_output() {
        let config = NetworkConfig::new(4, &[6, 3], Activation::Softplus)
            .unwrap()
            .with_trainable_output(true);
        assert_gradient_matches_fd(&config, 2, 1e-6);
    }

    #[test]
    fn forward_is_homogeneous_in_output_weights() {
        let config = NetworkConfig::new(3, &[4], Activation::Softplus).unwrap();
        let p = NetworkParams::init(&config, 5);
        let x = arr1(&[0.3, -1.2, 0.7]);
        let f = p.forward(x.view()).unwrap();
        let scaled = NetworkParams::from_parts(
            &config,
            vec![(p.layer_weights(0).clone(), p.layer_bias(0).to_owned())],
            p.output_weights().mapv(|a| 3.0 * a),
        )
        .unwrap();
        let fs = scaled.forward(x.view()).unwrap();
        assert!((fs - 3.0 * f).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn zero_input_gives_log2_times_output_sum() {
        let config = NetworkConfig::new(7, &[32], Activation::Softplus).unwrap();
        let p = NetworkParams::init(&config, 9);
        let zero = Array1::zeros(7);
        let f = p.forward(zero.view()).unwrap();
        let expected = 2f64.ln() * p.output_weights().sum();
        assert!((f - expected).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::new(0, &[4], Activation::Relu).is_err());
        assert!(NetworkConfig::new(2, &[], Activation::Relu).is_err());
        assert!(NetworkConfig::new(2, &[4, 4, 4], Activation::Relu).is_err());
        assert!(NetworkConfig::new(2, &[0], Activation::Relu).is_err());
    }

    #[test]
    fn from_parts_rejects_bad_shapes() {
        let config = NetworkConfig::new(2, &[1], Activation::Relu).unwrap();
        let bad = NetworkParams::from_parts(
            &config,
            vec![(arr2(&[[1.0, 2.0, 3.0]]), arr1(&[0.0]))],
            arr1(&[1.0]),
        );
        assert!(bad.is_err());
        let nonfinite = NetworkParams::from_parts(
            &config,
            vec![(arr2(&[[f64::NAN, 2.0]]), arr1(&[0.0]))],
            arr1(&[1.0]),
        );
        assert!(matches!(nonfinite, Err(Error::NonFinite(_))));
    }
}
