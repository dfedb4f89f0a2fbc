//! Dense feedforward networks with exact reverse-mode gradients.
//!
//! Hidden layers use ReLU (1-Lipschitz and positive homogeneous), the
//! output layer is a single identity unit, so forecasts are unbounded
//! reals. Weights are row-major `out_dim x in_dim`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected input of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid layer dims: {0}")]
    InvalidDims(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation; ReLU'(0) is taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Zero-initialized layer.
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Builds a layer from explicit parts, checking shapes.
    pub fn from_parts(
        weights: Vec<f64>,
        bias: Vec<f64>,
        in_dim: usize,
        activation: Activation,
    ) -> Result<Self, NetError> {
        if in_dim == 0 || bias.is_empty() || weights.len() != in_dim * bias.len() {
            return Err(NetError::InvalidDims(format!(
                "weights {} x bias {} inconsistent with in_dim {}",
                weights.len(),
                bias.len(),
                in_dim
            )));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim: bias.len(),
            weights,
            bias,
            activation,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn shape_ok(&self) -> bool {
        self.in_dim > 0
            && self.out_dim > 0
            && self.weights.len() == self.in_dim * self.out_dim
            && self.bias.len() == self.out_dim
    }

    /// `out[i] = act(bias[i] + sum_j W[i][j] * input[j])`, pre-activations in
    /// `pre` when requested.
    fn forward_into(&self, input: &[f64], pre: Option<&mut Vec<f64>>, out: &mut Vec<f64>) {
        out.clear();
        if let Some(pre) = pre {
            pre.clear();
            for i in 0..self.out_dim {
                let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
                let z = self.bias[i]
                    + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                pre.push(z);
                out.push(self.activation.apply(z));
            }
        } else {
            for i in 0..self.out_dim {
                let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
                let z = self.bias[i]
                    + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                out.push(self.activation.apply(z));
            }
        }
        opcount::add((2 * self.in_dim * self.out_dim + self.out_dim) as u64);
    }
}

/// Per-layer gradients, shape-congruent with the layers of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub layers: Vec<LayerGrad>,
}

impl GradientBuffer {
    pub fn zeros_like(net: &Network) -> Self {
        GradientBuffer {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    d_weights: vec![0.0; l.weights.len()],
                    d_bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn shape_matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.d_weights.len() == l.weights.len() && g.d_bias.len() == l.bias.len()
            })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.d_weights.iter().chain(&g.d_bias).all(|v| v.is_finite()))
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &GradientBuffer) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
                *x += y;
            }
            for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                *x += y;
            }
        }
    }

    /// `self *= c`, elementwise.
    pub fn scale(&mut self, c: f64) {
        for g in &mut self.layers {
            for x in g.d_weights.iter_mut().chain(g.d_bias.iter_mut()) {
                *x *= c;
            }
        }
    }

    /// `self += c * theta` over every weight and bias of `net` (the L2
    /// regularization gradient).
    pub fn add_scaled_params(&mut self, net: &Network, c: f64) {
        for (g, l) in self.layers.iter_mut().zip(&net.layers) {
            for (x, w) in g.d_weights.iter_mut().zip(&l.weights) {
                *x += c * w;
            }
            for (x, b) in g.d_bias.iter_mut().zip(&l.bias) {
                *x += c * b;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.d_weights.iter().chain(&g.d_bias))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Dense feedforward network with a single linear output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl Network {
    /// He-uniform initialization: weights drawn from
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, biases zero. `dims` lists every
    /// layer width including input and output, e.g. `[30, 64, 64, 1]`.
    /// The same seed reproduces the network bit for bit.
    pub fn init(dims: &[usize], seed: u64) -> Result<Network, NetError> {
        if dims.len() < 2 {
            return Err(NetError::InvalidDims(format!(
                "need at least input and output dims, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(NetError::InvalidDims(format!("zero-width layer in {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(NetError::InvalidDims(format!(
                "output dim must be 1, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let is_last = layers.len() + 2 == dims.len();
            let mut layer = DenseLayer::zeros(
                fan_in,
                fan_out,
                if is_last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            );
            for w in layer.weights.iter_mut() {
                *w = (rand::Rng::random::<f64>(&mut rng) * 2.0 - 1.0) * bound;
            }
            layers.push(layer);
        }
        Ok(Network { layers })
    }

    /// Builds a network from explicit layers, validating the dim chain and
    /// the single linear output.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Network, NetError> {
        if layers.is_empty() {
            return Err(NetError::InvalidDims("no layers".into()));
        }
        for l in &layers {
            if !l.shape_ok() {
                return Err(NetError::InvalidDims(format!(
                    "layer shape {}x{} inconsistent with its buffers",
                    l.out_dim, l.in_dim
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(NetError::InvalidDims("non-finite parameter".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NetError::InvalidDims(format!(
                    "layer chain broken: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let last = layers.last().unwrap();
        if last.out_dim != 1 || last.activation != Activation::Identity {
            return Err(NetError::InvalidDims(
                "output layer must be a single identity unit".into(),
            ));
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Sum of squares of every weight and bias (the `||theta||^2` of the
    /// regularized objective).
    pub fn param_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().chain(&l.bias).map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    /// Per-layer Frobenius norms of the weight matrices (biases excluded).
    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.frobenius_norm()).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Scalar prediction `f(x; theta)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64, NetError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, None, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Forward pass keeping per-layer pre-activations and activations,
    /// as needed by backprop.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::new();
            let mut out = Vec::new();
            layer.forward_into(&cur, Some(&mut pre), &mut out);
            pres.push(pre);
            acts.push(out.clone());
            cur = out;
        }
        (pres, acts)
    }

    /// Exact reverse-mode gradients of `upstream * f(x; theta)` with respect
    /// to every weight and bias. `upstream` is `dL/dy_hat`; with `r = y -
    /// y_hat` that is `-loss_grad(r)`.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<GradientBuffer, NetError> {
        self.check_input(x)?;
        let (pres, acts) = self.forward_trace(x);
        let mut grads = GradientBuffer::zeros_like(self);

        // Output layer is a single identity unit.
        let mut delta = vec![upstream];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let below: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let g = &mut grads.layers[l];
            for i in 0..layer.out_dim {
                let d = delta[i];
                g.d_bias[i] = d;
                let row = &mut g.d_weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (slot, a) in row.iter_mut().zip(below) {
                    *slot = d * a;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for i in 0..layer.out_dim {
                    let d = delta[i];
                    let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                let act = self.layers[l - 1].activation;
                for (p, z) in prev.iter_mut().zip(&pres[l - 1]) {
                    *p *= act.derivative(*z);
                }
                delta = prev;
            }
            opcount::add((3 * layer.in_dim * layer.out_dim + layer.out_dim) as u64);
        }
        Ok(grads)
    }

    /// Versioned JSON checkpoint of dims, activations, and row-major weights.
    /// Round-trips bit-exactly.
    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            version: CHECKPOINT_VERSION,
            input_dim: self.input_dim(),
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("network serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Network, NetError> {
        let doc: CheckpointDoc =
            serde_json::from_str(text).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                doc.version
            )));
        }
        let net = Network::from_layers(doc.layers)?;
        if net.input_dim() != doc.input_dim {
            return Err(NetError::Checkpoint("input_dim disagrees with layers".into()));
        }
        Ok(net)
    }
}

/// Network multiply-accumulate counter, shared across threads so parallel
/// batch evaluation is included. Used to check that training cost scales
/// linearly with parameter count.
pub mod opcount {
    use std::sync::atomic::{AtomicU64, Ordering};

    static OPS: AtomicU64 = AtomicU64::new(0);

    #[inline]
    pub(crate) fn add(n: u64) {
        OPS.fetch_add(n, Ordering::Relaxed);
    }

    pub fn reset() {
        OPS.store(0, Ordering::Relaxed);
    }

    pub fn total() -> u64 {
        OPS.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_layer(weights: Vec<f64>, bias: Vec<f64>, in_dim: usize) -> Network {
        Network::from_layers(vec![
            DenseLayer::from_parts(weights, bias, in_dim, Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn forward_zero_net_is_zero() {
        let net = single_layer(vec![0.0, 0.0, 0.0], vec![0.0], 3);
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn forward_affine_map() {
        let net = single_layer(vec![2.0, 3.0], vec![1.0], 2);
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), 6.0);
    }

    #[test]
    fn relu_kills_negative_preactivation() {
        let net = Network::from_layers(vec![
            DenseLayer::from_parts(vec![-1.0], vec![0.0], 1, Activation::Relu).unwrap(),
            DenseLayer::from_parts(vec![5.0], vec![0.0], 1, Activation::Identity).unwrap(),
        ])
        .unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), 0.0);
        assert_eq!(net.forward(&[-3.0]).unwrap(), 15.0);
    }

    #[test]
    fn forward_rejects_wrong_input_len() {
        let net = single_layer(vec![1.0, 1.0], vec![0.0], 2);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(NetError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(net.backward(&[1.0], 1.0).is_err());
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let net = Network::init(&[4, 8, 1], 3).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3, 0.4], 0.0).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn backward_linear_model_closed_form() {
        let net = single_layer(vec![2.0, 3.0], vec![1.0], 2);
        let x = [0.5, -1.5];
        let g = net.backward(&x, 2.5).unwrap();
        assert_eq!(g.layers[0].d_weights, vec![2.5 * 0.5, 2.5 * -1.5]);
        assert_eq!(g.layers[0].d_bias, vec![2.5]);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Network::init(&[4, 64, 1], 7).unwrap();
        let b = Network::init(&[4, 64, 1], 7).unwrap();
        assert_eq!(a, b);
        let c = Network::init(&[4, 64, 1], 8).unwrap();
        assert_ne!(a, c);

        let bounds = [(6.0f64 / 4.0).sqrt(), (6.0f64 / 64.0).sqrt()];
        for (layer, bound) in a.layers().iter().zip(bounds) {
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(Network::init(&[], 0), Err(NetError::InvalidDims(_))));
        assert!(matches!(Network::init(&[4], 0), Err(NetError::InvalidDims(_))));
        assert!(matches!(Network::init(&[4, 0, 1], 0), Err(NetError::InvalidDims(_))));
        assert!(matches!(Network::init(&[4, 8, 2], 0), Err(NetError::InvalidDims(_))));
    }

    #[test]
    fn frobenius_norms_match_hand_values() {
        let zero = single_layer(vec![0.0, 0.0], vec![0.0], 2);
        assert_eq!(zero.frobenius_norms(), vec![0.0]);
        let net = single_layer(vec![3.0, 4.0], vec![9.0], 2);
        assert_eq!(net.frobenius_norms(), vec![5.0]);
    }

    #[test]
    fn frobenius_norm_matches_summation_oracle() {
        let net = Network::init(&[6, 5, 1], 42).unwrap();
        for (layer, norm) in net.layers().iter().zip(net.frobenius_norms()) {
            let direct: f64 = layer.weights.iter().map(|w| w * w).sum();
            assert!((norm - direct.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let net = Network::init(&[5, 8, 8, 1], 11).unwrap();
        let json = net.to_json();
        let back = Network::from_json(&json).unwrap();
        assert_eq!(net, back);
        assert_eq!(json, back.to_json());
    }

    #[test]
    fn checkpoint_rejects_bad_documents() {
        assert!(Network::from_json("{}").is_err());
        let net = single_layer(vec![1.0], vec![0.0], 1);
        let bad = net.to_json().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            Network::from_json(&bad),
            Err(NetError::Checkpoint(_))
        ));
    }

    proptest! {
        #[test]
        fn relu_is_positive_homogeneous(z in -50f64..50.0, c in 0f64..100.0) {
            let relu = Activation::Relu;
            prop_assert_eq!(relu.apply(c * z), c * relu.apply(z));
        }
    }
}
