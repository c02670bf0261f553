//! Gradient normalization of scalar functions and a small analytic network
//! to exercise it.
//!
//! For a differentiable `f`, the normalized function is
//! `f(x) / (|grad f(x)| + |f(x)| + eps)`, which is bounded by one in
//! magnitude and (empirically) 1-Lipschitz.

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_GN_EPS: f64 = 1e-12;

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.2;

/// Pointwise nonlinearity between affine layers.
///
/// `Tanh` is smooth; `LeakyRelu` makes the network piecewise linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    LeakyRelu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::LeakyRelu => {
                if v >= 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::LeakyRelu => {
                if out >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `W x + b`; `weights` is row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != bias.len() {
            return Err(Error::invalid("layer needs one bias per output row"));
        }
        let cols = weights[0].len();
        if cols == 0 || weights.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged or empty weight matrix"));
        }
        if weights
            .iter()
            .flatten()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite layer parameter"));
        }
        Ok(Layer { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Stack of affine layers with the activation between consecutive layers and
/// a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarNet {
    layers: Vec<Layer>,
    activation: Activation,
}

impl ScalarNet {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::invalid("network needs at least one layer"))?;
        if last.output_dim() != 1 {
            return Err(Error::invalid(format!(
                "final layer must have one output, got {}",
                last.output_dim()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::invalid(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(ScalarNet { layers, activation })
    }

    /// Random network with layer sizes `dims` (input first, 1 last) and
    /// weights uniform in `[-weight_scale, weight_scale]`.
    pub fn random<R: Rng>(dims: &[usize], weight_scale: f64, rng: &mut R) -> Result<Self> {
        ScalarNet::random_with(dims, weight_scale, Activation::Tanh, rng)
    }

    pub fn random_with<R: Rng>(
        dims: &[usize],
        weight_scale: f64,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || dims.last() != Some(&1) || !(weight_scale > 0.0) {
            return Err(Error::invalid("bad random network shape"));
        }
        let u = Uniform::new_inclusive(-weight_scale, weight_scale);
        let layers = dims
            .windows(2)
            .map(|w| {
                let weights = (0..w[1])
                    .map(|_| (0..w[0]).map(|_| rng.sample(u)).collect())
                    .collect();
                let bias = (0..w[1]).map(|_| rng.sample(u)).collect();
                Layer::new(weights, bias)
            })
            .collect::<Result<Vec<_>>>()?;
        ScalarNet::new(layers, activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_with_grad(x).map(|(f, _)| f)
    }

    /// Signs of every hidden pre-activation at `x`; identical patterns mean
    /// the same linear region of a leaky-ReLU network.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid("input dimension mismatch"));
        }
        let mut pattern = Vec::new();
        let mut h = x.to_vec();
        for layer in &self.layers[..self.layers.len() - 1] {
            h = layer.forward(&h);
            pattern.extend(h.iter().map(|v| *v >= 0.0));
            h.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        }
        Ok(pattern)
    }

    /// Output and input gradient by a forward pass and manual backprop.
    pub fn eval_with_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} components, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        // activations[i] is the input of layer i
        let mut activations = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(activations.last().unwrap());
            if i < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            activations.push(z);
        }
        let f = activations[self.layers.len()][0];

        let mut delta = vec![1.0];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i < last {
                let out = &activations[i + 1];
                for (d, &o) in delta.iter_mut().zip(out) {
                    *d *= self.activation.derivative_from_output(o);
                }
            }
            let mut upstream = vec![0.0; layer.input_dim()];
            for (row, d) in layer.weights.iter().zip(&delta) {
                for (u, w) in upstream.iter_mut().zip(row) {
                    *u += d * w;
                }
            }
            delta = upstream;
        }
        Ok((f, delta))
    }
}

/// Free-function form of [`ScalarNet::eval_with_grad`].
pub fn net_eval_with_grad(net: &ScalarNet, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    net.eval_with_grad(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnOutput {
    pub raw: f64,
    pub normalized: f64,
    pub grad_norm: f64,
}

/// `f / (|grad| + |f| + eps)`.
pub fn grad_normalize(f: f64, grad: &[f64], eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("non-finite value or gradient"));
    }
    let gn = l2_norm(grad);
    Ok(f / (gn + f.abs() + eps))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

pub fn normalized_eval(net: &ScalarNet, x: &[f64], eps: f64) -> Result<GnOutput> {
    let (raw, grad) = net.eval_with_grad(x)?;
    Ok(GnOutput {
        raw,
        normalized: grad_normalize(raw, &grad, eps)?,
        grad_norm: l2_norm(&grad),
    })
}

/// Largest observed `|g(x) - g(x')| / |x - x'|` over `num_pairs` pairs drawn
/// uniformly and independently from `domain`.
///
/// `g` is the raw network or its gradient-normalized version. Coincident
/// pairs are redrawn.
pub fn empirical_lipschitz(
    net: &ScalarNet,
    normalize: bool,
    num_pairs: usize,
    domain: &[(f64, f64)],
    seed: u64,
) -> Result<f64> {
    if num_pairs == 0 {
        return Err(Error::invalid("num_pairs must be at least 1"));
    }
    if domain.len() != net.input_dim() {
        return Err(Error::invalid(format!(
            "domain has {} axes, network expects {}",
            domain.len(),
            net.input_dim()
        )));
    }
    if domain
        .iter()
        .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::invalid("degenerate sampling domain"));
    }
    let g = |x: &[f64]| -> Result<f64> {
        if normalize {
            normalized_eval(net, x, DEFAULT_GN_EPS).map(|o| o.normalized)
        } else {
            net.eval(x)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<f64> {
        domain
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect()
    };
    let mut best = 0.0f64;
    for _ in 0..num_pairs {
        let x = draw();
        let (y, dist) = loop {
            let y = draw();
            let dist = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 0.0 {
                break (y, dist);
            }
        };
        best = best.max((g(&x)? - g(&y)?).abs() / dist);
    }
    Ok(best)
}

/// Bound the normalized network must stay under in Lipschitz checks.
pub const LIPSCHITZ_TOLERANCE: f64 = 1.0 + 1e-3;

/// Input dimension of [`steep_reference_net`].
pub const REFERENCE_INPUT_DIM: usize = 8;

/// Seeded stand-in discriminator for Lipschitz checks: 8 inputs, two hidden
/// layers of 16 leaky-ReLU units, weights uniform in `[-2, 2]`.
///
/// Piecewise linear, so within each linear region the normalized gradient
/// norm `|grad f|^2 / (|grad f| + |f|)^2` cannot exceed one. Raw slopes are
/// typically well above 5 on `[-2, 2]^8`.
pub fn steep_reference_net(seed: u64) -> Result<ScalarNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarNet::random_with(
        &[REFERENCE_INPUT_DIM, 16, 16, 1],
        2.0,
        Activation::LeakyRelu,
        &mut rng,
    )
}
