//! Forward/backward computation for sparsely-connected layers.
//!
//! Kernels touch only stored links. Batches are transposed to
//! feature-major internally so every per-link loop runs over a contiguous
//! slice of length batch.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;
use crate::topology::SparseWeights;

/// Activation applied to a layer's pre-activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Srelu,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Srelu => "srelu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "srelu" => Ok(Activation::Srelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

/// Trainable per-neuron parameters of the S-shaped rectified linear unit:
/// y = t_l + a_l (z - t_l) below t_l, identity between the thresholds,
/// and t_r + a_r (z - t_r) above t_r.
#[derive(Debug, Clone, PartialEq)]
pub struct SreluParams {
    pub t_left: Vec<f64>,
    pub a_left: Vec<f64>,
    pub t_right: Vec<f64>,
    pub a_right: Vec<f64>,
}

impl SreluParams {
    /// Initialization t_l=0, a_l=0, t_r=1, a_r=1: behaves as relu until
    /// training reshapes it.
    pub fn relu_like(n: usize) -> Self {
        SreluParams {
            t_left: vec![0.0; n],
            a_left: vec![0.0; n],
            t_right: vec![1.0; n],
            a_right: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.t_left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_left.is_empty()
    }
}

pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Left derivative at the kink: relu'(0) = 0.
pub fn relu_derivative(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_derivative(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s)
}

// Region split used for value, derivative, and parameter gradients alike:
// left z <= t_l, middle t_l < z <= t_r, right z > t_r (left derivative at
// both kinks; the value is continuous either way).
pub fn srelu_value(z: f64, t_l: f64, a_l: f64, t_r: f64, a_r: f64) -> f64 {
    if z <= t_l {
        t_l + a_l * (z - t_l)
    } else if z > t_r {
        t_r + a_r * (z - t_r)
    } else {
        z
    }
}

pub fn srelu_derivative(z: f64, t_l: f64, a_l: f64, t_r: f64, a_r: f64) -> f64 {
    let _ = a_r;
    if z <= t_l {
        a_l
    } else if z > t_r {
        a_r
    } else {
        1.0
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Weight-regularizer gradient kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    None,
    L1,
    L2,
}

/// Per-link regularizer gradient on the sparse support:
/// l1 -> rate*sign(w) with sign(0) = 0, l2 -> rate*w, none -> zeros.
pub fn regularizer_gradient(
    kind: RegularizerKind,
    rate: f64,
    weights: &SparseWeights,
) -> Vec<f64> {
    weights
        .links()
        .iter()
        .map(|l| match kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::L1 => {
                if l.weight > 0.0 {
                    rate
                } else if l.weight < 0.0 {
                    -rate
                } else {
                    0.0
                }
            }
            RegularizerKind::L2 => rate * l.weight,
        })
        .collect()
}

/// Mean negative log-likelihood of one-hot labels under row-normalized
/// probabilities, with the fused softmax gradient (p - y)/batch (taken
/// with respect to the pre-softmax activations).
pub fn cross_entropy_loss(
    probabilities: &BatchMatrix,
    labels: &[usize],
) -> Result<(f64, BatchMatrix)> {
    let batch = probabilities.rows();
    let classes = probabilities.cols();
    if labels.len() != batch {
        return Err(Error::DimensionMismatch(format!(
            "{} probability rows vs {} labels",
            batch,
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = probabilities.clone();
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidParameter(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let row_sum: f64 = probabilities.row(r).iter().sum();
        if (row_sum - 1.0).abs() > 1e-6 {
            return Err(Error::UnnormalizedProbabilities { row: r, sum: row_sum });
        }
        let p = probabilities.get(r, label).max(1e-300);
        loss -= p.ln();
        let g = grad.row_mut(r);
        for v in g.iter_mut() {
            *v /= batch as f64;
        }
        g[label] -= 1.0 / batch as f64;
    }
    Ok((loss / batch as f64, grad))
}

/// One sparsely-connected layer: sparse weights, per-neuron bias, and an
/// activation (with trainable parameters when it is srelu).
#[derive(Debug, Clone)]
pub struct SparseLayer {
    pub weights: SparseWeights,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub srelu: Option<SreluParams>,
}

impl SparseLayer {
    pub fn new(weights: SparseWeights, activation: Activation) -> Self {
        let n_out = weights.n_out();
        let srelu = match activation {
            Activation::Srelu => Some(SreluParams::relu_like(n_out)),
            _ => None,
        };
        SparseLayer {
            weights,
            bias: vec![0.0; n_out],
            activation,
            srelu,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.weights.n_out()
    }

    /// Forward pass. In training mode, inverted dropout zeroes each output
    /// unit with probability `dropout_rate` and scales survivors by
    /// 1/(1-dropout_rate); in inference mode dropout is the identity.
    pub fn forward<R: Rng>(
        &self,
        input: &BatchMatrix,
        dropout_rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(BatchMatrix, ForwardCache)> {
        if input.cols() != self.n_in() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} features, layer expects {}",
                input.cols(),
                self.n_in()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        let batch = input.rows();
        let input_t = input.transposed();
        let mut z_t = BatchMatrix::zeros(self.n_out(), batch);

        for j in 0..self.n_out() {
            let row = z_t.row_mut(j);
            row.fill(self.bias[j]);
        }
        for j in 0..self.n_out() {
            for &lidx in self.weights.link_indices_of_output(j) {
                let link = self.weights.links()[lidx as usize];
                let x = input_t.row(link.in_idx as usize);
                let w = link.weight;
                // Contiguous axpy over the batch; split borrows by index math.
                let row = z_t.row_mut(j);
                for (zs, xs) in row.iter_mut().zip(x.iter()) {
                    *zs += w * xs;
                }
            }
        }

        // Activation, feature-major; softmax normalizes across features of
        // one sample, i.e. along a strided column here.
        let mut y_t = z_t.clone();
        match self.activation {
            Activation::Identity => {}
            Activation::Relu => {
                for v in y_t.data_mut() {
                    *v = relu(*v);
                }
            }
            Activation::Sigmoid => {
                for v in y_t.data_mut() {
                    *v = sigmoid(*v);
                }
            }
            Activation::Srelu => {
                let p = self.srelu.as_ref().expect("srelu params present");
                for j in 0..self.n_out() {
                    let (t_l, a_l, t_r, a_r) =
                        (p.t_left[j], p.a_left[j], p.t_right[j], p.a_right[j]);
                    for v in y_t.row_mut(j) {
                        *v = srelu_value(*v, t_l, a_l, t_r, a_r);
                    }
                }
            }
            Activation::Softmax => {
                let n_out = self.n_out();
                let mut col = vec![0.0; n_out];
                for s in 0..batch {
                    for j in 0..n_out {
                        col[j] = y_t.get(j, s);
                    }
                    softmax_row(&mut col);
                    for j in 0..n_out {
                        y_t.set(j, s, col[j]);
                    }
                }
            }
        }

        let mask = if training && dropout_rate > 0.0 {
            let keep_scale = 1.0 / (1.0 - dropout_rate);
            let mut m = vec![0.0f64; self.n_out() * batch];
            for v in m.iter_mut() {
                if rng.gen::<f64>() >= dropout_rate {
                    *v = keep_scale;
                }
            }
            for (y, m) in y_t.data_mut().iter_mut().zip(m.iter()) {
                *y *= m;
            }
            Some(m)
        } else {
            None
        };

        let output = y_t.transposed();
        Ok((
            output,
            ForwardCache {
                input_t,
                z_t,
                y_t,
                mask,
                batch,
            },
        ))
    }

    /// Forward pass in inference mode (no dropout, no RNG).
    pub fn infer(&self, input: &BatchMatrix) -> Result<BatchMatrix> {
        let mut rng = crate::rng::seeded(0);
        Ok(self.forward(input, 0.0, false, &mut rng)?.0)
    }

    /// Backward pass from the gradient of the loss with respect to this
    /// layer's (post-dropout) output.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &BatchMatrix) -> Result<LayerGradients> {
        if grad_output.rows() != cache.batch || grad_output.cols() != self.n_out() {
            return Err(Error::DimensionMismatch(format!(
                "grad_output is {}x{}, cache expects {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                cache.batch,
                self.n_out()
            )));
        }
        let mut g_t = grad_output.transposed();
        if let Some(mask) = &cache.mask {
            for (g, m) in g_t.data_mut().iter_mut().zip(mask.iter()) {
                *g *= m;
            }
        }

        // Gradient through the activation.
        let batch = cache.batch;
        let mut srelu_grads = None;
        match self.activation {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &z) in g_t.data_mut().iter_mut().zip(cache.z_t.data()) {
                    *g *= relu_derivative(z);
                }
            }
            Activation::Sigmoid => {
                for (g, &z) in g_t.data_mut().iter_mut().zip(cache.z_t.data()) {
                    *g *= sigmoid_derivative(z);
                }
            }
            Activation::Srelu => {
                let p = self.srelu.as_ref().expect("srelu params present");
                let mut gp = SreluParams {
                    t_left: vec![0.0; self.n_out()],
                    a_left: vec![0.0; self.n_out()],
                    t_right: vec![0.0; self.n_out()],
                    a_right: vec![0.0; self.n_out()],
                };
                for j in 0..self.n_out() {
                    let (t_l, a_l, t_r, a_r) =
                        (p.t_left[j], p.a_left[j], p.t_right[j], p.a_right[j]);
                    let zs = cache.z_t.row(j);
                    let gs = g_t.row_mut(j);
                    for (g, &z) in gs.iter_mut().zip(zs.iter()) {
                        if z <= t_l {
                            gp.t_left[j] += *g * (1.0 - a_l);
                            gp.a_left[j] += *g * (z - t_l);
                            *g *= a_l;
                        } else if z > t_r {
                            gp.t_right[j] += *g * (1.0 - a_r);
                            gp.a_right[j] += *g * (z - t_r);
                            *g *= a_r;
                        }
                        // Middle region: dy/dz = 1, no parameter gradient.
                    }
                }
                srelu_grads = Some(gp);
            }
            Activation::Softmax => {
                // Row Jacobian: grad_z = y .* (g - <g, y>), per sample.
                let n_out = self.n_out();
                for s in 0..batch {
                    let mut dot = 0.0;
                    for j in 0..n_out {
                        dot += g_t.get(j, s) * cache.y_t.get(j, s);
                    }
                    for j in 0..n_out {
                        let y = cache.y_t.get(j, s);
                        g_t.set(j, s, y * (g_t.get(j, s) - dot));
                    }
                }
            }
        }

        self.accumulate_from_grad_z(cache, &g_t, srelu_grads)
    }

    /// Backward pass given the gradient with respect to the
    /// pre-activations (the fused softmax + cross-entropy path). Only
    /// valid on layers without dropout.
    pub fn backward_from_preactivation(
        &self,
        cache: &ForwardCache,
        grad_z: &BatchMatrix,
    ) -> Result<LayerGradients> {
        if grad_z.rows() != cache.batch || grad_z.cols() != self.n_out() {
            return Err(Error::DimensionMismatch(format!(
                "grad_z is {}x{}, cache expects {}x{}",
                grad_z.rows(),
                grad_z.cols(),
                cache.batch,
                self.n_out()
            )));
        }
        if cache.mask.is_some() {
            return Err(Error::InvalidParameter(
                "pre-activation backward is not defined under dropout".into(),
            ));
        }
        let g_t = grad_z.transposed();
        self.accumulate_from_grad_z(cache, &g_t, None)
    }

    fn accumulate_from_grad_z(
        &self,
        cache: &ForwardCache,
        grad_z_t: &BatchMatrix,
        srelu: Option<SreluParams>,
    ) -> Result<LayerGradients> {
        let links = self.weights.links();
        let mut grad_weights = vec![0.0f64; links.len()];
        for (gw, link) in grad_weights.iter_mut().zip(links.iter()) {
            let x = cache.input_t.row(link.in_idx as usize);
            let g = grad_z_t.row(link.out_idx as usize);
            let mut acc = 0.0;
            for (xs, gs) in x.iter().zip(g.iter()) {
                acc += xs * gs;
            }
            *gw = acc;
        }

        let mut grad_bias = vec![0.0f64; self.n_out()];
        for (j, gb) in grad_bias.iter_mut().enumerate() {
            *gb = grad_z_t.row(j).iter().sum();
        }

        let mut grad_input_t = BatchMatrix::zeros(self.n_in(), cache.batch);
        for i in 0..self.n_in() {
            for link in self.weights.links_of_input(i) {
                let g = grad_z_t.row(link.out_idx as usize);
                let w = link.weight;
                let row = grad_input_t.row_mut(i);
                for (r, gs) in row.iter_mut().zip(g.iter()) {
                    *r += w * gs;
                }
            }
        }

        Ok(LayerGradients {
            input: grad_input_t.transposed(),
            weights: grad_weights,
            bias: grad_bias,
            srelu,
        })
    }
}

/// Intermediate state kept between forward and backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer input, feature-major (n_in x batch).
    input_t: BatchMatrix,
    /// Pre-activations, feature-major (n_out x batch).
    z_t: BatchMatrix,
    /// Post-activation values before dropout, feature-major.
    y_t: BatchMatrix,
    /// Inverted-dropout mask (0 or 1/(1-rate)), same layout as y_t.
    mask: Option<Vec<f64>>,
    batch: usize,
}

/// Gradients of one layer, restricted to the sparse support.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub input: BatchMatrix,
    /// One entry per stored link, in canonical link order.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub srelu: Option<SreluParams>,
}
