//! Shared test oracles. Everything here is implemented independently of
//! the library's compute paths: dense matrix references, brute-force
//! enumeration, inverse-CDF samplers, and plain-formula statistics.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use sparset::data::load_idx;
use sparset::{BatchMatrix, Dataset, RbmModel, SparseLayer};

// ---------- dataset location ----------

pub fn data_root() -> PathBuf {
    std::env::var_os("SPARSET_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn load_mnist() -> (Dataset, Dataset) {
    let root = data_root().join("mnist");
    let missing = || {
        panic!(
            "MNIST IDX files not found under {}; fetch them as described in the README \
             or point SPARSET_DATA at the dataset root",
            root.display()
        )
    };
    let train = load_idx(
        &root.join("train-images-idx3-ubyte"),
        &root.join("train-labels-idx1-ubyte"),
    )
    .unwrap_or_else(|_| missing());
    let test = load_idx(
        &root.join("t10k-images-idx3-ubyte"),
        &root.join("t10k-labels-idx1-ubyte"),
    )
    .unwrap_or_else(|_| missing());
    (train, test)
}

// ---------- dense layer reference ----------

/// Scatter a sparse layer into a dense weight matrix w[i][j].
pub fn dense_weights(layer: &SparseLayer) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; layer.n_out()]; layer.n_in()];
    for l in layer.weights.links() {
        w[l.in_idx as usize][l.out_idx as usize] = l.weight;
    }
    w
}

/// Dense forward oracle: plain loops, own activation formulas. Matches
/// the library's accumulation order (bias first, inputs ascending) so
/// dense-support comparisons can be exact.
pub fn dense_forward(layer: &SparseLayer, input: &BatchMatrix) -> BatchMatrix {
    let w = dense_weights(layer);
    let (batch, n_in, n_out) = (input.rows(), layer.n_in(), layer.n_out());
    let mut out = BatchMatrix::zeros(batch, n_out);
    for s in 0..batch {
        let x = input.row(s);
        let mut z = vec![0.0f64; n_out];
        for j in 0..n_out {
            z[j] = layer.bias[j];
        }
        for j in 0..n_out {
            for i in 0..n_in {
                if w[i][j] != 0.0 {
                    z[j] += w[i][j] * x[i];
                }
            }
        }
        let y = dense_activation(layer, &z);
        out.row_mut(s).copy_from_slice(&y);
    }
    out
}

fn dense_activation(layer: &SparseLayer, z: &[f64]) -> Vec<f64> {
    use sparset::Activation;
    match layer.activation {
        Activation::Identity => z.to_vec(),
        Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        Activation::Sigmoid => z
            .iter()
            .map(|&v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    v.exp() / (1.0 + v.exp())
                }
            })
            .collect(),
        Activation::Srelu => {
            let p = layer.srelu.as_ref().expect("srelu params");
            z.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let (tl, al, tr, ar) =
                        (p.t_left[j], p.a_left[j], p.t_right[j], p.a_right[j]);
                    if v <= tl {
                        tl + al * (v - tl)
                    } else if v > tr {
                        tr + ar * (v - tr)
                    } else {
                        v
                    }
                })
                .collect()
        }
        Activation::Softmax => {
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.iter().map(|&e| e / sum).collect()
        }
    }
}

/// Dense backward oracle matching `dense_forward`: gradients of weights,
/// bias, inputs, and srelu parameters from plain dense loops.
pub struct DenseGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub input: BatchMatrix,
    pub srelu: Option<[Vec<f64>; 4]>,
}

pub fn dense_backward(
    layer: &SparseLayer,
    input: &BatchMatrix,
    grad_output: &BatchMatrix,
) -> DenseGrads {
    use sparset::Activation;
    let w = dense_weights(layer);
    let (batch, n_in, n_out) = (input.rows(), layer.n_in(), layer.n_out());
    // Recompute pre-activations densely.
    let mut zs = vec![vec![0.0f64; n_out]; batch];
    for s in 0..batch {
        for j in 0..n_out {
            let mut z = layer.bias[j];
            for i in 0..n_in {
                z += w[i][j] * input.get(s, i);
            }
            zs[s][j] = z;
        }
    }
    let mut srelu_grads = layer
        .srelu
        .as_ref()
        .map(|_| [vec![0.0; n_out], vec![0.0; n_out], vec![0.0; n_out], vec![0.0; n_out]]);
    let mut gz = vec![vec![0.0f64; n_out]; batch];
    for s in 0..batch {
        match layer.activation {
            Activation::Identity => {
                for j in 0..n_out {
                    gz[s][j] = grad_output.get(s, j);
                }
            }
            Activation::Relu => {
                for j in 0..n_out {
                    gz[s][j] = if zs[s][j] > 0.0 {
                        grad_output.get(s, j)
                    } else {
                        0.0
                    };
                }
            }
            Activation::Sigmoid => {
                for j in 0..n_out {
                    let sig = 1.0 / (1.0 + (-zs[s][j]).exp());
                    gz[s][j] = grad_output.get(s, j) * sig * (1.0 - sig);
                }
            }
            Activation::Srelu => {
                let p = layer.srelu.as_ref().unwrap();
                let acc = srelu_grads.as_mut().unwrap();
                for j in 0..n_out {
                    let (tl, al, tr, ar) =
                        (p.t_left[j], p.a_left[j], p.t_right[j], p.a_right[j]);
                    let g = grad_output.get(s, j);
                    let z = zs[s][j];
                    if z <= tl {
                        acc[0][j] += g * (1.0 - al);
                        acc[1][j] += g * (z - tl);
                        gz[s][j] = g * al;
                    } else if z > tr {
                        acc[2][j] += g * (1.0 - ar);
                        acc[3][j] += g * (z - tr);
                        gz[s][j] = g * ar;
                    } else {
                        gz[s][j] = g;
                    }
                }
            }
            Activation::Softmax => {
                let y = dense_activation(layer, &zs[s]);
                let mut dot = 0.0;
                for j in 0..n_out {
                    dot += grad_output.get(s, j) * y[j];
                }
                for j in 0..n_out {
                    gz[s][j] = y[j] * (grad_output.get(s, j) - dot);
                }
            }
        }
    }
    let mut gw = vec![vec![0.0f64; n_out]; n_in];
    for i in 0..n_in {
        for j in 0..n_out {
            let mut acc = 0.0;
            for (s, row) in gz.iter().enumerate() {
                acc += input.get(s, i) * row[j];
            }
            gw[i][j] = acc;
        }
    }
    let mut gb = vec![0.0f64; n_out];
    for (j, g) in gb.iter_mut().enumerate() {
        for row in gz.iter() {
            *g += row[j];
        }
    }
    let mut gin = BatchMatrix::zeros(batch, n_in);
    for (s, row) in gz.iter().enumerate() {
        for i in 0..n_in {
            let mut acc = 0.0;
            for j in 0..n_out {
                acc += w[i][j] * row[j];
            }
            gin.set(s, i, acc);
        }
    }
    DenseGrads {
        weights: gw,
        bias: gb,
        input: gin,
        srelu: srelu_grads,
    }
}

// ---------- finite differences ----------

/// Central difference d f / d x for a scalar function of one slot that
/// the caller perturbs through the closure.
pub fn central_difference<F: FnMut(f64) -> f64>(x0: f64, h: f64, mut f: F) -> f64 {
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

/// Relative error with an absolute floor so near-zero gradients compare
/// sanely: |a-b| / max(|a|, |b|, 1).
pub fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

// ---------- brute-force RBM ----------

/// Fully enumerated tiny RBM: every quantity computed from the joint
/// energy table.
pub struct EnumeratedRbm {
    pub n_v: usize,
    pub n_h: usize,
    pub w: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl EnumeratedRbm {
    pub fn from_model(model: &RbmModel) -> Self {
        let (n_v, n_h) = (model.n_visible(), model.n_hidden());
        assert!(n_v + n_h <= 22, "enumeration oracle limited to tiny models");
        let mut w = vec![vec![0.0; n_h]; n_v];
        for l in model.weights.links() {
            w[l.in_idx as usize][l.out_idx as usize] = l.weight;
        }
        EnumeratedRbm {
            n_v,
            n_h,
            w,
            a: model.visible_bias.clone(),
            b: model.hidden_bias.clone(),
        }
    }

    fn energy(&self, v: u32, h: u32) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n_v {
            if v >> i & 1 == 1 {
                e -= self.a[i];
                for j in 0..self.n_h {
                    if h >> j & 1 == 1 {
                        e -= self.w[i][j];
                    }
                }
            }
        }
        for j in 0..self.n_h {
            if h >> j & 1 == 1 {
                e -= self.b[j];
            }
        }
        e
    }

    pub fn log_z(&self) -> f64 {
        let mut terms = Vec::with_capacity(1 << (self.n_v + self.n_h));
        for v in 0..(1u32 << self.n_v) {
            for h in 0..(1u32 << self.n_h) {
                terms.push(-self.energy(v, h));
            }
        }
        log_sum_exp(&terms)
    }

    /// log sum_h exp(-E(v, h)), the unnormalized marginal.
    pub fn log_unnormalized_marginal(&self, v: &[f64]) -> f64 {
        let vbits = bits_of(v);
        let terms: Vec<f64> = (0..(1u32 << self.n_h))
            .map(|h| -self.energy(vbits, h))
            .collect();
        log_sum_exp(&terms)
    }

    /// Exact gradient of the mean log-likelihood with respect to each
    /// weight: <v_i P(h_j|v)>_data - <v_i h_j>_model.
    pub fn exact_weight_gradient(&self, data: &BatchMatrix) -> Vec<Vec<f64>> {
        // Model expectation from the joint distribution.
        let log_z = self.log_z();
        let mut model_vh = vec![vec![0.0; self.n_h]; self.n_v];
        for v in 0..(1u32 << self.n_v) {
            for h in 0..(1u32 << self.n_h) {
                let p = (-self.energy(v, h) - log_z).exp();
                for i in 0..self.n_v {
                    if v >> i & 1 == 0 {
                        continue;
                    }
                    for j in 0..self.n_h {
                        if h >> j & 1 == 1 {
                            model_vh[i][j] += p;
                        }
                    }
                }
            }
        }
        // Data expectation with the hidden units summed analytically.
        let mut data_vh = vec![vec![0.0; self.n_h]; self.n_v];
        let n = data.rows() as f64;
        for s in 0..data.rows() {
            let v = data.row(s);
            for j in 0..self.n_h {
                let mut x = self.b[j];
                for i in 0..self.n_v {
                    x += self.w[i][j] * v[i];
                }
                let p = 1.0 / (1.0 + (-x).exp());
                for i in 0..self.n_v {
                    data_vh[i][j] += v[i] * p / n;
                }
            }
        }
        let mut grad = vec![vec![0.0; self.n_h]; self.n_v];
        for i in 0..self.n_v {
            for j in 0..self.n_h {
                grad[i][j] = data_vh[i][j] - model_vh[i][j];
            }
        }
        grad
    }
}

fn bits_of(v: &[f64]) -> u32 {
    v.iter()
        .enumerate()
        .fold(0u32, |acc, (i, &x)| if x >= 0.5 { acc | 1 << i } else { acc })
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

// ---------- discrete power-law sampler ----------

/// Exact inverse-CDF sampler for P(d) proportional to d^-gamma on
/// d >= d_min, with its own normalizer (plain summation, generous
/// cutoff). Generator oracle for the fitting code.
pub struct PowerLawSampler {
    cdf: Vec<f64>,
    d_min: usize,
}

impl PowerLawSampler {
    pub fn new(gamma: f64, d_min: usize) -> Self {
        const CUTOFF: usize = 1_000_000;
        let mut masses: Vec<f64> = Vec::with_capacity(CUTOFF - d_min);
        let mut total = 0.0;
        for d in d_min..CUTOFF {
            let m = (d as f64).powf(-gamma);
            total += m;
            masses.push(total);
        }
        for m in masses.iter_mut() {
            *m /= total;
        }
        PowerLawSampler { cdf: masses, d_min }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c < u);
        self.d_min + idx.min(self.cdf.len() - 1)
    }

    pub fn sample_n<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Barabási–Albert-style preferential attachment: each new node attaches
/// m links to existing nodes with probability proportional to degree.
pub fn preferential_attachment_degrees<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut degrees = vec![0usize; n];
    // Repeated-endpoint list makes proportional sampling trivial.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * n * m);
    for node in 0..m.max(2) {
        degrees[node] += 1;
        endpoints.push(node);
    }
    for node in m.max(2)..n {
        for _ in 0..m {
            let target = endpoints[rng.gen_range(0..endpoints.len())];
            degrees[target] += 1;
            degrees[node] += 1;
            endpoints.push(target);
            endpoints.push(node);
        }
    }
    degrees
}

// ---------- simple statistics ----------

/// Abramowitz–Stegun 7.1.26 erf approximation, |error| < 1.5e-7.
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Chi-square survival function via the Wilson–Hilferty cube-root
/// normal approximation.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let c = 2.0 / (9.0 * df);
    let z = ((x / df).powf(1.0 / 3.0) - (1.0 - c)) / c.sqrt();
    1.0 - normal_cdf(z)
}

/// Kolmogorov–Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_distance_uniform(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((x - lo).abs()).max((hi - x).abs());
    }
    d
}

/// Plain logistic regression by gradient descent; oracle for linear
/// separability of 2-D toy data.
pub fn logistic_regression_accuracy(data: &Dataset, steps: usize, lr: f64) -> f64 {
    let labels = data.labels.as_ref().expect("labeled data");
    let dim = data.n_features();
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let n = data.len() as f64;
    for _ in 0..steps {
        let mut gw = vec![0.0f64; dim];
        let mut gb = 0.0f64;
        for s in 0..data.len() {
            let x = data.features.row(s);
            let y = labels[s] as f64;
            let z: f64 = b + w.iter().zip(x.iter()).map(|(wi, xi)| wi * xi).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let d = p - y;
            for (g, xi) in gw.iter_mut().zip(x.iter()) {
                *g += d * xi / n;
            }
            gb += d / n;
        }
        for (wi, g) in w.iter_mut().zip(gw.iter()) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }
    let mut correct = 0usize;
    for s in 0..data.len() {
        let x = data.features.row(s);
        let z: f64 = b + w.iter().zip(x.iter()).map(|(wi, xi)| wi * xi).sum::<f64>();
        if usize::from(z > 0.0) == labels[s] {
            correct += 1;
        }
    }
    correct as f64 / data.len() as f64
}

/// Binomial pmf table by stable recurrence.
pub fn binomial_pmf_table(n: usize, p: f64, max_k: usize) -> Vec<f64> {
    let mut pmf = vec![0.0f64; max_k + 1];
    // Start from ln pmf(0) to stay finite for large n.
    let ln_p0 = n as f64 * (1.0 - p).ln();
    pmf[0] = ln_p0.exp();
    for k in 0..max_k {
        pmf[k + 1] = pmf[k] * (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    pmf
}
