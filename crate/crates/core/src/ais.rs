//! Annealed importance sampling for the RBM partition function.
//!
//! The anneal runs from a base-rate RBM (zero weights, visible biases set
//! from data marginals, zero hidden biases) to the target model along a
//! beta schedule in [0, 1]. Each chain accumulates the log importance
//! weight of the intermediate unnormalized distributions; the estimate is
//! the log of the mean weight plus the base model's exact log Z.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;
use crate::rbm::RbmModel;
use crate::rng;

/// AIS schedule and base model.
#[derive(Debug, Clone)]
pub struct AisConfig {
    /// Number of points in the uniform beta schedule (including 0 and 1).
    pub num_betas: usize,
    pub num_chains: usize,
    /// Visible biases of the base-rate model.
    pub base_rate_biases: Vec<f64>,
    pub seed: u64,
}

impl AisConfig {
    /// Uniform base model (zero visible biases).
    pub fn uniform_base(n_visible: usize, seed: u64) -> Self {
        AisConfig {
            num_betas: 1000,
            num_chains: 100,
            base_rate_biases: vec![0.0; n_visible],
            seed,
        }
    }

    /// Base-rate biases a_i = ln(p_i / (1 - p_i)) from Laplace-smoothed
    /// marginals of (typically training) data.
    pub fn from_data(data: &BatchMatrix, seed: u64) -> Self {
        let n = data.rows() as f64;
        let biases = (0..data.cols())
            .map(|c| {
                let active: f64 = (0..data.rows()).map(|r| data.get(r, c)).sum();
                let p = (active + 1.0) / (n + 2.0);
                (p / (1.0 - p)).ln()
            })
            .collect();
        AisConfig {
            num_betas: 1000,
            num_chains: 100,
            base_rate_biases: biases,
            seed,
        }
    }

    fn validate(&self, n_visible: usize) -> Result<()> {
        if self.num_betas < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 betas, got {}",
                self.num_betas
            )));
        }
        if self.num_chains < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 chains for a standard error, got {}",
                self.num_chains
            )));
        }
        if self.base_rate_biases.len() != n_visible {
            return Err(Error::DimensionMismatch(format!(
                "{} base-rate biases for {} visible units",
                self.base_rate_biases.len(),
                n_visible
            )));
        }
        Ok(())
    }
}

/// Log partition estimate with its standard error over chains.
#[derive(Debug, Clone, Copy)]
pub struct AisEstimate {
    pub log_z: f64,
    pub stderr: f64,
}

/// Run AIS. Chains use independent sub-streams of `config.seed`, so the
/// result does not depend on evaluation order.
pub fn ais_log_z(rbm: &RbmModel, config: &AisConfig) -> Result<AisEstimate> {
    config.validate(rbm.n_visible())?;
    let betas: Vec<f64> = (0..config.num_betas)
        .map(|k| k as f64 / (config.num_betas - 1) as f64)
        .collect();

    // log Z of the base model: hidden units free, visibles independent.
    let n_h = rbm.n_hidden() as f64;
    let log_z_base: f64 =
        n_h * 2f64.ln() + config.base_rate_biases.iter().map(|&a| softplus(a)).sum::<f64>();

    let log_weights: Vec<f64> = (0..config.num_chains)
        .map(|c| {
            let mut chain_rng = rng::substream(config.seed, c as u64);
            chain_log_weight(rbm, config, &betas, &mut chain_rng)
        })
        .collect();

    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let var = scaled.iter().map(|&w| (w - mean) * (w - mean)).sum::<f64>()
        / (scaled.len() - 1) as f64;
    // Delta method on log of the chain mean.
    let stderr = (var / scaled.len() as f64).sqrt() / mean;
    Ok(AisEstimate {
        log_z: log_z_base + max + mean.ln(),
        stderr,
    })
}

/// Average test log-probability in nats: mean_v(-F(v)) - log Z.
pub fn test_log_prob(rbm: &RbmModel, test: &BatchMatrix, log_z: f64) -> f64 {
    let energies = rbm.free_energy_batch(test);
    let mean_f = energies.iter().sum::<f64>() / energies.len().max(1) as f64;
    -mean_f - log_z
}

fn chain_log_weight<R: Rng>(
    rbm: &RbmModel,
    config: &AisConfig,
    betas: &[f64],
    rng: &mut R,
) -> f64 {
    let n_v = rbm.n_visible();
    let n_h = rbm.n_hidden();
    let base = &config.base_rate_biases;

    // Draw from the base model.
    let mut v: Vec<f64> = base
        .iter()
        .map(|&a| {
            if rng.gen::<f64>() < sigmoid_scalar(a) {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    // Cached per-state quantities under the current v.
    let mut wv = vec![0.0f64; n_h]; // (W^T v)_j
    let mut base_dot = 0.0f64; // a_base . v
    let mut target_dot = 0.0f64; // a_target . v
    let recompute = |v: &[f64], wv: &mut Vec<f64>, base_dot: &mut f64, target_dot: &mut f64| {
        wv.iter_mut().for_each(|x| *x = 0.0);
        *base_dot = 0.0;
        *target_dot = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            *base_dot += base[i];
            *target_dot += rbm.visible_bias[i];
            for link in rbm.weights.links_of_input(i) {
                wv[link.out_idx as usize] += link.weight;
            }
        }
    };
    recompute(&v, &mut wv, &mut base_dot, &mut target_dot);

    // Unnormalized log p_beta(v) with the hidden layer summed out.
    let log_p = |beta: f64, base_dot: f64, target_dot: f64, wv: &[f64]| -> f64 {
        let mut acc = (1.0 - beta) * base_dot + beta * target_dot;
        for (j, &x) in wv.iter().enumerate() {
            acc += softplus(beta * (rbm.hidden_bias[j] + x));
        }
        acc
    };

    let mut log_w = 0.0f64;
    let last = betas.len() - 1;
    let mut h = vec![0.0f64; n_h];
    for k in 1..=last {
        let beta = betas[k];
        log_w += log_p(beta, base_dot, target_dot, &wv)
            - log_p(betas[k - 1], base_dot, target_dot, &wv);
        if k == last {
            break;
        }
        // Gibbs transition at the current beta.
        for (j, hj) in h.iter_mut().enumerate() {
            let p = sigmoid_scalar(beta * (rbm.hidden_bias[j] + wv[j]));
            *hj = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        }
        let mut wh = vec![0.0f64; n_v]; // (W h)_i
        for (j, &hj) in h.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            for &lidx in rbm.weights.link_indices_of_output(j) {
                let link = rbm.weights.links()[lidx as usize];
                wh[link.in_idx as usize] += link.weight;
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            let x = (1.0 - beta) * base[i] + beta * (rbm.visible_bias[i] + wh[i]);
            *vi = if rng.gen::<f64>() < sigmoid_scalar(x) {
                1.0
            } else {
                0.0
            };
        }
        recompute(&v, &mut wv, &mut base_dot, &mut target_dot);
    }
    log_w
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid_scalar(x: f64) -> f64 {
    crate::layers::sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{EvolutionConfig, SparsityMode, WeightInitSpec};

    #[test]
    fn base_equal_to_target_has_zero_variance() {
        // Target = base-rate model: every chain weight is exactly 1.
        let cfg = EvolutionConfig::new(100.0, 0.3, 3).unwrap();
        let mut model = crate::rbm::RbmModel::new(
            6,
            4,
            SparsityMode::Dense,
            &cfg,
            &WeightInitSpec::default(),
        )
        .unwrap();
        model.weights.for_each_weight_mut(|_, w| *w = 0.0);
        let biases = vec![0.3, -0.2, 0.0, 1.0, -1.0, 0.4];
        model.visible_bias = biases.clone();
        let mut ais_cfg = AisConfig::uniform_base(6, 7);
        ais_cfg.base_rate_biases = biases;
        ais_cfg.num_betas = 50;
        ais_cfg.num_chains = 8;
        let est = ais_log_z(&model, &ais_cfg).unwrap();
        let exact = model.exact_log_z().unwrap();
        assert!((est.log_z - exact).abs() < 1e-10);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn zero_model_log_prob_is_minus_nv_ln2() {
        let cfg = EvolutionConfig::new(100.0, 0.3, 1).unwrap();
        let mut model = crate::rbm::RbmModel::new(
            5,
            3,
            SparsityMode::Dense,
            &cfg,
            &WeightInitSpec::default(),
        )
        .unwrap();
        model.weights.for_each_weight_mut(|_, w| *w = 0.0);
        let log_z = model.exact_log_z().unwrap();
        let data = BatchMatrix::from_vec(2, 5, vec![1., 0., 1., 0., 1., 0., 0., 0., 1., 1.])
            .unwrap();
        let lp = test_log_prob(&model, &data, log_z);
        assert!((lp + 5.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn config_validation_catches_mismatches() {
        let cfg = EvolutionConfig::new(100.0, 0.3, 1).unwrap();
        let model = crate::rbm::RbmModel::new(
            4,
            3,
            SparsityMode::Dense,
            &cfg,
            &WeightInitSpec::default(),
        )
        .unwrap();
        let mut ais_cfg = AisConfig::uniform_base(5, 0);
        assert!(ais_log_z(&model, &ais_cfg).is_err());
        ais_cfg = AisConfig::uniform_base(4, 0);
        ais_cfg.num_betas = 1;
        assert!(ais_log_z(&model, &ais_cfg).is_err());
    }
}
