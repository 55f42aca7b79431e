//! Sparse restricted Boltzmann machine: CD-k training under the
//! prune-and-regrow procedure, free energies, and an exact partition
//! function for models small enough to enumerate.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ais::{ais_log_z, test_log_prob, AisConfig};
use crate::analysis;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::sigmoid;
use crate::matrix::BatchMatrix;
use crate::rng;
use crate::topology::{EvolutionConfig, Side, SparseWeights, SparsityMode, WeightInitSpec};

/// Visible-to-hidden sparse weights plus the two bias vectors. Units are
/// binary-valued in sampling.
#[derive(Debug, Clone)]
pub struct RbmModel {
    pub weights: SparseWeights,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmModel {
    pub fn new(
        n_visible: usize,
        n_hidden: usize,
        mode: SparsityMode,
        evolution: &EvolutionConfig,
        init: &WeightInitSpec,
    ) -> Result<Self> {
        let weights = match mode {
            SparsityMode::Dense => {
                let mut r = rng::seeded(evolution.seed);
                SparseWeights::dense(n_visible, n_hidden, init, &mut r)
            }
            SparsityMode::Set | SparsityMode::FixProb => {
                SparseWeights::init_erdos_renyi(n_visible, n_hidden, evolution, init)?
            }
        };
        Ok(RbmModel {
            weights,
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
        })
    }

    pub fn from_parts(
        weights: SparseWeights,
        visible_bias: Vec<f64>,
        hidden_bias: Vec<f64>,
    ) -> Result<Self> {
        if visible_bias.len() != weights.n_in() || hidden_bias.len() != weights.n_out() {
            return Err(Error::DimensionMismatch(format!(
                "bias lengths {}/{} vs weights {}x{}",
                visible_bias.len(),
                hidden_bias.len(),
                weights.n_in(),
                weights.n_out()
            )));
        }
        Ok(RbmModel {
            weights,
            visible_bias,
            hidden_bias,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.weights.n_in()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.n_out()
    }

    /// P(h_j = 1 | v) for a batch of visible rows.
    pub fn hidden_probabilities(&self, visible: &BatchMatrix) -> Result<BatchMatrix> {
        Ok(self.hidden_probabilities_t(&visible.transposed())?.transposed())
    }

    /// P(v_i = 1 | h) for a batch of hidden rows.
    pub fn visible_probabilities(&self, hidden: &BatchMatrix) -> Result<BatchMatrix> {
        Ok(self.visible_probabilities_t(&hidden.transposed())?.transposed())
    }

    /// Conditional probabilities and Bernoulli samples of the hidden units.
    pub fn sample_hidden<R: Rng>(
        &self,
        visible: &BatchMatrix,
        rng: &mut R,
    ) -> Result<(BatchMatrix, BatchMatrix)> {
        let probs = self.hidden_probabilities(visible)?;
        let samples = bernoulli_matrix(&probs, rng);
        Ok((probs, samples))
    }

    /// Conditional probabilities and Bernoulli samples of the visible units.
    pub fn sample_visible<R: Rng>(
        &self,
        hidden: &BatchMatrix,
        rng: &mut R,
    ) -> Result<(BatchMatrix, BatchMatrix)> {
        let probs = self.visible_probabilities(hidden)?;
        let samples = bernoulli_matrix(&probs, rng);
        Ok((probs, samples))
    }

    // Feature-major kernels (rows = units, cols = samples).
    fn hidden_probabilities_t(&self, v_t: &BatchMatrix) -> Result<BatchMatrix> {
        if v_t.rows() != self.n_visible() {
            return Err(Error::DimensionMismatch(format!(
                "visible batch has {} units, model expects {}",
                v_t.rows(),
                self.n_visible()
            )));
        }
        let batch = v_t.cols();
        let mut x = BatchMatrix::zeros(self.n_hidden(), batch);
        for j in 0..self.n_hidden() {
            x.row_mut(j).fill(self.hidden_bias[j]);
        }
        for j in 0..self.n_hidden() {
            for &lidx in self.weights.link_indices_of_output(j) {
                let link = self.weights.links()[lidx as usize];
                let src = v_t.row(link.in_idx as usize);
                let row = x.row_mut(j);
                for (xs, vs) in row.iter_mut().zip(src.iter()) {
                    *xs += link.weight * vs;
                }
            }
        }
        for v in x.data_mut() {
            *v = sigmoid(*v);
        }
        Ok(x)
    }

    fn visible_probabilities_t(&self, h_t: &BatchMatrix) -> Result<BatchMatrix> {
        if h_t.rows() != self.n_hidden() {
            return Err(Error::DimensionMismatch(format!(
                "hidden batch has {} units, model expects {}",
                h_t.rows(),
                self.n_hidden()
            )));
        }
        let batch = h_t.cols();
        let mut x = BatchMatrix::zeros(self.n_visible(), batch);
        for i in 0..self.n_visible() {
            x.row_mut(i).fill(self.visible_bias[i]);
        }
        for i in 0..self.n_visible() {
            for link in self.weights.links_of_input(i) {
                let src = h_t.row(link.out_idx as usize);
                let row = x.row_mut(i);
                for (xs, hs) in row.iter_mut().zip(src.iter()) {
                    *xs += link.weight * hs;
                }
            }
        }
        for v in x.data_mut() {
            *v = sigmoid(*v);
        }
        Ok(x)
    }

    /// F(v) = -sum_i a_i v_i - sum_j softplus(b_j + sum_links w_ij v_i).
    pub fn free_energy(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.n_visible());
        let mut x: Vec<f64> = self.hidden_bias.clone();
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for link in self.weights.links_of_input(i) {
                x[link.out_idx as usize] += link.weight * vi;
            }
        }
        let visible_term: f64 = self
            .visible_bias
            .iter()
            .zip(v.iter())
            .map(|(a, vi)| a * vi)
            .sum();
        let hidden_term: f64 = x.iter().map(|&z| softplus(z)).sum();
        -visible_term - hidden_term
    }

    pub fn free_energy_batch(&self, v: &BatchMatrix) -> Vec<f64> {
        (0..v.rows()).map(|r| self.free_energy(v.row(r))).collect()
    }

    /// Exact log partition function by enumerating the smaller side's
    /// 2^n states (analytically summing the other side). Limited to
    /// min(n_v, n_h) <= 20.
    pub fn exact_log_z(&self) -> Result<f64> {
        let (n_v, n_h) = (self.n_visible(), self.n_hidden());
        if n_v.min(n_h) > 20 {
            return Err(Error::ModelTooLarge(format!(
                "min({n_v}, {n_h}) hidden/visible units exceeds 20"
            )));
        }
        // Enumerate in Gray-code order so each step flips one unit and
        // updates the opposite side's inputs incrementally.
        let enumerate_hidden = n_h <= n_v;
        let n_enum = if enumerate_hidden { n_h } else { n_v };
        let n_other = if enumerate_hidden { n_v } else { n_h };
        let enum_bias: &[f64] = if enumerate_hidden {
            &self.hidden_bias
        } else {
            &self.visible_bias
        };
        let other_bias: &[f64] = if enumerate_hidden {
            &self.visible_bias
        } else {
            &self.hidden_bias
        };

        // Per enumerated unit: the (other_index, weight) pairs it touches.
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_enum];
        for l in self.weights.links() {
            if enumerate_hidden {
                columns[l.out_idx as usize].push((l.in_idx, l.weight));
            } else {
                columns[l.in_idx as usize].push((l.out_idx, l.weight));
            }
        }

        let mut x: Vec<f64> = other_bias.to_vec();
        let mut bias_acc = 0.0f64;
        let mut state: u64 = 0;
        let mut terms: Vec<f64> = Vec::with_capacity(1usize << n_enum);
        let softplus_sum = |x: &[f64]| -> f64 { x.iter().map(|&z| softplus(z)).sum() };
        let _ = n_other;
        terms.push(bias_acc + softplus_sum(&x));
        for k in 1u64..(1u64 << n_enum) {
            let bit = k.trailing_zeros() as usize;
            let gray_bit = 1u64 << bit;
            state ^= gray_bit;
            let turned_on = state & gray_bit != 0;
            let sign = if turned_on { 1.0 } else { -1.0 };
            bias_acc += sign * enum_bias[bit];
            for &(other, w) in &columns[bit] {
                x[other as usize] += sign * w;
            }
            terms.push(bias_acc + softplus_sum(&x));
        }
        Ok(log_sum_exp(&terms))
    }

    /// One CD-k gradient estimate (no parameter update). Positive
    /// statistics pair the data with P(h|v); the negative phase runs k
    /// alternating Gibbs steps with binary visible samples, and the final
    /// hidden factor uses probabilities.
    pub fn cd_statistics<R: Rng>(
        &self,
        batch: &BatchMatrix,
        cd_steps: usize,
        rng: &mut R,
    ) -> Result<CdStatistics> {
        if cd_steps == 0 {
            return Err(Error::InvalidParameter("cd_steps must be >= 1".into()));
        }
        let n = batch.rows() as f64;
        let v0_t = batch.transposed();
        let ph0_t = self.hidden_probabilities_t(&v0_t)?;
        let mut h_t = bernoulli_matrix(&ph0_t, rng);
        let mut vk_t = v0_t.clone();
        let mut pvk_t = v0_t.clone();
        let mut phk_t = ph0_t.clone();
        for step in 0..cd_steps {
            pvk_t = self.visible_probabilities_t(&h_t)?;
            vk_t = bernoulli_matrix(&pvk_t, rng);
            phk_t = self.hidden_probabilities_t(&vk_t)?;
            if step + 1 < cd_steps {
                h_t = bernoulli_matrix(&phk_t, rng);
            }
        }

        let links = self.weights.links();
        let mut pos_weights = vec![0.0f64; links.len()];
        let mut neg_weights = vec![0.0f64; links.len()];
        for (idx, l) in links.iter().enumerate() {
            let (i, j) = (l.in_idx as usize, l.out_idx as usize);
            pos_weights[idx] = dot(v0_t.row(i), ph0_t.row(j)) / n;
            neg_weights[idx] = dot(vk_t.row(i), phk_t.row(j)) / n;
        }
        let mean_rows = |m: &BatchMatrix| -> Vec<f64> {
            (0..m.rows())
                .map(|r| m.row(r).iter().sum::<f64>() / n)
                .collect()
        };
        let recon_error = v0_t
            .data()
            .iter()
            .zip(pvk_t.data().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(CdStatistics {
            pos_weights,
            neg_weights,
            pos_visible: mean_rows(&v0_t),
            neg_visible: mean_rows(&vk_t),
            pos_hidden: mean_rows(&ph0_t),
            neg_hidden: mean_rows(&phk_t),
            recon_error,
        })
    }

    /// CD-k gradient ascent step with momentum; weight decay applies to
    /// weights only.
    pub fn cd_k_update<R: Rng>(
        &mut self,
        batch: &BatchMatrix,
        config: &RbmTrainConfig,
        velocity: &mut RbmVelocity,
        rng: &mut R,
    ) -> Result<CdStatistics> {
        let stats = self.cd_statistics(batch, config.cd_steps, rng)?;
        if velocity.weights.len() != self.weights.nnz() {
            return Err(Error::DimensionMismatch(
                "velocity does not match link count".into(),
            ));
        }
        let (lr, mu, wd) = (config.learning_rate, config.momentum, config.weight_decay);
        self.weights.for_each_weight_mut(|idx, w| {
            let g = stats.pos_weights[idx] - stats.neg_weights[idx] - wd * *w;
            let v = &mut velocity.weights[idx];
            *v = mu * *v + lr * g;
            *w += *v;
        });
        for (((b, &pos), &neg), v) in self
            .visible_bias
            .iter_mut()
            .zip(stats.pos_visible.iter())
            .zip(stats.neg_visible.iter())
            .zip(velocity.visible.iter_mut())
        {
            *v = mu * *v + lr * (pos - neg);
            *b += *v;
        }
        for (((b, &pos), &neg), v) in self
            .hidden_bias
            .iter_mut()
            .zip(stats.pos_hidden.iter())
            .zip(stats.neg_hidden.iter())
            .zip(velocity.hidden.iter_mut())
        {
            *v = mu * *v + lr * (pos - neg);
            *b += *v;
        }
        Ok(stats)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn bernoulli_matrix<R: Rng>(probs: &BatchMatrix, rng: &mut R) -> BatchMatrix {
    let mut out = probs.clone();
    for v in out.data_mut() {
        *v = if rng.gen::<f64>() < *v { 1.0 } else { 0.0 };
    }
    out
}

/// Positive/negative phase statistics of one CD-k estimate.
#[derive(Debug, Clone)]
pub struct CdStatistics {
    pub pos_weights: Vec<f64>,
    pub neg_weights: Vec<f64>,
    pub pos_visible: Vec<f64>,
    pub neg_visible: Vec<f64>,
    pub pos_hidden: Vec<f64>,
    pub neg_hidden: Vec<f64>,
    pub recon_error: f64,
}

/// Momentum state for RBM training.
#[derive(Debug, Clone)]
pub struct RbmVelocity {
    pub weights: Vec<f64>,
    pub visible: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl RbmVelocity {
    pub fn zeros_for(model: &RbmModel) -> Self {
        RbmVelocity {
            weights: vec![0.0; model.weights.nnz()],
            visible: vec![0.0; model.n_visible()],
            hidden: vec![0.0; model.n_hidden()],
        }
    }
}

/// How the trainer computes test log-probabilities.
#[derive(Debug, Clone)]
pub enum LogProbMethod {
    /// Brute-force partition function; tiny models only.
    ExactEnumeration,
    /// Annealed importance sampling with the given schedule.
    Ais { num_betas: usize, num_chains: usize },
}

/// CD training hyperparameters. Defaults follow the unsupervised
/// experiments: learning rate 0.01, momentum 0.9, weight decay 2e-4,
/// epsilon 11, zeta 0.3.
#[derive(Debug, Clone)]
pub struct RbmTrainConfig {
    pub cd_steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub evolution: EvolutionConfig,
    pub weight_init: WeightInitSpec,
    pub mode: SparsityMode,
    /// Evaluate test log-prob at this epoch cadence (always including
    /// epoch 0 and the post-training state).
    pub eval_every: Option<usize>,
    pub eval_method: LogProbMethod,
    pub pvalue_monte_carlo: Option<usize>,
    /// Initialize visible biases to the Laplace-smoothed log-odds of the
    /// training marginals before the first epoch (the standard practical
    /// choice for image data; keeps dead pixels silent from the start so
    /// their links are pruned instead of driven negative).
    pub visible_bias_from_marginals: bool,
}

impl RbmTrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        RbmTrainConfig {
            cd_steps: 1,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0002,
            epochs,
            batch_size: 100,
            evolution: EvolutionConfig::new(11.0, 0.3, seed).expect("valid defaults"),
            weight_init: WeightInitSpec::FanInUniform,
            mode: SparsityMode::Set,
            eval_every: Some(50),
            eval_method: LogProbMethod::ExactEnumeration,
            pvalue_monte_carlo: None,
            visible_bias_from_marginals: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cd_steps == 0 {
            return Err(Error::InvalidParameter("cd_steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "batch_size and epochs must be >= 1".into(),
            ));
        }
        self.evolution.validate()
    }
}

/// Per-epoch record. The epoch column counts completed epochs: row 0 is
/// the untrained model at its Erdős–Rényi initialization, and row e >= 1
/// is measured after epoch e's training but before its evolution step,
/// so evaluations never see freshly regrown, untrained links. The
/// post-final-prune model lives in the trainer (and its checkpoint), not
/// in a metrics row.
#[derive(Debug, Clone)]
pub struct RbmEpochMetrics {
    pub epoch: usize,
    pub recon_error: Option<f64>,
    pub test_log_prob: Option<f64>,
    pub nnz: usize,
    pub p_value: Option<f64>,
    pub wall_time_s: f64,
}

/// Epoch driver mirroring the MLP trainer: CD-k minibatches, then
/// evolution for `Set` models (no regrowth after the final epoch).
pub struct RbmTrainer {
    model: RbmModel,
    config: RbmTrainConfig,
    velocity: RbmVelocity,
    rng: rng::Stream,
    epoch: usize,
    bias_initialized: bool,
}

const STREAM_TRAIN: u64 = 0x7262_6d74;
const STREAM_PVALUE: u64 = 0x7262_6d70;
const STREAM_AIS: u64 = 0x7262_6d61;

impl RbmTrainer {
    pub fn new(model: RbmModel, config: RbmTrainConfig) -> Result<Self> {
        config.validate()?;
        let velocity = RbmVelocity::zeros_for(&model);
        let rng = rng::substream(config.evolution.seed, STREAM_TRAIN);
        Ok(RbmTrainer {
            model,
            config,
            velocity,
            rng,
            epoch: 0,
            bias_initialized: false,
        })
    }

    pub fn model(&self) -> &RbmModel {
        &self.model
    }

    pub fn into_model(self) -> RbmModel {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Run all configured epochs; the returned series starts with the
    /// untrained baseline row and has one row per completed epoch.
    pub fn run(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<Vec<RbmEpochMetrics>> {
        let mut metrics = Vec::with_capacity(self.config.epochs + 1);
        if self.epoch == 0 {
            metrics.push(self.baseline_metrics(train, test)?);
        }
        while self.epoch < self.config.epochs {
            metrics.push(self.train_epoch(train, test)?);
        }
        Ok(metrics)
    }

    /// Evaluation-only row for the untrained model (epoch 0).
    pub fn baseline_metrics(
        &mut self,
        train: &Dataset,
        test: Option<&Dataset>,
    ) -> Result<RbmEpochMetrics> {
        let start = Instant::now();
        self.maybe_init_visible_bias(train);
        Ok(RbmEpochMetrics {
            epoch: 0,
            recon_error: None,
            test_log_prob: self.eval_log_prob(train, test)?,
            nnz: self.model.weights.nnz(),
            p_value: self.topology_p_value()?,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    pub fn train_epoch(
        &mut self,
        train: &Dataset,
        test: Option<&Dataset>,
    ) -> Result<RbmEpochMetrics> {
        let start = Instant::now();
        if train.features.cols() != self.model.n_visible() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} features, model expects {}",
                train.features.cols(),
                self.model.n_visible()
            )));
        }
        self.maybe_init_visible_bias(train);
        let n = train.features.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let mut recon = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let (batch, _) = train.gather(chunk)?;
            let stats =
                self.model
                    .cd_k_update(&batch, &self.config, &mut self.velocity, &mut self.rng)?;
            recon += stats.recon_error;
            batches += 1;
        }

        // Measure before evolving: evaluations must not see freshly
        // regrown untrained links.
        let completed = self.epoch + 1;
        let nnz = self.model.weights.nnz();
        let p_value = self.topology_p_value()?;
        let eval_due = match self.config.eval_every {
            Some(every) if every > 0 => completed % every == 0 || completed == self.config.epochs,
            _ => false,
        };
        let test_log_prob = if eval_due {
            self.eval_log_prob(train, test)?
        } else {
            None
        };

        if self.config.mode == SparsityMode::Set && self.config.evolution.zeta > 0.0 {
            let regrow = completed < self.config.epochs;
            let cfg = self.config.evolution.clone().with_regrow(regrow);
            let (_, remap) = self.model.weights.evolve_tracked(
                &cfg,
                &self.config.weight_init,
                &mut self.rng,
            )?;
            let mut new_vel = vec![0.0f64; remap.new_len];
            for (old_idx, target) in remap.old_to_new.iter().enumerate() {
                if let Some(new_idx) = target {
                    new_vel[*new_idx as usize] = self.velocity.weights[old_idx];
                }
            }
            self.velocity.weights = new_vel;
        }

        self.epoch = completed;
        Ok(RbmEpochMetrics {
            epoch: completed,
            recon_error: Some(recon / batches.max(1) as f64),
            test_log_prob,
            nnz,
            p_value,
            wall_time_s: start.elapsed().as_secs_f64(),
        })
    }

    // Laplace-smoothed log-odds of the training marginals; idempotent.
    fn maybe_init_visible_bias(&mut self, train: &Dataset) {
        if self.bias_initialized || !self.config.visible_bias_from_marginals {
            self.bias_initialized = true;
            return;
        }
        let n = train.features.rows() as f64;
        for (i, bias) in self.model.visible_bias.iter_mut().enumerate() {
            let active: f64 = (0..train.features.rows())
                .map(|r| train.features.get(r, i))
                .sum();
            let p = (active + 1.0) / (n + 2.0);
            *bias = (p / (1.0 - p)).ln();
        }
        self.bias_initialized = true;
    }

    fn eval_log_prob(&self, train: &Dataset, test: Option<&Dataset>) -> Result<Option<f64>> {
        let Some(test) = test else {
            return Ok(None);
        };
        let log_z = match self.config.eval_method {
            LogProbMethod::ExactEnumeration => self.model.exact_log_z()?,
            LogProbMethod::Ais {
                num_betas,
                num_chains,
            } => {
                let mut cfg = AisConfig::from_data(
                    &train.features,
                    rng::substream(self.config.evolution.seed, STREAM_AIS ^ self.epoch as u64)
                        .gen(),
                );
                cfg.num_betas = num_betas;
                cfg.num_chains = num_chains;
                ais_log_z(&self.model, &cfg)?.log_z
            }
        };
        Ok(Some(test_log_prob(&self.model, &test.features, log_z)))
    }

    fn topology_p_value(&self) -> Result<Option<f64>> {
        let Some(n_mc) = self.config.pvalue_monte_carlo else {
            return Ok(None);
        };
        let degrees = self.model.weights.degree_distribution(Side::Output);
        let mut r = rng::substream(
            self.config.evolution.seed,
            STREAM_PVALUE ^ ((self.epoch as u64) << 8),
        );
        match analysis::null_hypothesis_p_value(&degrees, n_mc, &mut r) {
            Ok(p) => Ok(Some(p)),
            Err(Error::UndefinedFit(_)) => Ok(Some(f64::NAN)),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureKind;

    fn tiny_rbm(n_v: usize, n_h: usize, seed: u64) -> RbmModel {
        let cfg = EvolutionConfig::new(100.0, 0.3, seed).unwrap();
        RbmModel::new(n_v, n_h, SparsityMode::FixProb, &cfg, &WeightInitSpec::default()).unwrap()
    }

    #[test]
    fn zero_model_probabilities_are_half() {
        let mut model = tiny_rbm(4, 3, 1);
        model.weights.for_each_weight_mut(|_, w| *w = 0.0);
        let v = BatchMatrix::from_vec(2, 4, vec![1., 0., 1., 1., 0., 0., 1., 0.]).unwrap();
        let probs = model.hidden_probabilities(&v).unwrap();
        assert!(probs.data().iter().all(|&p| p == 0.5));
        let h = BatchMatrix::from_vec(1, 3, vec![1., 0., 1.]).unwrap();
        let vp = model.visible_probabilities(&h).unwrap();
        assert!(vp.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn single_link_conditional_is_sigmoid_of_weight() {
        use crate::topology::Link;
        let w = SparseWeights::from_links(
            1,
            1,
            vec![Link { in_idx: 0, out_idx: 0, weight: 0.73 }],
        )
        .unwrap();
        let model = RbmModel::from_parts(w, vec![0.0], vec![0.0]).unwrap();
        let v = BatchMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let p = model.hidden_probabilities(&v).unwrap();
        assert!((p.get(0, 0) - sigmoid(0.73)).abs() < 1e-15);
    }

    #[test]
    fn zero_model_free_energy_and_log_z() {
        let mut model = tiny_rbm(5, 4, 2);
        model.weights.for_each_weight_mut(|_, w| *w = 0.0);
        let v = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        // F(v) = -n_h ln 2 for the zero model.
        assert!((model.free_energy(&v) + 4.0 * 2f64.ln()).abs() < 1e-12);
        // log Z = (n_v + n_h) ln 2.
        let lz = model.exact_log_z().unwrap();
        assert!((lz - 9.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn free_energy_monotone_in_visible_bias() {
        let mut model = tiny_rbm(3, 3, 4);
        let v = vec![1.0, 0.0, 0.0];
        let f0 = model.free_energy(&v);
        model.visible_bias[0] += 1.0;
        let f1 = model.free_energy(&v);
        assert!(f1 < f0);
    }

    #[test]
    fn exact_log_z_is_side_symmetric() {
        // 6x4 model: enumerating hidden (4) must equal enumerating the
        // visible side; check via the transposed model.
        let model = {
            let mut m = tiny_rbm(6, 4, 5);
            let mut k = 0.3;
            m.weights.for_each_weight_mut(|_, w| {
                *w = k;
                k = -k * 0.9;
            });
            m.visible_bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64);
            m.hidden_bias.iter_mut().enumerate().for_each(|(j, b)| *b = -0.2 * j as f64);
            m
        };
        let transposed = {
            use crate::topology::Link;
            let links: Vec<Link> = model
                .weights
                .links()
                .iter()
                .map(|l| Link {
                    in_idx: l.out_idx,
                    out_idx: l.in_idx,
                    weight: l.weight,
                })
                .collect();
            let w = SparseWeights::from_links(4, 6, links).unwrap();
            RbmModel::from_parts(w, model.hidden_bias.clone(), model.visible_bias.clone()).unwrap()
        };
        let a = model.exact_log_z().unwrap();
        let b = transposed.exact_log_z().unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn exact_log_z_rejects_large_models() {
        let model = tiny_rbm(25, 25, 0);
        assert!(matches!(model.exact_log_z(), Err(Error::ModelTooLarge(_))));
    }

    #[test]
    fn positive_phase_statistic_matches_analytic_value() {
        // Zero-weight model, all-ones visibles: P(h|v) = 0.5, so the
        // positive statistic is 1 * 0.5 at every link.
        let mut model = tiny_rbm(4, 3, 7);
        model.weights.for_each_weight_mut(|_, w| *w = 0.0);
        let batch = BatchMatrix::from_vec(5, 4, vec![1.0; 20]).unwrap();
        let mut r = rng::seeded(3);
        let stats = model.cd_statistics(&batch, 1, &mut r).unwrap();
        assert!(stats.pos_weights.iter().all(|&s| (s - 0.5).abs() < 1e-12));
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_training() {
        let data = {
            let spec = crate::data::SyntheticSpec::PrototypeMixture {
                n_features: 12,
                n_prototypes: 3,
                flip_prob: 0.1,
                n_samples: 200,
            };
            crate::data::make_synthetic(&spec, &mut rng::seeded(40)).unwrap()
        };
        let run = || -> Vec<f64> {
            let mut cfg = RbmTrainConfig::new(3, 9);
            cfg.evolution = EvolutionConfig::new(3.0, 0.3, 9).unwrap();
            cfg.batch_size = 20;
            cfg.eval_every = None;
            let model = RbmModel::new(12, 6, SparsityMode::Set, &cfg.evolution, &cfg.weight_init)
                .unwrap();
            let mut t = RbmTrainer::new(model, cfg).unwrap();
            t.train_epoch(&data, None).unwrap();
            t.train_epoch(&data, None).unwrap();
            t.model().weights.links().iter().map(|l| l.weight).collect()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fixprob_topology_constant_and_set_conserves_nnz() {
        let data = {
            let spec = crate::data::SyntheticSpec::PrototypeMixture {
                n_features: 10,
                n_prototypes: 2,
                flip_prob: 0.05,
                n_samples: 100,
            };
            crate::data::make_synthetic(&spec, &mut rng::seeded(41)).unwrap()
        };
        for mode in [SparsityMode::FixProb, SparsityMode::Set] {
            let mut cfg = RbmTrainConfig::new(4, 11);
            cfg.evolution = EvolutionConfig::new(2.5, 0.3, 11).unwrap();
            cfg.batch_size = 25;
            cfg.eval_every = None;
            cfg.mode = mode;
            let model =
                RbmModel::new(10, 5, mode, &cfg.evolution, &cfg.weight_init).unwrap();
            let positions: Vec<(u32, u32)> = model
                .weights
                .links()
                .iter()
                .map(|l| (l.in_idx, l.out_idx))
                .collect();
            let nnz = model.weights.nnz();
            let mut t = RbmTrainer::new(model, cfg).unwrap();
            // Three non-final epochs: counts conserved in both modes.
            for _ in 0..3 {
                t.train_epoch(&data, None).unwrap();
                assert_eq!(t.model().weights.nnz(), nnz);
            }
            if mode == SparsityMode::FixProb {
                let now: Vec<(u32, u32)> = t
                    .model()
                    .weights
                    .links()
                    .iter()
                    .map(|l| (l.in_idx, l.out_idx))
                    .collect();
                assert_eq!(now, positions);
            }
        }
    }

    #[test]
    fn trainer_rejects_feature_mismatch() {
        let cfg = RbmTrainConfig::new(1, 0);
        let model = RbmModel::new(8, 4, SparsityMode::FixProb, &cfg.evolution, &cfg.weight_init)
            .unwrap();
        let mut t = RbmTrainer::new(model, cfg).unwrap();
        let bad = Dataset::new(
            BatchMatrix::zeros(4, 5),
            None,
            FeatureKind::Binary,
            "bad",
        )
        .unwrap();
        assert!(t.train_epoch(&bad, None).is_err());
    }
}
