//! Sparse multi-layer perceptrons trained with SGD + momentum, with the
//! per-epoch prune-and-regrow step applied to every sparse layer.
//!
//! Three connectivity policies share one code path: `Set` (sparse,
//! evolving), `FixProb` (sparse, frozen) and `Dense`. Set and FixProb
//! models built from the same seed start from identical topology and
//! weights, which is what makes the two directly comparable.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::analysis;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{cross_entropy_loss, Activation, LayerGradients, SparseLayer, SreluParams};
use crate::matrix::BatchMatrix;
use crate::rng;
use crate::topology::{EvolutionConfig, SparseWeights, SparsityMode, WeightInitSpec};

/// Training hyperparameters. Defaults follow the supervised experiments:
/// SGD with fixed learning rate 0.01, momentum 0.9, weight decay 2e-4,
/// dropout 0.3, epsilon 20, zeta 0.3.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay_l2: f64,
    pub l1_rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub evolution: EvolutionConfig,
    pub weight_init: WeightInitSpec,
    /// Apply dropout to the raw input as well (default: hidden outputs only).
    pub input_dropout: bool,
    /// Hand removed-link velocities over to regrown links instead of
    /// dropping them (paired in canonical link order).
    pub velocity_carry_over: bool,
    /// When set, per-epoch hidden-layer degree p-values are computed with
    /// this many Monte-Carlo replicates.
    pub pvalue_monte_carlo: Option<usize>,
    /// Horizontal-flip augmentation for planar image data, given as
    /// (channels, height, width); each training sample is mirrored with
    /// probability 1/2 per epoch.
    pub hflip_shape: Option<(usize, usize, usize)>,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            nesterov: false,
            weight_decay_l2: 0.0002,
            l1_rate: 0.0,
            dropout_rate: 0.3,
            epochs,
            batch_size: 100,
            evolution: EvolutionConfig::new(20.0, 0.3, seed).expect("valid defaults"),
            weight_init: WeightInitSpec::FanInUniform,
            input_dropout: false,
            velocity_carry_over: false,
            pvalue_monte_carlo: None,
            hflip_shape: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("weight_decay_l2", self.weight_decay_l2),
            ("l1_rate", self.l1_rate),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if let Some((c, h, w)) = self.hflip_shape {
            if c * h * w == 0 {
                return Err(Error::InvalidParameter(
                    "hflip_shape dimensions must be positive".into(),
                ));
            }
        }
        self.evolution.validate()
    }
}

/// A stack of sparse layers; adjacent dimensions chain.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layers: Vec<SparseLayer>,
    pub mode: SparsityMode,
}

impl MlpModel {
    pub fn layer_nnz(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weights.nnz()).collect()
    }

    pub fn total_nnz(&self) -> usize {
        self.layers.iter().map(|l| l.weights.nnz()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out())
    }

    /// Forward pass without dropout.
    pub fn infer(&self, input: &BatchMatrix) -> Result<BatchMatrix> {
        let mut cur = input.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Class predictions (argmax of the output distribution).
    pub fn predict(&self, input: &BatchMatrix) -> Result<Vec<usize>> {
        let probs = self.infer(input)?;
        Ok((0..probs.rows()).map(|r| argmax(probs.row(r))).collect())
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Build a model. Set/FixProb modes draw each layer's Erdős–Rényi
/// topology from a per-layer stream of `config.evolution.seed`, so the
/// two modes start from identical networks. Dense mode fully connects.
pub fn build_mlp(
    architecture: &[usize],
    activations: &[Activation],
    mode: SparsityMode,
    config: &TrainConfig,
) -> Result<MlpModel> {
    config.validate()?;
    if architecture.len() < 2 {
        return Err(Error::InvalidParameter(
            "architecture needs at least input and output sizes".into(),
        ));
    }
    if architecture.iter().any(|&n| n == 0) {
        return Err(Error::InvalidParameter(
            "architecture sizes must be positive".into(),
        ));
    }
    if activations.len() != architecture.len() - 1 {
        return Err(Error::InvalidParameter(format!(
            "{} activations for {} layers",
            activations.len(),
            architecture.len() - 1
        )));
    }
    if *activations.last().unwrap() != Activation::Softmax {
        return Err(Error::InvalidParameter(
            "final activation must be softmax".into(),
        ));
    }
    let mut layers = Vec::with_capacity(architecture.len() - 1);
    for (l, pair) in architecture.windows(2).enumerate() {
        let (n_in, n_out) = (pair[0], pair[1]);
        let mut layer_rng = rng::substream(config.evolution.seed, l as u64);
        let weights = match mode {
            SparsityMode::Dense => {
                SparseWeights::dense(n_in, n_out, &config.weight_init, &mut layer_rng)
            }
            SparsityMode::Set | SparsityMode::FixProb => SparseWeights::init_erdos_renyi_with_rng(
                n_in,
                n_out,
                config.evolution.epsilon,
                &config.weight_init,
                &mut layer_rng,
            )?,
        };
        layers.push(SparseLayer::new(weights, activations[l]));
    }
    Ok(MlpModel { layers, mode })
}

/// Per-layer momentum state.
#[derive(Debug, Clone)]
pub struct LayerVelocity {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub srelu: Option<SreluParams>,
}

impl LayerVelocity {
    pub fn zeros_for(layer: &SparseLayer) -> Self {
        LayerVelocity {
            weights: vec![0.0; layer.weights.nnz()],
            bias: vec![0.0; layer.n_out()],
            srelu: layer.srelu.as_ref().map(|p| SreluParams {
                t_left: vec![0.0; p.len()],
                a_left: vec![0.0; p.len()],
                t_right: vec![0.0; p.len()],
                a_right: vec![0.0; p.len()],
            }),
        }
    }
}

// v <- mu*v - lr*g, then w += v (classic) or w += mu*v - lr*g (nesterov).
fn momentum_update(
    w: &mut f64,
    g: f64,
    v: &mut f64,
    lr: f64,
    mu: f64,
    nesterov: bool,
) {
    *v = mu * *v - lr * g;
    if nesterov {
        *w += mu * *v - lr * g;
    } else {
        *w += *v;
    }
}

/// One SGD step over the whole model. The effective weight gradient is
/// g + l2*w + l1*sign(w); biases and srelu parameters carry no decay.
pub fn sgd_step(
    model: &mut MlpModel,
    gradients: &[LayerGradients],
    velocity: &mut [LayerVelocity],
    config: &TrainConfig,
) -> Result<()> {
    if gradients.len() != model.layers.len() || velocity.len() != model.layers.len() {
        return Err(Error::DimensionMismatch(
            "gradient/velocity count does not match layer count".into(),
        ));
    }
    let (lr, mu, nesterov) = (config.learning_rate, config.momentum, config.nesterov);
    for ((layer, grads), vel) in model
        .layers
        .iter_mut()
        .zip(gradients.iter())
        .zip(velocity.iter_mut())
    {
        if grads.weights.len() != layer.weights.nnz() {
            return Err(Error::DimensionMismatch(format!(
                "{} weight gradients for {} links",
                grads.weights.len(),
                layer.weights.nnz()
            )));
        }
        let (l1, l2) = (config.l1_rate, config.weight_decay_l2);
        layer.weights.for_each_weight_mut(|idx, w| {
            let sign = if *w > 0.0 {
                1.0
            } else if *w < 0.0 {
                -1.0
            } else {
                0.0
            };
            let g = grads.weights[idx] + l2 * *w + l1 * sign;
            momentum_update(w, g, &mut vel.weights[idx], lr, mu, nesterov);
        });
        for ((b, &g), v) in layer
            .bias
            .iter_mut()
            .zip(grads.bias.iter())
            .zip(vel.bias.iter_mut())
        {
            momentum_update(b, g, v, lr, mu, nesterov);
        }
        if let (Some(params), Some(pg), Some(pv)) =
            (layer.srelu.as_mut(), grads.srelu.as_ref(), vel.srelu.as_mut())
        {
            for (dst, (src, vel)) in [
                (&mut params.t_left, (&pg.t_left, &mut pv.t_left)),
                (&mut params.a_left, (&pg.a_left, &mut pv.a_left)),
                (&mut params.t_right, (&pg.t_right, &mut pv.t_right)),
                (&mut params.a_right, (&pg.a_right, &mut pv.a_right)),
            ] {
                for ((p, &g), v) in dst.iter_mut().zip(src.iter()).zip(vel.iter_mut()) {
                    momentum_update(p, g, v, lr, mu, nesterov);
                }
            }
        }
    }
    Ok(())
}

/// Fraction of correctly classified samples, dropout disabled.
pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<f64> {
    let labels = test
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("evaluation needs labels".into()))?;
    let n = test.features.rows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty evaluation set".into()));
    }
    let mut correct = 0usize;
    let chunk = 500;
    let mut row = 0;
    while row < n {
        let end = (row + chunk).min(n);
        let batch = test.features_slice(row, end)?;
        let preds = model.predict(&batch)?;
        for (p, &l) in preds.iter().zip(&labels[row..end]) {
            if *p == l {
                correct += 1;
            }
        }
        row = end;
    }
    Ok(correct as f64 / n as f64)
}

/// Per-epoch record. Topology columns (nnz, p-values) describe the layer
/// structure at the start of the epoch, so epoch 0 reflects the
/// Erdős–Rényi initialization; loss and accuracy come from the epoch's
/// training and end-of-epoch evaluation (before evolution).
#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub layer_nnz: Vec<usize>,
    /// One entry per hidden layer when enabled; NaN marks undefined fits.
    pub layer_p_values: Vec<f64>,
    pub wall_time_s: f64,
}

/// Drives epochs over one model: shuffle, minibatch SGD, end-of-epoch
/// evaluation, then topology evolution for `Set` models (regrowth skipped
/// after the final epoch).
pub struct MlpTrainer {
    model: MlpModel,
    config: TrainConfig,
    velocity: Vec<LayerVelocity>,
    rng: rng::Stream,
    epoch: usize,
}

// Stream tags carved out of the experiment seed.
const STREAM_TRAIN: u64 = 0x7261_696e;
const STREAM_PVALUE: u64 = 0x7076_616c;

impl MlpTrainer {
    pub fn new(model: MlpModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        for pair in model.layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::DimensionMismatch(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].n_out(),
                    pair[1].n_in()
                )));
            }
        }
        let velocity = model.layers.iter().map(LayerVelocity::zeros_for).collect();
        let rng = rng::substream(config.evolution.seed, STREAM_TRAIN);
        Ok(MlpTrainer {
            model,
            config,
            velocity,
            rng,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn into_model(self) -> MlpModel {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Run `config.epochs` epochs.
    pub fn run(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<Vec<EpochMetrics>> {
        let mut metrics = Vec::with_capacity(self.config.epochs);
        while self.epoch < self.config.epochs {
            metrics.push(self.train_epoch(train, test)?);
        }
        Ok(metrics)
    }

    pub fn train_epoch(
        &mut self,
        train: &Dataset,
        test: Option<&Dataset>,
    ) -> Result<EpochMetrics> {
        let start = Instant::now();
        if train.labels.is_none() {
            return Err(Error::InvalidParameter("training needs labels".into()));
        }
        if train.features.cols() != self.model.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} features, model expects {}",
                train.features.cols(),
                self.model.input_dim()
            )));
        }

        let layer_nnz = self.model.layer_nnz();
        let layer_p_values = self.start_of_epoch_p_values()?;

        let n = train.features.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);

        let n_layers = self.model.layers.len();
        let mut loss_sum = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let (mut batch, batch_labels) = train.gather(chunk)?;
            let batch_labels =
                batch_labels.ok_or_else(|| Error::InvalidParameter("labels missing".into()))?;
            if let Some(shape) = self.config.hflip_shape {
                apply_hflip_augmentation(&mut batch, shape, &mut self.rng)?;
            }
            if self.config.input_dropout && self.config.dropout_rate > 0.0 {
                apply_input_dropout(&mut batch, self.config.dropout_rate, &mut self.rng);
            }

            // Forward: dropout on hidden outputs only.
            let mut caches = Vec::with_capacity(n_layers);
            let mut cur = batch;
            for (l, layer) in self.model.layers.iter().enumerate() {
                let rate = if l + 1 < n_layers {
                    self.config.dropout_rate
                } else {
                    0.0
                };
                let (out, cache) = layer.forward(&cur, rate, true, &mut self.rng)?;
                caches.push(cache);
                cur = out;
            }

            let (loss, grad_z) = cross_entropy_loss(&cur, &batch_labels)?;
            loss_sum += loss * chunk.len() as f64;

            // Backward: fused softmax + cross-entropy at the output layer.
            let mut grads: Vec<Option<LayerGradients>> = vec![None; n_layers];
            let last = n_layers - 1;
            let mut g = {
                let lg = self.model.layers[last]
                    .backward_from_preactivation(&caches[last], &grad_z)?;
                let input_grad = lg.input.clone();
                grads[last] = Some(lg);
                input_grad
            };
            for l in (0..last).rev() {
                let lg = self.model.layers[l].backward(&caches[l], &g)?;
                g = lg.input.clone();
                grads[l] = Some(lg);
            }
            let grads: Vec<LayerGradients> = grads.into_iter().map(Option::unwrap).collect();
            sgd_step(&mut self.model, &grads, &mut self.velocity, &self.config)?;
        }
        let train_loss = loss_sum / n as f64;

        // Evaluate before evolving so that Set and FixProb runs from the
        // same seed report identical epoch-0 metrics.
        let test_accuracy = match test {
            Some(t) => Some(evaluate(&self.model, t)?),
            None => None,
        };

        if self.model.mode == SparsityMode::Set && self.config.evolution.zeta > 0.0 {
            let regrow = self.epoch + 1 < self.config.epochs;
            self.evolve_layers(regrow)?;
        }

        let metrics = EpochMetrics {
            epoch: self.epoch,
            train_loss,
            test_accuracy,
            layer_nnz,
            layer_p_values,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        self.epoch += 1;
        Ok(metrics)
    }

    fn evolve_layers(&mut self, regrow: bool) -> Result<()> {
        let cfg = self.config.evolution.clone().with_regrow(regrow);
        for (layer, vel) in self.model.layers.iter_mut().zip(self.velocity.iter_mut()) {
            let (_, remap) =
                layer
                    .weights
                    .evolve_tracked(&cfg, &self.config.weight_init, &mut self.rng)?;
            let mut new_vel = vec![0.0f64; remap.new_len];
            let mut removed_vels = Vec::new();
            let mut is_survivor = vec![false; remap.new_len];
            for (old_idx, target) in remap.old_to_new.iter().enumerate() {
                match target {
                    Some(new_idx) => {
                        new_vel[*new_idx as usize] = vel.weights[old_idx];
                        is_survivor[*new_idx as usize] = true;
                    }
                    None => removed_vels.push(vel.weights[old_idx]),
                }
            }
            if self.config.velocity_carry_over {
                // Pair removed and regrown links in canonical order.
                let mut removed_iter = removed_vels.into_iter();
                for (slot, survivor) in new_vel.iter_mut().zip(is_survivor.iter()) {
                    if !survivor {
                        if let Some(v) = removed_iter.next() {
                            *slot = v;
                        }
                    }
                }
            }
            vel.weights = new_vel;
        }
        Ok(())
    }

    fn start_of_epoch_p_values(&self) -> Result<Vec<f64>> {
        let Some(n_mc) = self.config.pvalue_monte_carlo else {
            return Ok(Vec::new());
        };
        // Hidden layer k's degree = in-links from the layer below, i.e.
        // the output-side degrees of sparse layer k.
        let hidden = self.model.layers.len().saturating_sub(1);
        let mut out = Vec::with_capacity(hidden);
        for l in 0..hidden {
            let degrees = self.model.layers[l]
                .weights
                .degree_distribution(crate::topology::Side::Output);
            let mut r = rng::substream(
                self.config.evolution.seed,
                STREAM_PVALUE ^ ((self.epoch as u64) << 8) ^ l as u64,
            );
            match analysis::null_hypothesis_p_value(&degrees, n_mc, &mut r) {
                Ok(p) => out.push(p),
                Err(Error::UndefinedFit(_)) => out.push(f64::NAN),
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

// Mirror each sample left-right with probability 1/2; planar layout
// (channel, row, column).
fn apply_hflip_augmentation<R: Rng>(
    batch: &mut BatchMatrix,
    (channels, height, width): (usize, usize, usize),
    rng: &mut R,
) -> Result<()> {
    if channels * height * width != batch.cols() {
        return Err(Error::DimensionMismatch(format!(
            "hflip shape {channels}x{height}x{width} does not cover {} features",
            batch.cols()
        )));
    }
    for s in 0..batch.rows() {
        if rng.gen::<f64>() < 0.5 {
            continue;
        }
        let row = batch.row_mut(s);
        for c in 0..channels {
            for h in 0..height {
                let offset = c * height * width + h * width;
                row[offset..offset + width].reverse();
            }
        }
    }
    Ok(())
}

fn apply_input_dropout<R: Rng>(batch: &mut BatchMatrix, rate: f64, rng: &mut R) {
    let scale = 1.0 / (1.0 - rate);
    for v in batch.data_mut() {
        if rng.gen::<f64>() < rate {
            *v = 0.0;
        } else {
            *v *= scale;
        }
    }
}
