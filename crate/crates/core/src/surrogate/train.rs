//! Mini-batch ADAM training with global-norm clipping and step decay of the
//! learning rate.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gru::{data_cost, loss_and_gradient, GruParams};
use super::model::{Batch, GruModel, Normalizer, Sequence};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    /// Coefficient of the squared weight norm.
    pub l2: f64,
    /// Global gradient norm threshold.
    pub clip_norm: f64,
    pub epochs: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            lr_decay: 0.9,
            decay_every: 10,
            batch_size: 32,
            l2: 1e-4,
            clip_norm: 1.0,
            epochs: 50,
            split: [0.8, 0.1975, 0.0025],
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !(self.lr_decay > 0.0) || self.decay_every == 0 {
            return Err(Error::invalid("learning rate schedule must be non-negative with a positive decay"));
        }
        if self.batch_size == 0 || !(self.clip_norm > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::invalid("batch size and clip norm must be positive, l2 non-negative"));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions {:?} must be non-negative and sum to 1", self.split)));
        }
        Ok(())
    }

    /// Learning rate of a 1-based epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let k = (epoch.saturating_sub(1) / self.decay_every) as i32;
        self.learning_rate * self.lr_decay.powi(k)
    }
}

/// ADAM moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: GruParams,
    v: GruParams,
    t: i32,
}

impl Adam {
    pub fn new(params: &GruParams) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, params: &mut GruParams, grads: &GruParams, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let blocks = params.blocks_mut().into_iter().zip(grads.blocks()).zip(self.m.blocks_mut()).zip(self.v.blocks_mut());
        for ((((p, _), (g, _)), (m, _)), (v, _)) in blocks {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Rescales `grads` so that their global norm does not exceed `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GruParams, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_cost: f64,
    pub val_cost: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,lr,train_cost,val_cost,wall_time")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.lr, r.train_cost, r.val_cost, r.wall_time)?;
        }
        Ok(())
    }
}

/// Mean data cost over a set of sequences (no dropout, no weight penalty).
pub fn evaluate_cost(model: &GruModel, sequences: &[Sequence], batch_size: usize) -> Result<f64> {
    if sequences.is_empty() {
        return Ok(f64::NAN);
    }
    let norm = model.normalizer()?;
    let mut total = 0.0;
    for group in length_groups(sequences.iter().collect(), batch_size.max(1)) {
        let batch = Batch::new(&group, norm)?;
        let pred = model.forward_normalized::<ChaCha8Rng>(&batch, None)?;
        total += data_cost(&pred, &batch.targets, batch.steps, batch.batch) * batch.batch as f64;
    }
    Ok(total / sequences.len() as f64)
}

/// Chunks of at most `size` sequences sharing one length, in input order.
fn length_groups(seqs: Vec<&Sequence>, size: usize) -> Vec<Vec<&Sequence>> {
    let mut lengths: Vec<usize> = seqs.iter().map(|s| s.steps()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    let mut out = Vec::new();
    for len in lengths {
        let same: Vec<&Sequence> = seqs.iter().copied().filter(|s| s.steps() == len).collect();
        out.extend(same.chunks(size).map(|c| c.to_vec()));
    }
    out
}

/// Trains `model` in place and leaves it at the parameters with the lowest
/// validation cost (training cost when there is no validation set). The
/// normalizer is fitted on `train` unless already present. `on_epoch` is
/// called after every epoch.
pub fn train(
    model: &mut GruModel,
    train: &[Sequence],
    val: &[Sequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if model.normalizer.is_none() {
        model.normalizer = Some(Normalizer::fit(train)?);
    }
    let norm = model.normalizer()?.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model.params);
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, model.params.clone());
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let shuffled: Vec<&Sequence> = order.iter().map(|&i| &train[i]).collect();
        let mut cost_sum = 0.0;
        let mut count = 0usize;
        for group in length_groups(shuffled, config.batch_size) {
            let batch = Batch::new(&group, &norm)?;
            let mask = model.dropout_mask(batch.steps, batch.batch, &mut rng);
            let (cost, mut grads) = loss_and_gradient(
                &model.params,
                &batch.inputs,
                &batch.targets,
                batch.steps,
                batch.batch,
                mask.as_ref(),
                config.l2,
            )?;
            if !cost.is_finite() {
                return Err(Error::Diverged { epoch, cost });
            }
            clip_global_norm(&mut grads, config.clip_norm);
            adam.step(&mut model.params, &grads, lr);
            cost_sum += cost * batch.batch as f64;
            count += batch.batch;
        }
        let train_cost = cost_sum / count as f64;
        let val_cost = evaluate_cost(model, val, config.batch_size)?;
        if !model.params.is_finite() || val_cost.is_infinite() || (!val.is_empty() && val_cost.is_nan()) {
            return Err(Error::Diverged { epoch, cost: val_cost });
        }
        let score = if val.is_empty() { train_cost } else { val_cost };
        if score < best.0 {
            best = (score, model.params.clone());
            history.best_epoch = epoch;
        }
        let record = EpochRecord { epoch, lr, train_cost, val_cost, wall_time: start.elapsed().as_secs_f64() };
        on_epoch(&record);
        history.epochs.push(record);
    }
    if config.epochs > 0 {
        model.params = best.1;
    }
    Ok(history)
}
