//! The stress surrogate: normalizer, network and sequence batching.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{forward, GruParams};
use crate::error::{Error, Result};

/// Per-step features: six plain strain components, six orientation tensor
/// components `[a11, a22, a33, a12, a13, a23]` and the fiber volume fraction.
pub const INPUT_WIDTH: usize = 13;
/// Six plain stress components.
pub const OUTPUT_WIDTH: usize = 6;

/// One training or evaluation sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub features: Vec<[f64; INPUT_WIDTH]>,
    pub targets: Vec<[f64; OUTPUT_WIDTH]>,
}

impl Sequence {
    pub fn steps(&self) -> usize {
        self.features.len()
    }
}

/// Feature rows for a strain series; time-constant microstructure features
/// are repeated at every step.
pub fn features(strain: &[[f64; 6]], orientation: [f64; 6], volume_fraction: f64) -> Vec<[f64; INPUT_WIDTH]> {
    strain
        .iter()
        .map(|e| {
            let mut f = [0.0; INPUT_WIDTH];
            f[..6].copy_from_slice(e);
            f[6..12].copy_from_slice(&orientation);
            f[12] = volume_fraction;
            f
        })
        .collect()
}

/// Z-score statistics of features and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub feature_mean: [f64; INPUT_WIDTH],
    pub feature_std: [f64; INPUT_WIDTH],
    pub target_mean: [f64; OUTPUT_WIDTH],
    pub target_std: [f64; OUTPUT_WIDTH],
}

impl Normalizer {
    /// Population mean and standard deviation over every step of every
    /// sequence. Constant columns get unit scale.
    pub fn fit(sequences: &[Sequence]) -> Result<Self> {
        let (feature_mean, feature_std) = moments(sequences.iter().flat_map(|s| s.features.iter()))?;
        let (target_mean, target_std) = moments(sequences.iter().flat_map(|s| s.targets.iter()))?;
        Ok(Normalizer { feature_mean, feature_std, target_mean, target_std })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.feature_std.iter().chain(&self.target_std).all(|s| *s > 0.0 && s.is_finite())
            && self.feature_mean.iter().chain(&self.target_mean).all(|m| m.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("normalizer statistics must be finite with positive scales"))
        }
    }

    pub fn normalize_features(&self, f: &[f64; INPUT_WIDTH]) -> [f64; INPUT_WIDTH] {
        std::array::from_fn(|k| (f[k] - self.feature_mean[k]) / self.feature_std[k])
    }

    pub fn normalize_targets(&self, y: &[f64; OUTPUT_WIDTH]) -> [f64; OUTPUT_WIDTH] {
        std::array::from_fn(|k| (y[k] - self.target_mean[k]) / self.target_std[k])
    }

    pub fn denormalize_targets(&self, y: &[f64]) -> [f64; OUTPUT_WIDTH] {
        std::array::from_fn(|k| y[k] * self.target_std[k] + self.target_mean[k])
    }
}

fn moments<'a, const N: usize>(rows: impl Iterator<Item = &'a [f64; N]> + Clone) -> Result<([f64; N], [f64; N])> {
    let mut count = 0usize;
    let mut mean = [0.0; N];
    for r in rows.clone() {
        count += 1;
        for k in 0..N {
            mean[k] += r[k];
        }
    }
    if count == 0 {
        return Err(Error::invalid("cannot fit a normalizer on an empty set"));
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = [0.0; N];
    for r in rows {
        for k in 0..N {
            var[k] += (r[k] - mean[k]).powi(2);
        }
    }
    let std = var.map(|v| {
        let s = (v / count as f64).sqrt();
        if s > 1e-12 * (1.0 + s) && s.is_finite() {
            s
        } else {
            1.0
        }
    });
    Ok((mean, std))
}

/// Normalized equal-length sequences in the column layout of the network.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub steps: usize,
    pub batch: usize,
}

impl Batch {
    pub fn new(sequences: &[&Sequence], normalizer: &Normalizer) -> Result<Self> {
        let batch = sequences.len();
        let steps = sequences.first().map_or(0, |s| s.steps());
        if batch == 0 || steps == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if sequences.iter().any(|s| s.steps() != steps || s.targets.len() != steps) {
            return Err(Error::Shape("sequences in a batch must share one length".into()));
        }
        let mut inputs = DMatrix::zeros(INPUT_WIDTH, steps * batch);
        let mut targets = DMatrix::zeros(OUTPUT_WIDTH, steps * batch);
        for (b, s) in sequences.iter().enumerate() {
            for t in 0..steps {
                let c = t * batch + b;
                let f = normalizer.normalize_features(&s.features[t]);
                inputs.column_mut(c).copy_from_slice(&f);
                let y = normalizer.normalize_targets(&s.targets[t]);
                targets.column_mut(c).copy_from_slice(&y);
            }
        }
        Ok(Batch { inputs, targets, steps, batch })
    }
}

/// Architecture settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden width of each stacked GRU layer.
    pub hidden: Vec<usize>,
    /// Dropout probability on the last GRU output.
    pub dropout: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { hidden: vec![64, 64], dropout: 0.5 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("network needs at least one GRU layer of positive width"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruModel {
    pub params: GruParams,
    pub dropout: f64,
    pub normalizer: Option<Normalizer>,
}

impl GruModel {
    pub fn new(config: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        Ok(GruModel {
            params: GruParams::init(INPUT_WIDTH, &config.hidden, OUTPUT_WIDTH, rng),
            dropout: config.dropout,
            normalizer: None,
        })
    }

    pub fn normalizer(&self) -> Result<&Normalizer> {
        self.normalizer.as_ref().ok_or_else(|| Error::invalid("model normalizer has not been fitted"))
    }

    /// Inverted-dropout mask for the last GRU output, or `None` when
    /// dropout is off.
    pub fn dropout_mask(&self, steps: usize, batch: usize, rng: &mut impl Rng) -> Option<DMatrix<f64>> {
        if self.dropout == 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout;
        let width = *self.params.widths().last()?;
        Some(DMatrix::from_fn(width, steps * batch, |_, _| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 }))
    }

    /// Normalized outputs for a batch; dropout is active only when an RNG
    /// is supplied.
    pub fn forward_normalized<R: Rng>(&self, batch: &Batch, training: Option<&mut R>) -> Result<DMatrix<f64>> {
        let mask = training.and_then(|rng| self.dropout_mask(batch.steps, batch.batch, rng));
        Ok(forward(&self.params, &batch.inputs, batch.steps, batch.batch, mask.as_ref())?.0)
    }

    /// Stress series (plain components) for one feature series.
    pub fn predict(&self, features: &[[f64; INPUT_WIDTH]]) -> Result<Vec<[f64; OUTPUT_WIDTH]>> {
        let norm = self.normalizer()?;
        if features.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let steps = features.len();
        let mut x = DMatrix::zeros(INPUT_WIDTH, steps);
        for (t, f) in features.iter().enumerate() {
            x.column_mut(t).copy_from_slice(&norm.normalize_features(f));
        }
        let (y, _) = forward(&self.params, &x, steps, 1, None)?;
        Ok(y.column_iter().map(|c| norm.denormalize_targets(c.as_slice())).collect())
    }
}
