use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{FieldModel, Gradients};
use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::geometry::dot;
use crate::optim::{Adam, AdamConfig};
use crate::vmf::{vmf_loss_raw, GammaPrior};

/// Samples per parallel work unit. Fixed so the gradient reduction order does
/// not depend on the thread count.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub prior: GammaPrior,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            prior: GammaPrior::default(),
            weight_decay: 0.0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return bad("validation_fraction must lie in (0, 0.5)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return bad("Adam constants out of range");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        GammaPrior::new(self.prior.alpha, self.prior.beta)?;
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Loss and parameter gradients of one training pair.
pub fn sample_loss_and_grad(
    model: &FieldModel,
    rec: &Record,
    prior: &GammaPrior,
    grads: Option<&mut Gradients>,
) -> Result<f64> {
    let tr = model.trace(&rec.pose.to_array())?;
    let l = vmf_loss_raw(rec.z.as_slice(), &tr.mu, tr.kappa, prior, model.kappa_range)?;
    if grads.is_some() {
        model.backward(&tr, &l.d_mu, l.d_kappa, grads, false);
    }
    Ok(l.loss)
}

/// Mean loss over `records`, and mean cosine between prediction and observation.
pub fn evaluate_loss(
    model: &FieldModel,
    records: &[Record],
    prior: &GammaPrior,
) -> Result<(f64, f64)> {
    let parts: Vec<Result<(f64, f64)>> = records
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut cos = 0.0;
            for r in chunk {
                let tr = model.trace(&r.pose.to_array())?;
                loss +=
                    vmf_loss_raw(r.z.as_slice(), &tr.mu, tr.kappa, prior, model.kappa_range)?.loss;
                cos += dot(&tr.mu, r.z.as_slice());
            }
            Ok((loss, cos))
        })
        .collect();
    let (mut loss, mut cos) = (0.0, 0.0);
    for p in parts {
        let (l, c) = p?;
        loss += l;
        cos += c;
    }
    let n = records.len().max(1) as f64;
    Ok((loss / n, cos / n))
}

fn flatten(model: &FieldModel) -> Vec<f64> {
    model
        .layers()
        .flat_map(|l| l.w.iter().chain(&l.b))
        .map(|v| *v as f64)
        .collect()
}

fn write_back(model: &mut FieldModel, params: &[f64]) {
    let mut i = 0;
    for l in model.layers_mut() {
        for v in l.w.iter_mut().chain(l.b.iter_mut()) {
            *v = params[i] as f32;
            i += 1;
        }
    }
}

fn flatten_grads(g: &Gradients) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| l.w.iter().chain(&l.b))
        .copied()
        .collect()
}

/// Total order on records by their bit patterns, so training does not depend
/// on the order the dataset arrived in.
fn canonical_order(records: &[Record]) -> Vec<usize> {
    let key = |r: &Record| -> Vec<u64> {
        r.pose
            .to_array()
            .iter()
            .chain(r.z.as_slice())
            .map(|v| v.to_bits())
            .collect()
    };
    let keys: Vec<Vec<u64>> = records.iter().map(key).collect();
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    idx
}

/// Fits `model` to `data` by Adam on the mean per-pair negative log-posterior.
///
/// The seeded split holds out `⌊validation_fraction · n⌋` pairs. Master
/// weights and optimizer moments are kept in `f64`; the model's `f32`
/// weights are refreshed after every step.
pub fn train(model: &mut FieldModel, data: &Dataset, cfg: &TrainConfig) -> Result<LossHistory> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if data.d() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            actual: data.d(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = canonical_order(data.records());
    order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * order.len() as f64).floor() as usize;
    let val: Vec<Record> = order[..n_val]
        .iter()
        .map(|&i| data.records()[i].clone())
        .collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let mut params = flatten(model);
    let mut adam = Adam::new(cfg.adam(), params.len());
    let mut history = LossHistory::default();

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            let frozen: &FieldModel = model;
            let parts: Vec<Result<(Gradients, f64)>> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g = Gradients::zeros_like(frozen);
                    let mut loss = 0.0;
                    for &i in chunk {
                        loss += sample_loss_and_grad(
                            frozen,
                            &data.records()[i],
                            &cfg.prior,
                            Some(&mut g),
                        )?;
                    }
                    Ok((g, loss))
                })
                .collect();
            let mut total = Gradients::zeros_like(model);
            let mut batch_loss = 0.0;
            for p in parts {
                let (g, l) = p?;
                total.add_assign(&g);
                batch_loss += l;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += batch_loss;
            total.scale(1.0 / batch.len() as f64);
            let g = flatten_grads(&total);
            if cfg.weight_decay > 0.0 {
                let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
                params.iter_mut().for_each(|p| *p *= shrink);
            }
            adam.step(&mut params, &g);
            write_back(model, &params);
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let (val_loss, val_cosine) = if val.is_empty() {
            (None, None)
        } else {
            let (l, c) = evaluate_loss(model, &val, &cfg.prior)?;
            (Some(l), Some(c))
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_cosine,
        });
    }
    Ok(history)
}
