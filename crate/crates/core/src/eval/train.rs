//! Ground-truth training: mini-batch SGD with momentum on cross-entropy.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::space::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Cosine decay from `lr` to 0 over all steps; constant otherwise.
    pub cosine: bool,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clipping threshold.
    pub clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            lr: 0.05,
            cosine: true,
            momentum: 0.9,
            weight_decay: 0.0,
            clip: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::validation(
                "momentum must lie in [0, 1) and weight decay be nonnegative",
            ));
        }
        if self.clip.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(Error::validation("clip threshold must be positive"));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize, total: usize) -> f64 {
        if self.cosine {
            self.lr * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Held-out accuracy in `[0, 1]`; 0 when training diverged.
    pub accuracy: f64,
    pub diverged: bool,
    pub final_loss: f64,
    pub steps: usize,
}

/// Trains `net` in place and evaluates it on `test`.
pub fn train_network(
    net: &mut Network,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::validation(
            "training and test sets must be non-empty",
        ));
    }
    let per_epoch = train.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let mut velocity: Vec<Vec<f64>> = net
        .params
        .iter()
        .map(|p| vec![0.0; p.value.len()])
        .collect();
    let mut step = 0;
    let mut last = f64::NAN;
    for epoch in 0..cfg.epochs {
        let batches = train.batch_iter(
            cfg.batch_size,
            rng::indexed_seed(cfg.seed, "epoch", epoch as u64),
        )?;
        for b in &batches {
            net.params.zero_grad();
            let loss = net.loss_backward(&b.inputs, b.class_labels()?)?;
            last = loss;
            if !loss.is_finite() {
                return Ok(TrainOutcome {
                    accuracy: 0.0,
                    diverged: true,
                    final_loss: loss,
                    steps: step,
                });
            }
            let scale = match cfg.clip {
                Some(c) => {
                    let norm = net
                        .params
                        .iter()
                        .filter_map(|p| p.grad.as_ref())
                        .flat_map(|g| g.iter())
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt();
                    if norm > c {
                        c / norm
                    } else {
                        1.0
                    }
                }
                None => 1.0,
            };
            let lr = cfg.lr_at(step, total);
            for (p, v) in net.params.iter_mut().zip(&mut velocity) {
                let Some(g) = p.grad.as_ref() else { continue };
                if !p.trainable {
                    continue;
                }
                let w = p.value.data_mut();
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    let d = gi * scale + cfg.weight_decay * *wi;
                    *vi = cfg.momentum * *vi + d;
                    *wi -= lr * *vi;
                }
            }
            step += 1;
        }
    }
    if net.params.iter().any(|p| !p.value.is_finite()) {
        return Ok(TrainOutcome {
            accuracy: 0.0,
            diverged: true,
            final_loss: last,
            steps: step,
        });
    }
    Ok(TrainOutcome {
        accuracy: accuracy(net, test)?,
        diverged: false,
        final_loss: last,
        steps: step,
    })
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn accuracy(net: &Network, ds: &Dataset) -> Result<f64> {
    const CHUNK: usize = 256;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for (i, c) in idx.chunks(CHUNK).enumerate() {
        let b = ds.gather(c, i);
        let logits = net.logits(&b.inputs)?;
        let k = logits.shape()[1];
        for (row, &y) in logits.data().chunks(k).zip(b.class_labels()?) {
            let arg = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| {
                    if v > bv {
                        (j, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            correct += (arg == y) as usize;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}
