//! Mini-batch gradient descent shared by every trainable model.
//!
//! Determinism: samples are visited in a per-epoch shuffled order, each
//! sample draws its channel noise from its own `(seed, epoch, index)`
//! stream, and gradients are accumulated sequentially in batch order.

use rand::seq::SliceRandom;

use super::params::{ModelParams, Trainable};
use crate::channel::{derive_stream_id, RngStream};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

const SHUFFLE_TAG: u64 = 0x5348_5546;
const NOISE_TAG: u64 = 0x4e4f_4953;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Plain momentum-free gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl StepRule {
    pub fn adam() -> Self {
        StepRule::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub step_rule: StepRule,
}

/// Noise stream for sample `index` in `epoch`.
pub fn sample_stream(seed: u64, epoch: usize, index: usize) -> RngStream {
    RngStream::new(seed, derive_stream_id(&[NOISE_TAG, epoch as u64, index as u64]))
}

/// Runs `cfg.epochs` epochs. `per_sample(model, index, rng, grads)` must
/// return the sample loss and add its gradient into `grads`. Returns the
/// per-epoch mean loss, summed in sample-index order.
pub fn gradient_descent<T, M, F>(model: &mut M, samples: usize, cfg: &DescentConfig, mut per_sample: F) -> Result<Vec<f64>>
where
    T: Scalar,
    M: Trainable<T>,
    F: FnMut(&M, usize, &mut RngStream, &mut ModelParams<T>) -> Result<f64>,
{
    if samples == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if !(cfg.learning_rate >= 0.0) || cfg.batch_size == 0 {
        return Err(Error::invalid("learning rate must be >= 0 and batch size >= 1"));
    }
    let frozen = model.frozen_arrays();
    let mut params = model.params();
    let mut moments: Option<(ModelParams<T>, ModelParams<T>)> = None;
    let mut step = 0i32;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples).collect();
        order.shuffle(&mut RngStream::new(cfg.seed, derive_stream_id(&[SHUFFLE_TAG, epoch as u64])));
        let mut losses = vec![0.0f64; samples];

        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            for &idx in batch {
                let mut rng = sample_stream(cfg.seed, epoch, idx);
                let loss = match per_sample(model, idx, &mut rng, &mut grads) {
                    Ok(l) => l,
                    Err(Error::DegenerateInput(msg)) if step > 0 => {
                        return Err(Error::Training { epoch, msg });
                    }
                    Err(e) => return Err(e),
                };
                if !loss.is_finite() {
                    return Err(Error::Training { epoch, msg: format!("non-finite loss on sample {idx}") });
                }
                losses[idx] = loss;
            }
            if grads.iter_values().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch, msg: "non-finite gradient".into() });
            }
            grads.scale(lit(1.0 / batch.len() as f64));
            step += 1;
            apply_step(&mut params, &grads, &frozen, cfg, &mut moments, step);
            model.set_params(&params)?;
        }
        let mean = losses.iter().sum::<f64>() / samples as f64;
        if !mean.is_finite() || params.iter_values().any(|p| !p.is_finite()) {
            return Err(Error::Training { epoch, msg: "parameters diverged".into() });
        }
        history.push(mean);
    }
    Ok(history)
}

fn apply_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    frozen: &[bool],
    cfg: &DescentConfig,
    moments: &mut Option<(ModelParams<T>, ModelParams<T>)>,
    step: i32,
) {
    let lr: T = lit(cfg.learning_rate);
    match cfg.step_rule {
        StepRule::Sgd => {
            for ((p, g), &f) in params.arrays.iter_mut().zip(&grads.arrays).zip(frozen) {
                if f {
                    continue;
                }
                for (x, d) in p.values.iter_mut().zip(&g.values) {
                    *x -= lr * *d;
                }
            }
        }
        StepRule::Adam { beta1, beta2, eps } => {
            let (m, v) = moments.get_or_insert_with(|| (params.zeros_like(), params.zeros_like()));
            let (b1, b2, e): (T, T, T) = (lit(beta1), lit(beta2), lit(eps));
            let c1: T = lit(1.0 - beta1.powi(step));
            let c2: T = lit(1.0 - beta2.powi(step));
            for (i, (p, g)) in params.arrays.iter_mut().zip(&grads.arrays).enumerate() {
                if frozen[i] {
                    continue;
                }
                for (j, (x, d)) in p.values.iter_mut().zip(&g.values).enumerate() {
                    let mi = &mut m.arrays[i].values[j];
                    let vi = &mut v.arrays[i].values[j];
                    *mi = b1 * *mi + (T::one() - b1) * *d;
                    *vi = b2 * *vi + (T::one() - b2) * *d * *d;
                    *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + e);
                }
            }
        }
    }
}
