use crate::channel::{sample_noise, ChannelSpec};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, gradient_descent, mse, DescentConfig, ModelParams, StepRule, Tensor, Trainable};
use crate::scalar::{lit, Scalar};

use super::model::JsccModel;

#[derive(Debug, Clone, PartialEq)]
pub enum Target<T> {
    Tensor(Tensor<T>),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: Tensor<T>,
    pub target: Target<T>,
}

impl<T: Scalar> Sample<T> {
    /// Reconstruction sample: the target is the input itself.
    pub fn autoencode(input: Tensor<T>) -> Self {
        Self { target: Target::Tensor(input.clone()), input }
    }

    pub fn labelled(input: Tensor<T>, class: usize) -> Self {
        Self { input, target: Target::Class(class) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_snr_db: f64,
    pub loss: LossKind,
    pub seed: u64,
    /// Per-layer flags; empty means nothing is frozen.
    pub freeze_mask: Vec<bool>,
    pub step_rule: StepRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            train_snr_db: 0.0,
            loss: LossKind::Mse,
            seed: 0,
            freeze_mask: Vec::new(),
            step_rule: StepRule::Sgd,
        }
    }
}

impl TrainConfig {
    /// AWGN channel at the training SNR.
    pub fn channel(&self) -> Result<ChannelSpec> {
        ChannelSpec::awgn(self.train_snr_db)
    }

    pub fn descent(&self) -> DescentConfig {
        DescentConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            step_rule: self.step_rule,
        }
    }
}

/// Loss of `pred` against `target`, plus its gradient.
pub fn sample_loss<T: Scalar>(pred: &Tensor<T>, target: &Target<T>, kind: LossKind) -> Result<(f64, Vec<T>)> {
    match (kind, target) {
        (LossKind::Mse, Target::Tensor(t)) => {
            if t.len() != pred.len() {
                return Err(Error::invalid(format!("target has {} values, prediction {}", t.len(), pred.len())));
            }
            Ok(mse(pred.data(), t.data()))
        }
        (LossKind::CrossEntropy, Target::Class(c)) => {
            if *c >= pred.len() {
                return Err(Error::invalid(format!("class {c} out of range for {} logits", pred.len())));
            }
            Ok(cross_entropy(pred.data(), *c))
        }
        (k, _) => Err(Error::invalid(format!("{k:?} loss does not match the target kind"))),
    }
}

/// Received reals: power-normalised symbols plus one draw of channel noise.
pub fn add_noise<T: Scalar>(symbols: &[T], spec: &ChannelSpec, rng: &mut impl rand::Rng) -> Vec<T> {
    let noise = sample_noise::<T>(symbols.len() / 2, spec, rng);
    symbols
        .chunks_exact(2)
        .zip(&noise)
        .flat_map(|(s, n)| [s[0] + n.re, s[1] + n.im])
        .collect()
}

/// Loss of one sample through encoder, channel and decoder. Gradients are
/// accumulated into `grads` with the drawn noise held fixed.
pub fn loss_and_grad<T: Scalar>(
    model: &JsccModel<T>,
    sample: &Sample<T>,
    kind: LossKind,
    spec: &ChannelSpec,
    rng: &mut impl rand::Rng,
    grads: Option<&mut ModelParams<T>>,
) -> Result<f64> {
    let enc = model.encode_forward(&sample.input)?;
    let y = add_noise(&enc.symbols, spec, rng);
    let dec = model.decode_forward(&y, &y)?;
    let (loss, g) = sample_loss(dec.output(), &sample.target, kind)?;
    if let Some(grads) = grads {
        let g = Tensor::new(dec.output().shape().to_vec(), g)?;
        let (gy, gm) = model.decode_backward(&dec, g, &mut grads.arrays)?;
        let gs: Vec<T> = gy.iter().zip(&gm).map(|(&a, &b)| a + b).collect();
        model.encode_backward(&enc, &gs, &mut grads.arrays)?;
    }
    Ok(loss)
}

fn check_batch<T>(batch: &[Sample<T>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    Ok(())
}

/// Mean loss over the batch. Noise is drawn from `rng` sample by sample.
pub fn forward_loss<T: Scalar>(
    model: &JsccModel<T>,
    batch: &[Sample<T>],
    kind: LossKind,
    spec: &ChannelSpec,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    check_batch(batch)?;
    let mut total = 0.0;
    for s in batch {
        total += loss_and_grad(model, s, kind, spec, rng, None)?;
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`forward_loss`] for the same `rng` state.
pub fn backward<T: Scalar>(
    model: &JsccModel<T>,
    batch: &[Sample<T>],
    kind: LossKind,
    spec: &ChannelSpec,
    rng: &mut impl rand::Rng,
) -> Result<ModelParams<T>> {
    check_batch(batch)?;
    let mut grads = model.params().zeros_like();
    for s in batch {
        loss_and_grad(model, s, kind, spec, rng, Some(&mut grads))?;
    }
    grads.scale(lit(1.0 / batch.len() as f64));
    Ok(grads)
}

/// Trains a copy of `model`; returns it with the per-epoch mean loss.
pub fn train<T: Scalar>(
    model: &JsccModel<T>,
    dataset: &[Sample<T>],
    cfg: &TrainConfig,
    spec: &ChannelSpec,
) -> Result<(JsccModel<T>, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut m = model.clone();
    m.set_freeze_mask(&cfg.freeze_mask)?;
    let history = gradient_descent(&mut m, dataset.len(), &cfg.descent(), |m, i, rng, grads| {
        loss_and_grad(m, &dataset[i], cfg.loss, spec, rng, Some(grads))
    })?;
    Ok((m, history))
}

/// `epoch,loss` CSV of a training history.
pub fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out
}
