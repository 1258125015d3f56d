use rand::Rng;

use crate::channel::{normalize_power, SymbolBlock};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{CoopDense, Layer, ModelParams, ParamArray, Sequential, Tensor, Trainable};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Decoder reproduces the input tensor.
    Reconstruction,
    /// Decoder emits a feature vector of the given dimension.
    Feature { dim: usize },
}

/// Complex channel symbols per real source sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionRatio(f64);

impl CompressionRatio {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid(format!("compression ratio {ratio} outside (0, 1)")));
        }
        Ok(Self(ratio))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// `round(ratio * samples)`, at least one symbol.
    pub fn symbols_for(&self, samples: usize) -> usize {
        ((self.0 * samples as f64).round() as usize).max(1)
    }
}

/// Ratio used by the semantic classification pipeline.
pub const CLASSIFICATION_RATIO: f64 = 0.084;
/// Ratio used by the image reconstruction (detection) pipeline.
pub const RECONSTRUCTION_RATIO: f64 = 0.167;

#[derive(Debug, Clone, PartialEq)]
pub struct JsccConfig {
    /// `[channels, height, width]`; height and width divisible by 8.
    pub input_shape: [usize; 3],
    /// Complex symbols per transmission.
    pub symbols: usize,
    pub head: Head,
    pub conv_channels: [usize; 3],
    /// Hidden width of the feature decoder.
    pub feature_hidden: usize,
}

impl JsccConfig {
    pub fn new(input_shape: [usize; 3], ratio: CompressionRatio, head: Head) -> Self {
        Self {
            input_shape,
            symbols: ratio.symbols_for(input_shape.iter().product()),
            head,
            conv_channels: [16, 32, 32],
            feature_hidden: 128,
        }
    }

    pub fn source_samples(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn ratio(&self) -> f64 {
        self.symbols as f64 / self.source_samples() as f64
    }
}

/// Layered JSCC codec: strided convolutional encoder, power normalisation,
/// channel, cooperative first decoder layer, then the head-specific decoder.
///
/// Layer indices (for freeze masks) run over the encoder stack, then the
/// cooperative layer, then the decoder stack.
#[derive(Debug, Clone, PartialEq)]
pub struct JsccModel<T> {
    config: JsccConfig,
    encoder: Sequential<T>,
    coop: CoopDense<T>,
    decoder: Sequential<T>,
}

pub struct EncodeTrace<T> {
    acts: Vec<Tensor<T>>,
    norm: f64,
    /// Normalised reals, `(re, im)` interleaved.
    pub symbols: Vec<T>,
}

pub struct DecodeTrace<T> {
    y: Vec<T>,
    mean: Vec<T>,
    acts: Vec<Tensor<T>>,
}

impl<T> DecodeTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("decoder trace is never empty")
    }
}

impl<T: Scalar> JsccModel<T> {
    pub fn new(config: JsccConfig, rng: &mut impl Rng) -> Result<Self> {
        let [c, h, w] = config.input_shape;
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::invalid(format!("input {c}x{h}x{w} must have sides divisible by 8")));
        }
        if config.symbols == 0 {
            return Err(Error::invalid("symbol count must be positive"));
        }
        let [c0, c1, c2] = config.conv_channels;
        let flat = c2 * (h / 8) * (w / 8);
        let two_k = 2 * config.symbols;
        let encoder = Sequential::new(vec![
            Layer::conv3x3(c, c0, 2, rng),
            Layer::prelu(c0),
            Layer::conv3x3(c0, c1, 2, rng),
            Layer::prelu(c1),
            Layer::conv3x3(c1, c2, 2, rng),
            Layer::prelu(c2),
            Layer::Reshape(vec![flat]),
            Layer::dense(flat, two_k, rng),
        ]);
        let (coop, decoder) = match config.head {
            Head::Reconstruction => (
                CoopDense::new(two_k, flat, rng),
                Sequential::new(vec![
                    Layer::prelu(c2),
                    Layer::Reshape(vec![c2, h / 8, w / 8]),
                    Layer::Upsample2x,
                    Layer::conv3x3(c2, c1, 1, rng),
                    Layer::prelu(c1),
                    Layer::Upsample2x,
                    Layer::conv3x3(c1, c0, 1, rng),
                    Layer::prelu(c0),
                    Layer::Upsample2x,
                    Layer::conv3x3(c0, c, 1, rng),
                ]),
            ),
            Head::Feature { dim } => (
                CoopDense::new(two_k, config.feature_hidden, rng),
                Sequential::new(vec![Layer::prelu(config.feature_hidden), Layer::dense(config.feature_hidden, dim, rng)]),
            ),
        };
        Ok(Self { config, encoder, coop, decoder })
    }

    pub fn config(&self) -> &JsccConfig {
        &self.config
    }

    pub fn symbols(&self) -> usize {
        self.config.symbols
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.config.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self.config.head {
            Head::Reconstruction => self.config.input_shape.to_vec(),
            Head::Feature { dim } => vec![dim],
        }
    }

    /// Number of parameter arrays in [`Trainable::params`] order.
    pub fn array_count(&self) -> usize {
        self.encoder.array_count() + 3 + self.decoder.array_count()
    }

    pub fn layer_count(&self) -> usize {
        self.encoder.len() + 1 + self.decoder.len()
    }

    pub fn layer_kinds(&self) -> Vec<&'static str> {
        let mut k: Vec<_> = self.encoder.layers().iter().map(Layer::kind).collect();
        k.push("coop_dense");
        k.extend(self.decoder.layers().iter().map(Layer::kind));
        k
    }

    /// Index of the cooperative layer in the freeze mask.
    pub fn coop_layer_index(&self) -> usize {
        self.encoder.len()
    }

    /// One flag per layer; an empty mask unfreezes everything.
    pub fn set_freeze_mask(&mut self, mask: &[bool]) -> Result<()> {
        if mask.is_empty() {
            return self.set_freeze_mask(&vec![false; self.layer_count()]);
        }
        if mask.len() != self.layer_count() {
            return Err(Error::invalid(format!("freeze mask has {} entries, model has {} layers", mask.len(), self.layer_count())));
        }
        let e = self.encoder.len();
        self.encoder.set_frozen(&mask[..e]);
        self.coop.frozen = mask[e];
        self.decoder.set_frozen(&mask[e + 1..]);
        Ok(())
    }

    pub fn freeze_mask(&self) -> Vec<bool> {
        let mut m = self.encoder.frozen().to_vec();
        m.push(self.coop.frozen);
        m.extend_from_slice(self.decoder.frozen());
        m
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.config.input_shape {
            return Err(Error::invalid(format!("input shape {:?} != {:?}", x.shape(), self.config.input_shape)));
        }
        Ok(())
    }

    pub fn encode_forward(&self, x: &Tensor<T>) -> Result<EncodeTrace<T>> {
        self.check_input(x)?;
        let acts = self.encoder.forward_trace(x)?;
        let raw = acts.last().expect("non-empty").data();
        let norm = raw.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateInput(format!("encoder output norm {norm}")));
        }
        let scale: T = lit((self.config.symbols as f64).sqrt() / norm);
        let symbols = raw.iter().map(|&v| v * scale).collect();
        Ok(EncodeTrace { acts, norm, symbols })
    }

    /// Back-propagates `g` (gradient w.r.t. the normalised reals) through the
    /// power normalisation `s = sqrt(k) x / |x|` and the encoder.
    pub fn encode_backward(&self, trace: &EncodeTrace<T>, g: &[T], grads: &mut [ParamArray<T>]) -> Result<()> {
        if self.encoder.frozen().iter().all(|&f| f) {
            return Ok(());
        }
        let raw = trace.acts.last().expect("non-empty").data();
        let dot: f64 = raw.iter().zip(g).map(|(x, g)| x.as_f64() * g.as_f64()).sum();
        let n2 = trace.norm * trace.norm;
        let a: T = lit((self.config.symbols as f64).sqrt() / trace.norm);
        let b: T = lit(dot / n2);
        let gx: Vec<T> = raw.iter().zip(g).map(|(&x, &gi)| a * (gi - x * b)).collect();
        let ne = self.encoder.array_count();
        self.encoder.backward(&trace.acts, Tensor::vector(gx), &mut grads[..ne], false)?;
        Ok(())
    }

    /// Decoder pass for one user's received reals `y` given the users' mean.
    /// Output is unclamped.
    pub fn decode_forward(&self, y: &[T], mean: &[T]) -> Result<DecodeTrace<T>> {
        let h = self.coop.forward(y, mean)?;
        let acts = self.decoder.forward_trace(&h)?;
        Ok(DecodeTrace { y: y.to_vec(), mean: mean.to_vec(), acts })
    }

    /// Returns gradients w.r.t. `(y, mean)`.
    pub fn decode_backward(&self, trace: &DecodeTrace<T>, g: Tensor<T>, grads: &mut [ParamArray<T>]) -> Result<(Vec<T>, Vec<T>)> {
        let ne = self.encoder.array_count();
        let (head, tail) = grads.split_at_mut(ne + 3);
        let gh = self.decoder.backward(&trace.acts, g, tail, true)?.expect("input grad requested");
        Ok(self.coop.backward(&trace.y, &trace.mean, gh.data(), &mut head[ne..]))
    }

    /// Forward pass, pairing of the `2k` reals into `k` complex samples and
    /// power normalisation.
    pub fn encode(&self, x: &Tensor<T>) -> Result<SymbolBlock<T>> {
        let trace = self.encode_forward(x)?;
        normalize_power(&SymbolBlock::from_interleaved(&trace.symbols)?)
    }

    /// Unclamped decoder output for one user decoded on its own.
    pub fn decode_raw(&self, y: &SymbolBlock<T>) -> Result<Tensor<T>> {
        if y.len() != self.config.symbols {
            return Err(Error::invalid(format!("expected {} symbols, got {}", self.config.symbols, y.len())));
        }
        let reals = y.to_interleaved();
        Ok(self.decode_forward(&reals, &reals)?.acts.pop().expect("non-empty"))
    }

    /// Reconstruction head: tensor of the input shape clamped to `[0, 1]`.
    /// Feature head: the raw feature vector.
    pub fn decode(&self, y: &SymbolBlock<T>) -> Result<Tensor<T>> {
        let mut out = self.decode_raw(y)?;
        if self.config.head == Head::Reconstruction {
            for v in out.data_mut() {
                *v = v.max(T::zero()).min(T::one());
            }
        }
        Ok(out)
    }
}

/// Converts an image into a `[c, h, w]` tensor.
pub fn image_to_tensor<T: Scalar>(img: &ImageTensor) -> Tensor<T> {
    Tensor::new(img.shape().to_vec(), img.data().iter().map(|&v| T::from_f64_lossy(f64::from(v))).collect())
        .expect("image shape is consistent")
}

/// Converts a `[c, h, w]` tensor back into an image (values clamped).
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>) -> Result<ImageTensor> {
    let [c, h, w] = match t.shape() {
        [c, h, w] => [*c, *h, *w],
        s => return Err(Error::invalid(format!("tensor {s:?} is not an image"))),
    };
    ImageTensor::new(h, w, c, t.data().iter().map(|v| v.as_f64() as f32).collect())
}

impl<T: Scalar> Trainable<T> for JsccModel<T> {
    fn params(&self) -> ModelParams<T> {
        let mut arrays = self.encoder.param_arrays();
        arrays.extend(self.coop.param_arrays());
        arrays.extend(self.decoder.param_arrays());
        ModelParams { arrays }
    }

    fn set_params(&mut self, params: &ModelParams<T>) -> Result<()> {
        let ne = self.encoder.array_count();
        let nd = self.decoder.array_count();
        if params.arrays.len() != ne + 3 + nd {
            return Err(Error::invalid("parameter array count mismatch"));
        }
        self.encoder.set_param_arrays(&params.arrays[..ne])?;
        self.coop.set_param_arrays(&params.arrays[ne..ne + 3])?;
        self.decoder.set_param_arrays(&params.arrays[ne + 3..])
    }

    fn frozen_arrays(&self) -> Vec<bool> {
        let mut f = self.encoder.frozen_arrays();
        f.extend([self.coop.frozen; 3]);
        f.extend(self.decoder.frozen_arrays());
        f
    }
}
