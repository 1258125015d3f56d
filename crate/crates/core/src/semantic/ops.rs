//! Semantic extraction, fusion, cooperative decoding and the decision
//! stages that sit on top of the learned codec.

use rand::Rng;

use crate::channel::SymbolBlock;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::jscc::{image_to_tensor, Head, JsccModel};
use crate::nn::{softmax, Layer, ModelParams, ParamArray, Sequential, Tensor, Trainable};
use crate::scalar::{lit, Scalar};

/// Occluder grey level.
pub const OCCLUDER_VALUE: f32 = 0.5;
/// Default semantic feature dimension.
pub const FEATURE_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFeature<T>(Vec<T>);

impl<T: Scalar> SemanticFeature<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("feature must be non-empty and finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_tensor(self) -> Tensor<T> {
        Tensor::vector(self.0)
    }
}

/// Rectangle `(x, y, w, h)` of an occluder covering `round(rate * H * W)`
/// pixels to within one pixel.
pub fn occluder_rect(height: usize, width: usize, rate: f64, rng: &mut impl Rng) -> Result<Option<(usize, usize, usize, usize)>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("occlusion rate {rate} outside [0, 1]")));
    }
    let area = (rate * (height * width) as f64).round() as i64;
    if area == 0 {
        return Ok(None);
    }
    let mut candidates = Vec::new();
    let mut best = (i64::MAX, 0, 0);
    for w in 1..=width {
        let h = ((area as f64 / w as f64).round() as usize).clamp(1, height);
        let err = (w as i64 * h as i64 - area).abs();
        if err <= 1 {
            candidates.push((w, h));
        }
        if err < best.0 {
            best = (err, w, h);
        }
    }
    let (w, h) = if candidates.is_empty() { (best.1, best.2) } else { candidates[rng.random_range(0..candidates.len())] };
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    Ok(Some((x, y, w, h)))
}

/// Covers a seeded rectangle of `rate` of the image area with the occluder
/// value, in every channel.
pub fn occlude(img: &ImageTensor, rate: f64, rng: &mut impl Rng) -> Result<ImageTensor> {
    let mut out = img.clone();
    if let Some((x0, y0, w, h)) = occluder_rect(img.height(), img.width(), rate, rng)? {
        for c in 0..img.channels() {
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    out.set(c, y, x, OCCLUDER_VALUE);
                }
            }
        }
    }
    Ok(out)
}

/// Convolutional feature extractor: three stride-2 convolutions followed by
/// a dense projection to the feature dimension.
pub fn backbone_layers<T: Scalar>(input_shape: [usize; 3], dim: usize, rng: &mut impl Rng) -> Result<Vec<Layer<T>>> {
    let [c, h, w] = input_shape;
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::invalid("backbone input sides must be divisible by 8"));
    }
    let flat = 32 * (h / 8) * (w / 8);
    Ok(vec![
        Layer::conv3x3(c, 16, 2, rng),
        Layer::prelu(16),
        Layer::conv3x3(16, 32, 2, rng),
        Layer::prelu(32),
        Layer::conv3x3(32, 32, 2, rng),
        Layer::prelu(32),
        Layer::Reshape(vec![flat]),
        Layer::dense(flat, dim, rng),
    ])
}

/// Two dense layers; softmax is applied by [`classify`].
pub fn classifier_layers<T: Scalar>(dim: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Vec<Layer<T>> {
    vec![Layer::dense(dim, hidden, rng), Layer::prelu(hidden), Layer::dense(hidden, classes, rng)]
}

/// A backbone followed by a classifier, trained as one stack.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneClassifier<T> {
    pub input_shape: [usize; 3],
    pub backbone: Sequential<T>,
    pub fcn: Sequential<T>,
}

impl<T: Scalar> BackboneClassifier<T> {
    pub fn new(input_shape: [usize; 3], dim: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            input_shape,
            backbone: Sequential::new(backbone_layers(input_shape, dim, rng)?),
            fcn: Sequential::new(classifier_layers(dim, hidden, classes, rng)),
        })
    }

    /// Cross-entropy of one labelled tensor; accumulates into `grads`.
    pub fn loss_and_grad(&self, x: &Tensor<T>, class: usize, grads: &mut ModelParams<T>) -> Result<f64> {
        let a = self.backbone.forward_trace(x)?;
        let f = self.fcn.forward_trace(a.last().expect("non-empty"))?;
        let (loss, g) = crate::nn::cross_entropy(f.last().expect("non-empty").data(), class);
        let nb = self.backbone.array_count();
        let (gb, gf) = grads.arrays.split_at_mut(nb);
        let gfeat = self.fcn.backward(&f, Tensor::vector(g), gf, true)?.expect("input grad requested");
        self.backbone.backward(&a, gfeat, gb, false)?;
        Ok(loss)
    }
}

impl<T: Scalar> Trainable<T> for BackboneClassifier<T> {
    fn params(&self) -> ModelParams<T> {
        let mut arrays = self.backbone.param_arrays();
        arrays.extend(self.fcn.param_arrays());
        ModelParams { arrays }
    }

    fn set_params(&mut self, params: &ModelParams<T>) -> Result<()> {
        let nb = self.backbone.array_count();
        if params.arrays.len() != nb + self.fcn.array_count() {
            return Err(Error::invalid("parameter array count mismatch"));
        }
        self.backbone.set_param_arrays(&params.arrays[..nb])?;
        self.fcn.set_param_arrays(&params.arrays[nb..])
    }

    fn frozen_arrays(&self) -> Vec<bool> {
        let mut f = self.backbone.frozen_arrays();
        f.extend(self.fcn.frozen_arrays());
        f
    }
}

/// Feature of one image under a backbone stack.
pub fn extract_semantic<T: Scalar>(backbone: &Sequential<T>, img: &ImageTensor) -> Result<SemanticFeature<T>> {
    SemanticFeature::new(backbone.forward(&image_to_tensor(img))?.into_data())
}

/// Visual and thermal convolution towers. After every stage the thermal
/// activation is added element-wise into the visual stream; the summed last
/// stage is projected to the unified feature. Thermal convolutions carry no
/// bias, so an all-zero thermal plane leaves the visual path untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTower<T> {
    pub input_shape: [usize; 2],
    pub visual: Vec<Sequential<T>>,
    pub thermal: Vec<Sequential<T>>,
    pub head: Sequential<T>,
}

pub struct TwoTowerTrace<T> {
    visual: Vec<Vec<Tensor<T>>>,
    thermal: Vec<Vec<Tensor<T>>>,
    head: Vec<Tensor<T>>,
}

impl<T> TwoTowerTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.head.last().expect("non-empty")
    }
}

impl<T: Scalar> TwoTower<T> {
    pub fn new(height: usize, width: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if height % 8 != 0 || width % 8 != 0 {
            return Err(Error::invalid("tower input sides must be divisible by 8"));
        }
        let widths = [(1, 8), (8, 16), (16, 16)];
        let stage = |(i, o): (usize, usize), rng: &mut _| Sequential::new(vec![Layer::conv3x3(i, o, 2, rng), Layer::prelu(o)]);
        let visual = widths.iter().map(|&w| stage(w, rng)).collect();
        let thermal = widths.iter().map(|&w| stage(w, rng)).collect();
        let flat = 16 * (height / 8) * (width / 8);
        let head = Sequential::new(vec![Layer::Reshape(vec![flat]), Layer::dense(flat, dim, rng)]);
        Ok(Self { input_shape: [height, width], visual, thermal, head })
    }

    pub fn forward_trace(&self, visual: &Tensor<T>, thermal: &Tensor<T>) -> Result<TwoTowerTrace<T>> {
        let [h, w] = self.input_shape;
        if visual.shape() != [1, h, w] || thermal.shape() != [1, h, w] {
            return Err(Error::invalid(format!("tower inputs must be 1x{h}x{w}")));
        }
        let (mut a, mut t) = (visual.clone(), thermal.clone());
        let (mut va, mut ta) = (Vec::new(), Vec::new());
        for (vs, ts) in self.visual.iter().zip(&self.thermal) {
            let v_trace = vs.forward_trace(&a)?;
            let t_trace = ts.forward_trace(&t)?;
            t = t_trace.last().expect("non-empty").clone();
            a = v_trace.last().expect("non-empty").clone();
            for (x, y) in a.data_mut().iter_mut().zip(t.data()) {
                *x += *y;
            }
            va.push(v_trace);
            ta.push(t_trace);
        }
        let head = self.head.forward_trace(&a)?;
        Ok(TwoTowerTrace { visual: va, thermal: ta, head })
    }

    fn offsets(&self) -> (Vec<usize>, Vec<usize>, usize) {
        let mut o = 0;
        let mut vo = Vec::new();
        for s in &self.visual {
            vo.push(o);
            o += s.array_count();
        }
        let mut to = Vec::new();
        for s in &self.thermal {
            to.push(o);
            o += s.array_count();
        }
        (vo, to, o)
    }

    /// Accumulates gradients of the feature loss `g`; thermal biases stay zero.
    pub fn backward(&self, trace: &TwoTowerTrace<T>, g: Tensor<T>, grads: &mut [ParamArray<T>]) -> Result<()> {
        let (vo, to, ho) = self.offsets();
        let mut ga = self.head.backward(&trace.head, g, &mut grads[ho..], true)?.expect("input grad requested");
        let mut gt: Option<Tensor<T>> = None;
        for i in (0..self.visual.len()).rev() {
            // The summed stage output feeds both the next visual stage and,
            // through the cross-link, receives the thermal activation.
            let mut gti = ga.clone();
            if let Some(extra) = &gt {
                for (x, y) in gti.data_mut().iter_mut().zip(extra.data()) {
                    *x += *y;
                }
            }
            let need = i > 0;
            let vs = &self.visual[i];
            let ts = &self.thermal[i];
            let next_a = vs.backward(&trace.visual[i], ga, &mut grads[vo[i]..vo[i] + vs.array_count()], need)?;
            let next_t = ts.backward(&trace.thermal[i], gti, &mut grads[to[i]..to[i] + ts.array_count()], need)?;
            if let (Some(a), Some(t)) = (next_a, next_t) {
                ga = a;
                gt = Some(t);
            } else {
                break;
            }
        }
        for &o in &to {
            grads[o + 1].values.iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(())
    }
}

impl<T: Scalar> TwoTower<T> {
    fn zero_thermal_bias(&mut self) {
        for s in &mut self.thermal {
            let mut arrays = s.param_arrays();
            arrays[1].values.iter_mut().for_each(|v| *v = T::zero());
            s.set_param_arrays(&arrays).expect("layout unchanged");
        }
    }
}

impl<T: Scalar> Trainable<T> for TwoTower<T> {
    fn params(&self) -> ModelParams<T> {
        let mut arrays = Vec::new();
        for s in self.visual.iter().chain(&self.thermal).chain(std::iter::once(&self.head)) {
            arrays.extend(s.param_arrays());
        }
        ModelParams { arrays }
    }

    fn set_params(&mut self, params: &ModelParams<T>) -> Result<()> {
        let mut o = 0;
        for s in self.visual.iter_mut().chain(self.thermal.iter_mut()).chain(std::iter::once(&mut self.head)) {
            let n = s.array_count();
            let slice = params.arrays.get(o..o + n).ok_or_else(|| Error::invalid("parameter array count mismatch"))?;
            s.set_param_arrays(slice)?;
            o += n;
        }
        if o != params.arrays.len() {
            return Err(Error::invalid("parameter array count mismatch"));
        }
        self.zero_thermal_bias();
        Ok(())
    }

    fn frozen_arrays(&self) -> Vec<bool> {
        let mut f = Vec::new();
        for s in self.visual.iter().chain(&self.thermal).chain(std::iter::once(&self.head)) {
            f.extend(s.frozen_arrays());
        }
        f
    }
}

/// Unified feature of a visual/thermal pair.
pub fn fuse_modalities<T: Scalar>(towers: &TwoTower<T>, sample: &super::scene::MultiModalSample) -> Result<SemanticFeature<T>> {
    let trace = towers.forward_trace(&image_to_tensor(&sample.visual), &image_to_tensor(&sample.thermal))?;
    SemanticFeature::new(trace.output().data().to_vec())
}

/// Element-wise mean of the users' received reals.
pub fn mean_reals<T: Scalar>(blocks: &[Vec<T>]) -> Result<Vec<T>> {
    let first = blocks.first().ok_or_else(|| Error::invalid("at least one user is required"))?;
    if blocks.iter().any(|b| b.len() != first.len()) {
        return Err(Error::invalid("all users must send the same number of symbols"));
    }
    let n: T = lit(blocks.len() as f64);
    Ok((0..first.len()).map(|i| blocks.iter().map(|b| b[i]).fold(T::zero(), |a, v| a + v) / n).collect())
}

/// Joint decoding: every user's branch sees its own block and the mean of
/// all blocks. With one user this is exactly independent decoding.
pub fn cooperative_decode<T: Scalar>(model: &JsccModel<T>, blocks: &[SymbolBlock<T>]) -> Result<Vec<Tensor<T>>> {
    if blocks.iter().any(|b| b.len() != model.symbols()) {
        return Err(Error::invalid(format!("every block must carry {} symbols", model.symbols())));
    }
    let reals: Vec<Vec<T>> = blocks.iter().map(SymbolBlock::to_interleaved).collect();
    let mean = mean_reals(&reals)?;
    reals
        .iter()
        .map(|y| {
            let mut out = model.decode_forward(y, &mean)?.output().clone();
            if model.config().head == Head::Reconstruction {
                out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()).min(T::one()));
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionSpec<T> {
    Mean,
    /// One weight per user, normalised before use (typically each user's
    /// classifier max-probability).
    ConfidenceWeighted(Vec<T>),
    Concat,
}

pub fn fuse_users<T: Scalar>(features: &[SemanticFeature<T>], spec: &FusionSpec<T>) -> Result<SemanticFeature<T>> {
    let first = features.first().ok_or_else(|| Error::invalid("no features to fuse"))?;
    if features.iter().any(|f| f.dim() != first.dim()) {
        return Err(Error::invalid("feature dimensions differ"));
    }
    let weighted = |w: &[T]| -> Vec<T> {
        (0..first.dim()).map(|i| features.iter().zip(w).fold(T::zero(), |a, (f, &wi)| a + wi * f.0[i])).collect()
    };
    let out = match spec {
        FusionSpec::Mean => {
            let n: T = lit(features.len() as f64);
            (0..first.dim()).map(|i| features.iter().fold(T::zero(), |a, f| a + f.0[i]) / n).collect()
        }
        FusionSpec::ConfidenceWeighted(w) => {
            let total = w.iter().fold(T::zero(), |a, &v| a + v);
            if w.len() != features.len() || w.iter().any(|v| *v < T::zero()) || !(total > T::zero()) {
                return Err(Error::invalid("confidence weights must be non-negative, one per user, with positive sum"));
            }
            let norm: Vec<T> = w.iter().map(|&v| v / total).collect();
            weighted(&norm)
        }
        FusionSpec::Concat => features.iter().flat_map(|f| f.0.iter().copied()).collect(),
    };
    SemanticFeature::new(out)
}

/// Class probabilities from the classifier stack.
pub fn classify<T: Scalar>(fcn: &Sequential<T>, feature: &SemanticFeature<T>) -> Result<Vec<T>> {
    Ok(softmax(fcn.forward(&Tensor::vector(feature.0.clone()))?.data()))
}

/// Index of the largest probability (lowest index on ties).
pub fn argmax<T: Scalar>(p: &[T]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, v)| if *v > p[best] { i } else { best })
}

/// Majority vote; ties go to the highest summed confidence, then the lowest
/// class id.
pub fn vote(per_user: &[(usize, f64)]) -> Result<usize> {
    if per_user.is_empty() {
        return Err(Error::invalid("no votes"));
    }
    let classes = per_user.iter().map(|v| v.0).max().unwrap_or(0) + 1;
    let mut count = vec![0usize; classes];
    let mut conf = vec![0.0f64; classes];
    for &(c, p) in per_user {
        count[c] += 1;
        conf[c] += p;
    }
    let mut best = per_user[0].0;
    for c in 0..classes {
        if count[c] == 0 {
            continue;
        }
        let better = count[c] > count[best] || (count[c] == count[best] && (conf[c] > conf[best] || (conf[c] == conf[best] && c < best)));
        if better {
            best = c;
        }
    }
    Ok(best)
}
