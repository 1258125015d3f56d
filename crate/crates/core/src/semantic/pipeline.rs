//! End-to-end classification pipelines: the cooperative JSCC classifier with
//! its two training stages, local voting, and the separate digital chain.

use rand::Rng;

use super::metrics::ConfusionMatrix;
use super::ops::{argmax, classifier_layers, mean_reals, occlude, BackboneClassifier};
use super::scene::ClassificationItem;
use crate::channel::{ChannelSpec, RngStream};
use crate::classic_codec::{decode_image_lenient, encode_image, CodecConfig, CompressedImage};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::jscc::{add_noise, image_to_tensor, CompressionRatio, Head, JsccConfig, JsccModel};
use crate::modem_fec::{digital_link, BitStream, LdpcCode};
use crate::nn::{cross_entropy, gradient_descent, softmax, DescentConfig, ModelParams, ParamArray, Sequential, Tensor, Trainable};
use crate::scalar::{lit, Scalar};

const OCCLUSION_TAG: u64 = 0x4f43_434c;

/// How per-user features are combined before the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Mean,
    /// Mean-trained classifier; users weighted by their own max-probability.
    ConfidenceWeighted,
    Concat,
}

/// JSCC feature codec followed by a two-layer classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct CoopClassifier<T> {
    pub jscc: JsccModel<T>,
    pub fcn: Sequential<T>,
    pub fusion: Fusion,
    pub users: usize,
}

impl<T: Scalar> CoopClassifier<T> {
    pub fn new(
        view_shape: [usize; 3],
        ratio: CompressionRatio,
        dim: usize,
        classes: usize,
        users: usize,
        fusion: Fusion,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let jscc = JsccModel::new(JsccConfig::new(view_shape, ratio, Head::Feature { dim }), rng)?;
        let fcn_in = if fusion == Fusion::Concat { dim * users } else { dim };
        let fcn = Sequential::new(classifier_layers(fcn_in, dim, classes, rng));
        Ok(Self { jscc, fcn, fusion, users })
    }

    /// Freezes the encoder, leaving the cooperative layer, decoder and
    /// classifier trainable.
    pub fn freeze_encoder(&mut self, frozen: bool) -> Result<()> {
        let mut mask = vec![false; self.jscc.layer_count()];
        mask[..self.jscc.coop_layer_index()].iter_mut().for_each(|m| *m = frozen);
        self.jscc.set_freeze_mask(&mask)
    }

    fn dim(&self) -> usize {
        match self.jscc.config().head {
            Head::Feature { dim } => dim,
            Head::Reconstruction => unreachable!("classifier always uses a feature head"),
        }
    }

    fn fcn_grads<'a>(&self, grads: &'a mut [ParamArray<T>]) -> (&'a mut [ParamArray<T>], &'a mut [ParamArray<T>]) {
        grads.split_at_mut(self.jscc.array_count())
    }

    /// Loss of one view decoded on its own through `spec`; single-user
    /// training step.
    pub fn single_loss_and_grad(
        &self,
        view: &Tensor<T>,
        label: usize,
        spec: &ChannelSpec,
        rng: &mut impl Rng,
        grads: Option<&mut ModelParams<T>>,
    ) -> Result<f64> {
        if self.fusion == Fusion::Concat {
            return Err(Error::invalid("single-user training needs a per-user classifier"));
        }
        let enc = self.jscc.encode_forward(view)?;
        let y = add_noise(&enc.symbols, spec, rng);
        let dec = self.jscc.decode_forward(&y, &y)?;
        let f = self.fcn.forward_trace(dec.output())?;
        let (loss, g) = cross_entropy(f.last().expect("non-empty").data(), label);
        if let Some(grads) = grads {
            let (gj, gf) = self.fcn_grads(&mut grads.arrays);
            let gfeat = self.fcn.backward(&f, Tensor::vector(g), gf, true)?.expect("input grad requested");
            let (gy, gm) = self.jscc.decode_backward(&dec, gfeat, gj)?;
            let gs: Vec<T> = gy.iter().zip(&gm).map(|(&a, &b)| a + b).collect();
            self.jscc.encode_backward(&enc, &gs, gj)?;
        }
        Ok(loss)
    }

    fn fuse(&self, feats: &[Tensor<T>]) -> Tensor<T> {
        match self.fusion {
            Fusion::Concat => Tensor::vector(feats.iter().flat_map(|f| f.data().iter().copied()).collect()),
            _ => {
                let n: T = lit(feats.len() as f64);
                Tensor::vector((0..self.dim()).map(|i| feats.iter().fold(T::zero(), |a, f| a + f.data()[i]) / n).collect())
            }
        }
    }

    /// Cooperative loss over all users' views; second-stage training step.
    pub fn coop_loss_and_grad(
        &self,
        views: &[Tensor<T>],
        label: usize,
        spec: &ChannelSpec,
        rng: &mut impl Rng,
        grads: Option<&mut ModelParams<T>>,
    ) -> Result<f64> {
        let encs = views.iter().map(|v| self.jscc.encode_forward(v)).collect::<Result<Vec<_>>>()?;
        let ys: Vec<Vec<T>> = encs.iter().map(|e| add_noise(&e.symbols, spec, rng)).collect();
        let mean = mean_reals(&ys)?;
        let decs = ys.iter().map(|y| self.jscc.decode_forward(y, &mean)).collect::<Result<Vec<_>>>()?;
        let feats: Vec<Tensor<T>> = decs.iter().map(|d| d.output().clone()).collect();
        let f = self.fcn.forward_trace(&self.fuse(&feats))?;
        let (loss, g) = cross_entropy(f.last().expect("non-empty").data(), label);
        if let Some(grads) = grads {
            let (gj, gf) = self.fcn_grads(&mut grads.arrays);
            let gfused = self.fcn.backward(&f, Tensor::vector(g), gf, true)?.expect("input grad requested");
            let u = views.len();
            let dim = self.dim();
            let inv: T = lit(1.0 / u as f64);
            let mut g_mean = vec![T::zero(); mean.len()];
            let mut g_own = Vec::with_capacity(u);
            for (i, dec) in decs.iter().enumerate() {
                let gfeat: Vec<T> = match self.fusion {
                    Fusion::Concat => gfused.data()[i * dim..(i + 1) * dim].to_vec(),
                    _ => gfused.data().iter().map(|&v| v * inv).collect(),
                };
                let (gy, gm) = self.jscc.decode_backward(dec, Tensor::vector(gfeat), gj)?;
                g_mean.iter_mut().zip(&gm).for_each(|(a, &b)| *a += b);
                g_own.push(gy);
            }
            for (enc, gy) in encs.iter().zip(g_own) {
                let gs: Vec<T> = gy.iter().zip(&g_mean).map(|(&a, &b)| a + b * inv).collect();
                self.jscc.encode_backward(enc, &gs, gj)?;
            }
        }
        Ok(loss)
    }

    /// Class probabilities for one view decoded on its own.
    pub fn predict_single(&self, view: &Tensor<T>, spec: &ChannelSpec, rng: &mut impl Rng) -> Result<Vec<T>> {
        let enc = self.jscc.encode_forward(view)?;
        let y = add_noise(&enc.symbols, spec, rng);
        let feat = self.jscc.decode_forward(&y, &y)?.output().clone();
        self.probs(&feat)
    }

    fn probs(&self, feat: &Tensor<T>) -> Result<Vec<T>> {
        Ok(softmax(self.fcn.forward(feat)?.data()))
    }

    /// Class probabilities from cooperative decoding of all views.
    pub fn predict_coop(&self, views: &[Tensor<T>], spec: &ChannelSpec, rng: &mut impl Rng) -> Result<Vec<T>> {
        let ys = views
            .iter()
            .map(|v| Ok(add_noise(&self.jscc.encode_forward(v)?.symbols, spec, rng)))
            .collect::<Result<Vec<_>>>()?;
        let mean = mean_reals(&ys)?;
        let feats = ys.iter().map(|y| Ok(self.jscc.decode_forward(y, &mean)?.output().clone())).collect::<Result<Vec<_>>>()?;
        if self.fusion == Fusion::ConfidenceWeighted {
            let conf: Vec<T> = feats
                .iter()
                .map(|f| Ok(self.probs(f)?.into_iter().fold(T::zero(), T::max)))
                .collect::<Result<Vec<_>>>()?;
            let total = conf.iter().fold(T::zero(), |a, &c| a + c);
            let fused = (0..self.dim())
                .map(|i| feats.iter().zip(&conf).fold(T::zero(), |a, (f, &c)| a + c / total * f.data()[i]))
                .collect();
            return self.probs(&Tensor::vector(fused));
        }
        self.probs(&self.fuse(&feats))
    }
}

impl<T: Scalar> Trainable<T> for CoopClassifier<T> {
    fn params(&self) -> ModelParams<T> {
        let mut p = self.jscc.params();
        p.arrays.extend(self.fcn.param_arrays());
        p
    }

    fn set_params(&mut self, params: &ModelParams<T>) -> Result<()> {
        let nj = self.jscc.array_count();
        if params.arrays.len() != nj + self.fcn.array_count() {
            return Err(Error::invalid("parameter array count mismatch"));
        }
        self.jscc.set_params(&ModelParams { arrays: params.arrays[..nj].to_vec() })?;
        self.fcn.set_param_arrays(&params.arrays[nj..])
    }

    fn frozen_arrays(&self) -> Vec<bool> {
        let mut f = self.jscc.frozen_arrays();
        f.extend(self.fcn.frozen_arrays());
        f
    }
}

/// Occlusion applied to user `user` of item `item` under evaluation seed
/// `seed`; identical across schemes so comparisons are paired.
pub fn occlusion_stream(seed: u64, item: usize, user: usize) -> RngStream {
    RngStream::new(seed, crate::channel::derive_stream_id(&[OCCLUSION_TAG, item as u64, user as u64]))
}

/// Training view `user` of `item` with a fresh occlusion drawn from `rng`.
fn occluded_tensor<T: Scalar>(item: &ClassificationItem, user: usize, rate: f64, rng: &mut impl Rng) -> Result<Tensor<T>> {
    Ok(image_to_tensor(&occlude(&item.views[user].visual, rate, rng)?))
}

/// Stage 1: every (item, user) view is an independent sample, decoded on its
/// own. Stage 2: items are samples, decoded cooperatively with the encoder
/// frozen. Occlusions are redrawn every epoch.
pub fn train_stage<T: Scalar>(
    model: &CoopClassifier<T>,
    items: &[ClassificationItem],
    cooperative: bool,
    occlusion: f64,
    spec: &ChannelSpec,
    cfg: &DescentConfig,
) -> Result<(CoopClassifier<T>, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut m = model.clone();
    m.freeze_encoder(cooperative)?;
    let users = m.users;
    let samples = if cooperative { items.len() } else { items.len() * users };
    let history = gradient_descent(&mut m, samples, cfg, |m, i, rng, grads| {
        let mut occ = rng.substream(OCCLUSION_TAG);
        if cooperative {
            let item = &items[i];
            let views = (0..users).map(|u| occluded_tensor(item, u, occlusion, &mut occ)).collect::<Result<Vec<_>>>()?;
            m.coop_loss_and_grad(&views, item.label, spec, rng, Some(grads))
        } else {
            let item = &items[i / users];
            let view = occluded_tensor(item, i % users, occlusion, &mut occ)?;
            m.single_loss_and_grad(&view, item.label, spec, rng, Some(grads))
        }
    })?;
    m.freeze_encoder(false)?;
    Ok((m, history))
}

/// The users' occluded views of `item` for evaluation seed `seed`.
pub fn eval_views(item: &ClassificationItem, index: usize, occlusion: f64, seed: u64) -> Result<Vec<ImageTensor>> {
    (0..item.views.len()).map(|u| occlude(&item.views[u].visual, occlusion, &mut occlusion_stream(seed, index, u))).collect()
}

fn channel_stream(seed: u64, item: usize, tag: u64) -> RngStream {
    RngStream::new(seed, crate::channel::derive_stream_id(&[0x4348_4e4c, item as u64, tag]))
}

/// Cooperative JSCC classification of every item.
pub fn evaluate_coop<T: Scalar>(model: &CoopClassifier<T>, items: &[ClassificationItem], occlusion: f64, spec: &ChannelSpec, seed: u64, classes: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(classes);
    for (i, item) in items.iter().enumerate() {
        let views: Vec<Tensor<T>> = eval_views(item, i, occlusion, seed)?.iter().map(image_to_tensor).collect();
        let p = model.predict_coop(&views, spec, &mut channel_stream(seed, i, u64::MAX))?;
        cm.record(item.label, argmax(&p));
    }
    Ok(cm)
}

/// One confusion matrix per user, each user's view sent and decoded alone.
pub fn evaluate_single<T: Scalar>(model: &CoopClassifier<T>, items: &[ClassificationItem], occlusion: f64, spec: &ChannelSpec, seed: u64, classes: usize) -> Result<Vec<ConfusionMatrix>> {
    let users = items.first().map_or(0, |i| i.views.len());
    let mut cms = vec![ConfusionMatrix::new(classes); users];
    for (i, item) in items.iter().enumerate() {
        for (u, view) in eval_views(item, i, occlusion, seed)?.iter().enumerate() {
            let p = model.predict_single(&image_to_tensor(view), spec, &mut channel_stream(seed, i, u as u64))?;
            cms[u].record(item.label, argmax(&p));
        }
    }
    Ok(cms)
}

/// Every user classifies its own view locally (no channel) and only the
/// labels reach the server, which votes.
pub fn evaluate_voting<T: Scalar>(model: &CoopClassifier<T>, items: &[ClassificationItem], occlusion: f64, seed: u64, classes: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(classes);
    let mut rng = RngStream::new(0, 0);
    for (i, item) in items.iter().enumerate() {
        let votes = eval_views(item, i, occlusion, seed)?
            .iter()
            .map(|v| {
                let p = model.predict_single(&image_to_tensor(v), &ChannelSpec::Noiseless, &mut rng)?;
                let c = argmax(&p);
                Ok((c, p[c].as_f64()))
            })
            .collect::<Result<Vec<_>>>()?;
        cm.record(item.label, super::ops::vote(&votes)?);
    }
    Ok(cm)
}

/// Separate source/channel chain: the codec container chosen by
/// [`fit_budget`], zero-filled to exactly the budget, sent through the
/// LDPC/QPSK link.
#[derive(Debug, Clone)]
pub struct DigitalChain {
    pub code: LdpcCode,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalTransmission {
    pub received: ImageTensor,
    pub container: CompressedImage,
    pub quality: u8,
    /// Downsampling factor of the encoded image.
    pub scale: usize,
    /// Payload bits sent, equal to the budget unless even the coarsest
    /// encoding exceeds it.
    pub payload_bits: usize,
    /// Channel uses at rate 1/2: coded bits / 2 = payload bits.
    pub channel_uses: usize,
    /// Symbols actually sent including the last frame's padding.
    pub padded_channel_uses: usize,
    pub frames: usize,
    pub frames_failed: usize,
    pub decode_ok: bool,
    /// Container bits per source pixel of the full-resolution view.
    pub bpp: f64,
}

/// Highest quality whose container fits in `budget_bits` (quality 1 if none).
pub fn quality_for_budget(img: &ImageTensor, budget_bits: usize) -> Result<(u8, CompressedImage)> {
    let (mut lo, mut hi) = (1u8, 100u8);
    let mut best = (1u8, encode_image(img, &CodecConfig::new(1)?)?);
    if best.1.byte_len() * 8 > budget_bits {
        return Ok(best);
    }
    // Size grows with quality, so bisect for the last fitting value.
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        let c = encode_image(img, &CodecConfig::new(mid)?)?;
        if c.byte_len() * 8 <= budget_bits {
            lo = mid;
            best = (mid, c);
        } else {
            hi = mid - 1;
        }
    }
    Ok(best)
}

/// Downsampling factors tried by [`fit_budget`], finest first.
pub const BUDGET_SCALES: [usize; 6] = [1, 2, 3, 4, 6, 8];

/// Codec container of a view at some resolution and quality.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetFit {
    pub scale: usize,
    pub quality: u8,
    pub container: CompressedImage,
}

impl BudgetFit {
    /// Decoded container brought back to full resolution.
    pub fn decode(&self) -> Result<ImageTensor> {
        crate::classic_codec::decode_image(&self.container)?.upsample_nearest(self.scale)
    }
}

/// The finest resolution in [`BUDGET_SCALES`] at which some quality fits
/// `budget_bits`, at its highest fitting quality. Scales that would leave a
/// side below one codec block are skipped; if nothing fits, the coarsest
/// usable scale at quality 1.
pub fn fit_budget(img: &ImageTensor, budget_bits: usize) -> Result<BudgetFit> {
    let mut last = None;
    for scale in BUDGET_SCALES {
        let usable = img.height() % (8 * scale) == 0 && img.width() % (8 * scale) == 0;
        if !usable {
            continue;
        }
        let small = img.box_downsample(scale)?;
        let (quality, container) = quality_for_budget(&small, budget_bits)?;
        let fits = container.byte_len() * 8 <= budget_bits;
        last = Some(BudgetFit { scale, quality, container });
        if fits {
            break;
        }
    }
    last.ok_or_else(|| Error::invalid(format!("{}x{} view is not a multiple of the codec block", img.height(), img.width())))
}

impl DigitalChain {
    pub fn new(n: usize, construction_seed: u64, max_iters: usize) -> Result<Self> {
        Ok(Self { code: LdpcCode::new(n, construction_seed)?, max_iters })
    }

    /// Receiver view of a container after the link. The receiver knows the
    /// view size, so a container whose sides divide it by a factor in
    /// [`BUDGET_SCALES`] is upsampled back. Undecodable blocks (or an
    /// unreadable header) become mid-grey.
    pub fn transmit(&self, img: &ImageTensor, budget_bits: usize, spec: &ChannelSpec, rng: &RngStream) -> Result<DigitalTransmission> {
        let fit = fit_budget(img, budget_bits)?;
        let mut bits = BitStream::from_bytes(&fit.container.to_bytes()).into_inner();
        if bits.len() < budget_bits {
            bits.resize(budget_bits, 0);
        }
        let payload_bits = bits.len();
        let report = digital_link(&BitStream::new(bits)?, spec, &self.code, rng, self.max_iters)?;
        let grey = || ImageTensor::filled(img.height(), img.width(), img.channels(), 0.5);
        let scale_of = |c: &CompressedImage| {
            let (w, h) = (usize::from(c.width), usize::from(c.height));
            BUDGET_SCALES
                .into_iter()
                .find(|&s| w * s == img.width() && h * s == img.height() && usize::from(c.channels) == img.channels())
        };
        let (received, decode_ok) = match CompressedImage::from_bytes(&report.bits.to_bytes()) {
            Ok(c) => match (scale_of(&c), decode_image_lenient(&c)) {
                (Some(s), Ok((im, err))) => (im.upsample_nearest(s)?, err.is_none()),
                _ => (grey()?, false),
            },
            Err(_) => (grey()?, false),
        };
        Ok(DigitalTransmission {
            received,
            bpp: 8.0 * fit.container.byte_len() as f64 / img.sample_count() as f64,
            quality: fit.quality,
            scale: fit.scale,
            container: fit.container,
            payload_bits,
            channel_uses: payload_bits,
            padded_channel_uses: report.channel_uses,
            frames: report.frames,
            frames_failed: report.frames_failed,
            decode_ok,
        })
    }
}

/// Trains a backbone classifier on single (occluded, codec-decoded) views.
pub fn train_backbone<T: Scalar>(
    model: &BackboneClassifier<T>,
    views: &[(ImageTensor, usize)],
    cfg: &DescentConfig,
) -> Result<(BackboneClassifier<T>, Vec<f64>)> {
    let mut m = model.clone();
    let tensors: Vec<Tensor<T>> = views.iter().map(|(v, _)| image_to_tensor(v)).collect();
    let history = gradient_descent(&mut m, views.len(), cfg, |m, i, _rng, grads| m.loss_and_grad(&tensors[i], views[i].1, grads))?;
    Ok((m, history))
}

/// Digital-baseline decision: per-user backbone features of the received
/// images, mean-fused, then the classifier.
pub fn classify_received<T: Scalar>(model: &BackboneClassifier<T>, received: &[ImageTensor]) -> Result<usize> {
    let feats = received.iter().map(|r| model.backbone.forward(&image_to_tensor(r))).collect::<Result<Vec<_>>>()?;
    let n: T = lit(feats.len() as f64);
    let dim = feats[0].len();
    let fused = (0..dim).map(|i| feats.iter().fold(T::zero(), |a, f| a + f.data()[i]) / n).collect();
    Ok(argmax(&softmax(model.fcn.forward(&Tensor::vector(fused))?.data())))
}

/// `round(ratio * samples)` JSCC symbols per view.
pub fn jscc_budget(ratio: CompressionRatio, samples: usize) -> usize {
    ratio.symbols_for(samples)
}

/// Outcome of the multi-view detection chain on one scene, in scene pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDetection {
    /// Detections on the composed canvas.
    pub composed: Vec<super::metrics::DetBox>,
    /// Detections on each user's own received view.
    pub per_view: Vec<Vec<super::metrics::DetBox>>,
    /// Registered offsets relative to the first view (`None` if registration failed).
    pub offsets: Option<Vec<(i64, i64)>>,
    pub received: Vec<ImageTensor>,
}

/// Registration and detection settings for [`detect_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneDetectSpec {
    pub threshold: f64,
    /// When set, registration is refined within this many pixels of a pose
    /// prior. Otherwise the full overlap window is searched.
    pub search_radius: Option<i64>,
    /// Maximum per-axis error of the pose prior, drawn uniformly per view.
    pub pose_error: i64,
}

impl Default for SceneDetectSpec {
    fn default() -> Self {
        Self { threshold: super::detect::DEFAULT_THRESHOLD, search_radius: Some(4), pose_error: 3 }
    }
}

const POSE_TAG: u64 = 0x504f_5345;

/// Sends every view through the reconstruction codec, registers and composes
/// the received views, and detects on both the canvas and each view. Scene
/// coordinates are anchored at the first view's true position. When
/// registration fails the composed result falls back to the first view.
pub fn detect_scene<T: Scalar>(
    model: &JsccModel<T>,
    scene: &super::scene::ViewSet,
    spec: &ChannelSpec,
    rng: &RngStream,
    det: &SceneDetectSpec,
) -> Result<SceneDetection> {
    let threshold = det.threshold;
    let blocks = scene
        .views
        .iter()
        .enumerate()
        .map(|(u, v)| {
            let x = image_to_tensor::<T>(&v.visual);
            Ok(crate::channel::apply(&model.encode(&x)?, spec, &mut rng.substream(u as u64)))
        })
        .collect::<Result<Vec<_>>>()?;
    let received = blocks
        .iter()
        .map(|b| crate::jscc::tensor_to_image(&model.decode(b)?))
        .collect::<Result<Vec<_>>>()?;
    let per_view = received
        .iter()
        .zip(&scene.true_offsets)
        .map(|(r, &(x, y))| Ok(super::detect(r, threshold)?.iter().map(|d| d.translated(x as f64, y as f64)).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let (x0, y0) = scene.true_offsets[0];
    let offsets = match det.search_radius {
        Some(radius) => {
            let mut prng = rng.substream(POSE_TAG);
            let e = det.pose_error.max(0);
            let priors: Vec<(i64, i64)> = scene
                .true_offsets
                .iter()
                .map(|&(x, y)| (x + prng.random_range(-e..=e), y + prng.random_range(-e..=e)))
                .collect();
            super::registration::register_views_guided(&received, &priors, radius).ok()
        }
        None => super::registration::register_views(&received).ok(),
    };
    let composed = match &offsets {
        Some(o) => {
            let canvas = super::registration::compose(&received, o)?;
            let (ox, oy) = super::registration::canvas_origin(o);
            super::detect(&canvas, threshold)?.iter().map(|d| d.translated((x0 + ox) as f64, (y0 + oy) as f64)).collect()
        }
        None => per_view[0].clone(),
    };
    Ok(SceneDetection { composed, per_view, offsets, received })
}
