//! End-to-end experiments: training, classification and baseline sweeps,
//! the FEC threshold, multi-view detection and timing.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::Rng;

use comv_core::channel::{derive_stream_id, ChannelSpec, RngStream};
use comv_core::image::ImageTensor;
use comv_core::jscc::{image_to_tensor, train, CompressionRatio, Head, JsccConfig, JsccModel, Sample, TrainConfig};
use comv_core::modem_fec::{digital_link, BitStream};
use comv_core::semantic::metrics::{mean_ap, psnr, recall_at_iou, weighted_f1, ConfusionMatrix, DetBox};
use comv_core::semantic::ops::{occlude, BackboneClassifier};
use comv_core::semantic::pipeline::{
    classify_received, detect_scene, eval_views, evaluate_coop, evaluate_single, evaluate_voting, fit_budget, jscc_budget, train_backbone,
    train_stage, CoopClassifier, DigitalChain,
};
use comv_core::semantic::scene::{ClassificationItem, ViewSet};
use comv_core::{Real, RealJscc};

use crate::config::{ExperimentConfig, Scheme};
use crate::dataset;
use crate::records::{Metric, RunRecord};

const INIT_TAG: u64 = 0x494e_4954;
const BACKBONE_OCCLUSION_TAG: u64 = 0x424b_4f43;
const DIGITAL_TAG: u64 = 0x4449_4749;
const FER_TAG: u64 = 0x4645_5252;
const DETECT_TAG: u64 = 0x4445_5443;
const TEST_SCENES_TAG: u64 = 0x5453_434e;

/// `Noiseless` for an infinite SNR, AWGN otherwise.
pub fn channel_for(snr_db: f64) -> Result<ChannelSpec> {
    if snr_db == f64::INFINITY {
        Ok(ChannelSpec::Noiseless)
    } else {
        Ok(ChannelSpec::awgn(snr_db)?)
    }
}

pub fn digital_chain(cfg: &ExperimentConfig) -> Result<DigitalChain> {
    Ok(DigitalChain::new(cfg.digital.ldpc_n, cfg.digital.code_seed, cfg.digital.max_iters)?)
}

/// JSCC channel uses for one classification view.
pub fn classification_symbols(cfg: &ExperimentConfig) -> Result<usize> {
    let side = cfg.dataset.class_side;
    Ok(jscc_budget(CompressionRatio::new(cfg.classification.ratio)?, side * side))
}

/// Digital payload bits per view: the JSCC channel-use budget scaled by
/// `budget_factor`. At rate 1/2 with QPSK one payload bit is one channel use.
pub fn digital_budget_bits(cfg: &ExperimentConfig) -> Result<usize> {
    Ok((classification_symbols(cfg)? as f64 * cfg.digital.budget_factor).round() as usize)
}

/// Trained models of the classification experiment.
#[derive(Debug, Clone)]
pub struct ClassificationModels {
    /// After the single-user stage; also serves voting and single-user decoding.
    pub single: CoopClassifier<Real>,
    /// After the cooperative stage.
    pub coop: CoopClassifier<Real>,
    /// Classifier for codec-decoded views.
    pub backbone: BackboneClassifier<Real>,
    pub histories: Vec<(&'static str, Vec<f64>)>,
}

pub fn train_classification(cfg: &ExperimentConfig, items: &[ClassificationItem], seed: u64) -> Result<ClassificationModels> {
    let c = &cfg.classification;
    let d = &cfg.dataset;
    let shape = [1, d.class_side, d.class_side];
    let mut init = RngStream::new(seed, INIT_TAG);
    let model = CoopClassifier::<Real>::new(
        shape,
        CompressionRatio::new(c.ratio)?,
        c.feature_dim,
        d.classes,
        d.users,
        c.fusion.into(),
        &mut init,
    )?;
    let (single, h1) = train_stage(&model, items, false, d.occlusion, &channel_for(c.single.train_snr_db)?, &c.single.descent(seed))
        .context("single-user training stage")?;
    let (coop, h2) = train_stage(&single, items, true, d.occlusion, &channel_for(c.coop.train_snr_db)?, &c.coop.descent(seed))
        .context("cooperative training stage")?;

    let budget = digital_budget_bits(cfg)?;
    let mut occ = RngStream::new(seed, BACKBONE_OCCLUSION_TAG);
    let mut views = Vec::with_capacity(items.len() * d.users);
    for item in items {
        for v in &item.views {
            let seen = occlude(&v.visual, d.occlusion, &mut occ)?;
            views.push((fit_budget(&seen, budget)?.decode()?, item.label));
        }
    }
    let backbone = BackboneClassifier::<Real>::new(shape, c.feature_dim, c.feature_dim, d.classes, &mut init)?;
    let (backbone, h3) = train_backbone(&backbone, &views, &c.backbone.descent(seed)).context("digital-baseline classifier")?;
    Ok(ClassificationModels { single, coop, backbone, histories: vec![("single", h1), ("coop", h2), ("backbone", h3)] })
}

/// Per-item digital transmission results for one (snr, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalCell {
    pub confusion: ConfusionMatrix,
    pub psnr: f64,
    pub fer: f64,
    pub bpp: f64,
    pub channel_uses_per_view: f64,
    pub budget_bits: usize,
}

pub fn digital_cell(
    cfg: &ExperimentConfig,
    chain: &DigitalChain,
    backbone: &BackboneClassifier<Real>,
    items: &[ClassificationItem],
    spec: &ChannelSpec,
    seed: u64,
) -> Result<DigitalCell> {
    let budget = digital_budget_bits(cfg)?;
    let mut cm = ConfusionMatrix::new(cfg.dataset.classes);
    let (mut psnr_sum, mut bpp_sum, mut uses) = (0.0, 0.0, 0usize);
    let (mut frames, mut failed, mut views) = (0usize, 0usize, 0usize);
    for (i, item) in items.iter().enumerate() {
        let sent = eval_views(item, i, cfg.dataset.occlusion, seed)?;
        let mut received = Vec::with_capacity(sent.len());
        for (u, v) in sent.iter().enumerate() {
            let rng = RngStream::new(seed, derive_stream_id(&[DIGITAL_TAG, i as u64, u as u64]));
            let t = chain.transmit(v, budget, spec, &rng)?;
            psnr_sum += psnr(&t.received, v)?.min(100.0);
            bpp_sum += t.bpp;
            uses += t.channel_uses;
            frames += t.frames;
            failed += t.frames_failed;
            views += 1;
            received.push(t.received);
        }
        cm.record(item.label, classify_received(backbone, &received)?);
    }
    let n = views.max(1) as f64;
    Ok(DigitalCell {
        confusion: cm,
        psnr: psnr_sum / n,
        fer: failed as f64 / frames.max(1) as f64,
        bpp: bpp_sum / n,
        channel_uses_per_view: uses as f64 / n,
        budget_bits: budget,
    })
}

/// Weighted F1 and accuracy for every (scheme, snr, seed) cell, plus the
/// channel accounting of each scheme.
pub fn run_classification_sweep(
    cfg: &ExperimentConfig,
    models: &ClassificationModels,
    items: &[ClassificationItem],
) -> Result<Vec<RunRecord>> {
    let classes = cfg.dataset.classes;
    let occ = cfg.dataset.occlusion;
    let chain = digital_chain(cfg)?;
    let samples = (cfg.dataset.class_side * cfg.dataset.class_side) as f64;
    let symbols = classification_symbols(cfg)? as f64 / samples;
    let mut out = Vec::new();
    for &scheme in &cfg.sweep.schemes {
        for &snr in &cfg.sweep.snr_db {
            let spec = channel_for(snr)?;
            for &seed in &cfg.sweep.seeds {
                let mut push = |m: Metric, v: f64| out.push(RunRecord::new(scheme.name(), snr, seed, m, v));
                let cm = match scheme {
                    Scheme::JsccCoop => evaluate_coop(&models.coop, items, occ, &spec, seed, classes)?,
                    Scheme::JsccSingle => {
                        let cms = evaluate_single(&models.single, items, occ, &spec, seed, classes)?;
                        best_by_f1(cms)?
                    }
                    Scheme::JsccVoting => evaluate_voting(&models.single, items, occ, seed, classes)?,
                    Scheme::DigitalBaseline => {
                        let cell = digital_cell(cfg, &chain, &models.backbone, items, &spec, seed)?;
                        push(Metric::Psnr, cell.psnr);
                        push(Metric::Fer, cell.fer);
                        push(Metric::Bpp, cell.bpp);
                        push(Metric::SymbolsPerSample, cell.channel_uses_per_view / samples);
                        cell.confusion
                    }
                };
                if scheme != Scheme::DigitalBaseline && scheme != Scheme::JsccVoting {
                    push(Metric::SymbolsPerSample, symbols);
                }
                push(Metric::F1Weighted, weighted_f1(&cm)?);
                push(Metric::Accuracy, cm.accuracy());
            }
        }
    }
    Ok(out)
}

fn best_by_f1(cms: Vec<ConfusionMatrix>) -> Result<ConfusionMatrix> {
    let mut best: Option<(f64, ConfusionMatrix)> = None;
    for cm in cms {
        let f = weighted_f1(&cm)?;
        if best.as_ref().is_none_or(|(b, _)| f > *b) {
            best = Some((f, cm));
        }
    }
    best.map(|(_, cm)| cm).context("no users")
}

/// Frame error rate of random payloads at `snr_db` over `frames` frames. The
/// payload and noise streams depend only on `seed`, so nearby SNRs share
/// their random numbers.
pub fn measure_fer(chain: &DigitalChain, snr_db: f64, frames: usize, seed: u64) -> Result<(f64, f64)> {
    let k = chain.code.k();
    let mut rng = RngStream::new(seed, FER_TAG);
    let bits: Vec<u8> = (0..frames * k).map(|_| rng.random_range(0..2u8)).collect();
    let payload = BitStream::new(bits)?;
    let report = digital_link(&payload, &channel_for(snr_db)?, &chain.code, &RngStream::new(seed, FER_TAG + 1), chain.max_iters)?;
    let ber = payload.hamming_distance(&report.bits) as f64 / payload.len() as f64;
    Ok((report.frames_failed as f64 / report.frames as f64, ber))
}

/// Lowest SNR (to 0.05 dB) at which the frame error rate drops to
/// `fer_target`, located by bisection inside `threshold_search`.
pub fn fec_threshold(cfg: &ExperimentConfig, seed: u64) -> Result<f64> {
    let chain = digital_chain(cfg)?;
    let d = &cfg.digital;
    let (mut lo, mut hi) = d.threshold_search;
    let fer = |s: f64| -> Result<f64> { Ok(measure_fer(&chain, s, d.fer_frames, seed)?.0) };
    if fer(hi)? > d.fer_target {
        bail!("FER stays above {} up to {hi} dB", d.fer_target);
    }
    if fer(lo)? <= d.fer_target {
        return Ok(lo);
    }
    while hi - lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        if fer(mid)? <= d.fer_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Digital baseline over the SNR grid: F1, PSNR, FER, bpp and BER of random
/// frames at each SNR.
pub fn run_baseline_sweep(cfg: &ExperimentConfig, backbone: &BackboneClassifier<Real>, items: &[ClassificationItem]) -> Result<Vec<RunRecord>> {
    let chain = digital_chain(cfg)?;
    let name = Scheme::DigitalBaseline.name();
    let mut out = Vec::new();
    for &snr in &cfg.sweep.snr_db {
        let spec = channel_for(snr)?;
        for &seed in &cfg.sweep.seeds {
            let cell = digital_cell(cfg, &chain, backbone, items, &spec, seed)?;
            let (_, ber) = measure_fer(&chain, snr, cfg.digital.fer_frames.min(100), seed)?;
            for (m, v) in [
                (Metric::F1Weighted, weighted_f1(&cell.confusion)?),
                (Metric::Accuracy, cell.confusion.accuracy()),
                (Metric::Psnr, cell.psnr),
                (Metric::Fer, cell.fer),
                (Metric::Ber, ber),
                (Metric::Bpp, cell.bpp),
            ] {
                out.push(RunRecord::new(name, snr, seed, m, v));
            }
        }
    }
    Ok(out)
}

/// Reconstruction-head JSCC trained on the users' views of `scenes`.
pub fn train_detection_model(cfg: &ExperimentConfig, scenes: &[ViewSet], seed: u64) -> Result<(RealJscc, Vec<f64>)> {
    let d = &cfg.detection;
    let side = cfg.dataset.view_side;
    let config = JsccConfig::new([1, side, side], CompressionRatio::new(d.ratio)?, Head::Reconstruction);
    let model = JsccModel::<Real>::new(config, &mut RngStream::new(seed, INIT_TAG))?;
    let data: Vec<Sample<Real>> =
        scenes.iter().flat_map(|s| s.views.iter().map(|v| Sample::autoencode(image_to_tensor(&v.visual)))).collect();
    let desc = d.training.descent(seed);
    let tc = TrainConfig {
        learning_rate: desc.learning_rate,
        batch_size: desc.batch_size,
        epochs: desc.epochs,
        train_snr_db: d.training.train_snr_db,
        seed,
        step_rule: desc.step_rule,
        ..TrainConfig::default()
    };
    Ok(train(&model, &data, &tc, &channel_for(d.training.train_snr_db)?).context("detection codec training")?)
}

/// Summary of one detection seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSeed {
    pub seed: u64,
    pub multi_recall: f64,
    pub single_recall: f64,
    pub best_user: usize,
    pub multi_ap: f64,
    pub single_ap: f64,
    pub registration_failures: usize,
    pub scenes: usize,
}

impl DetectionSeed {
    pub fn ratio(&self) -> f64 {
        self.multi_recall / self.single_recall
    }
}

/// Pools per-scene boxes into one frame, shifting scene `i` far enough that
/// boxes of different scenes never overlap.
fn pooled(per_scene: &[Vec<DetBox>]) -> Vec<DetBox> {
    per_scene.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |d| d.translated(10_000.0 * i as f64, 0.0))).collect()
}

/// Per seed: fresh test scenes, per-user JSCC image transmission, guided
/// registration, composition and detection. The single-view baseline is the
/// user with the best mean recall for that seed.
pub fn detection_seed(cfg: &ExperimentConfig, model: &RealJscc, seed: u64, snr_db: f64) -> Result<DetectionSeed> {
    let scenes = dataset::scenes(cfg, cfg.dataset.test_scenes, &mut RngStream::new(seed, TEST_SCENES_TAG))?;
    let spec = channel_for(snr_db)?;
    let det = cfg.detection.detect_spec();
    let iou = cfg.detection.iou;
    let users = cfg.dataset.users;
    let (mut multi, mut gts) = (Vec::new(), Vec::new());
    let mut single = vec![Vec::new(); users];
    let mut per_user_recall = vec![0.0; users];
    let (mut multi_recall, mut failures) = (0.0, 0);
    for (i, s) in scenes.iter().enumerate() {
        let rng = RngStream::new(seed, derive_stream_id(&[DETECT_TAG, i as u64]));
        let r = detect_scene(model, s, &spec, &rng, &det)?;
        let truth = s.truth_boxes();
        failures += usize::from(r.offsets.is_none());
        multi_recall += recall_at_iou(&r.composed, &truth, iou);
        for (u, v) in r.per_view.iter().enumerate() {
            per_user_recall[u] += recall_at_iou(v, &truth, iou);
            single[u].push(v.clone());
        }
        multi.push(r.composed);
        gts.push(truth);
    }
    let n = scenes.len() as f64;
    let best_user = (0..users).max_by(|&a, &b| per_user_recall[a].total_cmp(&per_user_recall[b]).then(b.cmp(&a))).context("no users")?;
    let classes = cfg.dataset.classes;
    let gt = pooled(&gts);
    Ok(DetectionSeed {
        seed,
        multi_recall: multi_recall / n,
        single_recall: per_user_recall[best_user] / n,
        best_user,
        multi_ap: mean_ap(&pooled(&multi), &gt, classes, iou)?,
        single_ap: mean_ap(&pooled(&single[best_user]), &gt, classes, iou)?,
        registration_failures: failures,
        scenes: scenes.len(),
    })
}

/// Runs every sweep seed at the configured detection SNR. Aborts when more
/// than `max_registration_failure` of a seed's scenes fail to register.
pub fn run_detection_experiment(cfg: &ExperimentConfig, model: &RealJscc) -> Result<(Vec<RunRecord>, Vec<DetectionSeed>)> {
    let snr = cfg.detection.snr_db;
    let samples = (cfg.dataset.view_side * cfg.dataset.view_side) as f64;
    let symbols = model.symbols() as f64 / samples;
    let mut records = Vec::new();
    let mut seeds = Vec::new();
    for &seed in &cfg.sweep.seeds {
        let s = detection_seed(cfg, model, seed, snr)?;
        let rate = s.registration_failures as f64 / s.scenes.max(1) as f64;
        if rate > cfg.detection.max_registration_failure {
            bail!(
                "registration failed on {} of {} scenes for seed {seed} ({:.0}% > {:.0}%)",
                s.registration_failures,
                s.scenes,
                100.0 * rate,
                100.0 * cfg.detection.max_registration_failure
            );
        }
        for (scheme, recall, ap) in [("multi_view", s.multi_recall, s.multi_ap), ("single_view", s.single_recall, s.single_ap)] {
            records.push(RunRecord::new(scheme, snr, seed, Metric::Recall, recall));
            records.push(RunRecord::new(scheme, snr, seed, Metric::Ap50, ap));
            records.push(RunRecord::new(scheme, snr, seed, Metric::SymbolsPerSample, symbols));
        }
        seeds.push(s);
    }
    Ok((records, seeds))
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Timing summary of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub scheme: &'static str,
    /// Mean per-image milliseconds of each repetition.
    pub per_repetition_ms: Vec<f64>,
    pub median_ms: f64,
    pub mean_ms: f64,
}

/// Per-image encode, channel and decode wall time of the JSCC classifier
/// codec and the codec-plus-modem chain on classification views. Records use
/// the repetition index as the seed column.
pub fn bench(cfg: &ExperimentConfig, models: &ClassificationModels, items: &[ClassificationItem]) -> Result<(Vec<RunRecord>, Vec<BenchSummary>)> {
    let b = &cfg.bench;
    if b.images == 0 || b.repetitions == 0 {
        bail!("bench needs at least one image and one repetition");
    }
    let views: Vec<ImageTensor> = items.iter().flat_map(|i| i.views.iter().map(|v| v.visual.clone())).cycle().take(b.images).collect();
    if views.len() < b.images {
        bail!("not enough views for {} images", b.images);
    }
    let spec = channel_for(b.snr_db)?;
    let chain = digital_chain(cfg)?;
    let budget = digital_budget_bits(cfg)?;
    let samples = (cfg.dataset.class_side * cfg.dataset.class_side) as f64;
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for scheme in ["jscc", Scheme::DigitalBaseline.name()] {
        let mut reps = Vec::with_capacity(b.repetitions);
        for rep in 0..b.repetitions {
            let start = Instant::now();
            for (i, v) in views.iter().enumerate() {
                let rng = RngStream::new(rep as u64, i as u64);
                if scheme == "jscc" {
                    let x = image_to_tensor::<Real>(v);
                    std::hint::black_box(models.single.predict_single(&x, &spec, &mut rng.clone())?);
                } else {
                    std::hint::black_box(chain.transmit(v, budget, &spec, &rng)?);
                }
            }
            let ms = start.elapsed().as_secs_f64() * 1000.0 / views.len() as f64;
            records.push(RunRecord::new(scheme, b.snr_db, rep as u64, Metric::WallMs, ms));
            reps.push(ms);
        }
        if scheme == "jscc" {
            records.push(RunRecord::new(scheme, b.snr_db, 0, Metric::SymbolsPerSample, classification_symbols(cfg)? as f64 / samples));
        }
        summaries.push(BenchSummary {
            scheme,
            median_ms: median(&reps),
            mean_ms: reps.iter().sum::<f64>() / reps.len() as f64,
            per_repetition_ms: reps,
        });
    }
    Ok((records, summaries))
}
