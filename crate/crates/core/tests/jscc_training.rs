use std::sync::OnceLock;

use comv_core::channel::{apply, ChannelSpec, RngStream};
use comv_core::jscc::{
    forward_loss, jscc_decode, jscc_encode, tensor_to_image, train, CompressionRatio, Head, JsccConfig, JsccModel, LossKind, Sample,
    TrainConfig,
};
use comv_core::nn::Tensor;
use comv_core::semantic::metrics::psnr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 16;

/// Smooth toy image: a gradient plus one soft blob.
fn toy_image(rng: &mut impl Rng) -> Tensor<f32> {
    let (gx, gy, base) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.3..0.7));
    let (cx, cy, r, amp) = (
        rng.random_range(3.0..13.0),
        rng.random_range(3.0..13.0),
        rng.random_range(2.0..5.0),
        rng.random_range(-0.3..0.3),
    );
    let mut data = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let (u, v) = (x as f64 / SIDE as f64 - 0.5, y as f64 / SIDE as f64 - 0.5);
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let p = base + gx * u + gy * v + amp * (-d2 / (2.0 * r * r)).exp();
            data.push(p.clamp(0.0, 1.0) as f32);
        }
    }
    Tensor::new(vec![1, SIDE, SIDE], data).unwrap()
}

fn toy_set(n: usize, seed: u64) -> Vec<Sample<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Sample::autoencode(toy_image(&mut rng))).collect()
}

fn untrained() -> JsccModel<f32> {
    let cfg = JsccConfig::new([1, SIDE, SIDE], CompressionRatio::new(0.167).unwrap(), Head::Reconstruction);
    JsccModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap()
}

struct Trained {
    model: JsccModel<f32>,
    history: Vec<f64>,
    initial_loss: f64,
}

fn trained(spec: ChannelSpec, lr: f64) -> Trained {
    let data = toy_set(200, 1);
    let model = untrained();
    let initial_loss = forward_loss(&model, &data, LossKind::Mse, &spec, &mut RngStream::new(0, 0)).unwrap();
    let cfg = TrainConfig { learning_rate: lr, batch_size: 8, epochs: 50, seed: 3, ..TrainConfig::default() };
    let (model, history) = train(&model, &data, &cfg, &spec).unwrap();
    Trained { model, history, initial_loss }
}

const LR: f64 = 0.02;

fn noiseless_model() -> &'static Trained {
    static M: OnceLock<Trained> = OnceLock::new();
    M.get_or_init(|| trained(ChannelSpec::Noiseless, LR))
}

fn awgn_model() -> &'static Trained {
    static M: OnceLock<Trained> = OnceLock::new();
    M.get_or_init(|| trained(ChannelSpec::awgn(0.0).unwrap(), 0.01))
}

fn mean_psnr(model: &JsccModel<f32>, set: &[Sample<f32>], spec: &ChannelSpec, seed: u64) -> f64 {
    let mut total = 0.0;
    for (i, s) in set.iter().enumerate() {
        let mut rng = RngStream::new(seed, i as u64);
        let y = apply(&jscc_encode(model, &s.input).unwrap(), spec, &mut rng);
        let out = jscc_decode(model, &y).unwrap();
        total += psnr(&tensor_to_image(&s.input).unwrap(), &tensor_to_image(&out).unwrap()).unwrap();
    }
    total / set.len() as f64
}

#[test]
fn training_reduces_loss_fivefold() {
    let t = noiseless_model();
    let last = *t.history.last().unwrap();
    eprintln!("initial {} first epoch {} final {}", t.initial_loss, t.history[0], last);
    assert!(last < t.initial_loss / 5.0);
    assert!(last < t.history[0] / 5.0);
}

#[test]
fn trained_model_gains_six_db_on_held_out_images() {
    let t = noiseless_model();
    let held_out = toy_set(50, 99);
    let before = mean_psnr(&untrained(), &held_out, &ChannelSpec::Noiseless, 0);
    let after = mean_psnr(&t.model, &held_out, &ChannelSpec::Noiseless, 0);
    eprintln!("held-out PSNR {before:.2} -> {after:.2} dB");
    assert!(after >= before + 6.0);
}

#[test]
fn noiseless_loss_not_above_noisy_loss() {
    let t = awgn_model();
    let batch = toy_set(20, 7);
    let (mut clean, mut noisy) = (0.0, 0.0);
    for seed in 0..100 {
        let mut rng = RngStream::new(seed, 1);
        clean += forward_loss(&t.model, &batch, LossKind::Mse, &ChannelSpec::Noiseless, &mut rng).unwrap();
        noisy += forward_loss(&t.model, &batch, LossKind::Mse, &ChannelSpec::awgn(0.0).unwrap(), &mut rng).unwrap();
    }
    eprintln!("mean loss noiseless {} awgn 0 dB {}", clean / 100.0, noisy / 100.0);
    assert!(clean <= noisy);
}

#[test]
fn psnr_degrades_gracefully_with_snr() {
    let t = awgn_model();
    let test = toy_set(200, 1234);
    let grid = [-5.0, 0.0, 5.0, 10.0, 15.0];
    let curve: Vec<f64> = grid.iter().map(|&snr| mean_psnr(&t.model, &test, &ChannelSpec::awgn(snr).unwrap(), 5)).collect();
    eprintln!("PSNR over {grid:?}: {curve:?}");
    for w in curve.windows(2) {
        assert!(w[1] >= w[0] - 0.5, "{curve:?}");
    }
}
