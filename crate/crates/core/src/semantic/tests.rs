use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::detect::{detect, shape_features};
use super::ops::*;
use super::registration::*;
use super::scene::*;
use crate::channel::{ChannelSpec, RngStream, SymbolBlock};
use crate::image::ImageTensor;
use crate::jscc::{image_to_tensor, jscc_decode, jscc_encode, CompressionRatio, Head, JsccConfig, JsccModel};
use crate::nn::{Sequential, Tensor, Trainable};

fn textured(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::new(h, w, 1, (0..h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
}

#[test]
fn occlusion_examples() {
    let img = textured(32, 32, 1);
    let mut rng = RngStream::new(3, 0);
    assert_eq!(occlude(&img, 0.0, &mut rng).unwrap(), img);
    let full = occlude(&img, 1.0, &mut rng).unwrap();
    assert!(full.data().iter().all(|&v| v == OCCLUDER_VALUE));
    for _ in 0..50 {
        let (x, y, w, h) = occluder_rect(32, 32, 0.45, &mut rng).unwrap().unwrap();
        assert!(x + w <= 32 && y + h <= 32);
        assert!((w as i64 * h as i64 - 461).abs() <= 1);
    }
    let o = occlude(&img, 0.45, &mut rng).unwrap();
    let masked = o.data().iter().zip(img.data()).filter(|(a, b)| a != b).count();
    assert!((masked as i64 - 461).abs() <= 1);
    assert!(occlude(&img, 1.5, &mut rng).is_err());
    assert!(occlude(&img, -0.1, &mut rng).is_err());
}

#[test]
fn occlusion_is_seeded() {
    let img = textured(16, 24, 2);
    let a = occlude(&img, 0.3, &mut RngStream::new(9, 1)).unwrap();
    let b = occlude(&img, 0.3, &mut RngStream::new(9, 1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fuse_users_examples() {
    let f = |v: Vec<f64>| SemanticFeature::new(v).unwrap();
    let a = f(vec![0.0, 2.0]);
    let b = f(vec![2.0, 0.0]);
    assert_eq!(fuse_users(&[a.clone(), b.clone()], &FusionSpec::Mean).unwrap().values(), &[1.0, 1.0]);
    assert_eq!(fuse_users(&[a.clone(), a.clone(), a.clone()], &FusionSpec::Mean).unwrap(), a);
    let w = fuse_users(&[a.clone(), b.clone()], &FusionSpec::ConfidenceWeighted(vec![0.9, 0.1])).unwrap();
    assert!((w.values()[0] - 0.2).abs() < 1e-12 && (w.values()[1] - 1.8).abs() < 1e-12);
    assert_eq!(fuse_users(&[a.clone(), b.clone()], &FusionSpec::Concat).unwrap().values(), &[0.0, 2.0, 2.0, 0.0]);
    assert!(fuse_users::<f64>(&[], &FusionSpec::Mean).is_err());
    assert!(fuse_users(&[a.clone(), f(vec![1.0])], &FusionSpec::Mean).is_err());
    assert!(SemanticFeature::new(vec![f64::NAN]).is_err());
}

#[test]
fn vote_examples() {
    assert_eq!(vote(&[(1, 0.3), (1, 0.3), (2, 0.9)]).unwrap(), 1);
    assert_eq!(vote(&[(1, 0.6), (2, 0.9)]).unwrap(), 2);
    assert_eq!(vote(&[(1, 0.5), (2, 0.5)]).unwrap(), 1);
    assert_eq!(vote(&[(2, 0.5), (1, 0.5)]).unwrap(), 1);
    assert!(vote(&[]).is_err());
}

#[test]
fn classify_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut fcn = Sequential::<f64>::new(classifier_layers(8, 6, 4, &mut rng));
    let feat = SemanticFeature::new((0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
    let p = classify(&fcn, &feat).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let zero = fcn.params().zeros_like();
    fcn.set_params(&zero).unwrap();
    assert!(classify(&fcn, &feat).unwrap().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    assert!(classify(&fcn, &SemanticFeature::new(vec![1.0; 3]).unwrap()).is_err());
}

#[test]
fn extract_semantic_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let backbone = Sequential::<f32>::new(backbone_layers([1, 16, 16], FEATURE_DIM, &mut rng).unwrap());
    let img = textured(16, 16, 6);
    let a = extract_semantic(&backbone, &img).unwrap();
    assert_eq!(a.dim(), FEATURE_DIM);
    assert_eq!(a, extract_semantic(&backbone, &img).unwrap());
    let zero = ImageTensor::filled(16, 16, 1, 0.0).unwrap();
    assert!(extract_semantic(&backbone, &zero).unwrap().values().iter().all(|v| v.is_finite()));
    assert!(extract_semantic(&backbone, &textured(8, 16, 1)).is_err());
}

#[test]
fn zero_thermal_leaves_visual_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut towers = TwoTower::<f64>::new(16, 16, 12, &mut rng).unwrap();
    // Nonzero biases everywhere a bias is allowed.
    let mut p = towers.params();
    for a in &mut p.arrays {
        a.values.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    }
    towers.set_params(&p).unwrap();
    let vis = textured(16, 16, 8);
    let sample = MultiModalSample::new(vis.clone(), ImageTensor::filled(16, 16, 1, 0.0).unwrap()).unwrap();
    let fused = fuse_modalities(&towers, &sample).unwrap();
    let mut a = image_to_tensor::<f64>(&vis);
    for s in &towers.visual {
        a = s.forward(&a).unwrap();
    }
    let visual_only = towers.head.forward(&a).unwrap();
    assert_eq!(fused.values(), visual_only.data());
    assert_eq!(fused, fuse_modalities(&towers, &sample).unwrap());
    let bad = MultiModalSample { visual: textured(8, 8, 1), thermal: textured(8, 8, 2) };
    assert!(fuse_modalities(&towers, &bad).is_err());
}

#[test]
fn two_tower_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut towers = TwoTower::<f64>::new(8, 8, 3, &mut rng).unwrap();
    let mut p = towers.params();
    for a in &mut p.arrays {
        a.values.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    }
    towers.set_params(&p).unwrap();
    let vis = image_to_tensor::<f64>(&textured(8, 8, 10));
    let th = image_to_tensor::<f64>(&textured(8, 8, 11));
    let loss = |t: &TwoTower<f64>| -> f64 {
        let tr = t.forward_trace(&vis, &th).unwrap();
        crate::nn::cross_entropy(tr.output().data(), 1).0
    };
    let tr = towers.forward_trace(&vis, &th).unwrap();
    let (_, g) = crate::nn::cross_entropy(tr.output().data(), 1);
    let mut grads = towers.params().zeros_like();
    towers.backward(&tr, Tensor::vector(g), &mut grads.arrays).unwrap();
    let base = towers.params();
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for (ai, arr) in base.arrays.iter().enumerate() {
        for vi in 0..arr.values.len() {
            let mut q = base.clone();
            q.arrays[ai].values[vi] += eps;
            let mut tp = towers.clone();
            tp.set_params(&q).unwrap();
            let lp = loss(&tp);
            q.arrays[ai].values[vi] -= 2.0 * eps;
            tp.set_params(&q).unwrap();
            let lm = loss(&tp);
            let mut fd = (lp - lm) / (2.0 * eps);
            // Thermal biases are pinned at zero by set_params.
            if grads.arrays[ai].values[vi] == 0.0 && fd.abs() < 1e-12 {
                fd = 0.0;
            }
            let gv = grads.arrays[ai].values[vi];
            worst = worst.max((fd - gv).abs() / fd.abs().max(gv.abs()).max(1e-7));
        }
    }
    assert!(worst <= 1e-3, "max relative error {worst}");
}

fn feature_model(seed: u64) -> JsccModel<f64> {
    let cfg = JsccConfig::new([1, 16, 16], CompressionRatio::new(0.05).unwrap(), Head::Feature { dim: 10 });
    JsccModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn cooperative_decode_reductions() {
    let model = feature_model(12);
    let x = image_to_tensor::<f64>(&textured(16, 16, 13));
    let mut rng = RngStream::new(1, 1);
    let y = crate::channel::apply(&jscc_encode(&model, &x).unwrap(), &ChannelSpec::awgn(5.0).unwrap(), &mut rng);
    let solo = cooperative_decode(&model, std::slice::from_ref(&y)).unwrap();
    assert_eq!(solo[0], jscc_decode(&model, &y).unwrap());
    let twice = cooperative_decode(&model, &[y.clone(), y.clone()]).unwrap();
    assert_eq!(twice[0], twice[1]);
    let short = SymbolBlock::from_interleaved(&[0.1f64, 0.2]).unwrap();
    assert!(cooperative_decode(&model, &[y, short]).is_err());
}

#[test]
fn cooperative_reconstruction_is_clamped() {
    let cfg = JsccConfig::new([1, 16, 16], CompressionRatio::new(0.1).unwrap(), Head::Reconstruction);
    let model = JsccModel::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let blocks: Vec<_> = (0..3).map(|s| jscc_encode(&model, &image_to_tensor(&textured(16, 16, s))).unwrap()).collect();
    for out in cooperative_decode(&model, &blocks).unwrap() {
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn registration_recovers_known_shift() {
    let scene = textured(20, 20, 14);
    let a = scene.crop(0, 0, 8, 8).unwrap();
    let b = scene.crop(3, 5, 8, 8).unwrap();
    assert_eq!(register_views(&[a.clone(), b.clone()]).unwrap(), vec![(0, 0), (5, 3)]);
    assert_eq!(register_views_within(&[a.clone(), a.clone()], (0.2, 1.0)).unwrap(), vec![(0, 0), (0, 0)]);
    let c = scene.crop(6, 2, 8, 8).unwrap();
    assert_eq!(register_views(&[a.clone(), b, c]).unwrap(), vec![(0, 0), (5, 3), (2, 6)]);
    assert!(register_views(&[a.clone()]).is_err());
    let flat = ImageTensor::filled(8, 8, 1, 0.3).unwrap();
    assert!(matches!(register_views(&[flat.clone(), flat]), Err(crate::Error::Registration(_))));
}

#[test]
fn registration_on_rendered_scene() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let render = RenderSpec { noise_std: 0.02, ..RenderSpec::default() };
    for _ in 0..5 {
        let vs = render_scene(&SceneSpec::default(), &render, &mut rng).unwrap();
        let imgs: Vec<_> = vs.views.iter().map(|v| v.visual.clone()).collect();
        let got = register_views(&imgs).unwrap();
        let (x0, y0) = vs.true_offsets[0];
        for (g, t) in got.iter().zip(&vs.true_offsets) {
            assert_eq!(*g, (t.0 - x0, t.1 - y0));
        }
    }
}

#[test]
fn compose_examples() {
    let a = textured(8, 8, 16);
    assert_eq!(compose(std::slice::from_ref(&a), &[(0, 0)]).unwrap(), a);
    let both = compose(&[a.clone(), a.clone()], &[(0, 0), (0, 0)]).unwrap();
    assert_eq!(both, a);
    let scene = textured(16, 16, 17);
    let v0 = scene.crop(0, 0, 8, 8).unwrap();
    let v1 = scene.crop(2, 4, 8, 8).unwrap();
    let c = compose(&[v0.clone(), v1], &[(0, 0), (4, 2)]).unwrap();
    assert_eq!((c.height(), c.width()), (10, 12));
    assert!(c.sample_count() > v0.sample_count());
    for y in 0..10 {
        for x in 0..12 {
            let covered = (y < 8 && x < 8) || (y >= 2 && x >= 4);
            let expect = if covered { scene.get(0, y, x) } else { 0.0 };
            assert!((c.get(0, y, x) - expect).abs() < 1e-6);
        }
    }
    let neg = compose(&[v0.clone(), v0], &[(0, 0), (-3, -1)]).unwrap();
    assert_eq!((neg.height(), neg.width()), (9, 11));
}

fn dark(side: usize) -> Vec<f32> {
    vec![0.1; side * side]
}

#[test]
fn detect_examples() {
    assert!(detect(&ImageTensor::filled(32, 32, 1, 0.1).unwrap(), 0.4).unwrap().is_empty());
    let mut d = dark(40);
    for y in 10..22 {
        for x in 5..17 {
            d[y * 40 + x] = 0.9;
        }
    }
    let one = detect(&ImageTensor::new(40, 40, 1, d.clone()).unwrap(), 0.4).unwrap();
    assert_eq!(one.len(), 1);
    let b = &one[0];
    assert_eq!((b.x, b.y, b.w, b.h, b.class_id), (5.0, 10.0, 12.0, 12.0, 0));
    assert!((b.score - 0.9).abs() < 1e-6);
    for y in 28..36 {
        for x in 28..36 {
            d[y * 40 + x] = 0.8;
        }
    }
    assert_eq!(detect(&ImageTensor::new(40, 40, 1, d).unwrap(), 0.4).unwrap().len(), 2);
    assert!(detect(&ImageTensor::filled(8, 8, 1, 0.0).unwrap(), 1.0).is_err());
}

#[test]
fn crop_classifier_labels_clean_shapes() {
    let spec = RenderSpec { texture_amp: 0.05, noise_std: 0.0, ..RenderSpec::default() };
    let mut correct = 0;
    let mut total = 0;
    for class in 0..NUM_CLASSES {
        for size in [8.0, 9.5, 11.0, 12.5, 14.0] {
            let t = Target { class, cx: 20.3, cy: 19.6, size, brightness: 0.8 };
            let mut img = vec![0.1f32; 40 * 40];
            paint_targets(&mut img, 40, std::slice::from_ref(&t), &spec);
            let dets = detect(&ImageTensor::new(40, 40, 1, img).unwrap(), 0.4).unwrap();
            assert_eq!(dets.len(), 1);
            assert!(dets[0].iou(&t.bbox()) > 0.9);
            correct += usize::from(dets[0].class_id == class);
            total += 1;
        }
    }
    assert_eq!(correct, total);
    let f = shape_features(&[true; 16], 4, 4);
    assert_eq!(f[0], 1.0);
}

#[test]
fn scene_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let spec = SceneSpec::default();
    for _ in 0..30 {
        let vs = render_scene(&spec, &RenderSpec::default(), &mut rng).unwrap();
        assert_eq!(vs.views.len(), 3);
        assert_eq!(vs.true_offsets.len(), 3);
        for w in vs.true_offsets.windows(2) {
            let o = overlap_fraction(48, w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!((0.2..=0.5).contains(&o), "overlap {o}");
        }
        assert!((1..=5).contains(&vs.targets.len()));
        for t in &vs.truth_boxes() {
            let inside = vs.true_offsets.iter().any(|&(x, y)| {
                t.x >= x as f64 && t.y >= y as f64 && t.x + t.w <= (x + 48) as f64 && t.y + t.h <= (y + 48) as f64
            });
            assert!(inside);
        }
        for (v, &(x, y)) in vs.views.iter().zip(&vs.true_offsets) {
            assert!(x >= 0 && y >= 0 && x + 48 <= 96 && y + 48 <= 96);
            assert_eq!(v.visual.shape(), [1, 48, 48]);
        }
    }
    let a = render_scene(&spec, &RenderSpec::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = render_scene(&spec, &RenderSpec::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    let bad = SceneSpec { view_side: 100, ..SceneSpec::default() };
    assert!(render_scene(&bad, &RenderSpec::default(), &mut rng).is_err());
}

#[test]
fn classification_items() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let item = render_classification_item(32, 3, 2, &RenderSpec::default(), &mut rng).unwrap();
    assert_eq!(item.views.len(), 3);
    assert_eq!(item.label, 2);
    // Heat follows the class.
    let hot = item.views[0].thermal.get(0, 16, 16);
    assert!((hot - class_heat(2)).abs() < 0.25);
}

mod props {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mean_fusion_permutation_invariant(vals in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..6), seed in any::<u64>()) {
            let feats: Vec<_> = vals.into_iter().map(|v| SemanticFeature::new(v).unwrap()).collect();
            let mut shuffled = feats.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = fuse_users(&feats, &FusionSpec::Mean).unwrap();
            let b = fuse_users(&shuffled, &FusionSpec::Mean).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn vote_permutation_invariant(votes in proptest::collection::vec((0usize..4, 0.0f64..1.0), 1..8), seed in any::<u64>()) {
            let mut shuffled = votes.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(vote(&votes).unwrap(), vote(&shuffled).unwrap());
        }

        #[test]
        fn occluded_area_within_one_pixel(h in 8usize..40, w in 8usize..40, rate in 0.0f64..=1.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let area = (rate * (h * w) as f64).round() as i64;
            match occluder_rect(h, w, rate, &mut rng).unwrap() {
                None => prop_assert_eq!(area, 0),
                Some((x, y, rw, rh)) => {
                    prop_assert!(x + rw <= w && y + rh <= h);
                    // Exact within one pixel whenever the area factors that closely.
                    let feasible = (1..=w).any(|c| { let r = ((area as f64 / c as f64).round() as usize).clamp(1, h); (c as i64 * r as i64 - area).abs() <= 1 });
                    if feasible {
                        prop_assert!((rw as i64 * rh as i64 - area).abs() <= 1);
                    }
                }
            }
            let _ = rng.random::<u8>();
        }
    }
}
