#![allow(dead_code)]

use comv_harness::ExperimentConfig;

/// Small enough that training and every sweep run in a few seconds.
pub fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.train_items = 24;
    cfg.dataset.test_items = 8;
    cfg.dataset.train_scenes = 3;
    cfg.dataset.test_scenes = 3;
    for t in [&mut cfg.classification.single, &mut cfg.classification.coop, &mut cfg.classification.backbone] {
        t.epochs = 1;
    }
    cfg.detection.training.epochs = 1;
    cfg.detection.max_registration_failure = 1.0;
    cfg.sweep.snr_db = vec![0.0, 10.0];
    cfg.sweep.seeds = vec![0, 1];
    cfg.digital.fer_frames = 20;
    cfg.bench.images = 4;
    cfg.bench.repetitions = 2;
    cfg
}
