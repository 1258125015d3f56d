use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use comv_core::channel::RngStream;
use comv_core::jscc::{history_csv, load_checkpoint, save_checkpoint, CompressionRatio, Head, JsccConfig, JsccModel};
use comv_core::nn::Trainable;
use comv_core::semantic::ops::BackboneClassifier;
use comv_core::semantic::pipeline::CoopClassifier;
use comv_core::{Real, RealJscc};

use comv_harness::config::ExperimentConfig;
use comv_harness::dataset::{synth_dataset, DatasetFile};
use comv_harness::experiments::{self, ClassificationModels};
use comv_harness::{emit_csv, kbsim};

#[derive(Parser)]
#[command(name = "comv", version, about = "Cooperative multi-vehicle semantic communication experiments")]
struct Cli {
    /// TOML configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for datasets, checkpoints, CSVs and traces.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Classification,
    Detection,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic splits as SVDS1 files.
    Synth,
    /// Train models and write SJSC1 checkpoints.
    Train {
        #[arg(long, value_enum, default_value = "all")]
        task: Task,
    },
    /// Classification sweep over schemes, SNRs and seeds, plus the digital
    /// baseline sweep and its FEC threshold.
    Sweep {
        /// Fail instead of training when checkpoints are missing.
        #[arg(long)]
        no_train: bool,
    },
    /// Multi-view detection experiment.
    Detect {
        #[arg(long)]
        no_train: bool,
    },
    /// Per-image timing of the JSCC and digital chains.
    Bench {
        #[arg(long)]
        no_train: bool,
    },
    /// Knowledge-base protocol simulation; writes the trace.
    KbSim,
    /// Print the effective configuration as TOML.
    Config,
}

const SINGLE_CKPT: &str = "classifier_single.sjsc";
const COOP_CKPT: &str = "classifier_coop.sjsc";
const BACKBONE_CKPT: &str = "backbone.sjsc";
const DETECT_CKPT: &str = "detector.sjsc";

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if matches!(cli.command, Command::Config) {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth => synth(&cfg, out),
        Command::Train { task } => {
            if task != Task::Detection {
                train_classification(&cfg, out)?;
            }
            if task != Task::Classification {
                train_detection(&cfg, out)?;
            }
            Ok(())
        }
        Command::Sweep { no_train } => sweep(&cfg, out, no_train),
        Command::Detect { no_train } => detect(&cfg, out, no_train),
        Command::Bench { no_train } => bench(&cfg, out, no_train),
        Command::KbSim => kb_sim(&cfg, out),
        Command::Config => unreachable!("handled above"),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = synth_dataset(cfg, cfg.seed)?;
    let files = [
        ("classification_train.svds", DatasetFile::from_classification(&data.train_items)),
        ("classification_test.svds", DatasetFile::from_classification(&data.test_items)),
        ("detection_train.svds", DatasetFile::from_scenes(&data.train_scenes)),
        ("detection_test.svds", DatasetFile::from_scenes(&data.test_scenes)),
    ];
    for (name, file) in files {
        let file = file.with_context(|| format!("building {name}"))?;
        write(&out.join(name), file.to_bytes()?)?;
        println!("{name}: {} items", file.items.len());
    }
    Ok(())
}

fn train_classification(cfg: &ExperimentConfig, out: &Path) -> Result<ClassificationModels> {
    let data = synth_dataset(cfg, cfg.seed)?;
    let models = experiments::train_classification(cfg, &data.train_items, cfg.seed)?;
    write(&out.join(SINGLE_CKPT), save_checkpoint(&models.single.params()))?;
    write(&out.join(COOP_CKPT), save_checkpoint(&models.coop.params()))?;
    write(&out.join(BACKBONE_CKPT), save_checkpoint(&models.backbone.params()))?;
    for (name, h) in &models.histories {
        write(&out.join(format!("history_{name}.csv")), history_csv(h))?;
    }
    println!("classification models written to {}", out.display());
    Ok(models)
}

fn train_detection(cfg: &ExperimentConfig, out: &Path) -> Result<RealJscc> {
    let data = synth_dataset(cfg, cfg.seed)?;
    let (model, history) = experiments::train_detection_model(cfg, &data.train_scenes, cfg.seed)?;
    write(&out.join(DETECT_CKPT), save_checkpoint(&model.params()))?;
    write(&out.join("history_detector.csv"), history_csv(&history))?;
    println!("detection codec written to {}", out.display());
    Ok(model)
}

fn read_checkpoint<M: Trainable<Real>>(model: &mut M, path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    model.set_params(&load_checkpoint(&bytes)?).with_context(|| format!("loading {}", path.display()))
}

fn classification_models(cfg: &ExperimentConfig, out: &Path, no_train: bool) -> Result<ClassificationModels> {
    let paths = [SINGLE_CKPT, COOP_CKPT, BACKBONE_CKPT].map(|n| out.join(n));
    if !paths.iter().all(|p| p.exists()) {
        if no_train {
            bail!("missing classification checkpoints in {} and training is disabled", out.display());
        }
        return train_classification(cfg, out);
    }
    let c = &cfg.classification;
    let d = &cfg.dataset;
    let shape = [1, d.class_side, d.class_side];
    let mut rng = RngStream::new(0, 0);
    let ratio = CompressionRatio::new(c.ratio)?;
    let mut single = CoopClassifier::<Real>::new(shape, ratio, c.feature_dim, d.classes, d.users, c.fusion.into(), &mut rng)?;
    let mut coop = single.clone();
    let mut backbone = BackboneClassifier::<Real>::new(shape, c.feature_dim, c.feature_dim, d.classes, &mut rng)?;
    read_checkpoint(&mut single, &paths[0])?;
    read_checkpoint(&mut coop, &paths[1])?;
    read_checkpoint(&mut backbone, &paths[2])?;
    Ok(ClassificationModels { single, coop, backbone, histories: vec![] })
}

fn detection_model(cfg: &ExperimentConfig, out: &Path, no_train: bool) -> Result<RealJscc> {
    let path = out.join(DETECT_CKPT);
    if !path.exists() {
        if no_train {
            bail!("missing {} and training is disabled", path.display());
        }
        return train_detection(cfg, out);
    }
    let side = cfg.dataset.view_side;
    let config = JsccConfig::new([1, side, side], CompressionRatio::new(cfg.detection.ratio)?, Head::Reconstruction);
    let mut model = JsccModel::<Real>::new(config, &mut RngStream::new(0, 0))?;
    read_checkpoint(&mut model, &path)?;
    Ok(model)
}

fn sweep(cfg: &ExperimentConfig, out: &Path, no_train: bool) -> Result<()> {
    let models = classification_models(cfg, out, no_train)?;
    let data = synth_dataset(cfg, cfg.seed)?;
    let records = experiments::run_classification_sweep(cfg, &models, &data.test_items)?;
    emit_csv(&records, &out.join("sweep.csv"))?;
    let baseline = experiments::run_baseline_sweep(cfg, &models.backbone, &data.test_items)?;
    emit_csv(&baseline, &out.join("baseline.csv"))?;
    let threshold = experiments::fec_threshold(cfg, cfg.seed)?;
    let budget = experiments::digital_budget_bits(cfg)?;
    let symbols = experiments::classification_symbols(cfg)?;
    let summary = format!(
        "fec_threshold_db={threshold:.2}\nfer_target={}\njscc_channel_uses_per_view={symbols}\ndigital_budget_bits_per_view={budget}\n",
        cfg.digital.fer_target
    );
    write(&out.join("threshold.txt"), &summary)?;
    print!("{summary}");
    println!("{} sweep records, {} baseline records", records.len(), baseline.len());
    Ok(())
}

fn detect(cfg: &ExperimentConfig, out: &Path, no_train: bool) -> Result<()> {
    let model = detection_model(cfg, out, no_train)?;
    let (records, seeds) = experiments::run_detection_experiment(cfg, &model)?;
    emit_csv(&records, &out.join("detect.csv"))?;
    for s in &seeds {
        println!(
            "seed {}: multi recall {:.3}, best single (user {}) {:.3}, ratio {:.2}, registration failures {}/{}",
            s.seed,
            s.multi_recall,
            s.best_user,
            s.single_recall,
            s.ratio(),
            s.registration_failures,
            s.scenes
        );
    }
    let mean = seeds.iter().map(|s| s.ratio()).sum::<f64>() / seeds.len() as f64;
    println!("mean recall ratio {mean:.3}");
    Ok(())
}

fn bench(cfg: &ExperimentConfig, out: &Path, no_train: bool) -> Result<()> {
    let models = classification_models(cfg, out, no_train)?;
    let data = synth_dataset(cfg, cfg.seed)?;
    let (records, summaries) = experiments::bench(cfg, &models, &data.test_items)?;
    emit_csv(&records, &out.join("bench.csv"))?;
    for s in &summaries {
        println!("{}: median {:.3} ms/image, mean {:.3} ms/image over {:?}", s.scheme, s.median_ms, s.mean_ms, s.per_repetition_ms);
    }
    Ok(())
}

fn kb_sim(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let outcome = kbsim::run(&cfg.kb, cfg.seed)?;
    write(&out.join("kb_trace.txt"), outcome.trace_text())?;
    println!(
        "{} trace records; servers agree: {}",
        outcome.trace.len(),
        outcome.state.servers_agree()
    );
    for (id, s) in outcome.state.servers() {
        println!("{id}: shared version {}, {} keys, {} private replicas", s.shared_version, s.shared.len(), s.replicas.len());
    }
    Ok(())
}
