//! Synthetic dataset generation and the SVDS1 split container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SVDS1"  u8 split (0 classification, 1 detection)
//! u32 items  u32 views  u32 height  u32 width  u32 planes (= 2: visual, thermal)
//! items * views * planes * height * width pixel bytes, round(255 * v)
//! u32 metadata length, metadata text
//! ```
//!
//! Metadata is one record per line: `item=<i> label=<l>` for classification,
//! and `item=<i> view=<u> x=<x> y=<y>` plus
//! `item=<i> box=<x>,<y>,<w>,<h> class=<c>` for detection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, ensure, Context, Result};
use rand::Rng;

use comv_core::channel::RngStream;
use comv_core::image::ImageTensor;
use comv_core::semantic::metrics::DetBox;
use comv_core::semantic::scene::{render_classification_item, render_scene, ClassificationItem, MultiModalSample, ViewSet};

use crate::config::ExperimentConfig;

pub const DATASET_MAGIC: &[u8; 5] = b"SVDS1";
const PLANES: usize = 2;

const TRAIN_ITEMS_TAG: u64 = 0x11;
const TEST_ITEMS_TAG: u64 = 0x12;
const TRAIN_SCENES_TAG: u64 = 0x21;
const TEST_SCENES_TAG: u64 = 0x22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Classification,
    Detection,
}

/// All generated data for one seed.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train_items: Vec<ClassificationItem>,
    pub test_items: Vec<ClassificationItem>,
    pub train_scenes: Vec<ViewSet>,
    pub test_scenes: Vec<ViewSet>,
}

pub fn classification_items(cfg: &ExperimentConfig, count: usize, rng: &mut impl Rng) -> Result<Vec<ClassificationItem>> {
    let d = &cfg.dataset;
    let render = d.class_render();
    (0..count)
        .map(|i| Ok(render_classification_item(d.class_side, d.users, i % d.classes, &render, rng)?))
        .collect()
}

pub fn scenes(cfg: &ExperimentConfig, count: usize, rng: &mut impl Rng) -> Result<Vec<ViewSet>> {
    let spec = cfg.dataset.scene_spec();
    let render = cfg.dataset.scene_render();
    (0..count).map(|_| Ok(render_scene(&spec, &render, rng)?)).collect()
}

/// Generates every split from independent streams of `seed`.
pub fn synth_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<SyntheticData> {
    cfg.validate()?;
    let d = &cfg.dataset;
    Ok(SyntheticData {
        train_items: classification_items(cfg, d.train_items, &mut RngStream::new(seed, TRAIN_ITEMS_TAG))?,
        test_items: classification_items(cfg, d.test_items, &mut RngStream::new(seed, TEST_ITEMS_TAG))?,
        train_scenes: scenes(cfg, d.train_scenes, &mut RngStream::new(seed, TRAIN_SCENES_TAG))?,
        test_scenes: scenes(cfg, d.test_scenes, &mut RngStream::new(seed, TEST_SCENES_TAG))?,
    })
}

/// One decoded dataset item.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredItem {
    pub views: Vec<MultiModalSample>,
    pub label: Option<usize>,
    pub offsets: Vec<(i64, i64)>,
    pub boxes: Vec<DetBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub split: Split,
    pub height: usize,
    pub width: usize,
    pub items: Vec<StoredItem>,
}

impl DatasetFile {
    pub fn from_classification(items: &[ClassificationItem]) -> Result<Self> {
        let first = items.first().context("empty split")?;
        let shape = first.views[0].visual.shape();
        Ok(Self {
            split: Split::Classification,
            height: shape[1],
            width: shape[2],
            items: items
                .iter()
                .map(|i| StoredItem { views: i.views.clone(), label: Some(i.label), offsets: vec![], boxes: vec![] })
                .collect(),
        })
    }

    pub fn from_scenes(scenes: &[ViewSet]) -> Result<Self> {
        let first = scenes.first().context("empty split")?;
        let shape = first.views[0].visual.shape();
        Ok(Self {
            split: Split::Detection,
            height: shape[1],
            width: shape[2],
            items: scenes
                .iter()
                .map(|s| StoredItem { views: s.views.clone(), label: None, offsets: s.true_offsets.clone(), boxes: s.truth_boxes() })
                .collect(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let views = self.items.first().map_or(0, |i| i.views.len());
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.push(match self.split {
            Split::Classification => 0,
            Split::Detection => 1,
        });
        for v in [self.items.len(), views, self.height, self.width, PLANES] {
            out.extend_from_slice(&u32::try_from(v).context("dimension exceeds u32")?.to_le_bytes());
        }
        let mut meta = String::new();
        for (i, item) in self.items.iter().enumerate() {
            ensure!(item.views.len() == views, "item {i} has {} views, expected {views}", item.views.len());
            for v in &item.views {
                for plane in [&v.visual, &v.thermal] {
                    ensure!(plane.shape() == [1, self.height, self.width], "item {i} has a view of the wrong shape");
                    out.extend(plane.data().iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
                }
            }
            if let Some(l) = item.label {
                writeln!(meta, "item={i} label={l}")?;
            }
            for (u, (x, y)) in item.offsets.iter().enumerate() {
                writeln!(meta, "item={i} view={u} x={x} y={y}")?;
            }
            for b in &item.boxes {
                writeln!(meta, "item={i} box={},{},{},{} class={}", b.x, b.y, b.w, b.h, b.class_id)?;
            }
        }
        out.extend_from_slice(&u32::try_from(meta.len()).context("metadata too long")?.to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).context("dataset file truncated")?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        ensure!(take(5)? == DATASET_MAGIC, "not an SVDS1 file");
        let split = match take(1)?[0] {
            0 => Split::Classification,
            1 => Split::Detection,
            k => bail!("unknown split kind {k}"),
        };
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        }
        let [items, views, height, width, planes] = dims;
        ensure!(planes == PLANES, "expected {PLANES} planes, found {planes}");
        let plane_len = height.checked_mul(width).context("dimension overflow")?;
        let total = [items, views, planes].iter().try_fold(plane_len, |a, &b| a.checked_mul(b)).context("dimension overflow")?;
        let pixels = take(total)?;
        let meta_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let meta = std::str::from_utf8(take(meta_len)?).context("metadata is not UTF-8")?;
        ensure!(pos == bytes.len(), "trailing bytes after metadata");

        let plane = |k: usize| -> Result<ImageTensor> {
            let data = pixels[k * plane_len..(k + 1) * plane_len].iter().map(|&b| f32::from(b) / 255.0).collect();
            Ok(ImageTensor::new(height, width, 1, data)?)
        };
        let mut out: Vec<StoredItem> = (0..items)
            .map(|i| {
                let views = (0..views)
                    .map(|u| {
                        let k = (i * views + u) * planes;
                        Ok(MultiModalSample::new(plane(k)?, plane(k + 1)?)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(StoredItem { views, label: None, offsets: vec![], boxes: vec![] })
            })
            .collect::<Result<_>>()?;
        for line in meta.lines() {
            let f: BTreeMap<&str, &str> = line.split_whitespace().filter_map(|t| t.split_once('=')).collect();
            let i: usize = f.get("item").context("metadata line lacks item")?.parse()?;
            let item = out.get_mut(i).with_context(|| format!("metadata refers to item {i}"))?;
            if let Some(l) = f.get("label") {
                item.label = Some(l.parse()?);
            } else if let (Some(x), Some(y)) = (f.get("x"), f.get("y")) {
                item.offsets.push((x.parse()?, y.parse()?));
            } else if let Some(b) = f.get("box") {
                let v: Vec<f64> = b.split(',').map(str::parse).collect::<Result<_, _>>()?;
                ensure!(v.len() == 4, "box needs four numbers");
                let class_id = f.get("class").context("box without class")?.parse()?;
                item.boxes.push(DetBox { x: v[0], y: v[1], w: v[2], h: v[3], score: 1.0, class_id });
            } else {
                bail!("unrecognised metadata line '{line}'");
            }
        }
        Ok(Self { split, height, width, items: out })
    }
}
