//! Synthetic multi-vehicle scenes: shape targets with class textures, a
//! thermal rendering, and overlapping per-user views.

use rand::Rng;

use super::metrics::DetBox;
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Target classes in id order.
pub const CLASS_NAMES: [&str; 4] = ["square", "disc", "triangle", "cross"];
pub const NUM_CLASSES: usize = CLASS_NAMES.len();

/// Brightness range of targets; backgrounds stay at or below [`BACKGROUND_MAX`].
pub const TARGET_RANGE: (f32, f32) = (0.6, 1.0);
pub const BACKGROUND_MAX: f32 = 0.2;

/// Whether pixel offset `(dx, dy)` from the target centre lies inside a
/// target of class `class` and side `size`.
pub fn shape_contains(class: usize, dx: f64, dy: f64, size: f64) -> bool {
    let h = size / 2.0;
    match class {
        0 => dx.abs() <= h && dy.abs() <= h,
        1 => dx * dx + dy * dy <= h * h,
        2 => dy >= -h && dy <= h && dx.abs() <= (dy + h) / 2.0,
        3 => (dx.abs() <= size / 6.0 && dy.abs() <= h) || (dy.abs() <= size / 6.0 && dx.abs() <= h),
        _ => false,
    }
}

/// Class texture in `[-1, 1]` at absolute pixel `(x, y)`.
pub fn class_texture(class: usize, x: usize, y: usize) -> f32 {
    let (x, y) = (x as f32, y as f32);
    match class {
        0 => (std::f32::consts::PI * y / 2.0).cos(),
        1 => 0.0,
        2 => (std::f32::consts::PI * x / 2.0).cos(),
        _ => {
            if ((x as usize / 2) + (y as usize / 2)) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Heat emitted by each class in the thermal modality.
pub fn class_heat(class: usize) -> f32 {
    [0.9, 0.75, 0.6, 0.45][class % NUM_CLASSES]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub class: usize,
    /// Centre in scene pixels.
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
    /// Base brightness in [`TARGET_RANGE`].
    pub brightness: f32,
}

impl Target {
    /// Tight pixel bounding box.
    pub fn bbox(&self) -> DetBox {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let r = self.size / 2.0 + 1.0;
        let lo = |c: f64| (c - r).floor().max(0.0) as usize;
        for y in lo(self.cy)..=(self.cy + r).ceil() as usize {
            for x in lo(self.cx)..=(self.cx + r).ceil() as usize {
                if self.covers(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        DetBox { x: x0 as f64, y: y0 as f64, w: (x1 + 1 - x0) as f64, h: (y1 + 1 - y0) as f64, score: 1.0, class_id: self.class }
    }

    pub fn covers(&self, x: usize, y: usize) -> bool {
        shape_contains(self.class, x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy, self.size)
    }
}

/// Parameters of the scene renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    /// Amplitude of the class texture on targets.
    pub texture_amp: f32,
    /// Standard deviation of per-view sensor noise.
    pub noise_std: f32,
    /// Background value range; the upper end must stay below the target range.
    pub background: (f32, f32),
    /// Highest plane-wave frequency of the background, in cycles per pixel.
    pub background_freq: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self { texture_amp: 0.05, noise_std: 0.05, background: (0.02, BACKGROUND_MAX), background_freq: 0.1 }
    }
}

/// Background in `spec.background`: a sum of random plane waves with
/// frequencies up to `spec.background_freq`.
pub fn background(height: usize, width: usize, spec: &RenderSpec, rng: &mut impl Rng) -> Vec<f32> {
    const WAVES: usize = 6;
    let f = spec.background_freq;
    let waves: Vec<(f64, f64, f64)> = (0..WAVES)
        .map(|_| (rng.random_range(-f..f), rng.random_range(-f..f), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let (lo, hi) = (f64::from(spec.background.0), f64::from(spec.background.1));
    let norm = (WAVES as f64 / 2.0).sqrt() * 2.0;
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let s: f64 = waves
                .iter()
                .map(|(fx, fy, p)| (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + p).sin())
                .sum::<f64>()
                / norm;
            out.push((lo + (hi - lo) * (s + 0.5)).clamp(lo, hi) as f32);
        }
    }
    out
}

/// Paints `targets` over `base` (row-major, `width` wide).
pub fn paint_targets(base: &mut [f32], width: usize, targets: &[Target], spec: &RenderSpec) {
    let height = base.len() / width;
    for t in targets {
        let b = t.bbox();
        for y in b.y as usize..(b.y + b.h) as usize {
            for x in b.x as usize..(b.x + b.w) as usize {
                if y < height && x < width && t.covers(x, y) {
                    let v = t.brightness + spec.texture_amp * class_texture(t.class, x, y);
                    base[y * width + x] = v.clamp(TARGET_RANGE.0, TARGET_RANGE.1);
                }
            }
        }
    }
}

/// Thermal plane: class heat on a cold background, box-blurred twice.
pub fn paint_thermal(height: usize, width: usize, targets: &[Target]) -> Vec<f32> {
    let mut t = vec![0.1f32; height * width];
    for tg in targets {
        let b = tg.bbox();
        for y in b.y as usize..((b.y + b.h) as usize).min(height) {
            for x in b.x as usize..((b.x + b.w) as usize).min(width) {
                if tg.covers(x, y) {
                    t[y * width + x] = class_heat(tg.class);
                }
            }
        }
    }
    box_blur(&box_blur(&t, height, width), height, width)
}

fn box_blur(src: &[f32], height: usize, width: usize) -> Vec<f32> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let (mut s, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    s += src[yy * width + xx];
                    n += 1.0;
                }
            }
            out[y * width + x] = s / n;
        }
    }
    out
}

fn add_noise(data: &mut [f32], std: f32, rng: &mut impl Rng) {
    if std > 0.0 {
        for v in data {
            let n: f32 = rng.sample(rand_distr::StandardNormal);
            *v = (*v + std * n).clamp(0.0, 1.0);
        }
    }
}

/// Visual and thermal planes of the same view.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalSample {
    pub visual: ImageTensor,
    pub thermal: ImageTensor,
}

impl MultiModalSample {
    pub fn new(visual: ImageTensor, thermal: ImageTensor) -> Result<Self> {
        if visual.shape() != thermal.shape() || visual.channels() != 1 {
            return Err(Error::invalid("visual and thermal planes must be single-channel and equally sized"));
        }
        Ok(Self { visual, thermal })
    }
}

/// One single-target classification item seen by every user.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationItem {
    pub label: usize,
    pub views: Vec<MultiModalSample>,
}

/// Renders one centred target of class `label` seen by `users` vehicles.
/// Each user sees the target with its own small shift, background phase and
/// sensor noise.
pub fn render_classification_item(
    side: usize,
    users: usize,
    label: usize,
    spec: &RenderSpec,
    rng: &mut impl Rng,
) -> Result<ClassificationItem> {
    let size = rng.random_range(0.5..0.7) * side as f64;
    let brightness = rng.random_range(0.7..0.9);
    let centre = side as f64 / 2.0;
    let mut views = Vec::with_capacity(users);
    for _ in 0..users {
        let jitter = side as f64 / 16.0;
        let t = Target {
            class: label,
            cx: centre + rng.random_range(-jitter..=jitter),
            cy: centre + rng.random_range(-jitter..=jitter),
            size,
            brightness,
        };
        let mut vis = background(side, side, spec, rng);
        paint_targets(&mut vis, side, std::slice::from_ref(&t), spec);
        add_noise(&mut vis, spec.noise_std, rng);
        let mut th = paint_thermal(side, side, std::slice::from_ref(&t));
        add_noise(&mut th, spec.noise_std, rng);
        views.push(MultiModalSample::new(ImageTensor::new(side, side, 1, vis)?, ImageTensor::new(side, side, 1, th)?)?);
    }
    Ok(ClassificationItem { label, views })
}

/// Geometry of a detection scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub scene_side: usize,
    pub view_side: usize,
    pub users: usize,
    /// Adjacent-view overlap fraction range.
    pub overlap: (f64, f64),
    pub targets: (usize, usize),
    /// Target side range in pixels.
    pub target_size: (f64, f64),
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self { scene_side: 96, view_side: 48, users: 3, overlap: (0.2, 0.5), targets: (1, 5), target_size: (8.0, 14.0) }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.overlap;
        if self.view_side < 8 || self.view_side > self.scene_side {
            return Err(Error::invalid("views must be at least 8 pixels and fit inside the scene"));
        }
        if !(0.0 < lo && lo <= hi && hi < 1.0) || self.users == 0 || self.targets.0 > self.targets.1 {
            return Err(Error::invalid("invalid overlap, user or target range"));
        }
        let reach = self.view_side + (self.users - 1).div_ceil(2) * self.step_for(lo);
        if reach > self.scene_side {
            return Err(Error::invalid(format!("views of {} pixels with overlap {lo} do not fit a {} scene", self.view_side, self.scene_side)));
        }
        Ok(())
    }

    /// Shift along one axis giving the requested overlap fraction.
    fn step_for(&self, overlap: f64) -> usize {
        (self.view_side as f64 * (1.0 - overlap)).round() as usize
    }
}

/// Overlap fraction of two equally sized square views at relative offset.
pub fn overlap_fraction(side: usize, dx: i64, dy: i64) -> f64 {
    let s = side as i64;
    let ox = (s - dx.abs()).max(0);
    let oy = (s - dy.abs()).max(0);
    (ox * oy) as f64 / (s * s) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub scene: ImageTensor,
    pub views: Vec<MultiModalSample>,
    /// Top-left `(x, y)` of each view in scene pixels.
    pub true_offsets: Vec<(i64, i64)>,
    pub targets: Vec<Target>,
}

impl ViewSet {
    /// Ground-truth boxes in scene coordinates.
    pub fn truth_boxes(&self) -> Vec<DetBox> {
        self.targets.iter().map(Target::bbox).collect()
    }
}

/// Renders one multi-target scene and crops the users' views. Adjacent views
/// alternate horizontal and vertical shifts; every target lies fully inside
/// at least one view.
pub fn render_scene(spec: &SceneSpec, render: &RenderSpec, rng: &mut impl Rng) -> Result<ViewSet> {
    spec.validate()?;
    let (n, v) = (spec.scene_side, spec.view_side);
    let mut rel = vec![(0i64, 0i64)];
    for u in 1..spec.users {
        let o = rng.random_range(spec.overlap.0..=spec.overlap.1);
        let step = spec.step_for(o) as i64;
        let sign = if rng.random_bool(0.5) { 1 } else { -1 };
        let (px, py) = rel[u - 1];
        rel.push(if u % 2 == 1 { (px + sign * step, py) } else { (px, py + sign * step) });
    }
    let (min_x, max_x) = (rel.iter().map(|r| r.0).min().unwrap(), rel.iter().map(|r| r.0).max().unwrap());
    let (min_y, max_y) = (rel.iter().map(|r| r.1).min().unwrap(), rel.iter().map(|r| r.1).max().unwrap());
    let (span_x, span_y) = (max_x - min_x + v as i64, max_y - min_y + v as i64);
    if span_x > n as i64 || span_y > n as i64 {
        return Err(Error::invalid("views do not fit inside the scene"));
    }
    let ox = rng.random_range(0..=(n as i64 - span_x)) - min_x;
    let oy = rng.random_range(0..=(n as i64 - span_y)) - min_y;
    let offsets: Vec<(i64, i64)> = rel.iter().map(|&(x, y)| (x + ox, y + oy)).collect();

    let count = rng.random_range(spec.targets.0..=spec.targets.1);
    let mut targets: Vec<Target> = Vec::with_capacity(count);
    let mut attempts = 0;
    while targets.len() < count && attempts < 1000 {
        attempts += 1;
        let size = rng.random_range(spec.target_size.0..=spec.target_size.1);
        let (vx, vy) = offsets[rng.random_range(0..offsets.len())];
        let margin = size / 2.0 + 1.0;
        let t = Target {
            class: rng.random_range(0..NUM_CLASSES),
            cx: vx as f64 + rng.random_range(margin..v as f64 - margin),
            cy: vy as f64 + rng.random_range(margin..v as f64 - margin),
            size,
            brightness: rng.random_range(0.7..0.9),
        };
        let tb = t.bbox();
        let clear = targets.iter().all(|o| {
            let ob = o.bbox();
            tb.x > ob.x + ob.w + 1.0 || ob.x > tb.x + tb.w + 1.0 || tb.y > ob.y + ob.h + 1.0 || ob.y > tb.y + tb.h + 1.0
        });
        if clear {
            targets.push(t);
        }
    }

    let mut vis = background(n, n, render, rng);
    paint_targets(&mut vis, n, &targets, render);
    let scene = ImageTensor::new(n, n, 1, vis)?;
    let thermal = ImageTensor::new(n, n, 1, paint_thermal(n, n, &targets))?;
    let mut views = Vec::with_capacity(spec.users);
    for &(x, y) in &offsets {
        let mut vv = scene.crop(y as usize, x as usize, v, v)?.data().to_vec();
        add_noise(&mut vv, render.noise_std, rng);
        let mut tv = thermal.crop(y as usize, x as usize, v, v)?.data().to_vec();
        add_noise(&mut tv, render.noise_std, rng);
        views.push(MultiModalSample::new(ImageTensor::new(v, v, 1, vv)?, ImageTensor::new(v, v, 1, tv)?)?);
    }
    Ok(ViewSet { scene, views, true_offsets: offsets, targets })
}
