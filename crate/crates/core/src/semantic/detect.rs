//! Threshold detector: binarise, label 4-connected components, box them and
//! classify each crop by its shape statistics.

use super::metrics::DetBox;
use super::scene::{Target, NUM_CLASSES};
use crate::image::ImageTensor;

/// Binarisation threshold used by the experiments.
pub const DEFAULT_THRESHOLD: f64 = 0.4;
/// Components smaller than this are discarded as noise.
pub const DEFAULT_MIN_AREA: usize = 12;

/// Shape statistics of a binary crop: fill ratio, corner occupancy,
/// bottom-minus-top mass balance and centre occupancy.
pub fn shape_features(mask: &[bool], w: usize, h: usize) -> [f64; 4] {
    let at = |x: usize, y: usize| mask[y * w + x];
    let total = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let fill = total / (w * h) as f64;
    let (cw, ch) = (w.div_ceil(4), h.div_ceil(4));
    let mut corner = 0usize;
    for (x0, y0) in [(0, 0), (w - cw, 0), (0, h - ch), (w - cw, h - ch)] {
        for y in y0..y0 + ch {
            for x in x0..x0 + cw {
                corner += usize::from(at(x, y));
            }
        }
    }
    let corner = corner as f64 / (4 * cw * ch) as f64;
    let mut balance = 0.0;
    for y in 0..h {
        let row = (0..w).filter(|&x| at(x, y)).count() as f64;
        balance += row * ((y as f64 + 0.5) / h as f64 - 0.5) * 2.0;
    }
    let (mx0, mx1, my0, my1) = (w * 3 / 8, w.div_ceil(8) * 5, h * 3 / 8, h.div_ceil(8) * 5);
    let (mut centre, mut cn) = (0usize, 0usize);
    for y in my0..my1.min(h).max(my0 + 1).min(h) {
        for x in mx0..mx1.min(w).max(mx0 + 1).min(w) {
            centre += usize::from(at(x, y));
            cn += 1;
        }
    }
    [fill, corner, balance / total, centre as f64 / cn.max(1) as f64]
}

/// Nearest-centroid crop classifier over [`shape_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct CropClassifier {
    pub centroids: Vec<[f64; 4]>,
}

impl CropClassifier {
    /// Centroids averaged over noiselessly rendered targets of every class
    /// across the size range and sub-pixel phases.
    pub fn synthetic(size_range: (f64, f64)) -> Self {
        let mut centroids = Vec::with_capacity(NUM_CLASSES);
        for class in 0..NUM_CLASSES {
            let (mut acc, mut n) = ([0.0; 4], 0.0);
            let steps = 8;
            for s in 0..=steps {
                let size = size_range.0 + (size_range.1 - size_range.0) * s as f64 / steps as f64;
                for phase in [0.0, 0.25, 0.5, 0.75] {
                    let t = Target { class, cx: 20.0 + phase, cy: 20.0 + phase, size, brightness: 0.8 };
                    let b = t.bbox();
                    let (w, h) = (b.w as usize, b.h as usize);
                    let mask: Vec<bool> =
                        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| t.covers(b.x as usize + x, b.y as usize + y)).collect();
                    let f = shape_features(&mask, w, h);
                    for k in 0..4 {
                        acc[k] += f[k];
                    }
                    n += 1.0;
                }
            }
            centroids.push(acc.map(|v| v / n));
        }
        Self { centroids }
    }

    pub fn predict(&self, features: &[f64; 4]) -> usize {
        let dist = |c: &[f64; 4]| c.iter().zip(features).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (0..self.centroids.len()).fold(0, |best, i| if dist(&self.centroids[i]) < dist(&self.centroids[best]) { i } else { best })
    }
}

impl Default for CropClassifier {
    fn default() -> Self {
        Self::synthetic((8.0, 14.0))
    }
}

/// Detects bright blobs in the first channel with the default minimum area
/// and crop classifier.
pub fn detect(img: &ImageTensor, threshold: f64) -> crate::Result<Vec<DetBox>> {
    detect_with(img, threshold, DEFAULT_MIN_AREA, &CropClassifier::default())
}

pub fn detect_with(img: &ImageTensor, threshold: f64, min_area: usize, classifier: &CropClassifier) -> crate::Result<Vec<DetBox>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(crate::Error::invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    let (h, w) = (img.height(), img.width());
    let plane = img.plane(0);
    let on: Vec<bool> = plane.iter().map(|&v| f64::from(v) >= threshold).collect();
    let mut label = vec![usize::MAX; h * w];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !on[start] || label[start] != usize::MAX {
            continue;
        }
        let id = boxes.len();
        let mut pixels = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if on[q] && label[q] == usize::MAX {
                    label[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        boxes.push(pixels);
    }
    let mut out = Vec::new();
    for (id, pixels) in boxes.iter().enumerate() {
        if pixels.len() < min_area {
            continue;
        }
        let x0 = pixels.iter().map(|p| p % w).min().expect("non-empty");
        let x1 = pixels.iter().map(|p| p % w).max().expect("non-empty");
        let y0 = pixels.iter().map(|p| p / w).min().expect("non-empty");
        let y1 = pixels.iter().map(|p| p / w).max().expect("non-empty");
        let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
        let mask: Vec<bool> = (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| (x, y))).map(|(x, y)| label[y * w + x] == id).collect();
        let score = pixels.iter().map(|&p| f64::from(plane[p])).sum::<f64>() / pixels.len() as f64;
        out.push(DetBox {
            x: x0 as f64,
            y: y0 as f64,
            w: bw as f64,
            h: bh as f64,
            score: score.clamp(0.0, 1.0),
            class_id: classifier.predict(&shape_features(&mask, bw, bh)),
        });
    }
    Ok(out)
}
