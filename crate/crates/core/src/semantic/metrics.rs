//! Evaluation metrics: reconstruction PSNR, support-weighted F1 and
//! detection average precision at an IoU threshold.

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// PSNR cap used when the images are (numerically) identical.
pub const PSNR_CAP_DB: f64 = 99.0;

pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2)).sum();
    Ok(sum / a.sample_count() as f64)
}

/// `10 log10(1 / MSE)` for values in `[0, 1]`, capped at 99 dB.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self { classes: c, counts: rows.concat() })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        diag as f64 / self.total().max(1) as f64
    }
}

/// Per-class F1 (zero where precision or recall is undefined) weighted by
/// true-class support.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("weighted F1 of an empty confusion matrix"));
    }
    let n = cm.classes();
    let mut score = 0.0;
    for c in 0..n {
        let tp = cm.get(c, c) as f64;
        let support: u64 = (0..n).map(|p| cm.get(c, p)).sum();
        let predicted: u64 = (0..n).map(|t| cm.get(t, c)).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        score += f1 * support as f64 / total as f64;
    }
    Ok(score)
}

/// Axis-aligned detection or ground-truth box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub class_id: usize,
}

impl DetBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, score: f64, class_id: usize) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::invalid(format!("box size {w}x{h} must be positive")));
        }
        Ok(Self { x, y, w, h, score: score.clamp(0.0, 1.0), class_id })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &DetBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> DetBox {
        DetBox { x: self.x + dx, y: self.y + dy, ..*self }
    }
}

/// Detection order used by the matcher: score descending, ties by index.
fn score_order(dets: &[DetBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy matching in score order; each ground truth is claimed at most once,
/// by the unclaimed box of highest IoU at or above the threshold. Returns the
/// true-positive flags in score order.
pub fn greedy_match(dets: &[DetBox], gts: &[DetBox], iou_thresh: f64) -> Vec<bool> {
    let mut claimed = vec![false; gts.len()];
    score_order(dets)
        .into_iter()
        .map(|d| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(g, _)| !claimed[*g])
                .map(|(g, gt)| (g, dets[d].iou(gt)))
                .filter(|(_, iou)| *iou >= iou_thresh)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match best {
                Some((g, _)) => {
                    claimed[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// All-points interpolated AP from true-positive flags in score order.
pub fn ap_from_flags(flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        points.push((tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64));
    }
    // Precision envelope from the right, then sum recall increments.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (r, _) = points[i];
        if r > prev_recall {
            let p_max = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (r - prev_recall) * p_max;
            prev_recall = r;
        }
    }
    ap
}

/// Single-class AP at the given IoU threshold. With no ground truths the AP
/// is 1.0 when there are also no detections and 0.0 otherwise.
pub fn ap_at_iou(dets: &[DetBox], gts: &[DetBox], iou_thresh: f64) -> Result<f64> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::invalid(format!("IoU threshold {iou_thresh} outside (0, 1)")));
    }
    Ok(ap_from_flags(&greedy_match(dets, gts, iou_thresh), gts.len()))
}

/// Mean of per-class AP over the classes present in the ground truth.
pub fn mean_ap(dets: &[DetBox], gts: &[DetBox], classes: usize, iou_thresh: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..classes {
        let g: Vec<DetBox> = gts.iter().filter(|b| b.class_id == c).copied().collect();
        if g.is_empty() {
            continue;
        }
        let d: Vec<DetBox> = dets.iter().filter(|b| b.class_id == c).copied().collect();
        sum += ap_at_iou(&d, &g, iou_thresh)?;
        present += 1;
    }
    Ok(if present == 0 { 1.0 } else { sum / present as f64 })
}

/// Class-agnostic fraction of ground truths claimed by some detection.
pub fn recall_at_iou(dets: &[DetBox], gts: &[DetBox], iou_thresh: f64) -> f64 {
    if gts.is_empty() {
        return 1.0;
    }
    let hits = greedy_match(dets, gts, iou_thresh).iter().filter(|&&f| f).count();
    hits as f64 / gts.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RngStream;
    use rand::Rng;

    #[test]
    fn psnr_examples() {
        let a = ImageTensor::filled(8, 8, 1, 0.3).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let b = ImageTensor::filled(8, 8, 1, 0.4).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        let c = ImageTensor::filled(8, 16, 1, 0.4).unwrap();
        assert!(psnr(&a, &c).is_err());
    }

    #[test]
    fn psnr_random_pair_matches_direct_mse() {
        let mut rng = RngStream::new(1, 0);
        let a = ImageTensor::new(16, 16, 1, (0..256).map(|_| rng.random()).collect()).unwrap();
        let b = ImageTensor::new(16, 16, 1, (0..256).map(|_| rng.random()).collect()).unwrap();
        let mut s = 0.0;
        for i in 0..256 {
            s += (a.data()[i] as f64 - b.data()[i] as f64).powi(2);
        }
        assert!((psnr(&a, &b).unwrap() - 10.0 * (256.0 / s).log10()).abs() < 1e-9);
    }

    #[test]
    fn weighted_f1_examples() {
        let diag = ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 1]]).unwrap();
        assert!((weighted_f1(&diag).unwrap() - 1.0).abs() < 1e-15);
        let cm = ConfusionMatrix::from_rows(&[vec![4, 1], vec![2, 3]]).unwrap();
        assert!((weighted_f1(&cm).unwrap() - 23.0 / 33.0).abs() < 1e-12);
        assert!((weighted_f1(&cm).unwrap() - 0.69697).abs() < 1e-5);
        assert!(weighted_f1(&ConfusionMatrix::new(3)).is_err());
    }

    fn b(x: f64, y: f64, w: f64, h: f64, s: f64) -> DetBox {
        DetBox::new(x, y, w, h, s, 0).unwrap()
    }

    #[test]
    fn ap_trivial_cases() {
        let gts = vec![b(0.0, 0.0, 10.0, 10.0, 1.0), b(20.0, 20.0, 5.0, 5.0, 1.0)];
        assert_eq!(ap_at_iou(&gts, &gts, 0.5).unwrap(), 1.0);
        assert_eq!(ap_at_iou(&[], &gts, 0.5).unwrap(), 0.0);
        assert_eq!(ap_at_iou(&[], &[], 0.5).unwrap(), 1.0);
        assert_eq!(ap_at_iou(&gts, &[], 0.5).unwrap(), 0.0);
        assert!(ap_at_iou(&gts, &gts, 1.0).is_err());
        assert!(DetBox::new(0.0, 0.0, 0.0, 1.0, 0.5, 0).is_err());
    }

    #[test]
    fn iou_values() {
        let a = b(0.0, 0.0, 10.0, 10.0, 1.0);
        assert_eq!(a.iou(&b(5.0, 0.0, 10.0, 10.0, 1.0)), 50.0 / 150.0);
        assert_eq!(a.iou(&b(10.0, 0.0, 5.0, 5.0, 1.0)), 0.0);
    }

    #[test]
    fn recall_counts_matches() {
        let gts = vec![b(0.0, 0.0, 10.0, 10.0, 1.0), b(20.0, 20.0, 5.0, 5.0, 1.0)];
        assert_eq!(recall_at_iou(&gts[..1], &gts, 0.5), 0.5);
    }
}
