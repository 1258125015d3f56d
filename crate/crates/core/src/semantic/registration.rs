//! Translation-only view registration and canvas composition.

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Default admissible overlap between adjacent views.
pub const DEFAULT_OVERLAP_WINDOW: (f64, f64) = (0.2, 0.5);

fn ncc(a: &ImageTensor, b: &ImageTensor, dx: i64, dy: i64) -> Option<f64> {
    let (h, w) = (a.height() as i64, a.width() as i64);
    let (x0, x1) = (dx.max(0), (w + dx).min(w));
    let (y0, y1) = (dy.max(0), (h + dy).min(h));
    let n = ((x1 - x0) * (y1 - y0) * a.channels() as i64) as f64;
    if n < 2.0 {
        return None;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in 0..a.channels() {
        for y in y0..y1 {
            for x in x0..x1 {
                let va = f64::from(a.get(c, y as usize, x as usize));
                let vb = f64::from(b.get(c, (y - dy) as usize, (x - dx) as usize));
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
            }
        }
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-12 || vb <= 1e-12 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn best_offset(
    a: &ImageTensor,
    b: &ImageTensor,
    window: (f64, f64),
    candidates: impl Iterator<Item = (i64, i64)>,
) -> Result<(i64, i64)> {
    if a.shape() != b.shape() {
        return Err(Error::invalid("views must share dimensions"));
    }
    let (h, w) = (a.height() as i64, a.width() as i64);
    let mut best: Option<(f64, i64, i64)> = None;
    for (dx, dy) in candidates {
        if dx.abs() >= w || dy.abs() >= h {
            continue;
        }
        let frac = ((w - dx.abs()) * (h - dy.abs())) as f64 / (w * h) as f64;
        if frac < window.0 - 1e-12 || frac > window.1 + 1e-12 {
            continue;
        }
        if let Some(score) = ncc(a, b, dx, dy) {
            if best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, dx, dy));
            }
        }
    }
    best.map(|(_, dx, dy)| (dx, dy))
        .ok_or_else(|| Error::Registration(format!("no offset with overlap in [{}, {}] and textured content", window.0, window.1)))
}

/// Offset `(dx, dy)` of `b`'s origin in `a`'s frame maximising normalised
/// cross-correlation over offsets whose overlap fraction lies in `window`.
pub fn register_pair(a: &ImageTensor, b: &ImageTensor, window: (f64, f64)) -> Result<(i64, i64)> {
    let (h, w) = (a.height() as i64, a.width() as i64);
    best_offset(a, b, window, (-(h - 1)..h).flat_map(|dy| (-(w - 1)..w).map(move |dx| (dx, dy))))
}

/// Like [`register_pair`], searching only within `radius` pixels of `guess`.
pub fn register_pair_near(
    a: &ImageTensor,
    b: &ImageTensor,
    guess: (i64, i64),
    radius: i64,
    window: (f64, f64),
) -> Result<(i64, i64)> {
    let r = radius.max(0);
    best_offset(a, b, window, (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (guess.0 + dx, guess.1 + dy))))
}

/// Offsets of every view relative to the first, registering each view
/// against its predecessor.
pub fn register_views(images: &[ImageTensor]) -> Result<Vec<(i64, i64)>> {
    register_views_within(images, DEFAULT_OVERLAP_WINDOW)
}

pub fn register_views_within(images: &[ImageTensor], window: (f64, f64)) -> Result<Vec<(i64, i64)>> {
    if images.len() < 2 {
        return Err(Error::invalid("registration needs at least two views"));
    }
    chain(images.windows(2).map(|pair| register_pair(&pair[0], &pair[1], window)))
}

/// Registration refined around coarse pose priors (one per view, any common
/// frame). Each adjacent pair searches `radius` pixels around the prior
/// difference.
pub fn register_views_guided(images: &[ImageTensor], priors: &[(i64, i64)], radius: i64) -> Result<Vec<(i64, i64)>> {
    if images.len() < 2 || priors.len() != images.len() {
        return Err(Error::invalid("registration needs at least two views and one prior per view"));
    }
    chain(images.windows(2).zip(priors.windows(2)).map(|(pair, p)| {
        let guess = (p[1].0 - p[0].0, p[1].1 - p[0].1);
        register_pair_near(&pair[0], &pair[1], guess, radius, (0.0, 1.0))
    }))
}

fn chain(steps: impl Iterator<Item = Result<(i64, i64)>>) -> Result<Vec<(i64, i64)>> {
    let mut out = vec![(0i64, 0i64)];
    for step in steps {
        let (dx, dy) = step?;
        let (px, py) = *out.last().expect("non-empty");
        out.push((px + dx, py + dy));
    }
    Ok(out)
}

/// Top-left of the composed canvas in the first view's frame.
pub fn canvas_origin(offsets: &[(i64, i64)]) -> (i64, i64) {
    (offsets.iter().map(|o| o.0).min().unwrap_or(0), offsets.iter().map(|o| o.1).min().unwrap_or(0))
}

/// Places every view at its offset on a canvas spanning their union.
/// Overlapping pixels are averaged; uncovered pixels are 0.
pub fn compose(images: &[ImageTensor], offsets: &[(i64, i64)]) -> Result<ImageTensor> {
    let first = images.first().ok_or_else(|| Error::invalid("nothing to compose"))?;
    if images.len() != offsets.len() || images.iter().any(|i| i.channels() != first.channels()) {
        return Err(Error::invalid("one offset per view and matching channel counts required"));
    }
    let (ox, oy) = canvas_origin(offsets);
    let right = images.iter().zip(offsets).map(|(i, o)| o.0 + i.width() as i64).max().expect("non-empty");
    let bottom = images.iter().zip(offsets).map(|(i, o)| o.1 + i.height() as i64).max().expect("non-empty");
    let (w, h, c) = ((right - ox) as usize, (bottom - oy) as usize, first.channels());
    let mut sum = vec![0.0f64; c * h * w];
    let mut count = vec![0u32; h * w];
    for (img, &(x0, y0)) in images.iter().zip(offsets) {
        let (bx, by) = ((x0 - ox) as usize, (y0 - oy) as usize);
        for y in 0..img.height() {
            for x in 0..img.width() {
                count[(by + y) * w + bx + x] += 1;
                for ch in 0..c {
                    sum[(ch * h + by + y) * w + bx + x] += f64::from(img.get(ch, y, x));
                }
            }
        }
    }
    let data = sum
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n = count[i % (h * w)];
            if n == 0 {
                0.0
            } else {
                (s / f64::from(n)) as f32
            }
        })
        .collect();
    ImageTensor::new(h, w, c, data)
}
