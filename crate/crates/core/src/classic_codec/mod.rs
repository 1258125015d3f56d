//! Deterministic 8x8 block transform codec used as the JPEG stand-in of the
//! digital baseline.
//!
//! Pipeline per block and channel: level shift of the 8-bit pixel scale, DCT,
//! uniform quantisation with the ramp step `Δ(u,v,q) = max(1, round((16 +
//! 2(u+v)) (101 - q) / 50))`, zigzag scan, DC prediction from the previous
//! block of the same channel, zero-run/level pairs written as Exp-Golomb codes,
//! and an end-of-block marker (the pair `(0, 0)`).
//!
//! Container layout (little endian, 12 byte header):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `STC1`                            |
//! | 4      | 2    | width                                   |
//! | 6      | 2    | height                                  |
//! | 8      | 1    | channels                                |
//! | 9      | 1    | quality `q`                             |
//! | 10     | 1    | zero bits padding the last body byte    |
//! | 11     | 1    | reserved, 0                             |
//!
//! followed by the body bytes.

mod bitio;
mod dct;

pub use dct::{dct8_forward, dct8_inverse, Block8};

use bitio::{BitReader, BitWriter, OutOfBits};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub const MAGIC: [u8; 4] = *b"STC1";
pub const HEADER_LEN: usize = 12;
pub const BLOCK: usize = 8;

#[rustfmt::skip]
const ZIGZAG: [usize; 64] = [
     0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    quality: u8,
}

impl CodecConfig {
    pub fn new(quality: u8) -> Result<Self> {
        if !(1..=100).contains(&quality) {
            return Err(Error::invalid(format!("quality {quality} outside [1, 100]")));
        }
        Ok(Self { quality })
    }

    pub fn quality(&self) -> u8 {
        self.quality
    }
}

/// Quantiser step for coefficient `(u, v)` at quality `q`.
pub fn quant_step(u: usize, v: usize, q: u8) -> f64 {
    let raw = ((16 + 2 * (u + v)) as f64 * (101.0 - f64::from(q)) / 50.0).round();
    raw.max(1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedImage {
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub quality: u8,
    pub pad_bits: u8,
    pub body: Vec<u8>,
}

impl CompressedImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.body.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&[self.channels, self.quality, self.pad_bits, 0]);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(format!("container of {} bytes is shorter than its header", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::format("bad magic, expected STC1"));
        }
        let c = Self {
            width: u16::from_le_bytes([bytes[4], bytes[5]]),
            height: u16::from_le_bytes([bytes[6], bytes[7]]),
            channels: bytes[8],
            quality: bytes[9],
            pad_bits: bytes[10],
            body: bytes[HEADER_LEN..].to_vec(),
        };
        c.validate_header()?;
        Ok(c)
    }

    fn validate_header(&self) -> Result<()> {
        let (w, h) = (usize::from(self.width), usize::from(self.height));
        if w < BLOCK || h < BLOCK || w % BLOCK != 0 || h % BLOCK != 0 {
            return Err(Error::format(format!("invalid dimensions {w}x{h}")));
        }
        if !(1..=2).contains(&self.channels) {
            return Err(Error::format(format!("invalid channel count {}", self.channels)));
        }
        if !(1..=100).contains(&self.quality) {
            return Err(Error::format(format!("invalid quality {}", self.quality)));
        }
        if self.pad_bits > 7 || (self.body.is_empty() && self.pad_bits != 0) {
            return Err(Error::format(format!("invalid pad bit count {}", self.pad_bits)));
        }
        Ok(())
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    pub fn sample_count(&self) -> usize {
        usize::from(self.width) * usize::from(self.height) * usize::from(self.channels)
    }
}

/// `8 * container bytes / (H * W * C)`.
pub fn bits_per_pixel(c: &CompressedImage) -> f64 {
    8.0 * c.byte_len() as f64 / c.sample_count() as f64
}

fn block_count(h: usize, w: usize) -> (usize, usize) {
    (h / BLOCK, w / BLOCK)
}

pub fn encode_image(img: &ImageTensor, cfg: &CodecConfig) -> Result<CompressedImage> {
    let (h, w) = (img.height(), img.width());
    if h % BLOCK != 0 || w % BLOCK != 0 {
        return Err(Error::invalid(format!("image {h}x{w} is not a multiple of 8; pad it first")));
    }
    if h > usize::from(u16::MAX) || w > usize::from(u16::MAX) {
        return Err(Error::invalid("image too large for the container"));
    }
    let q = cfg.quality;
    let (bh, bw) = block_count(h, w);
    let mut bits = BitWriter::new();
    for c in 0..img.channels() {
        let mut prev_dc = 0i32;
        for by in 0..bh {
            for bx in 0..bw {
                let mut block = [[0.0f64; 8]; 8];
                for (y, row) in block.iter_mut().enumerate() {
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = f64::from(img.get(c, by * BLOCK + y, bx * BLOCK + x)) * 255.0 - 128.0;
                    }
                }
                let coeffs = dct8_forward(&block);
                let mut levels = [0i32; 64];
                for (i, &zz) in ZIGZAG.iter().enumerate() {
                    let (u, v) = (zz / 8, zz % 8);
                    levels[i] = (coeffs[u][v] / quant_step(u, v, q)).round() as i32;
                }
                let dc = levels[0];
                levels[0] = dc - prev_dc;
                prev_dc = dc;

                let mut run = 0u32;
                for &l in &levels {
                    if l == 0 {
                        run += 1;
                    } else {
                        bits.ue(run);
                        bits.se(l);
                        run = 0;
                    }
                }
                bits.ue(0);
                bits.se(0);
            }
        }
    }
    let (body, pad_bits) = bits.finish();
    Ok(CompressedImage {
        width: w as u16,
        height: h as u16,
        channels: img.channels() as u8,
        quality: q,
        pad_bits,
        body,
    })
}

/// Strict inverse of [`encode_image`].
pub fn decode_image(c: &CompressedImage) -> Result<ImageTensor> {
    let (img, err) = decode_inner(c)?;
    match err {
        Some(e) => Err(e),
        None => Ok(img),
    }
}

/// Receiver-side decode that never discards what was recovered: blocks after
/// the first corrupt one are filled with mid-grey and the error is returned
/// alongside. Header errors are still fatal.
pub fn decode_image_lenient(c: &CompressedImage) -> Result<(ImageTensor, Option<Error>)> {
    decode_inner(c)
}

fn decode_inner(c: &CompressedImage) -> Result<(ImageTensor, Option<Error>)> {
    c.validate_header()?;
    let (h, w, ch) = (usize::from(c.height), usize::from(c.width), usize::from(c.channels));
    let (bh, bw) = block_count(h, w);
    let total_blocks = bh * bw * ch;
    let mut reader = BitReader::new(&c.body, c.pad_bits);
    // Every block costs at least the two-bit end marker.
    if reader.remaining() < 2 * total_blocks {
        return Err(Error::Decode { msg: format!("body too short for {total_blocks} blocks"), partial: false });
    }
    let q = c.quality;
    let mut data = vec![0.5f32; h * w * ch];
    let mut done = 0usize;
    let mut failure = None;

    'outer: for chan in 0..ch {
        let mut prev_dc = 0i64;
        for by in 0..bh {
            for bx in 0..bw {
                let levels = match read_block(&mut reader) {
                    Ok(l) => l,
                    Err(msg) => {
                        failure = Some(Error::Decode { msg: format!("block {done}: {msg}"), partial: done > 0 });
                        break 'outer;
                    }
                };
                let mut coeffs = [[0.0f64; 8]; 8];
                for (i, &zz) in ZIGZAG.iter().enumerate() {
                    let mut l = i64::from(levels[i]);
                    if i == 0 {
                        l += prev_dc;
                        prev_dc = l;
                    }
                    let (u, v) = (zz / 8, zz % 8);
                    coeffs[u][v] = l as f64 * quant_step(u, v, q);
                }
                let px = dct8_inverse(&coeffs);
                for (y, row) in px.iter().enumerate() {
                    for (x, v) in row.iter().enumerate() {
                        let idx = (chan * h + by * BLOCK + y) * w + bx * BLOCK + x;
                        data[idx] = ((v + 128.0) / 255.0).clamp(0.0, 1.0) as f32;
                    }
                }
                done += 1;
            }
        }
    }
    Ok((ImageTensor::new(h, w, ch, data)?, failure))
}

fn read_block(r: &mut BitReader<'_>) -> std::result::Result<[i32; 64], &'static str> {
    let truncated = |_: OutOfBits| "body truncated";
    let mut levels = [0i32; 64];
    let mut pos = 0usize;
    loop {
        let run = r.ue().map_err(truncated)?.ok_or("invalid run code")?;
        let level = r.se().map_err(truncated)?.ok_or("invalid level code")?;
        if level == 0 {
            if run != 0 {
                return Err("malformed end-of-block marker");
            }
            return Ok(levels);
        }
        pos += run as usize;
        if pos >= 64 {
            return Err("run past end of block");
        }
        levels[pos] = level;
        pos += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RngStream;
    use crate::semantic::metrics::psnr;
    use rand::Rng;

    fn smooth_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = RngStream::new(seed, 0);
        let (a, b, p) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.0..6.0));
        let data = (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f32 / h as f32, (i % w) as f32 / w as f32);
                0.5 + 0.3 * (a * 6.0 * x + p).sin() * (b * 4.0 * y).cos()
            })
            .collect();
        ImageTensor::new(h, w, 1, data).unwrap()
    }

    fn noise_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = RngStream::new(seed, 1);
        ImageTensor::new(h, w, 1, (0..h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let img = ImageTensor::filled(16, 24, 2, 0.25).unwrap();
        let c = encode_image(&img, &CodecConfig::new(77).unwrap()).unwrap();
        let b = c.to_bytes();
        assert_eq!(&b[..4], b"STC1");
        assert_eq!(&b[4..6], &24u16.to_le_bytes());
        assert_eq!(&b[6..8], &16u16.to_le_bytes());
        assert_eq!(b[8], 2);
        assert_eq!(b[9], 77);
        assert_eq!(b[10], c.pad_bits);
        assert_eq!(b[11], 0);
        assert_eq!(CompressedImage::from_bytes(&b).unwrap(), c);
    }

    #[test]
    fn quality_range_enforced() {
        assert!(CodecConfig::new(0).is_err());
        assert!(CodecConfig::new(101).is_err());
        assert_eq!(quant_step(0, 0, 100), 1.0);
        assert_eq!(quant_step(7, 7, 100), 1.0);
        assert_eq!(quant_step(0, 0, 50), 16.0);
        assert_eq!(quant_step(1, 2, 1), 44.0);
    }

    #[test]
    fn constant_image_compresses_well() {
        let img = ImageTensor::filled(64, 64, 1, 0.4).unwrap();
        let c = encode_image(&img, &CodecConfig::new(50).unwrap()).unwrap();
        assert!((c.byte_len() as f64) < 0.02 * 64.0 * 64.0, "{} bytes", c.byte_len());
    }

    #[test]
    fn high_quality_round_trip() {
        for seed in 0..5 {
            let img = smooth_image(32, 32, seed);
            let c = encode_image(&img, &CodecConfig::new(90).unwrap()).unwrap();
            let d = decode_image(&c).unwrap();
            assert_eq!(d.shape(), img.shape());
            assert!(psnr(&img, &d).unwrap() >= 35.0);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let img = noise_image(32, 32, 3);
        let cfg = CodecConfig::new(40).unwrap();
        assert_eq!(encode_image(&img, &cfg).unwrap().to_bytes(), encode_image(&img, &cfg).unwrap().to_bytes());
    }

    #[test]
    fn non_block_multiple_rejected() {
        let img = ImageTensor::filled(12, 16, 1, 0.0).unwrap();
        assert!(encode_image(&img, &CodecConfig::new(50).unwrap()).is_err());
    }

    #[test]
    fn bad_magic_and_truncation() {
        let img = smooth_image(32, 32, 1);
        let c = encode_image(&img, &CodecConfig::new(60).unwrap()).unwrap();
        let mut b = c.to_bytes();
        b[0] = b'X';
        assert!(matches!(CompressedImage::from_bytes(&b), Err(Error::Format(_))));
        let mut t = c.clone();
        t.body.truncate(t.body.len() * 2 / 3);
        t.pad_bits = 0;
        assert!(matches!(decode_image(&t), Err(Error::Decode { partial: true, .. })));
    }

    #[test]
    fn bits_per_pixel_accounting() {
        let c = CompressedImage { width: 64, height: 64, channels: 1, quality: 50, pad_bits: 0, body: vec![0; 500] };
        assert!((bits_per_pixel(&c) - 1.0).abs() < 1e-12);
        let cfg = CodecConfig::new(50).unwrap();
        let flat = encode_image(&ImageTensor::filled(32, 32, 1, 0.3).unwrap(), &cfg).unwrap();
        let noisy = encode_image(&noise_image(32, 32, 9), &cfg).unwrap();
        assert!(bits_per_pixel(&flat) < bits_per_pixel(&noisy));
    }

    #[test]
    fn bpp_non_increasing_as_quality_drops() {
        let img = smooth_image(64, 64, 4);
        let bpp: Vec<f64> = [90u8, 50, 20]
            .iter()
            .map(|&q| bits_per_pixel(&encode_image(&img, &CodecConfig::new(q).unwrap()).unwrap()))
            .collect();
        assert!(bpp[0] >= bpp[1] && bpp[1] >= bpp[2], "{bpp:?}");
    }

    #[test]
    fn distortion_non_increasing_in_quality() {
        for seed in 0..3 {
            let img = smooth_image(32, 32, seed + 10);
            let mut last = f64::INFINITY;
            for q in (10..=100).step_by(10) {
                let d = decode_image(&encode_image(&img, &CodecConfig::new(q as u8).unwrap()).unwrap()).unwrap();
                let mse = crate::semantic::metrics::mse(&img, &d).unwrap();
                assert!(mse <= last + 1e-12, "q={q}: {mse} > {last}");
                last = mse;
            }
        }
    }
}
