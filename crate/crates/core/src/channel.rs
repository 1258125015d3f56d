//! Physical channel models and power accounting for complex baseband blocks.
//!
//! SNR convention used throughout the crate: `snr_db` is the ratio of the
//! per-complex-symbol transmit power (fixed to 1) to the total complex noise
//! power. For QPSK this makes `Es/N0 = SNR` and `Eb/N0 = SNR / 2`.

use num_complex::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Complex baseband samples; the only thing that crosses the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock<T> {
    samples: Vec<Complex<T>>,
}

impl<T: Scalar> SymbolBlock<T> {
    pub fn new(samples: Vec<Complex<T>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("symbol block must not be empty"));
        }
        Ok(Self { samples })
    }

    /// Pairs consecutive reals `(re, im)` into complex samples.
    pub fn from_interleaved(reals: &[T]) -> Result<Self> {
        if reals.len() % 2 != 0 {
            return Err(Error::invalid("interleaved block needs an even number of reals"));
        }
        Self::new(reals.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect())
    }

    pub fn to_interleaved(&self) -> Vec<T> {
        self.samples.iter().flat_map(|s| [s.re, s.im]).collect()
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex<T>> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `mean(|s|^2)`, accumulated in `f64`.
    pub fn mean_power(&self) -> f64 {
        let sum: f64 = self.samples.iter().map(|s| s.norm_sqr().as_f64()).sum();
        sum / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    Noiseless,
    Awgn { snr_db: f64 },
}

impl ChannelSpec {
    pub fn awgn(snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::invalid(format!("snr_db must be finite, got {snr_db}")));
        }
        Ok(ChannelSpec::Awgn { snr_db })
    }

    /// Total complex noise variance, or `None` for the noiseless channel.
    pub fn noise_variance(&self) -> Option<f64> {
        match *self {
            ChannelSpec::Noiseless => None,
            ChannelSpec::Awgn { snr_db } => Some(10f64.powf(-snr_db / 10.0)),
        }
    }
}

/// Seeded random stream. Identical `(seed, stream_id)` pairs yield identical
/// sequences; distinct stream ids select independent ChaCha streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same seed and a stream id derived from this
    /// stream's id and `tag`.
    pub fn substream(&self, tag: u64) -> Self {
        Self::new(self.seed, derive_stream_id(&[self.stream_id, tag]))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mixes a list of identifiers (scheme, snr index, seed, cell, ...) into one
/// stream id with SplitMix64 finalisation.
pub fn derive_stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `10^(-snr_db/10)`: total complex noise variance against unit transmit power.
/// Each real dimension carries half of it.
pub fn noise_variance(snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("snr_db must be finite, got {snr_db}")));
    }
    Ok(10f64.powf(-snr_db / 10.0))
}

/// Scales the block to unit mean power.
pub fn normalize_power<T: Scalar>(block: &SymbolBlock<T>) -> Result<SymbolBlock<T>> {
    let p = block.mean_power();
    if p == 0.0 || !p.is_finite() {
        return Err(Error::DegenerateInput(format!("cannot normalise block with mean power {p}")));
    }
    let scale: T = lit(1.0 / p.sqrt());
    Ok(SymbolBlock { samples: block.samples.iter().map(|s| *s * scale).collect() })
}

/// Draws the additive noise for a block of `len` samples.
pub fn sample_noise<T: Scalar>(len: usize, spec: &ChannelSpec, rng: &mut impl Rng) -> Vec<Complex<T>> {
    match spec.noise_variance() {
        None => vec![Complex::new(T::zero(), T::zero()); len],
        Some(var) => {
            let sigma = (var / 2.0).sqrt();
            (0..len)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex::new(lit(re * sigma), lit(im * sigma))
                })
                .collect()
        }
    }
}

/// Passes a block through the channel. Noiseless is an exact copy; AWGN adds
/// circular complex Gaussian noise with per-dimension variance `σ²/2`.
pub fn apply<T: Scalar>(block: &SymbolBlock<T>, spec: &ChannelSpec, rng: &mut impl Rng) -> SymbolBlock<T> {
    match spec {
        ChannelSpec::Noiseless => block.clone(),
        ChannelSpec::Awgn { .. } => {
            let noise = sample_noise::<T>(block.len(), spec, rng);
            SymbolBlock {
                samples: block.samples.iter().zip(noise).map(|(x, n)| *x + n).collect(),
            }
        }
    }
}
