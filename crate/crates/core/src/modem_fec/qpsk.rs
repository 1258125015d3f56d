use num_complex::Complex;

use super::BitStream;
use crate::channel::SymbolBlock;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Per-coded-bit log-likelihood ratios, `log p(0)/p(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrBlock<T>(pub Vec<T>);

impl<T: Scalar> LlrBlock<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sign decisions: negative LLR decodes to 1.
    pub fn hard_decision(&self) -> BitStream {
        BitStream::new(self.0.iter().map(|l| u8::from(*l < T::zero())).collect()).expect("binary")
    }
}

/// Gray mapping, I-bit first: `(b0, b1) -> ((1-2 b0) + j(1-2 b1)) / sqrt(2)`.
pub fn qpsk_modulate<T: Scalar>(bits: &BitStream) -> Result<SymbolBlock<T>> {
    if bits.len() % 2 != 0 {
        return Err(Error::invalid(format!("QPSK needs an even bit count, got {}", bits.len())));
    }
    let a: T = lit(std::f64::consts::FRAC_1_SQRT_2);
    let level = |b: u8| if b == 0 { a } else { -a };
    SymbolBlock::new(
        bits.as_slice()
            .chunks_exact(2)
            .map(|p| Complex::new(level(p[0]), level(p[1])))
            .collect(),
    )
}

/// Exact per-bit LLRs for Gray QPSK: `2 sqrt(2) Re(y) / σ²` and `2 sqrt(2) Im(y) / σ²`.
pub fn qpsk_demod_llr<T: Scalar>(block: &SymbolBlock<T>, noise_var: f64) -> Result<LlrBlock<T>> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance must be positive, got {noise_var}")));
    }
    let g: T = lit(2.0 * std::f64::consts::SQRT_2 / noise_var);
    Ok(LlrBlock(block.samples().iter().flat_map(|y| [g * y.re, g * y.im]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply, ChannelSpec, RngStream};
    use rand::Rng;

    #[test]
    fn mapping_examples() {
        let s = qpsk_modulate::<f64>(&BitStream::new(vec![0, 0, 1, 1, 0, 1]).unwrap()).unwrap();
        let s = s.samples();
        assert!((s[0].re - 0.70711).abs() < 1e-5 && (s[0].im - 0.70711).abs() < 1e-5);
        assert!((s[1].re + 0.70711).abs() < 1e-5 && (s[1].im + 0.70711).abs() < 1e-5);
        assert!(s[2].re > 0.0 && s[2].im < 0.0);
        for x in s {
            assert!((x.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_length_rejected() {
        assert!(qpsk_modulate::<f32>(&BitStream::new(vec![1]).unwrap()).is_err());
    }

    #[test]
    fn llr_examples() {
        let zero = SymbolBlock::new(vec![Complex::new(0.0f64, 0.0)]).unwrap();
        assert_eq!(qpsk_demod_llr(&zero, 1.0).unwrap().0, vec![0.0, 0.0]);
        let y = SymbolBlock::new(vec![Complex::new(0.70711f64, 0.0)]).unwrap();
        let l = qpsk_demod_llr(&y, 1.0).unwrap().0;
        assert!((l[0] - 2.0).abs() < 1e-4 && l[1] == 0.0);
        assert!(qpsk_demod_llr(&y, 0.0).is_err());
        assert!(qpsk_demod_llr(&y, -1.0).is_err());
    }

    #[test]
    fn llr_sign_matches_nearest_point() {
        let mut rng = RngStream::new(3, 0);
        let bits: Vec<u8> = (0..200_000).map(|_| rng.random_range(0..2)).collect();
        let tx = qpsk_modulate::<f64>(&BitStream::new(bits).unwrap()).unwrap();
        let rx = apply(&tx, &ChannelSpec::awgn(2.0).unwrap(), &mut rng);
        let hard = qpsk_demod_llr(&rx, 0.63).unwrap().hard_decision();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let points = [(0u8, 0u8), (0, 1), (1, 0), (1, 1)];
        for (i, y) in rx.samples().iter().enumerate() {
            let best = points
                .iter()
                .min_by(|p, q| {
                    let d = |(b0, b1): &(u8, u8)| {
                        let s = Complex::new(if *b0 == 0 { a } else { -a }, if *b1 == 0 { a } else { -a });
                        (y - s).norm_sqr()
                    };
                    d(p).partial_cmp(&d(q)).unwrap()
                })
                .unwrap();
            assert_eq!((hard.as_slice()[2 * i], hard.as_slice()[2 * i + 1]), *best);
        }
    }
}
