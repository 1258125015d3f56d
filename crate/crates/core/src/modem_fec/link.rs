use super::{qpsk_demod_llr, qpsk_modulate, BitStream, LdpcCode};
use crate::channel::{apply, ChannelSpec, RngStream};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 50;
/// Noise variance assumed by the soft demodulator on a noiseless channel.
pub const NOISELESS_LLR_VARIANCE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkReport {
    /// Received payload with the frame padding stripped.
    pub bits: BitStream,
    pub frames: usize,
    pub frames_failed: usize,
    /// Zero bits appended to fill the last frame.
    pub pad_bits: usize,
    /// Complex channel symbols actually transmitted (`frames * n / 2`).
    pub channel_uses: usize,
}

/// Segments `payload` into `k`-bit frames (zero-padding the last), then per
/// frame: LDPC encode, QPSK, channel, soft demodulation, min-sum decode.
/// Frame `i` draws its noise from `rng.substream(i)`.
pub fn digital_link(
    payload: &BitStream,
    spec: &ChannelSpec,
    code: &LdpcCode,
    rng: &RngStream,
    max_iters: usize,
) -> Result<LinkReport> {
    if payload.is_empty() {
        return Err(Error::invalid("digital link payload must not be empty"));
    }
    let k = code.k();
    let frames = payload.len().div_ceil(k);
    let pad_bits = frames * k - payload.len();
    let noise_var = spec.noise_variance().unwrap_or(NOISELESS_LLR_VARIANCE);

    let mut out = Vec::with_capacity(frames * k);
    let mut frames_failed = 0;
    for (i, chunk) in payload.as_slice().chunks(k).enumerate() {
        let mut frame = chunk.to_vec();
        frame.resize(k, 0);
        let codeword = code.encode(&BitStream::new(frame)?)?;
        let tx = qpsk_modulate::<f32>(&codeword)?;
        let rx = apply(&tx, spec, &mut rng.substream(i as u64));
        let decoded = code.decode(&qpsk_demod_llr(&rx, noise_var)?, max_iters)?;
        frames_failed += usize::from(!decoded.converged);
        out.extend_from_slice(decoded.message.as_slice());
    }
    out.truncate(payload.len());
    Ok(LinkReport {
        bits: BitStream::new(out)?,
        frames,
        frames_failed,
        pad_bits,
        channel_uses: frames * code.n() / 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn noiseless_is_identity() {
        let code = LdpcCode::new(256, 1).unwrap();
        let mut r = RngStream::new(0, 0);
        for len in [1usize, 127, 128, 129, 1000] {
            let payload = BitStream::new((0..len).map(|_| r.random_range(0..2)).collect()).unwrap();
            let rep = digital_link(&payload, &ChannelSpec::Noiseless, &code, &r, 50).unwrap();
            assert_eq!(rep.bits, payload);
            assert_eq!(rep.frames_failed, 0);
            assert_eq!(rep.frames, len.div_ceil(128));
            assert_eq!(rep.pad_bits, rep.frames * 128 - len);
        }
    }

    #[test]
    fn collapses_far_below_threshold() {
        let code = LdpcCode::new(1024, 1).unwrap();
        let mut r = RngStream::new(1, 0);
        let payload = BitStream::new((0..512 * 40).map(|_| r.random_range(0..2)).collect()).unwrap();
        let rep = digital_link(&payload, &ChannelSpec::awgn(-5.0).unwrap(), &code, &r, 50).unwrap();
        assert!(rep.frames_failed as f64 / rep.frames as f64 >= 0.9);
    }

    #[test]
    fn empty_payload_rejected() {
        let code = LdpcCode::new(64, 1).unwrap();
        let r = RngStream::new(0, 0);
        assert!(digital_link(&BitStream::zeros(0), &ChannelSpec::Noiseless, &code, &r, 5).is_err());
    }
}
