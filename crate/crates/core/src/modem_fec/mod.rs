//! Digital baseline channel stage: Gray QPSK with soft demodulation and a
//! rate-1/2 regular (3,6) LDPC code decoded by normalized min-sum.

mod bits;
mod ldpc;
mod link;
mod qpsk;

pub use bits::BitStream;
pub use ldpc::{DecodeOutcome, LdpcCode, MIN_SUM_SCALE};
pub use link::{digital_link, LinkReport, DEFAULT_MAX_ITERS, NOISELESS_LLR_VARIANCE};
pub use qpsk::{qpsk_demod_llr, qpsk_modulate, LlrBlock};
