use crate::error::{Error, Result};

/// Sequence of bits stored one per byte, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct BitStream(Vec<u8>);

impl BitStream {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::invalid(format!("bit {pos} has value {}", bits[pos])));
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// Unpacks bytes MSB first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1)).collect())
    }

    /// Packs MSB first; a trailing partial byte is zero-filled.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (7 - i))))
            .collect()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming_distance(&self, other: &BitStream) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count() + self.len().abs_diff(other.len())
    }
}
