//! MSB-first bit I/O with Exp-Golomb codes.

pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self { bytes: Vec::new(), used: 8 }
    }

    pub fn put(&mut self, bit: bool) {
        if self.used == 8 {
            self.bytes.push(0);
            self.used = 0;
        }
        if bit {
            *self.bytes.last_mut().expect("byte pushed") |= 0x80 >> self.used;
        }
        self.used += 1;
    }

    fn put_bits(&mut self, value: u64, count: u32) {
        for i in (0..count).rev() {
            self.put((value >> i) & 1 == 1);
        }
    }

    /// Unsigned Exp-Golomb.
    pub fn ue(&mut self, v: u32) {
        let x = u64::from(v) + 1;
        let len = 64 - x.leading_zeros();
        self.put_bits(0, len - 1);
        self.put_bits(x, len);
    }

    /// Signed Exp-Golomb: `v > 0 -> 2v - 1`, `v <= 0 -> -2v`.
    pub fn se(&mut self, v: i32) {
        let code = if v > 0 { 2 * v as i64 - 1 } else { -2 * v as i64 };
        self.ue(code as u32);
    }

    /// Finished bytes and the number of zero bits padding the last byte.
    pub fn finish(self) -> (Vec<u8>, u8) {
        let pad = if self.bytes.is_empty() { 0 } else { 8 - self.used };
        (self.bytes, pad)
    }
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) struct OutOfBits;

pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

/// Longest Exp-Golomb prefix accepted before the stream is declared corrupt.
const MAX_PREFIX: u32 = 24;

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], pad_bits: u8) -> Self {
        let end = (bytes.len() * 8).saturating_sub(usize::from(pad_bits));
        Self { bytes, pos: 0, end }
    }

    pub fn remaining(&self) -> usize {
        self.end - self.pos
    }

    fn bit(&mut self) -> Result<bool, OutOfBits> {
        if self.pos >= self.end {
            return Err(OutOfBits);
        }
        let b = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(b)
    }

    /// `Ok(None)` signals a prefix longer than any valid code.
    pub fn ue(&mut self) -> Result<Option<u32>, OutOfBits> {
        let mut zeros = 0;
        while !self.bit()? {
            zeros += 1;
            if zeros > MAX_PREFIX {
                return Ok(None);
            }
        }
        let mut x: u64 = 1;
        for _ in 0..zeros {
            x = (x << 1) | u64::from(self.bit()?);
        }
        Ok(Some((x - 1) as u32))
    }

    pub fn se(&mut self) -> Result<Option<i32>, OutOfBits> {
        Ok(self.ue()?.map(|c| {
            let c = i64::from(c);
            if c % 2 == 1 { ((c + 1) / 2) as i32 } else { (-(c / 2)) as i32 }
        }))
    }
}
