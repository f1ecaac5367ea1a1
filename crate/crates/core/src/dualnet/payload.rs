//! Bit-exact feedback payload.
//!
//! Wire order: magnitude codeword indices (`mag_bits` each), phase codeword
//! indices (`phase_bits` each), then sign bits in selection-rank order.
//! Indices are written most-significant bit first and the stream is packed
//! big-endian into bytes, zero-padded to a byte boundary.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackPayload {
    pub mag_codeword: Vec<u32>,
    pub mag_bits: u32,
    pub phase_codeword: Vec<u32>,
    pub phase_bits: u32,
    pub sign_bits: Vec<bool>,
}

/// Lengths needed to parse a packed payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadLayout {
    pub mag_len: usize,
    pub mag_bits: u32,
    pub phase_len: usize,
    pub phase_bits: u32,
    pub sign_len: usize,
}

impl PayloadLayout {
    pub fn bit_len(&self) -> u64 {
        self.mag_len as u64 * u64::from(self.mag_bits)
            + self.phase_len as u64 * u64::from(self.phase_bits)
            + self.sign_len as u64
    }
}

fn push_index(out: &mut Vec<bool>, v: u32, bits: u32) {
    out.extend((0..bits).rev().map(|k| (v >> k) & 1 == 1));
}

impl FeedbackPayload {
    pub fn layout(&self) -> PayloadLayout {
        PayloadLayout {
            mag_len: self.mag_codeword.len(),
            mag_bits: self.mag_bits,
            phase_len: self.phase_codeword.len(),
            phase_bits: self.phase_bits,
            sign_len: self.sign_bits.len(),
        }
    }

    pub fn mag_bit_len(&self) -> u64 {
        self.mag_codeword.len() as u64 * u64::from(self.mag_bits)
    }

    /// Phase codeword bits plus sign bits.
    pub fn phase_bit_len(&self) -> u64 {
        self.phase_codeword.len() as u64 * u64::from(self.phase_bits) + self.sign_bits.len() as u64
    }

    pub fn bit_len(&self) -> u64 {
        self.layout().bit_len()
    }

    pub fn to_bits(&self) -> Result<Vec<bool>> {
        let mut out = Vec::with_capacity(self.bit_len() as usize);
        for (values, bits) in [
            (&self.mag_codeword, self.mag_bits),
            (&self.phase_codeword, self.phase_bits),
        ] {
            for &v in values {
                if bits < 32 && v >> bits != 0 {
                    return Err(Error::invalid(format!("index {v} does not fit in {bits} bits")));
                }
                push_index(&mut out, v, bits);
            }
        }
        out.extend_from_slice(&self.sign_bits);
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bits = self.to_bits()?;
        Ok(bits
            .chunks(8)
            .map(|c| {
                c.iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
            })
            .collect())
    }

    pub fn from_bytes(bytes: &[u8], layout: PayloadLayout) -> Result<Self> {
        let n = layout.bit_len();
        let need = n.div_ceil(8);
        if bytes.len() as u64 != need {
            return Err(Error::format(
                bytes.len() as u64,
                format!("payload needs {need} bytes, got {}", bytes.len()),
            ));
        }
        let bit = |i: u64| (bytes[(i / 8) as usize] >> (7 - i % 8)) & 1 == 1;
        if (n..need * 8).any(bit) {
            return Err(Error::format(n / 8, "non-zero padding bits"));
        }
        let mut pos = 0u64;
        let mut read = |len: usize, width: u32| -> Vec<u32> {
            (0..len)
                .map(|_| {
                    (0..width).fold(0u32, |acc, _| {
                        let b = bit(pos);
                        pos += 1;
                        (acc << 1) | u32::from(b)
                    })
                })
                .collect()
        };
        let mag_codeword = read(layout.mag_len, layout.mag_bits);
        let phase_codeword = read(layout.phase_len, layout.phase_bits);
        let signs = read(layout.sign_len, 1);
        Ok(Self {
            mag_codeword,
            mag_bits: layout.mag_bits,
            phase_codeword,
            phase_bits: layout.phase_bits,
            sign_bits: signs.into_iter().map(|b| b == 1).collect(),
        })
    }
}
