//! Carry-propagating range coder with a 32-bit range and byte-wise
//! renormalization.
//!
//! Symbols are coded against per-symbol [`DiscretizedCdf`] tables. Values
//! outside a table's support are sent as the escape symbol followed by the
//! raw 32-bit two's-complement value in two uniform 16-bit halves. The
//! coding loop is integer-only, so the bytes are identical on every host.
//!
//! Stream layout: the first byte is always zero (the initial carry cache)
//! and the encoder flushes five bytes at the end. The decoder consumes
//! exactly every byte, so truncation or trailing data is detected.

use crate::entropy::DiscretizedCdf;
use crate::error::{Result, ScrError};

const TOP: u32 = 1 << 24;
const RAW_BITS: u32 = 16;

/// An encoded symbol sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodedStream {
    bytes: Vec<u8>,
}

impl CodedStream {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        CodedStream { bytes }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn bit_length(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = u64::from((self.low as u32) << 8);
    }

    /// Narrows the interval to `[start, start + freq)` out of `2^precision`.
    pub fn encode_range(&mut self, start: u32, freq: u32, precision: u32) {
        debug_assert!(freq > 0 && u64::from(start) + u64::from(freq) <= 1u64 << precision);
        let r = self.range >> precision;
        self.low += u64::from(r) * u64::from(start);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Codes `value` against `cdf`, escaping it when outside the support.
    pub fn encode_symbol(&mut self, value: i32, cdf: &DiscretizedCdf) {
        let index = cdf.index_of(value);
        let (start, freq) = cdf.range(index);
        self.encode_range(start, freq, cdf.precision());
        if index == cdf.escape_index() {
            let raw = value as u32;
            self.encode_range(raw >> RAW_BITS, 1, RAW_BITS);
            self.encode_range(raw & 0xFFFF, 1, RAW_BITS);
        }
    }

    pub fn finish(mut self) -> CodedStream {
        for _ in 0..5 {
            self.shift_low();
        }
        CodedStream { bytes: self.out }
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    symbols: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < 5 {
            return Err(ScrError::StreamTruncated);
        }
        if data[0] != 0 {
            return Err(ScrError::StreamCorrupt("nonzero leading byte"));
        }
        let code = u32::from_be_bytes([data[1], data[2], data[3], data[4]]);
        Ok(RangeDecoder {
            data,
            pos: 5,
            code,
            range: u32::MAX,
            symbols: 0,
        })
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or(ScrError::StreamTruncated)?;
        self.pos += 1;
        Ok(b)
    }

    /// Returns the cumulative target for the next symbol and the scaled
    /// range unit.
    fn target(&self, precision: u32) -> Result<(u32, u32)> {
        let r = self.range >> precision;
        let target = self.code / r;
        if target >= 1 << precision {
            return Err(ScrError::StreamCorrupt("code outside coding interval"));
        }
        Ok((target, r))
    }

    fn consume(&mut self, r: u32, start: u32, freq: u32) -> Result<()> {
        self.code -= r * start;
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
            self.range <<= 8;
        }
        Ok(())
    }

    fn decode_raw(&mut self) -> Result<u32> {
        let (target, r) = self.target(RAW_BITS)?;
        self.consume(r, target, 1)?;
        Ok(target)
    }

    pub fn decode_symbol(&mut self, cdf: &DiscretizedCdf) -> Result<i32> {
        let (target, r) = self.target(cdf.precision())?;
        let index = cdf.find(target);
        let (start, freq) = cdf.range(index);
        self.consume(r, start, freq)?;
        self.symbols += 1;
        match cdf.value_of(index) {
            Some(v) => Ok(v),
            None => {
                let hi = self.decode_raw()?;
                let lo = self.decode_raw()?;
                let value = ((hi << RAW_BITS) | lo) as i32;
                if cdf.index_of(value) != cdf.escape_index() {
                    return Err(ScrError::StreamCorrupt("escaped value inside support"));
                }
                Ok(value)
            }
        }
    }

    /// Symbols decoded so far (escape payloads not counted).
    pub fn symbols_decoded(&self) -> u64 {
        self.symbols
    }

    /// Checks that the whole stream was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(ScrError::StreamCorrupt("trailing bytes in coded stream"));
        }
        Ok(())
    }
}

/// Encodes `symbols[i]` against `cdfs[i]`.
pub fn encode(symbols: &[i32], cdfs: &[DiscretizedCdf]) -> Result<CodedStream> {
    if symbols.len() != cdfs.len() {
        return Err(ScrError::LengthMismatch {
            expected: cdfs.len(),
            actual: symbols.len(),
        });
    }
    let mut enc = RangeEncoder::new();
    for (&s, cdf) in symbols.iter().zip(cdfs) {
        enc.encode_symbol(s, cdf);
    }
    Ok(enc.finish())
}

/// Decodes one symbol per table in `cdfs`, requiring the stream to be
/// consumed exactly.
pub fn decode(stream: &CodedStream, cdfs: &[DiscretizedCdf]) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(stream.bytes())?;
    let out = cdfs
        .iter()
        .map(|cdf| dec.decode_symbol(cdf))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}
