//! The `.scr` bitstream container.
//!
//! Byte layout (little-endian):
//!
//! | offset | size | field |
//! |---:|---:|---|
//! | 0 | 4 | magic `"SCR1"` |
//! | 4 | 1 | version (1) |
//! | 5 | 1 | flags: bits 0-1 mask mode (0 det, 1 stoch, 2 2d, 3 full), bit 2 zero-mean; others zero |
//! | 6 | 2 | quality, unsigned 8.8 fixed point |
//! | 8 | 2 | image width |
//! | 10 | 2 | image height |
//! | 12 | 6 | latent channels, height, width (u16 each) |
//! | 18 | 6 | hyper latent channels, height, width (u16 each) |
//! | 24 | 16 | model id of the weight container |
//! | 40 | 8 | stochastic mask seed (zero for other modes) |
//! | 48 | 4 | hyper stream length `Lz` |
//! | 52 | 4 | latent stream length `Ly` |
//! | 56 | `Lz` | hyper stream |
//! | 56 + `Lz` | `Ly` | latent stream |
//! | 56 + `Lz` + `Ly` | 4 | CRC-32 of every preceding byte |
//!
//! The mask is never stored; the decoder regenerates it.

use crate::error::{Result, ScrError};
use crate::mask::MaskMode;
use crate::range_coder::CodedStream;
use crate::tensor::Shape;
use crate::weights::ModelId;
use crate::wire::Reader;

pub const SCR_MAGIC: [u8; 4] = *b"SCR1";
pub const SCR_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 48;
/// Header, both length prefixes and the checksum.
pub const OVERHEAD_BYTES: usize = HEADER_BYTES + 8 + 4;

const FLAG_ZERO_MEAN: u8 = 0b100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrHeader {
    pub quality_fixed: u16,
    pub width: u16,
    pub height: u16,
    pub latent: Shape,
    pub hyper: Shape,
    pub model_id: ModelId,
    pub mask_mode: MaskMode,
    pub zero_mean: bool,
}

impl ScrHeader {
    /// Quality as a real number; exact for every 8.8 value.
    pub fn quality(&self) -> f64 {
        f64::from(self.quality_fixed) / 256.0
    }

    fn flags(&self) -> u8 {
        let mode = match self.mask_mode {
            MaskMode::Deterministic => 0,
            MaskMode::Stochastic(_) => 1,
            MaskMode::Baseline2d => 2,
            MaskMode::Full => 3,
        };
        mode | if self.zero_mean { FLAG_ZERO_MEAN } else { 0 }
    }

    fn seed(&self) -> u64 {
        match self.mask_mode {
            MaskMode::Stochastic(seed) => seed,
            _ => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ScrError::InvalidHeader(m.into()));
        if self.quality_fixed < 256 {
            return bad("quality below 1");
        }
        if self.width == 0 || self.height == 0 {
            return bad("zero image dimension");
        }
        for s in [self.latent, self.hyper] {
            if s.channels == 0 || s.height == 0 || s.width == 0 {
                return bad("zero tensor dimension");
            }
            if s.channels > u16::MAX as usize || s.height > u16::MAX as usize || s.width > u16::MAX as usize {
                return bad("tensor dimension exceeds 16 bits");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrBitstream {
    pub header: ScrHeader,
    pub z_stream: CodedStream,
    pub y_stream: CodedStream,
}

impl ScrBitstream {
    /// Stored size in bytes.
    pub fn byte_len(&self) -> usize {
        OVERHEAD_BYTES + self.z_stream.bytes().len() + self.y_stream.bytes().len()
    }

    /// Stored size in bits; the numerator of bits per pixel.
    pub fn bit_len(&self) -> u64 {
        self.byte_len() as u64 * 8
    }

    pub fn write(&self) -> Result<Vec<u8>> {
        self.header.validate()?;
        let h = &self.header;
        let lz = u32::try_from(self.z_stream.bytes().len())
            .map_err(|_| ScrError::InvalidHeader("hyper stream too long".into()))?;
        let ly = u32::try_from(self.y_stream.bytes().len())
            .map_err(|_| ScrError::InvalidHeader("latent stream too long".into()))?;
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(&SCR_MAGIC);
        out.push(SCR_VERSION);
        out.push(h.flags());
        out.extend_from_slice(&h.quality_fixed.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        for s in [h.latent, h.hyper] {
            for d in [s.channels, s.height, s.width] {
                out.extend_from_slice(&(d as u16).to_le_bytes());
            }
        }
        out.extend_from_slice(&h.model_id.0);
        out.extend_from_slice(&h.seed().to_le_bytes());
        out.extend_from_slice(&lz.to_le_bytes());
        out.extend_from_slice(&ly.to_le_bytes());
        out.extend_from_slice(self.z_stream.bytes());
        out.extend_from_slice(self.y_stream.bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(out.len(), self.byte_len());
        Ok(out)
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, || ScrError::Truncated);
        let magic = r.array::<4>()?;
        if magic != SCR_MAGIC {
            return Err(ScrError::BadMagic(magic));
        }
        let version = r.u8()?;
        if version != SCR_VERSION {
            return Err(ScrError::UnsupportedVersion(version));
        }
        let flags = r.u8()?;
        let quality_fixed = r.u16()?;
        let width = r.u16()?;
        let height = r.u16()?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u16()? as usize;
        }
        let model_id = ModelId(r.array()?);
        let seed = r.u64()?;
        let lz = r.u32()? as usize;
        let ly = r.u32()? as usize;
        debug_assert_eq!(r.position(), HEADER_BYTES + 8);
        let expected = OVERHEAD_BYTES as u64 + lz as u64 + ly as u64;
        if (bytes.len() as u64) < expected {
            return Err(ScrError::Truncated);
        }
        if bytes.len() as u64 > expected {
            return Err(ScrError::TrailingBytes((bytes.len() as u64 - expected) as usize));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(ScrError::ChecksumMismatch { stored, computed });
        }
        let z_stream = CodedStream::from_bytes(r.take(lz)?.to_vec());
        let y_stream = CodedStream::from_bytes(r.take(ly)?.to_vec());

        if flags & !0b111 != 0 {
            return Err(ScrError::InvalidHeader(format!("unknown flag bits {flags:#04x}")));
        }
        let mask_mode = match flags & 0b11 {
            0 => MaskMode::Deterministic,
            1 => MaskMode::Stochastic(seed),
            2 => MaskMode::Baseline2d,
            _ => MaskMode::Full,
        };
        if !matches!(mask_mode, MaskMode::Stochastic(_)) && seed != 0 {
            return Err(ScrError::InvalidHeader("seed set for a non-stochastic mask".into()));
        }
        let header = ScrHeader {
            quality_fixed,
            width,
            height,
            latent: Shape::new(dims[0], dims[1], dims[2]),
            hyper: Shape::new(dims[3], dims[4], dims[5]),
            model_id,
            mask_mode,
            zero_mean: flags & FLAG_ZERO_MEAN != 0,
        };
        header.validate()?;
        Ok(ScrBitstream {
            header,
            z_stream,
            y_stream,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(mode: MaskMode) -> ScrBitstream {
        ScrBitstream {
            header: ScrHeader {
                quality_fixed: 972,
                width: 64,
                height: 48,
                latent: Shape::new(32, 6, 8),
                hyper: Shape::new(8, 2, 2),
                model_id: ModelId([7; 16]),
                mask_mode: mode,
                zero_mean: true,
            },
            z_stream: CodedStream::from_bytes(vec![0, 1, 2, 3, 4]),
            y_stream: CodedStream::from_bytes(vec![0, 9, 9, 9, 9]),
        }
    }

    #[test]
    fn round_trip_all_modes() {
        for mode in [
            MaskMode::Deterministic,
            MaskMode::Stochastic(u64::MAX - 3),
            MaskMode::Baseline2d,
            MaskMode::Full,
        ] {
            let bs = minimal(mode);
            let bytes = bs.write().unwrap();
            assert_eq!(bytes.len(), bs.byte_len());
            assert_eq!(ScrBitstream::read(&bytes).unwrap(), bs);
        }
    }

    #[test]
    fn fixed_point_quality_is_exact() {
        assert_eq!(minimal(MaskMode::Deterministic).header.quality(), 3.796875);
    }

    #[test]
    fn typed_errors() {
        let bytes = minimal(MaskMode::Deterministic).write().unwrap();
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(ScrBitstream::read(&b), Err(ScrError::BadMagic(_))));
        let mut b = bytes.clone();
        b[4] = 2;
        assert_eq!(ScrBitstream::read(&b), Err(ScrError::UnsupportedVersion(2)));
        assert_eq!(ScrBitstream::read(&bytes[..bytes.len() - 1]), Err(ScrError::Truncated));
        assert_eq!(ScrBitstream::read(&bytes[..10]), Err(ScrError::Truncated));
        let mut b = bytes.clone();
        b.push(0);
        assert_eq!(ScrBitstream::read(&b), Err(ScrError::TrailingBytes(1)));
        let mut b = bytes.clone();
        b[58] ^= 1;
        assert!(matches!(ScrBitstream::read(&b), Err(ScrError::ChecksumMismatch { .. })));
    }

    #[test]
    fn rejects_invalid_header() {
        let mut bs = minimal(MaskMode::Deterministic);
        bs.header.quality_fixed = 255;
        assert!(matches!(bs.write(), Err(ScrError::InvalidHeader(_))));
    }
}
