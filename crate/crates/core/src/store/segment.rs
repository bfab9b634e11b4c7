//! Segment files: the bit-exact on-disk form of one recording's samples.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "UDS1"
//!      4     2  version (u16, = 1)
//!      6     4  n_samples (u32)
//!     10     8  rate_hz (f64)
//!     18     1  flags (bit 0 = includes_gravity, other bits zero)
//!     19     8  t0 (f64, always 0.0)
//!     27  24·n  samples, row-major x,y,z (f64 each)
//!   27+24n   4  CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All fields little-endian.

use thiserror::Error;

use crate::model::Sample;

pub const MAGIC: [u8; 4] = *b"UDS1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 27;
pub const TRAILER_LEN: usize = 4;

const FLAG_GRAVITY: u8 = 0b1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentError {
    #[error("segment is {0} bytes, shorter than header and trailer")]
    Truncated(usize),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported segment version {0}")]
    UnsupportedVersion(u16),
    #[error("header declares {declared} samples but payload holds {actual} bytes")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("invalid header field {0}")]
    InvalidHeader(&'static str),
    #[error("recording has {0} samples, more than a segment can hold")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentData {
    pub rate_hz: f64,
    pub includes_gravity: bool,
    pub samples: Vec<Sample>,
}

/// Byte length of a segment holding `n_samples` samples.
pub const fn encoded_len(n_samples: usize) -> usize {
    HEADER_LEN + 24 * n_samples + TRAILER_LEN
}

pub fn encode(rate_hz: f64, includes_gravity: bool, samples: &[Sample]) -> Result<Vec<u8>, SegmentError> {
    let n = u32::try_from(samples.len()).map_err(|_| SegmentError::TooLarge(samples.len()))?;
    let mut buf = Vec::with_capacity(encoded_len(samples.len()));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&rate_hz.to_le_bytes());
    buf.push(if includes_gravity { FLAG_GRAVITY } else { 0 });
    buf.extend_from_slice(&0.0f64.to_le_bytes());
    for s in samples {
        for v in s {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// CRC stored in the trailer of an encoded segment.
pub fn stored_crc(bytes: &[u8]) -> Option<u32> {
    let tail = bytes.len().checked_sub(TRAILER_LEN)?;
    Some(u32::from_le_bytes(bytes[tail..].try_into().ok()?))
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

/// Decodes a segment. The CRC is checked before any other field is trusted.
pub fn decode(bytes: &[u8]) -> Result<SegmentData, SegmentError> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(SegmentError::Truncated(bytes.len()));
    }
    let body_len = bytes.len() - TRAILER_LEN;
    let stored = stored_crc(bytes).expect("length checked");
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(SegmentError::CrcMismatch { stored, computed });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(SegmentError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(SegmentError::UnsupportedVersion(version));
    }
    let declared = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    let payload = body_len - HEADER_LEN;
    if !payload.is_multiple_of(24) || (payload / 24) as u64 != u64::from(declared) {
        return Err(SegmentError::LengthMismatch { declared, actual: payload });
    }
    let rate_hz = f64_at(bytes, 10);
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SegmentError::InvalidHeader("rate_hz"));
    }
    let flags = bytes[18];
    if flags & !FLAG_GRAVITY != 0 {
        return Err(SegmentError::InvalidHeader("flags"));
    }
    if f64_at(bytes, 19).to_bits() != 0.0f64.to_bits() {
        return Err(SegmentError::InvalidHeader("t0"));
    }
    let samples = bytes[HEADER_LEN..body_len]
        .chunks_exact(24)
        .map(|c| [f64_at(c, 0), f64_at(c, 8), f64_at(c, 16)])
        .collect();
    Ok(SegmentData {
        rate_hz,
        includes_gravity: flags & FLAG_GRAVITY != 0,
        samples,
    })
}
