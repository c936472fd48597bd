//! Little-endian byte framing shared by the archive and parameter files:
//! 4 magic bytes, a `u16` version, a body, then a 64-bit FNV-1a checksum of
//! every preceding byte.

use crate::error::FormatError;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub struct FrameWriter {
    buf: Vec<u8>,
}

impl FrameWriter {
    pub fn new(magic: [u8; 4], version: u16) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(&magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn with_capacity(magic: [u8; 4], version: u16, capacity: usize) -> Self {
        let mut w = Self {
            buf: Vec::with_capacity(capacity),
        };
        w.buf.extend_from_slice(&magic);
        w.buf.extend_from_slice(&version.to_le_bytes());
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    /// `u32` length followed by the bytes.
    pub fn block(&mut self, bytes: &[u8]) {
        self.u32(u32::try_from(bytes.len()).expect("block under 4 GiB"));
        self.buf.extend_from_slice(bytes);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let sum = fnv1a64(&self.buf);
        self.u64(sum);
        self.buf
    }
}

pub struct FrameReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> FrameReader<'a> {
    /// Checks magic, version and minimum length.
    pub fn open(bytes: &'a [u8], magic: [u8; 4], version: u16) -> Result<Self, FormatError> {
        if bytes.len() < 4 {
            return Err(FormatError::Truncated {
                needed: 4,
                available: bytes.len(),
            });
        }
        let found: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found,
            });
        }
        if bytes.len() < 6 {
            return Err(FormatError::Truncated {
                needed: 6,
                available: bytes.len(),
            });
        }
        let v = u16::from_le_bytes([bytes[4], bytes[5]]);
        if v != version {
            return Err(FormatError::VersionMismatch {
                expected: version,
                found: v,
            });
        }
        if bytes.len() < 14 {
            return Err(FormatError::Truncated {
                needed: 14,
                available: bytes.len(),
            });
        }
        Ok(Self {
            bytes,
            pos: 6,
            end: bytes.len() - 8,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.end {
            return Err(FormatError::Truncated {
                needed: self.pos + n + 8,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Fails early when `n` more bytes cannot be present.
    pub fn require(&self, n: usize) -> Result<(), FormatError> {
        if self.pos.saturating_add(n) > self.end {
            return Err(FormatError::Truncated {
                needed: self.pos.saturating_add(n).saturating_add(8),
                available: self.bytes.len(),
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or(FormatError::Malformed("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn block(&mut self) -> Result<&'a [u8], FormatError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    /// Verifies the checksum and that nothing is left over.
    pub fn finish(self) -> Result<(), FormatError> {
        self.verify_checksum()?;
        if self.pos != self.end {
            return Err(FormatError::TrailingBytes(self.end - self.pos));
        }
        Ok(())
    }

    /// Checksum verification before decoding, so corrupt payloads are
    /// reported as such rather than as whatever field they happen to break.
    pub fn verify_checksum(&self) -> Result<(), FormatError> {
        let stored = u64::from_le_bytes(self.bytes[self.end..].try_into().expect("8 bytes"));
        let computed = fnv1a64(&self.bytes[..self.end]);
        if stored != computed {
            return Err(FormatError::ChecksumMismatch { stored, computed });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn frame_round_trip() {
        let mut w = FrameWriter::new(*b"TEST", 3);
        w.u32(7);
        w.block(b"hello");
        w.f64s(&[1.5, -0.0]);
        let bytes = w.finish();
        let mut r = FrameReader::open(&bytes, *b"TEST", 3).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.block().unwrap(), b"hello");
        let vs = r.f64s(2).unwrap();
        assert_eq!(vs[0], 1.5);
        assert!(vs[1].is_sign_negative());
        r.finish().unwrap();

        assert!(matches!(
            FrameReader::open(&bytes, *b"NOPE", 3),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            FrameReader::open(&bytes, *b"TEST", 4),
            Err(FormatError::VersionMismatch {
                expected: 4,
                found: 3
            })
        ));
    }
}
