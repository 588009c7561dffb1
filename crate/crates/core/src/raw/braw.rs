//! `.braw` container.
//!
//! ```text
//! offset size  field
//! 0      4     magic "BRAW"
//! 4      1     version (1)
//! 5      1     pattern code (0 RGGB, 1 BGGR, 2 GRBG, 3 GBRG, 4 RYYB)
//! 6      1     bit depth
//! 7      1     reserved (0)
//! 8      4     width, u32 LE
//! 12     4     height, u32 LE
//! 16     2     black level, u16 LE
//! 18     2     saturation level, u16 LE
//! 20     2*w*h samples, u16 LE, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{BayerRaw, Pattern, RawMeta};
use crate::error::{Error, Result};

pub const BRAW_MAGIC: [u8; 4] = *b"BRAW";
pub const BRAW_VERSION: u8 = 1;
const HEADER_LEN: usize = 20;

pub fn write_braw<W: Write>(mut w: W, raw: &BayerRaw) -> Result<()> {
    w.write_all(&raw.to_braw_bytes())?;
    Ok(())
}

pub fn read_braw<R: Read>(mut r: R) -> Result<BayerRaw> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    BayerRaw::from_braw_bytes(&buf)
}

impl BayerRaw {
    pub fn to_braw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.samples.len());
        out.extend_from_slice(&BRAW_MAGIC);
        out.push(BRAW_VERSION);
        out.push(self.meta.pattern.code());
        out.push(self.meta.bit_depth);
        out.push(0);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.meta.black_lev.to_le_bytes());
        out.extend_from_slice(&self.meta.saturation_lev.to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_braw_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_LEN {
            return Err(Error::Parse(format!(
                "braw header needs {HEADER_LEN} bytes, got {}",
                buf.len()
            )));
        }
        let magic: [u8; 4] = buf[0..4].try_into().unwrap();
        if magic != BRAW_MAGIC {
            return Err(Error::BadMagic {
                expected: BRAW_MAGIC,
                found: magic,
            });
        }
        if buf[4] != BRAW_VERSION {
            return Err(Error::UnsupportedVersion(buf[4]));
        }
        let pattern = Pattern::from_code(buf[5])?;
        let bit_depth = buf[6];
        let width = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
        let black = u16::from_le_bytes(buf[16..18].try_into().unwrap());
        let sat = u16::from_le_bytes(buf[18..20].try_into().unwrap());
        let meta = RawMeta::new(pattern, bit_depth, black, sat)?;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::Parse("braw dimensions overflow".into()))?;
        let payload = &buf[HEADER_LEN..];
        if payload.len() != 2 * n {
            return Err(Error::Parse(format!(
                "braw payload holds {} bytes, {width}x{height} needs {}",
                payload.len(),
                2 * n
            )));
        }
        let samples = payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        BayerRaw::new(width, height, meta, samples)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        BayerRaw::from_braw_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_braw_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BayerRaw {
        let meta = RawMeta::new(Pattern::Gbrg, 10, 64, 1023).unwrap();
        BayerRaw::new(4, 2, meta, vec![64, 100, 1023, 0, 5, 6, 7, 8]).unwrap()
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = sample().to_braw_bytes();
        assert_eq!(&bytes[0..4], b"BRAW");
        assert_eq!(bytes[4..8], [1, 3, 10, 0]);
        assert_eq!(bytes[8..12], 4u32.to_le_bytes());
        assert_eq!(bytes[12..16], 2u32.to_le_bytes());
        assert_eq!(bytes[16..18], 64u16.to_le_bytes());
        assert_eq!(bytes[18..20], 1023u16.to_le_bytes());
        assert_eq!(bytes[22..24], 100u16.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 16);
    }

    #[test]
    fn roundtrip_through_reader() {
        let raw = sample();
        let mut buf = Vec::new();
        write_braw(&mut buf, &raw).unwrap();
        assert_eq!(read_braw(buf.as_slice()).unwrap(), raw);
    }

    #[test]
    fn rejects_bad_magic_and_short_payload() {
        let mut bytes = sample().to_braw_bytes();
        bytes[0] = b'X';
        assert!(matches!(BayerRaw::from_braw_bytes(&bytes), Err(Error::BadMagic { .. })));
        let bytes = sample().to_braw_bytes();
        assert!(matches!(
            BayerRaw::from_braw_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_sample() {
        let mut bytes = sample().to_braw_bytes();
        bytes[20..22].copy_from_slice(&2000u16.to_le_bytes());
        assert!(BayerRaw::from_braw_bytes(&bytes).is_err());
    }
}
