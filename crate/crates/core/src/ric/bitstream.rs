//! Container layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RIC1"
//! 4       1     version (1)
//! 5       1     pattern code
//! 6       1     bit depth
//! 7       1     profile (0 static, 1 fitted)
//! 8       4     mosaic width
//! 12      4     mosaic height
//! 16      2     black level
//! 18      2     saturation level
//! 20      var   context length (LEB128) followed by that many bytes
//! ..      20    byte length of the five sections, scale 0 first
//! ..            sections
//! ```
//!
//! Each section is a CRC-32 of the reconstructed level (planes in stack
//! order, symbols `sample - black` as u16 LE) followed by the range-coder bytes of that
//! scale. Because every section length is in the header, a stream cut at a
//! section boundary still decodes its complete scales.
//!
//! Context bytes (fitted profile only): a flag byte (bit 0: cross-channel
//! terms), then every coefficient set in slot order as zigzag LEB128
//! values, then per (scale, channel) the 8-entry bucket map, the mixture
//! count and the mixtures. A mixture is its component count followed by
//! (weight in 1/1024 units, scale code, offset in scale-dependent steps).

use super::context::{
    coef_slot, mix_slot, n_features, offset_step, sigma_code, sigma_from_code, ContextModel, Profile, BUCKETS,
    POSITIONS, SIGMA_CODE_MAX, WEIGHT_UNIT,
};
use super::model::{QComponent, QMixture};
use super::pyramid::LEVELS;
use crate::error::{Error, Result};
use crate::raw::{Pattern, RawMeta};

pub const MAGIC: [u8; 4] = *b"RIC1";
pub const VERSION: u8 = 1;
/// Largest mosaic side accepted by the decoder.
pub const MAX_SIDE: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub meta: RawMeta,
    pub profile: Profile,
    pub width: u32,
    pub height: u32,
    pub context: Vec<u8>,
    pub sections: [u32; LEVELS],
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptInput("header ends early".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::CorruptInput("varint too long".into()))
    }

    fn svarint(&mut self) -> Result<i64> {
        Ok(unzigzag(self.varint()?))
    }
}

impl Header {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.meta.pattern.code());
        out.push(self.meta.bit_depth);
        out.push(self.profile.code());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.meta.black_lev.to_le_bytes());
        out.extend_from_slice(&self.meta.saturation_lev.to_le_bytes());
        put_varint(out, self.context.len() as u64);
        out.extend_from_slice(&self.context);
        for s in self.sections {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }

    /// Parses the header and returns it with its length in bytes.
    pub fn read(buf: &[u8]) -> Result<(Header, usize)> {
        let mut r = Reader { buf, pos: 0 };
        let magic: [u8; 4] = match buf.get(..4) {
            Some(m) => m.try_into().unwrap(),
            None => {
                let mut found = [0u8; 4];
                found[..buf.len()].copy_from_slice(buf);
                return Err(Error::BadMagic { expected: MAGIC, found });
            }
        };
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        r.pos = 4;
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let pattern = Pattern::from_code(r.u8()?).map_err(|e| Error::CorruptInput(e.to_string()))?;
        let bit_depth = r.u8()?;
        let profile = Profile::from_code(r.u8()?)?;
        let width = r.u32()?;
        let height = r.u32()?;
        let black = r.u16()?;
        let sat = r.u16()?;
        let meta = RawMeta::new(pattern, bit_depth, black, sat).map_err(|e| Error::CorruptInput(e.to_string()))?;
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 || width > MAX_SIDE || height > MAX_SIDE {
            return Err(Error::CorruptInput(format!("implausible dimensions {width}x{height}")));
        }
        let n = r.varint()?;
        if n > (buf.len() - r.pos) as u64 {
            return Err(Error::CorruptInput("context length exceeds stream".into()));
        }
        let context = r.take(n as usize)?.to_vec();
        let mut sections = [0u32; LEVELS];
        for s in sections.iter_mut() {
            *s = r.u32()?;
        }
        Ok((
            Header {
                meta,
                profile,
                width,
                height,
                context,
                sections,
            },
            r.pos,
        ))
    }
}

pub fn write_context(ctx: &ContextModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(ctx.cross_channel as u8);
    for c in &ctx.coeffs {
        for &v in c {
            put_varint(&mut out, zigzag(v));
        }
    }
    for (map, mixes) in ctx.bucket_map.iter().zip(&ctx.mixtures) {
        out.extend_from_slice(map);
        put_varint(&mut out, mixes.len() as u64);
        for m in mixes {
            put_varint(&mut out, m.components.len() as u64);
            for c in &m.components {
                let code = sigma_code(c.sigma as f64);
                put_varint(&mut out, (c.weight / WEIGHT_UNIT) as u64);
                put_varint(&mut out, code as u64);
                put_varint(&mut out, zigzag(c.offset / offset_step(sigma_from_code(code))));
            }
        }
    }
    out
}

pub fn read_context(buf: &[u8]) -> Result<ContextModel> {
    let mut r = Reader { buf, pos: 0 };
    let flags = r.u8()?;
    if flags > 1 {
        return Err(Error::CorruptInput(format!("unknown context flags {flags:#x}")));
    }
    let cross = flags == 1;
    let mut coeffs = vec![Vec::new(); (LEVELS - 1) * POSITIONS.len() * 4];
    for scale in 1..LEVELS {
        for pos in 0..POSITIONS.len() {
            for k in 0..4 {
                let n = n_features(pos, k, cross);
                coeffs[coef_slot(scale, pos, k)] = (0..n).map(|_| r.svarint()).collect::<Result<_>>()?;
            }
        }
    }
    let mut bucket_map = Vec::new();
    let mut mixtures = Vec::new();
    for scale in 1..LEVELS {
        for k in 0..4 {
            debug_assert_eq!(bucket_map.len(), mix_slot(scale, k));
            let map: [u8; BUCKETS] = r.take(BUCKETS)?.try_into().unwrap();
            let n = r.varint()?;
            if n == 0 || n > BUCKETS as u64 {
                return Err(Error::CorruptInput(format!("{n} mixtures in one slot")));
            }
            let mut mixes = Vec::new();
            for _ in 0..n {
                let nc = r.varint()?;
                if nc == 0 || nc > 64 {
                    return Err(Error::CorruptInput(format!("{nc} mixture components")));
                }
                let mut components = Vec::new();
                for _ in 0..nc {
                    let w = r.varint()?;
                    let code = r.varint()?;
                    if w > 1024 || code > SIGMA_CODE_MAX as u64 {
                        return Err(Error::CorruptInput("mixture component out of range".into()));
                    }
                    let sigma = sigma_from_code(code as u32);
                    let steps = r.svarint()?;
                    if steps.abs() > 1 << 40 {
                        return Err(Error::CorruptInput("mixture offset out of range".into()));
                    }
                    components.push(QComponent {
                        weight: w as u32 * WEIGHT_UNIT,
                        offset: steps * offset_step(sigma),
                        sigma,
                    });
                }
                mixes.push(QMixture { components });
            }
            bucket_map.push(map);
            mixtures.push(mixes);
        }
    }
    if r.pos != buf.len() {
        return Err(Error::CorruptInput("trailing bytes after context".into()));
    }
    let ctx = ContextModel {
        profile: Profile::Fitted,
        cross_channel: cross,
        coeffs,
        bucket_map,
        mixtures,
    };
    ctx.validate()?;
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::PlaneStack;
    use crate::ric::context::{fit_context, FitOptions};
    use crate::ric::pyramid::build_pyramid;

    #[test]
    fn varints() {
        for v in [0i64, 1, -1, 63, -64, 1 << 40, -(1 << 40), i64::MAX, i64::MIN] {
            let mut out = Vec::new();
            put_varint(&mut out, zigzag(v));
            let mut r = Reader { buf: &out, pos: 0 };
            assert_eq!(r.svarint().unwrap(), v);
            assert_eq!(r.pos, out.len());
        }
        let mut r = Reader {
            buf: &[0xff; 20],
            pos: 0,
        };
        assert!(r.varint().is_err());
    }

    #[test]
    fn header_roundtrip_and_rejections() {
        let h = Header {
            meta: RawMeta::new(Pattern::Ryyb, 14, 512, 16383).unwrap(),
            profile: Profile::Fitted,
            width: 4000,
            height: 3000,
            context: vec![1, 2, 3],
            sections: [10, 20, 30, 40, 50],
        };
        let mut buf = Vec::new();
        h.write(&mut buf);
        let (back, len) = Header::read(&buf).unwrap();
        assert_eq!((back, len), (h, buf.len()));
        // black level is exactly two bytes at offset 16
        assert_eq!(&buf[16..18], &512u16.to_le_bytes());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Header::read(&bad), Err(Error::BadMagic { .. })));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(Header::read(&bad), Err(Error::UnsupportedVersion(9))));
        assert!(Header::read(&buf[..3]).is_err());
        for cut in 4..buf.len() {
            assert!(Header::read(&buf[..cut]).is_err());
        }
        let mut bad = buf.clone();
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Header::read(&bad), Err(Error::CorruptInput(_))));
    }

    #[test]
    fn context_roundtrip() {
        let mut s = 1u64;
        let x = PlaneStack {
            width: 32,
            height: 32,
            planes: std::array::from_fn(|p| {
                (0..1024)
                    .map(|i| {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((i % 32) * 40 + p * 30) as u16 + (s >> 58) as u16
                    })
                    .collect()
            }),
        };
        let pyr = build_pyramid(&x).unwrap();
        for cross in [true, false] {
            let ctx = fit_context(&pyr, 4096, FitOptions { cross_channel: cross });
            let bytes = write_context(&ctx);
            assert_eq!(read_context(&bytes).unwrap(), ctx);
            for cut in 0..bytes.len() {
                assert!(read_context(&bytes[..cut]).is_err());
            }
        }
        assert!(read_context(&[7]).is_err());
    }
}
