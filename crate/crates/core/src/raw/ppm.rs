//! Binary PPM (P6) I/O. Writes 16-bit big-endian samples with maxval 65535;
//! reads any maxval in 1..=65535.

use std::fs;
use std::path::Path;

use super::RgbImage;
use crate::error::{Error, Result};

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    fs::write(path, img.to_ppm_bytes())?;
    Ok(())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    RgbImage::from_ppm_bytes(&fs::read(path)?)
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(buf: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
            if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PPM header".into()));
        }
        fields.push(std::str::from_utf8(&buf[start..pos]).map_err(|e| Error::Parse(e.to_string()))?);
    }
    if fields[0] != "P6" {
        return Err(Error::Parse(format!("expected P6 PPM, found {:?}", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| Error::Parse(format!("bad PPM header number {s:?}")))
    };
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PPM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos + 1,
    })
}

impl RgbImage {
    /// 16-bit P6 encoding; values are clamped to [0, 1] and rounded.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(self.len() * 6);
        for i in 0..self.len() {
            for c in 0..3 {
                let v = self.planes[c][i];
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                out.extend_from_slice(&((v * 65535.0).round() as u16).to_be_bytes());
            }
        }
        out
    }

    pub fn from_ppm_bytes(buf: &[u8]) -> Result<Self> {
        let h = parse_header(buf)?;
        let bytes_per = if h.maxval > 255 { 2 } else { 1 };
        let n = h.width * h.height;
        let need = n * 3 * bytes_per;
        let data = buf
            .get(h.data_start..h.data_start + need)
            .ok_or_else(|| Error::Parse(format!("PPM raster needs {need} bytes")))?;
        let scale = f64::from(h.maxval);
        let mut img = RgbImage::filled(h.width, h.height, [0.0; 3]);
        for i in 0..n {
            for c in 0..3 {
                let k = (i * 3 + c) * bytes_per;
                let v = if bytes_per == 2 {
                    u16::from_be_bytes([data[k], data[k + 1]]) as f64
                } else {
                    data[k] as f64
                };
                img.planes[c][i] = (v / scale).min(1.0);
            }
        }
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_roundtrip() {
        let img = RgbImage::from_fn(3, 2, |r, c| [r as f64 / 2.0, c as f64 / 3.0, 0.25]);
        let bytes = img.to_ppm_bytes();
        assert!(bytes.starts_with(b"P6\n3 2\n65535\n"));
        let back = RgbImage::from_ppm_bytes(&bytes).unwrap();
        assert!(back.max_abs_diff(&img) <= 0.5 / 65535.0);
    }

    #[test]
    fn reads_eight_bit_with_comment() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 51, 0, 255, 0]);
        let img = RgbImage::from_ppm_bytes(&bytes).unwrap();
        assert_eq!(img.pixel(0), [1.0, 0.0, 0.2]);
        assert_eq!(img.pixel(1), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn big_endian_samples() {
        let img = RgbImage::filled(1, 1, [1.0, 0.0, 0.5]);
        let bytes = img.to_ppm_bytes();
        let raster = &bytes[bytes.len() - 6..];
        assert_eq!(raster, &[0xff, 0xff, 0, 0, 0x80, 0x00]);
    }

    #[test]
    fn rejects_truncated() {
        let bytes = b"P6\n2 2\n255\n\x00\x00".to_vec();
        assert!(RgbImage::from_ppm_bytes(&bytes).is_err());
        assert!(RgbImage::from_ppm_bytes(b"P3\n1 1\n255\n").is_err());
    }
}
