//! Bayer RAW containers, linearization and the 4-plane RGGB stacking.

mod braw;
mod demosaic;
mod ppm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use braw::{read_braw, write_braw, BRAW_MAGIC, BRAW_VERSION};
pub use demosaic::{demosaic, mosaic};
pub use ppm::{read_ppm, write_ppm};

/// Colour filter arrangement of the top-left 2x2 quad.
///
/// `Ryyb` sensors are handled positionally: yellow sites take the place of
/// the green sites of RGGB. No spectral conversion is attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
    Ryyb,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::Rggb,
        Pattern::Bggr,
        Pattern::Grbg,
        Pattern::Gbrg,
        Pattern::Ryyb,
    ];

    pub fn code(self) -> u8 {
        match self {
            Pattern::Rggb => 0,
            Pattern::Bggr => 1,
            Pattern::Grbg => 2,
            Pattern::Gbrg => 3,
            Pattern::Ryyb => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Pattern::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::InvalidMetadata(format!("unknown Bayer pattern code {code}")))
    }

    /// (row, col) offsets inside the 2x2 quad of the stacked channels, in
    /// stack order (r, g_r, g_b, b). `g_r` is the green sharing a row with
    /// red, `g_b` the one sharing a row with blue.
    pub fn channel_offsets(self) -> [(usize, usize); 4] {
        match self {
            Pattern::Rggb | Pattern::Ryyb => [(0, 0), (0, 1), (1, 0), (1, 1)],
            Pattern::Bggr => [(1, 1), (1, 0), (0, 1), (0, 0)],
            Pattern::Grbg => [(0, 1), (0, 0), (1, 1), (1, 0)],
            Pattern::Gbrg => [(1, 0), (1, 1), (0, 0), (0, 1)],
        }
    }

    /// Stack channel sitting at mosaic position (row, col).
    pub fn channel_at(self, row: usize, col: usize) -> Channel {
        let key = (row & 1, col & 1);
        let offsets = self.channel_offsets();
        let idx = offsets.iter().position(|&o| o == key).unwrap_or(0);
        Channel::ALL[idx]
    }

    /// RGB plane index (0 = R, 1 = G, 2 = B) of mosaic position (row, col).
    pub fn color_at(self, row: usize, col: usize) -> usize {
        self.channel_at(row, col).color()
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Pattern::Rggb => "RGGB",
            Pattern::Bggr => "BGGR",
            Pattern::Grbg => "GRBG",
            Pattern::Gbrg => "GBRG",
            Pattern::Ryyb => "RYYB",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Pattern::Rggb),
            "BGGR" => Ok(Pattern::Bggr),
            "GRBG" => Ok(Pattern::Grbg),
            "GBRG" => Ok(Pattern::Gbrg),
            "RYYB" => Ok(Pattern::Ryyb),
            other => Err(Error::InvalidMetadata(format!("unknown Bayer pattern {other:?}"))),
        }
    }
}

/// Channels of a [`PlaneStack`], in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R = 0,
    Gr = 1,
    Gb = 2,
    B = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::R, Channel::Gr, Channel::Gb, Channel::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn color(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::Gr | Channel::Gb => 1,
            Channel::B => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "r",
            Channel::Gr => "g_r",
            Channel::Gb => "g_b",
            Channel::B => "b",
        }
    }
}

/// Acquisition metadata shared by integer and normalized mosaics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMeta {
    pub pattern: Pattern,
    pub bit_depth: u8,
    pub black_lev: u16,
    pub saturation_lev: u16,
}

impl RawMeta {
    pub fn new(pattern: Pattern, bit_depth: u8, black_lev: u16, saturation_lev: u16) -> Result<Self> {
        let meta = RawMeta {
            pattern,
            bit_depth,
            black_lev,
            saturation_lev,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.bit_depth) {
            return Err(Error::InvalidMetadata(format!(
                "bit depth {} outside 8..=16",
                self.bit_depth
            )));
        }
        if self.saturation_lev <= self.black_lev {
            return Err(Error::InvalidMetadata(format!(
                "saturation level {} must exceed black level {}",
                self.saturation_lev, self.black_lev
            )));
        }
        if u32::from(self.saturation_lev) > self.max_code() {
            return Err(Error::InvalidMetadata(format!(
                "saturation level {} exceeds {}-bit range",
                self.saturation_lev, self.bit_depth
            )));
        }
        Ok(())
    }

    /// Largest code value representable at this bit depth.
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }

    /// Width of the linear range, `saturation_lev - black_lev`.
    pub fn span(&self) -> u32 {
        u32::from(self.saturation_lev) - u32::from(self.black_lev)
    }
}

fn check_even(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Dimension(format!(
            "mosaic must have positive even dimensions, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Integer sensor mosaic as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayerRaw {
    pub width: usize,
    pub height: usize,
    pub meta: RawMeta,
    pub samples: Vec<u16>,
}

impl BayerRaw {
    pub fn new(width: usize, height: usize, meta: RawMeta, samples: Vec<u16>) -> Result<Self> {
        meta.validate()?;
        check_even(width, height)?;
        if samples.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                samples.len()
            )));
        }
        let max = meta.max_code();
        if let Some(bad) = samples.iter().find(|&&s| u32::from(s) > max) {
            return Err(Error::InvalidMetadata(format!(
                "sample {bad} exceeds {}-bit range",
                meta.bit_depth
            )));
        }
        Ok(BayerRaw {
            width,
            height,
            meta,
            samples,
        })
    }

    pub fn stack(&self) -> PlaneStack<u16> {
        PlaneStack::from_mosaic(self.width, self.height, &self.samples, self.meta.pattern)
    }

    pub fn from_stack(stack: &PlaneStack<u16>, meta: RawMeta) -> Result<Self> {
        let samples = stack.to_mosaic(meta.pattern);
        BayerRaw::new(stack.width * 2, stack.height * 2, meta, samples)
    }
}

/// Linearized mosaic with samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRaw {
    pub width: usize,
    pub height: usize,
    pub meta: RawMeta,
    pub samples: Vec<f64>,
}

impl NormalizedRaw {
    pub fn new(width: usize, height: usize, meta: RawMeta, samples: Vec<f64>) -> Result<Self> {
        check_even(width, height)?;
        if samples.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(NormalizedRaw {
            width,
            height,
            meta,
            samples,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }
}

/// `x = clamp((x_file - black) / (saturation - black), 0, 1)`.
pub fn normalize(raw: &BayerRaw) -> Result<NormalizedRaw> {
    raw.meta.validate()?;
    let black = f64::from(raw.meta.black_lev);
    let span = f64::from(raw.meta.span());
    let samples = raw
        .samples
        .iter()
        .map(|&s| ((f64::from(s) - black) / span).clamp(0.0, 1.0))
        .collect();
    NormalizedRaw::new(raw.width, raw.height, raw.meta, samples)
}

/// Inverse of [`normalize`] on representable values; rounds half away from zero.
pub fn denormalize(x: &NormalizedRaw) -> Result<BayerRaw> {
    x.meta.validate()?;
    let span = f64::from(x.meta.span());
    let black = i64::from(x.meta.black_lev);
    let sat = i64::from(x.meta.saturation_lev);
    let samples = x
        .samples
        .iter()
        .map(|&v| {
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            // f64::round is half-away-from-zero
            ((v * span).round() as i64 + black).clamp(black, sat) as u16
        })
        .collect();
    BayerRaw::new(x.width, x.height, x.meta, samples)
}

/// Four half-resolution planes in (r, g_r, g_b, b) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack<T> {
    /// Width of each plane (half the mosaic width).
    pub width: usize,
    /// Height of each plane (half the mosaic height).
    pub height: usize,
    pub planes: [Vec<T>; 4],
}

impl<T: Copy + Default> PlaneStack<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        let n = width * height;
        PlaneStack {
            width,
            height,
            planes: [vec![value; n], vec![value; n], vec![value; n], vec![value; n]],
        }
    }

    pub fn from_mosaic(width: usize, height: usize, samples: &[T], pattern: Pattern) -> Self {
        let (pw, ph) = (width / 2, height / 2);
        let offsets = pattern.channel_offsets();
        let planes = offsets.map(|(dy, dx)| {
            let mut plane = Vec::with_capacity(pw * ph);
            for i in 0..ph {
                let row = &samples[(2 * i + dy) * width..];
                plane.extend((0..pw).map(|j| row[2 * j + dx]));
            }
            plane
        });
        PlaneStack {
            width: pw,
            height: ph,
            planes,
        }
    }

    pub fn to_mosaic(&self, pattern: Pattern) -> Vec<T> {
        let width = self.width * 2;
        let mut out = vec![T::default(); width * self.height * 2];
        for (plane, (dy, dx)) in self.planes.iter().zip(pattern.channel_offsets()) {
            for i in 0..self.height {
                for j in 0..self.width {
                    out[(2 * i + dy) * width + 2 * j + dx] = plane[i * self.width + j];
                }
            }
        }
        out
    }

    pub fn at(&self, channel: Channel, row: usize, col: usize) -> T {
        self.planes[channel.index()][row * self.width + col]
    }
}

/// Rearranges a normalized mosaic into its four colour planes.
pub fn stack(x: &NormalizedRaw) -> PlaneStack<f64> {
    PlaneStack::from_mosaic(x.width, x.height, &x.samples, x.meta.pattern)
}

/// Interleaves four planes back into a mosaic laid out per `meta.pattern`.
pub fn unstack(s: &PlaneStack<f64>, meta: RawMeta) -> Result<NormalizedRaw> {
    NormalizedRaw::new(s.width * 2, s.height * 2, meta, s.to_mosaic(meta.pattern))
}

/// Planar floating-point RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<f64>; 3],
}

impl RgbImage {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension(format!(
                "RGB planes must each hold {n} values for {width}x{height}"
            )));
        }
        Ok(RgbImage { width, height, planes })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let n = width * height;
        RgbImage {
            width,
            height,
            planes: rgb.map(|v| vec![v; n]),
        }
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = RgbImage::filled(width, height, [0.0; 3]);
        for r in 0..height {
            for c in 0..width {
                let px = f(r, c);
                let i = r * width + c;
                for ch in 0..3 {
                    img.planes[ch][i] = px[ch];
                }
            }
        }
        img
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel(&self, i: usize) -> [f64; 3] {
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn set_pixel(&mut self, i: usize, px: [f64; 3]) {
        for (plane, v) in self.planes.iter_mut().zip(px) {
            plane[i] = v;
        }
    }

    /// Applies `f` to every pixel.
    pub fn map_pixels(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> RgbImage {
        let mut out = self.clone();
        for i in 0..self.len() {
            out.set_pixel(i, f(self.pixel(i)));
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            planes: [
                self.planes[0].iter().map(|&v| f(v)).collect(),
                self.planes[1].iter().map(|&v| f(v)).collect(),
                self.planes[2].iter().map(|&v| f(v)).collect(),
            ],
        }
    }

    pub fn clamped(&self) -> RgbImage {
        self.map_values(|v| v.clamp(0.0, 1.0))
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let n = self.len().max(1) as f64;
        [0, 1, 2].map(|c| self.planes[c].iter().sum::<f64>() / n)
    }

    pub fn same_shape(&self, other: &RgbImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Largest absolute per-value difference.
    pub fn max_abs_diff(&self, other: &RgbImage) -> f64 {
        self.planes
            .iter()
            .zip(&other.planes)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// BT.601 luma.
pub fn luma(px: [f64; 3]) -> f64 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(pattern: Pattern) -> RawMeta {
        RawMeta::new(pattern, 12, 64, 4095).unwrap()
    }

    #[test]
    fn normalize_bounds_and_arithmetic() {
        let raw = BayerRaw::new(2, 2, meta(Pattern::Rggb), vec![64, 4095, 2079, 0]).unwrap();
        let x = normalize(&raw).unwrap();
        assert_eq!(x.samples[0], 0.0);
        assert_eq!(x.samples[1], 1.0);
        assert_eq!(x.samples[2], (2079.0 - 64.0) / 4031.0);
        // below black clamps to zero
        assert_eq!(x.samples[3], 0.0);
    }

    #[test]
    fn invalid_levels_rejected() {
        assert!(matches!(
            RawMeta::new(Pattern::Rggb, 12, 100, 100),
            Err(Error::InvalidMetadata(_))
        ));
        assert!(RawMeta::new(Pattern::Rggb, 10, 0, 1024).is_err());
        assert!(RawMeta::new(Pattern::Rggb, 7, 0, 100).is_err());
    }

    #[test]
    fn denormalize_endpoints() {
        let m = meta(Pattern::Rggb);
        let x = NormalizedRaw::new(2, 2, m, vec![0.0, 1.0, 0.5, 1.0]).unwrap();
        let raw = denormalize(&x).unwrap();
        assert_eq!(raw.samples[0], 64);
        assert_eq!(raw.samples[1], 4095);
        // 0.5 * 4031 = 2015.5 rounds away from zero
        assert_eq!(raw.samples[2], 64 + 2016);
    }

    #[test]
    fn normalize_denormalize_grid_identity() {
        // 1000 representable values spread over the linear range
        let m = RawMeta::new(Pattern::Rggb, 14, 512, 16383).unwrap();
        let span = m.span();
        let codes: Vec<u16> = (0..1000u32).map(|i| (512 + i * span / 999) as u16).collect();
        let raw = BayerRaw::new(50, 20, m, codes.clone()).unwrap();
        let back = denormalize(&normalize(&raw).unwrap()).unwrap();
        assert_eq!(back.samples, codes);
    }

    #[test]
    fn stack_definition_rggb() {
        let m = meta(Pattern::Rggb);
        let x = NormalizedRaw::new(2, 2, m, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = stack(&x);
        assert_eq!(s.planes, [vec![0.1], vec![0.2], vec![0.3], vec![0.4]]);
    }

    #[test]
    fn stack_ryyb_is_positional() {
        let m = meta(Pattern::Ryyb);
        let x = NormalizedRaw::new(2, 2, m, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = stack(&x);
        // (r, y_r, y_b, b) follow the RGGB positions
        assert_eq!(s.planes, [vec![0.1], vec![0.2], vec![0.3], vec![0.4]]);
    }

    #[test]
    fn stack_other_patterns_pick_named_sites() {
        // [a b; c d]
        let cases = [
            (Pattern::Bggr, [0.4, 0.3, 0.2, 0.1]),
            (Pattern::Grbg, [0.2, 0.1, 0.4, 0.3]),
            (Pattern::Gbrg, [0.3, 0.4, 0.1, 0.2]),
        ];
        for (p, want) in cases {
            let x = NormalizedRaw::new(2, 2, meta(p), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
            let s = stack(&x);
            let got: Vec<f64> = s.planes.iter().map(|pl| pl[0]).collect();
            assert_eq!(got, want, "{p}");
        }
    }

    #[test]
    fn channel_at_matches_offsets() {
        for p in Pattern::ALL {
            for (ch, (dy, dx)) in Channel::ALL.iter().zip(p.channel_offsets()) {
                assert_eq!(p.channel_at(dy + 2, dx + 4), *ch);
            }
        }
    }

    #[test]
    fn odd_dimensions_rejected() {
        let m = meta(Pattern::Rggb);
        assert!(NormalizedRaw::new(3, 2, m, vec![0.0; 6]).is_err());
    }
}
