//! Encoder, decoders and the model entropy of a pyramid.

use super::bitstream::{read_context, write_context, Header};
use super::context::{
    activity_bucket, coef_slot, fit_context, gather, predict, ContextModel, FitOptions, Profile, MAX_FEATURES,
    MPU_PLANES, POSITIONS,
};
use super::fixed::{sigmoid_table, SigmoidTable};
use super::model::{AdaptiveModel, Alphabet, Conditional};
use super::pyramid::{build_pyramid, crop_stack, pad_stack, Pyramid, LEVELS};
use super::rangecoder::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};
use crate::raw::{BayerRaw, PlaneStack, RawMeta, RgbImage};

/// Largest mosaic the decoder will allocate for.
pub const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub profile: Profile,
    pub cross_channel: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            profile: Profile::Fitted,
            cross_channel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeReport {
    pub total_bytes: usize,
    pub header_bytes: usize,
    /// Range-coder bytes per scale (without checksums).
    pub section_bytes: [usize; LEVELS],
    /// `8 *` the range-coder bytes of all scales.
    pub payload_bits: u64,
    /// `sum -log2 P` over every coded symbol under the model actually used.
    pub model_bits: f64,
    /// Total stream bits per mosaic pixel.
    pub bpp: f64,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub report: EncodeReport,
}

/// Subtracts the black level, rejecting samples outside `[black, saturation]`.
pub fn to_symbols(x: &BayerRaw) -> Result<PlaneStack<u16>> {
    let (black, sat) = (x.meta.black_lev, x.meta.saturation_lev);
    if let Some(&bad) = x.samples.iter().find(|&&v| v < black || v > sat) {
        return Err(Error::CorruptInput(format!(
            "sample {bad} outside the coded range [{black}, {sat}]"
        )));
    }
    let mut s = x.stack();
    for p in s.planes.iter_mut() {
        p.iter_mut().for_each(|v| *v -= black);
    }
    Ok(s)
}

fn add_black(x: &PlaneStack<u16>, black: u16) -> PlaneStack<u16> {
    PlaneStack {
        width: x.width,
        height: x.height,
        planes: x.planes.clone().map(|p| p.into_iter().map(|v| v + black).collect()),
    }
}

/// Pyramid of symbols of the reflect-padded plane stack, as the encoder sees it.
pub fn symbol_pyramid(x: &BayerRaw) -> Result<Pyramid> {
    build_pyramid(&pad_stack(&to_symbols(x)?))
}

fn level_crc(x: &PlaneStack<u16>) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for p in &x.planes {
        for v in p {
            h.update(&v.to_le_bytes());
        }
    }
    h.finalize()
}

enum Pass<'a, 'b> {
    Encode(&'a mut RangeEncoder),
    Decode(&'a mut RangeDecoder<'b>),
    Cost,
}

/// Codes level 0 with adaptive bucket / low-part models. Returns bits.
fn code_base(level: &mut PlaneStack<u16>, a: Alphabet, mut pass: Pass<'_, '_>) -> Result<f64> {
    let mut hi = AdaptiveModel::new(a.buckets as usize);
    let mut lo = AdaptiveModel::new(a.width() as usize);
    let mask = a.width() - 1;
    let mut bits = 0.0;
    for i in 0..level.width * level.height {
        for &plane in &MPU_PLANES {
            match &mut pass {
                Pass::Encode(enc) => {
                    let v = level.planes[plane][i] as u32;
                    bits += hi.encode(enc, (v >> a.low_bits) as usize);
                    bits += lo.encode(enc, (v & mask) as usize);
                }
                Pass::Cost => {
                    let v = level.planes[plane][i] as u32;
                    bits += hi.account((v >> a.low_bits) as usize);
                    bits += lo.account((v & mask) as usize);
                }
                Pass::Decode(dec) => {
                    let b = hi.decode(dec) as u32;
                    let v = (b << a.low_bits) | lo.decode(dec) as u32;
                    if v >= a.size {
                        return Err(Error::CorruptInput(format!("decoded symbol {v} outside alphabet")));
                    }
                    level.planes[plane][i] = v as u16;
                }
            }
        }
    }
    Ok(bits)
}

/// Codes the three new positions of every 2x2 group of `child`. When
/// decoding, `child` only needs the right shape; it is filled in place.
fn code_scale(
    ctx: &ContextModel,
    table: &SigmoidTable,
    a: Alphabet,
    scale: usize,
    parent: &PlaneStack<u16>,
    child: &mut PlaneStack<u16>,
    mut pass: Pass<'_, '_>,
) -> Result<f64> {
    let (pw, ph) = (parent.width, parent.height);
    let w = child.width;
    if let Pass::Decode(_) = pass {
        for plane in 0..4 {
            for p in 0..ph {
                for q in 0..pw {
                    child.planes[plane][2 * p * w + 2 * q] = parent.planes[plane][p * pw + q];
                }
            }
        }
    }
    let mut f = [0i64; MAX_FEATURES];
    let mut bits = 0.0;
    for p in 0..ph {
        for q in 0..pw {
            let buckets = MPU_PLANES.map(|plane| activity_bucket(&parent.planes[plane], pw, ph, p, q));
            for (pos, &(dy, dx)) in POSITIONS.iter().enumerate() {
                let idx = (2 * p + dy) * w + 2 * q + dx;
                for (k, &plane) in MPU_PLANES.iter().enumerate() {
                    let n = gather(child, parent, p, q, pos, k, ctx.cross_channel, &mut f);
                    let pred = predict(&ctx.coeffs[coef_slot(scale, pos, k)], &f[..n], a.size);
                    let cond = Conditional::new(table, ctx.mixture(scale, k, buckets[k]), pred, a);
                    match &mut pass {
                        Pass::Encode(enc) => bits += cond.encode(enc, child.planes[plane][idx] as u32)?,
                        Pass::Cost => bits += cond.cost(child.planes[plane][idx] as u32),
                        Pass::Decode(dec) => child.planes[plane][idx] = cond.decode(dec) as u16,
                    }
                }
            }
        }
    }
    Ok(bits)
}

fn context_for(pyr: &Pyramid, a: Alphabet, opts: EncodeOptions) -> ContextModel {
    match opts.profile {
        Profile::Static => ContextModel::static_profile(),
        Profile::Fitted => fit_context(
            pyr,
            a.size,
            FitOptions {
                cross_channel: opts.cross_channel,
            },
        ),
    }
}

pub fn encode(x: &BayerRaw, profile: Profile) -> Result<Encoded> {
    encode_with(
        x,
        EncodeOptions {
            profile,
            ..EncodeOptions::default()
        },
    )
}

pub fn encode_with(x: &BayerRaw, opts: EncodeOptions) -> Result<Encoded> {
    x.meta.validate()?;
    let pyr = symbol_pyramid(x)?;
    let a = Alphabet::new(x.meta.span());
    let ctx = context_for(&pyr, a, opts);
    let table = sigmoid_table();

    let mut sections: Vec<Vec<u8>> = Vec::with_capacity(LEVELS);
    let mut model_bits = 0.0;
    let mut coded = [0usize; LEVELS];
    for scale in 0..LEVELS {
        let mut enc = RangeEncoder::new();
        let mut level = pyr.level(scale).clone();
        model_bits += if scale == 0 {
            code_base(&mut level, a, Pass::Encode(&mut enc))?
        } else {
            code_scale(
                &ctx,
                table,
                a,
                scale,
                pyr.level(scale - 1),
                &mut level,
                Pass::Encode(&mut enc),
            )?
        };
        let body = enc.finish();
        coded[scale] = body.len();
        let mut sec = level_crc(pyr.level(scale)).to_le_bytes().to_vec();
        sec.extend_from_slice(&body);
        sections.push(sec);
    }

    let header = Header {
        meta: x.meta,
        profile: opts.profile,
        width: x.width as u32,
        height: x.height as u32,
        context: match opts.profile {
            Profile::Static => Vec::new(),
            Profile::Fitted => write_context(&ctx),
        },
        sections: std::array::from_fn(|i| sections[i].len() as u32),
    };
    let mut bytes = Vec::new();
    header.write(&mut bytes);
    let header_bytes = bytes.len();
    for s in &sections {
        bytes.extend_from_slice(s);
    }
    let payload_bits = coded.iter().sum::<usize>() as u64 * 8;
    let report = EncodeReport {
        total_bytes: bytes.len(),
        header_bytes,
        section_bytes: coded,
        payload_bits,
        model_bits,
        bpp: bytes.len() as f64 * 8.0 / (x.width * x.height) as f64,
    };
    Ok(Encoded { bytes, report })
}

/// Model cross-entropy of a symbol pyramid, in bits per mosaic pixel.
pub fn entropy_loss(pyr: &Pyramid, ctx: &ContextModel, span: u32, pixels: usize) -> f64 {
    let a = Alphabet::new(span);
    let table = sigmoid_table();
    let mut bits = code_base(&mut pyr.level(0).clone(), a, Pass::Cost).unwrap();
    for scale in 1..LEVELS {
        let mut child = pyr.level(scale).clone();
        bits += code_scale(ctx, table, a, scale, pyr.level(scale - 1), &mut child, Pass::Cost).unwrap();
    }
    bits / pixels as f64
}

/// Parsed stream ready for scale-by-scale decoding.
#[derive(Debug, Clone)]
pub struct RicStream<'a> {
    pub header: Header,
    pub context: ContextModel,
    body: &'a [u8],
    /// Padded plane dimensions at full resolution.
    plane_dims: (usize, usize),
}

impl<'a> RicStream<'a> {
    pub fn parse(bytes: &'a [u8]) -> Result<Self> {
        let (header, len) = Header::read(bytes)?;
        if header.width as u64 * header.height as u64 > MAX_PIXELS {
            return Err(Error::CorruptInput(format!(
                "{}x{} exceeds the decoder limit",
                header.width, header.height
            )));
        }
        let context = match header.profile {
            Profile::Static => {
                if !header.context.is_empty() {
                    return Err(Error::CorruptInput("static profile with context bytes".into()));
                }
                ContextModel::static_profile()
            }
            Profile::Fitted => read_context(&header.context)?,
        };
        let align = super::pyramid::ALIGN;
        let pw = (header.width as usize / 2).div_ceil(align) * align;
        let ph = (header.height as usize / 2).div_ceil(align) * align;
        Ok(RicStream {
            header,
            context,
            body: &bytes[len..],
            plane_dims: (pw, ph),
        })
    }

    pub fn meta(&self) -> RawMeta {
        self.header.meta
    }

    fn section(&self, scale: usize) -> Result<&'a [u8]> {
        let start: usize = self.header.sections[..scale].iter().map(|&s| s as usize).sum();
        let len = self.header.sections[scale] as usize;
        if len < 4 {
            return Err(Error::CorruptInput(format!(
                "section {scale} shorter than its checksum"
            )));
        }
        self.body.get(start..start + len).ok_or(Error::Truncated { scale })
    }

    fn level_dims(&self, scale: usize) -> (usize, usize) {
        let shift = LEVELS - 1 - scale;
        (self.plane_dims.0 >> shift, self.plane_dims.1 >> shift)
    }

    /// Decodes `scale` given the previous level (symbols).
    pub fn decode_level(&self, scale: usize, parent: Option<&PlaneStack<u16>>) -> Result<PlaneStack<u16>> {
        let sec = self.section(scale)?;
        let stored = u32::from_le_bytes(sec[..4].try_into().unwrap());
        let mut dec = RangeDecoder::new(&sec[4..]);
        let (w, h) = self.level_dims(scale);
        let mut level = PlaneStack::filled(w, h, 0u16);
        let a = Alphabet::new(self.header.meta.span());
        match (scale, parent) {
            (0, _) => {
                code_base(&mut level, a, Pass::Decode(&mut dec))?;
            }
            (_, Some(parent)) => {
                code_scale(
                    &self.context,
                    sigmoid_table(),
                    a,
                    scale,
                    parent,
                    &mut level,
                    Pass::Decode(&mut dec),
                )?;
            }
            (_, None) => {
                return Err(Error::InvalidParameter(format!("scale {scale} needs its parent level")));
            }
        }
        let computed = level_crc(&level);
        if computed != stored {
            return Err(Error::ChecksumMismatch {
                scale,
                stored,
                computed,
            });
        }
        Ok(level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    /// Bit-exact mosaic.
    Full(BayerRaw),
    /// Pyramid level `scale` of the padded plane stack, in sample units.
    Preview { scale: usize, stack: PlaneStack<u16> },
}

/// Decodes scales `0..=max_scale`; `max_scale == 4` gives back the mosaic.
pub fn decode(bytes: &[u8], max_scale: usize) -> Result<Decoded> {
    if max_scale >= LEVELS {
        return Err(Error::InvalidParameter(format!(
            "scale {max_scale} outside 0..={}",
            LEVELS - 1
        )));
    }
    let s = RicStream::parse(bytes)?;
    let mut level = s.decode_level(0, None)?;
    for scale in 1..=max_scale {
        level = s.decode_level(scale, Some(&level))?;
    }
    let meta = s.meta();
    let samples = add_black(&level, meta.black_lev);
    if max_scale == LEVELS - 1 {
        let cropped = crop_stack(&samples, s.header.width as usize / 2, s.header.height as usize / 2);
        Ok(Decoded::Full(BayerRaw::from_stack(&cropped, meta)?))
    } else {
        Ok(Decoded::Preview {
            scale: max_scale,
            stack: samples,
        })
    }
}

/// Everything recoverable from a possibly truncated stream.
#[derive(Debug)]
pub struct Progressive {
    pub meta: RawMeta,
    /// Complete levels in sample units, coarsest first.
    pub levels: Vec<PlaneStack<u16>>,
    /// First scale whose section was cut off, if any.
    pub truncated_at: Option<usize>,
}

pub fn decode_progressive(bytes: &[u8]) -> Result<Progressive> {
    let s = RicStream::parse(bytes)?;
    let mut levels: Vec<PlaneStack<u16>> = Vec::new();
    let mut truncated_at = None;
    for scale in 0..LEVELS {
        match s.decode_level(scale, levels.last()) {
            Ok(l) => levels.push(l),
            Err(Error::Truncated { scale }) => {
                truncated_at = Some(scale);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let black = s.meta().black_lev;
    Ok(Progressive {
        meta: s.meta(),
        levels: levels.iter().map(|l| add_black(l, black)).collect(),
        truncated_at,
    })
}

/// Quick-look RGB of a plane stack: R, mean of the greens, B, scaled from
/// `[black, saturation]` to `[0, 1]`.
pub fn preview_rgb(stack: &PlaneStack<u16>, meta: &RawMeta) -> RgbImage {
    let black = meta.black_lev as f64;
    let span = meta.span() as f64;
    let norm = |v: f64| ((v - black) / span).clamp(0.0, 1.0);
    let [r, gr, gb, b] = &stack.planes;
    let planes = [
        r.iter().map(|&v| norm(v as f64)).collect(),
        gr.iter()
            .zip(gb)
            .map(|(&x, &y)| norm((x as f64 + y as f64) / 2.0))
            .collect(),
        b.iter().map(|&v| norm(v as f64)).collect(),
    ];
    RgbImage {
        width: stack.width,
        height: stack.height,
        planes,
    }
}
