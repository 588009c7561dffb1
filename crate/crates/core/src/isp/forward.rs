//! Forward pipeline: demosaic, white balance, brightness, colour correction,
//! gamma. Every stage clamps its output to [0, 1].

use super::params::{
    apply3, check_simplex, AwbPresets, AwbWeights, BrightnessParams, CcmPresets, GammaCurve, IspParams,
};
use crate::error::{Error, Result};
use crate::raw::{demosaic, luma, NormalizedRaw, RgbImage};

/// Luma above which the highlight-preserving transform pulls sub-unit gains
/// back towards 1.
pub const HIGHLIGHT_INFLECTION: f64 = 0.9;

/// Side of the proxy image the estimators look at.
pub const ESTIMATION_SIZE: usize = 128;

/// Effective gain of the highlight-preserving transform for a pixel of luma
/// `luma`: `a * max(g, 1) + (1 - a) * g` with
/// `a = (max(luma - t, 0) / (1 - t))^2`.
pub fn highlight_gain(luma: f64, gain: f64) -> f64 {
    let t = HIGHLIGHT_INFLECTION;
    let a = ((luma - t).max(0.0) / (1.0 - t)).powi(2).min(1.0);
    a * gain.max(1.0) + (1.0 - a) * gain
}

/// `S(x, g)` applied with per-channel gains, clamped to [0, 1].
pub fn highlight_preserving(y: &RgbImage, gains: [f64; 3]) -> RgbImage {
    if gains == [1.0; 3] {
        return y.clamped();
    }
    y.map_pixels(|px| {
        let p = luma(px);
        [0, 1, 2].map(|c| (px[c] * highlight_gain(p, gains[c])).clamp(0.0, 1.0))
    })
}

pub fn awb_apply(y: &RgbImage, presets: &AwbPresets, w: &AwbWeights) -> Result<RgbImage> {
    w.validate()?;
    let (r_gain, b_gain) = presets.mix(w)?;
    Ok(highlight_preserving(y, [r_gain, 1.0, b_gain]))
}

/// Area-average downsample to at most `size` x `size`. Images already within
/// the bound are returned unchanged.
pub fn box_downsample(y: &RgbImage, size: usize) -> RgbImage {
    if y.width <= size && y.height <= size {
        return y.clone();
    }
    let (ow, oh) = (y.width.min(size), y.height.min(size));
    let mut out = RgbImage::filled(ow, oh, [0.0; 3]);
    for oy in 0..oh {
        let (r0, r1) = (oy * y.height / oh, (oy + 1) * y.height / oh);
        for ox in 0..ow {
            let (c0, c1) = (ox * y.width / ow, (ox + 1) * y.width / ow);
            let mut acc = [0.0; 3];
            for r in r0..r1 {
                for c in c0..c1 {
                    let px = y.pixel(r * y.width + c);
                    for ch in 0..3 {
                        acc[ch] += px[ch];
                    }
                }
            }
            let n = ((r1 - r0) * (c1 - c0)) as f64;
            out.set_pixel(oy * ow + ox, acc.map(|v| v / n));
        }
    }
    out
}

fn sub(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 - b.0, a.1 - b.1)
}

fn dot(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Convex weights placing `target` at its nearest point of the preset hull.
///
/// Exact preset matches win first, then the first (lexicographic) triangle
/// containing the target, otherwise the closest point on any segment or
/// vertex. The result is deterministic for a given bank.
pub fn project_onto_hull(presets: &[(f64, f64)], target: (f64, f64)) -> AwbWeights {
    let n = presets.len();
    const EPS: f64 = 1e-12;
    if let Some(i) = presets
        .iter()
        .position(|&p| (p.0 - target.0).abs() <= EPS && (p.1 - target.1).abs() <= EPS)
    {
        return AwbWeights::one_hot(n, i);
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (presets[i], presets[j], presets[k]);
                let area = cross(sub(b, a), sub(c, a));
                if area.abs() < EPS {
                    continue;
                }
                let wb = cross(sub(target, a), sub(c, a)) / area;
                let wc = cross(sub(b, a), sub(target, a)) / area;
                let wa = 1.0 - wb - wc;
                if wa >= -EPS && wb >= -EPS && wc >= -EPS {
                    let mut w = vec![0.0; n];
                    let (wa, wb, wc) = (wa.max(0.0), wb.max(0.0), wc.max(0.0));
                    let s = wa + wb + wc;
                    w[i] = wa / s;
                    w[j] = wb / s;
                    w[k] = wc / s;
                    return AwbWeights(w);
                }
            }
        }
    }
    // outside the hull (or a degenerate bank): nearest vertex or edge point
    let mut best = (f64::INFINITY, AwbWeights::one_hot(n, 0));
    for i in 0..n {
        let d = sub(target, presets[i]);
        let dist = dot(d, d);
        if dist < best.0 {
            best = (dist, AwbWeights::one_hot(n, i));
        }
        for j in i + 1..n {
            let e = sub(presets[j], presets[i]);
            let len2 = dot(e, e);
            if len2 < EPS {
                continue;
            }
            let t = (dot(sub(target, presets[i]), e) / len2).clamp(0.0, 1.0);
            let p = (presets[i].0 + t * e.0, presets[i].1 + t * e.1);
            let d = sub(target, p);
            let dist = dot(d, d);
            if dist < best.0 {
                let mut w = vec![0.0; n];
                w[i] = 1.0 - t;
                w[j] = t;
                best = (dist, AwbWeights(w));
            }
        }
    }
    best.1
}

/// Gray-world white balance: target gains `(G/R, G/B)` from channel means of
/// a 128x128 box-filtered proxy, projected onto the preset hull.
pub fn awb_estimate_grayworld(y: &RgbImage, presets: &AwbPresets) -> Result<AwbWeights> {
    presets.validate()?;
    let proxy = box_downsample(y, ESTIMATION_SIZE);
    let [r, g, b] = proxy.channel_means();
    if !(r > 0.0 && g > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gray-world needs nonzero channel means, got ({r}, {g}, {b})"
        )));
    }
    Ok(project_onto_hull(&presets.0, (g / r, g / b)))
}

pub fn brightness_apply(y: &RgbImage, p: &BrightnessParams) -> RgbImage {
    let g = p.gain();
    highlight_preserving(y, [g; 3])
}

/// `raw_gain` that moves the mean luma of `y` towards `target_luma`, limited so
/// the resulting gain stays strictly inside `[beta - alpha, beta + alpha]`.
pub fn brightness_estimate(y: &RgbImage, p: &BrightnessParams, target_luma: f64) -> f64 {
    let proxy = box_downsample(y, ESTIMATION_SIZE);
    let n = proxy.len().max(1) as f64;
    let mean = (0..proxy.len()).map(|i| luma(proxy.pixel(i))).sum::<f64>() / n;
    let ratio = if mean > 0.0 { target_luma / mean } else { f64::INFINITY };
    ((ratio - p.beta) / p.alpha).clamp(-0.999, 0.999).atanh()
}

pub fn cc_apply(y: &RgbImage, presets: &CcmPresets, w_d: f64, w_n: f64) -> Result<RgbImage> {
    check_simplex(&[w_d, w_n], "CC weights")?;
    let m = presets.mix(w_d, w_n);
    Ok(y.map_pixels(|px| apply3(&m, px).map(|v| v.clamp(0.0, 1.0))))
}

/// BT.709 opto-electronic transfer for one value.
pub fn bt709_encode(l: f64) -> f64 {
    if l < 0.018 {
        4.5 * l
    } else {
        1.099 * l.powf(0.45) - 0.099
    }
}

/// Algebraic inverse of [`bt709_encode`].
pub fn bt709_decode(v: f64) -> f64 {
    if v < 4.5 * 0.018 {
        v / 4.5
    } else {
        ((v + 0.099) / 1.099).powf(1.0 / 0.45)
    }
}

pub fn gamma_apply(y: &RgbImage) -> RgbImage {
    y.map_values(|v| bt709_encode(v.clamp(0.0, 1.0)).clamp(0.0, 1.0))
}

pub fn gamma_invert(y: &RgbImage) -> RgbImage {
    y.map_values(|v| bt709_decode(v.clamp(0.0, 1.0)).clamp(0.0, 1.0))
}

/// Intermediate images of one forward pass.
#[derive(Debug, Clone)]
pub struct IspTrace {
    pub demosaiced: RgbImage,
    pub white_balanced: RgbImage,
    pub brightened: RgbImage,
    pub color_corrected: RgbImage,
    pub output: RgbImage,
}

pub fn isp_trace(x: &NormalizedRaw, p: &IspParams) -> Result<IspTrace> {
    p.validate()?;
    let demosaiced = demosaic(x)?.clamped();
    let white_balanced = awb_apply(&demosaiced, &p.awb_presets, &p.awb_weights)?;
    let brightened = brightness_apply(&white_balanced, &p.brightness);
    let color_corrected = cc_apply(&brightened, &p.ccm, p.cc_weights.0, p.cc_weights.1)?;
    let output = match p.gamma {
        GammaCurve::Bt709 => gamma_apply(&color_corrected),
        GammaCurve::None => color_corrected.clone(),
    };
    Ok(IspTrace {
        demosaiced,
        white_balanced,
        brightened,
        color_corrected,
        output,
    })
}

/// Runs the full forward pipeline.
pub fn isp_forward(x: &NormalizedRaw, p: &IspParams) -> Result<RgbImage> {
    Ok(isp_trace(x, p)?.output)
}

/// Source of image-dependent ISP parameters.
///
/// Implementations fill in the estimated parts of an [`IspParams`]; preset
/// banks and the gamma choice always come from `base`.
pub trait ParamEstimator {
    fn estimate(&self, x: &NormalizedRaw, base: &IspParams) -> Result<IspParams>;
}

/// Gray-world white balance plus mean-luma brightness targeting. Colour
/// correction weights are taken from the base parameters unchanged.
#[derive(Debug, Clone, Copy)]
pub struct GrayWorldEstimator {
    pub target_luma: f64,
}

impl Default for GrayWorldEstimator {
    fn default() -> Self {
        GrayWorldEstimator { target_luma: 0.5 }
    }
}

impl ParamEstimator for GrayWorldEstimator {
    fn estimate(&self, x: &NormalizedRaw, base: &IspParams) -> Result<IspParams> {
        let demosaiced = demosaic(x)?;
        let mut p = base.clone();
        p.awb_weights = awb_estimate_grayworld(&demosaiced, &p.awb_presets)?;
        let wb = awb_apply(&demosaiced, &p.awb_presets, &p.awb_weights)?;
        p.brightness.raw_gain = brightness_estimate(&wb, &p.brightness, self.target_luma);
        p.validate()?;
        Ok(p)
    }
}

/// Externally fitted parameters loaded as-is (for example from a JSON sidecar).
#[derive(Debug, Clone)]
pub struct FixedEstimator(pub IspParams);

impl ParamEstimator for FixedEstimator {
    fn estimate(&self, _x: &NormalizedRaw, _base: &IspParams) -> Result<IspParams> {
        self.0.validate()?;
        Ok(self.0.clone())
    }
}

/// Estimates parameters with `estimator`, then runs the forward pipeline.
pub fn isp_auto(x: &NormalizedRaw, base: &IspParams, estimator: &dyn ParamEstimator) -> Result<(IspParams, RgbImage)> {
    let p = estimator.estimate(x, base)?;
    let y = isp_forward(x, &p)?;
    Ok((p, y))
}
