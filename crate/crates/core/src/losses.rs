//! Cycle, variance and least-squares adversarial losses, plus the histogram
//! features a discriminator consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw::{luma, RgbImage};

/// Guard for latent gaps and for the green channel in log-chroma.
pub const EPS: f64 = 1e-6;

pub const CHROMA_BINS: usize = 64;
pub const CHROMA_RANGE: f64 = 4.0;
pub const GRAY_BINS: usize = 64;

/// Mean absolute difference over all channel-pixels.
pub fn cycle_loss(y_rec: &RgbImage, y: &RgbImage) -> Result<f64> {
    y_rec.same_shape(y)?;
    let n = (3 * y.len()) as f64;
    let sum: f64 = (0..3)
        .map(|c| {
            y_rec.planes[c]
                .iter()
                .zip(&y.planes[c])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum();
    Ok(if n == 0.0 { 0.0 } else { sum / n })
}

/// BT.601 luma with YPbPr colour differences.
#[derive(Debug, Clone, PartialEq)]
pub struct YuvImage {
    pub width: usize,
    pub height: usize,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl YuvImage {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let n = img.len();
        let (mut y, mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let [r, g, b] = img.pixel(i);
            y.push(luma([r, g, b]));
            u.push(-0.168736 * r - 0.331264 * g + 0.5 * b);
            v.push(0.5 * r - 0.418688 * g - 0.081312 * b);
        }
        YuvImage {
            width: img.width,
            height: img.height,
            y,
            u,
            v,
        }
    }

    fn same_shape(&self, other: &YuvImage) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Latents of two simRAWs generated from the same RGB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPair {
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
}

/// `-rms(uv1 - uv2)/|theta1 - theta2| - rms(y1 - y2)/|phi1 - phi2|`.
pub fn var_loss(x1: &YuvImage, x2: &YuvImage, lat: LatentPair) -> Result<f64> {
    x1.same_shape(x2)?;
    let dt = (lat.theta1 - lat.theta2).abs();
    let dp = (lat.phi1 - lat.phi2).abs();
    if !(dt > EPS) {
        return Err(Error::DegeneratePair { name: "theta", gap: dt });
    }
    if !(dp > EPS) {
        return Err(Error::DegeneratePair { name: "phi", gap: dp });
    }
    let n = x1.y.len().max(1) as f64;
    let mut chroma = 0.0;
    let mut lum = 0.0;
    for i in 0..x1.y.len() {
        let (du, dv) = (x1.u[i] - x2.u[i], x1.v[i] - x2.v[i]);
        chroma += du * du + dv * dv;
        let dy = x1.y[i] - x2.y[i];
        lum += dy * dy;
    }
    let chroma_term = (chroma / n).sqrt() / dt;
    let luma_term = (lum / n).sqrt() / dp;
    Ok(-chroma_term - luma_term)
}

/// Least-squares GAN losses `(L_G, L_D)` from scalar discriminator scores.
pub fn adv_losses(d_real: f64, d_fake: f64) -> (f64, f64) {
    let g = (1.0 - d_fake).powi(2);
    let d = (1.0 - d_real).powi(2) + d_fake.powi(2);
    (g, d)
}

fn bin(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    if !(v > lo) {
        return 0;
    }
    let b = ((v - lo) / (hi - lo) * n as f64).floor();
    if b >= n as f64 {
        n - 1
    } else {
        b as usize
    }
}

/// Normalized `(log(R/G), log(B/G))` histogram over `[-4, 4]^2`.
/// Values outside the range land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChromaHistogram2D {
    /// Row-major, index `[u * 64 + v]` with `u` the `log(R/G)` bin.
    pub bins: Vec<f64>,
    pub counted: usize,
    /// Pixels with `G <= EPS`.
    pub excluded: usize,
}

impl ChromaHistogram2D {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.bins[u * CHROMA_BINS + v]
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.bins.iter().zip(&other.bins).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub fn chroma_hist(y: &RgbImage) -> ChromaHistogram2D {
    let mut counts = vec![0u64; CHROMA_BINS * CHROMA_BINS];
    let (mut counted, mut excluded) = (0usize, 0usize);
    for i in 0..y.len() {
        let [r, g, b] = y.pixel(i);
        if !(g > EPS) {
            excluded += 1;
            continue;
        }
        let u = bin((r / g).ln(), -CHROMA_RANGE, CHROMA_RANGE, CHROMA_BINS);
        let v = bin((b / g).ln(), -CHROMA_RANGE, CHROMA_RANGE, CHROMA_BINS);
        counts[u * CHROMA_BINS + v] += 1;
        counted += 1;
    }
    let total = counted.max(1) as f64;
    ChromaHistogram2D {
        bins: counts.iter().map(|&c| c as f64 / total).collect(),
        counted,
        excluded,
    }
}

/// Normalized luma histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayHistogram1D {
    pub bins: Vec<f64>,
}

impl GrayHistogram1D {
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.bins.iter().zip(&other.bins).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub fn gray_hist(y: &RgbImage) -> GrayHistogram1D {
    let mut counts = vec![0u64; GRAY_BINS];
    for i in 0..y.len() {
        counts[bin(luma(y.pixel(i)), 0.0, 1.0, GRAY_BINS)] += 1;
    }
    let total = y.len().max(1) as f64;
    GrayHistogram1D {
        bins: counts.iter().map(|&c| c as f64 / total).collect(),
    }
}

/// Everything the `losses` subcommand reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub cycle: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var: Option<f64>,
    pub chroma_hist_l1: f64,
    pub gray_hist_l1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adv_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adv_d: Option<f64>,
}

/// Optional inputs of [`loss_report`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossInputs {
    #[serde(flatten)]
    pub latents: Option<LatentPair>,
    #[serde(default)]
    pub d_real: Option<f64>,
    #[serde(default)]
    pub d_fake: Option<f64>,
}

pub fn loss_report(a: &RgbImage, b: &RgbImage, extra: &LossInputs) -> Result<LossReport> {
    let cycle = cycle_loss(a, b)?;
    let var = match extra.latents {
        Some(lat) => Some(var_loss(&YuvImage::from_rgb(a), &YuvImage::from_rgb(b), lat)?),
        None => None,
    };
    let (adv_g, adv_d) = match (extra.d_real, extra.d_fake) {
        (Some(r), Some(f)) => {
            let (g, d) = adv_losses(r, f);
            (Some(g), Some(d))
        }
        _ => (None, None),
    };
    Ok(LossReport {
        cycle,
        var,
        chroma_hist_l1: chroma_hist(a).l1_distance(&chroma_hist(b)),
        gray_hist_l1: gray_hist(a).l1_distance(&gray_hist(b)),
        adv_g,
        adv_d,
    })
}
