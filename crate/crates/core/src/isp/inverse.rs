//! Inverse pipeline with Gaussian illumination latents: one RGB image maps to
//! many simulated RAW mosaics, one per `(theta, phi)` draw.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::forward::gamma_invert;
use super::params::{apply3, inv3, AwbPresets, AwbWeights, BrightnessParams, CcmPresets, GammaCurve, IspParams};
use crate::error::{Error, Result};
use crate::raw::{mosaic, NormalizedRaw, Pattern, RawMeta, RgbImage};

/// Mean and standard deviation of one latent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Default for Gaussian {
    fn default() -> Self {
        Gaussian { mean: 0.0, std: 1.0 }
    }
}

/// Colour-temperature (`theta`) and brightness (`phi`) priors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IlluminationPrior {
    #[serde(default)]
    pub theta: Gaussian,
    #[serde(default)]
    pub phi: Gaussian,
    #[serde(default)]
    pub seed: u64,
}

impl IlluminationPrior {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("theta", self.theta), ("phi", self.phi)] {
            if !(g.std >= 0.0) || !g.std.is_finite() || !g.mean.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} prior needs finite mean and std >= 0, got {g:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: IlluminationPrior = serde_json::from_slice(&fs::read(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

/// One illumination draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Illumination {
    pub theta: f64,
    pub phi: f64,
}

impl Illumination {
    pub const NEUTRAL: Illumination = Illumination { theta: 0.0, phi: 0.0 };
}

/// `n` i.i.d. draws of `(theta, phi)`, reproducible from `prior.seed`.
pub fn sample_illumination(prior: &IlluminationPrior, n: usize) -> Result<Vec<Illumination>> {
    prior.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one illumination sample".into()));
    }
    let theta = Normal::new(prior.theta.mean, prior.theta.std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let phi = Normal::new(prior.phi.mean, prior.phi.std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(prior.seed);
    Ok((0..n)
        .map(|_| {
            let t = theta.sample(&mut rng);
            let p = phi.sample(&mut rng);
            Illumination { theta: t, phi: p }
        })
        .collect())
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Parameters of the inverse pipeline.
///
/// The latent-to-weight maps are deterministic: AWB and CCM inverse weights
/// are a softmax over preset scores `bias + slope * theta`, and the brightness
/// gain logit is `offset + scale * phi`. At `theta = phi = 0` with zero biases
/// the weights are uniform and the brightness gain is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvIspParams {
    pub awb_presets: AwbPresets,
    pub awb_score_bias: Vec<f64>,
    pub awb_score_slope: Vec<f64>,
    pub ccm: CcmPresets,
    pub cc_score_bias: (f64, f64),
    pub cc_score_slope: (f64, f64),
    #[serde(default)]
    pub brightness: BrightnessParams,
    #[serde(default = "one")]
    pub brightness_scale: f64,
    #[serde(default)]
    pub brightness_offset: f64,
    #[serde(default)]
    pub gamma: GammaCurve,
    /// Format of the generated mosaics.
    pub raw: RawMeta,
}

fn one() -> f64 {
    1.0
}

impl Default for InvIspParams {
    fn default() -> Self {
        let awb_presets = AwbPresets::default_bank();
        let n = awb_presets.len();
        let slope = (0..n)
            .map(|i| {
                if n == 1 {
                    0.0
                } else {
                    -1.0 + 2.0 * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        InvIspParams {
            awb_presets,
            awb_score_bias: vec![0.0; n],
            awb_score_slope: slope,
            ccm: CcmPresets::default_bank(),
            cc_score_bias: (0.0, 0.0),
            cc_score_slope: (0.5, -0.5),
            brightness: BrightnessParams::default(),
            brightness_scale: 1.0,
            brightness_offset: 0.0,
            gamma: GammaCurve::Bt709,
            raw: RawMeta {
                pattern: Pattern::Rggb,
                bit_depth: 12,
                black_lev: 64,
                saturation_lev: 4095,
            },
        }
    }
}

impl InvIspParams {
    /// Single unit AWB preset and identity colour matrices.
    pub fn identity(raw: RawMeta) -> Self {
        InvIspParams {
            awb_presets: AwbPresets(vec![(1.0, 1.0)]),
            awb_score_bias: vec![0.0],
            awb_score_slope: vec![0.0],
            ccm: CcmPresets::identity(),
            raw,
            ..InvIspParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.awb_presets.validate()?;
        let n = self.awb_presets.len();
        if self.awb_score_bias.len() != n || self.awb_score_slope.len() != n {
            return Err(Error::InvalidParameter(format!(
                "AWB score coefficients must have {n} entries"
            )));
        }
        self.ccm.validate()?;
        self.brightness.validate()?;
        self.raw.validate()
    }

    /// `rho_awb(theta)`.
    pub fn awb_weights(&self, theta: f64) -> AwbWeights {
        let scores: Vec<f64> = self
            .awb_score_bias
            .iter()
            .zip(&self.awb_score_slope)
            .map(|(b, s)| b + s * theta)
            .collect();
        AwbWeights(softmax(&scores))
    }

    /// `rho_cc(theta) = (rho_d, rho_n)`.
    pub fn cc_weights(&self, theta: f64) -> (f64, f64) {
        let w = softmax(&[
            self.cc_score_bias.0 + self.cc_score_slope.0 * theta,
            self.cc_score_bias.1 + self.cc_score_slope.1 * theta,
        ]);
        (w[0], w[1])
    }

    /// `b_inv(phi)`: the brightness logit fed through `beta + alpha * tanh`.
    pub fn brightness_logit(&self, phi: f64) -> f64 {
        self.brightness_offset + self.brightness_scale * phi
    }

    pub fn brightness_gain(&self, phi: f64) -> f64 {
        self.brightness.gain_for(self.brightness_logit(phi))
    }

    /// `(1/r_gain, 1/b_gain) = sum rho_i (1/r_i, 1/b_i)`.
    pub fn inverse_awb_gains(&self, theta: f64) -> Result<(f64, f64)> {
        inverse_gains(&self.awb_presets, &self.awb_weights(theta))
    }

    /// Forward parameters that undo this inverse pipeline at `illum`: the
    /// resolved white-balance gain becomes a single preset, the colour
    /// matrix weights and brightness logit are copied.
    pub fn consistent_forward(&self, illum: Illumination) -> Result<IspParams> {
        let (ir, ib) = self.inverse_awb_gains(illum.theta)?;
        let (rho_d, rho_n) = self.cc_weights(illum.theta);
        let p = IspParams {
            awb_presets: AwbPresets::new(vec![(1.0 / ir, 1.0 / ib)])?,
            awb_weights: AwbWeights(vec![1.0]),
            brightness: BrightnessParams {
                raw_gain: self.brightness_logit(illum.phi),
                ..self.brightness
            },
            ccm: self.ccm.clone(),
            cc_weights: (rho_d, rho_n),
            gamma: self.gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: InvIspParams = serde_json::from_slice(&fs::read(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

fn inverse_gains(presets: &AwbPresets, rho: &AwbWeights) -> Result<(f64, f64)> {
    if presets.is_empty() || rho.0.len() != presets.len() {
        return Err(Error::InvalidParameter(
            "inverse AWB weights do not match presets".into(),
        ));
    }
    if let Some(&(r, b)) = presets.0.iter().find(|&&(r, b)| !(r > 0.0 && b > 0.0)) {
        return Err(Error::InvalidParameter(format!("degenerate AWB gain ({r}, {b})")));
    }
    Ok(presets
        .0
        .iter()
        .zip(&rho.0)
        .fold((0.0, 0.0), |(ir, ib), (&(r, b), &w)| (ir + w / r, ib + w / b)))
}

/// Plain per-channel multiply by the mixed reciprocal gains. No clamping.
pub fn inv_awb_with_weights(y: &RgbImage, presets: &AwbPresets, rho: &AwbWeights) -> Result<RgbImage> {
    let (ir, ib) = inverse_gains(presets, rho)?;
    Ok(y.map_pixels(|[r, g, b]| [r * ir, g, b * ib]))
}

pub fn inv_awb(y: &RgbImage, params: &InvIspParams, theta: f64) -> Result<RgbImage> {
    inv_awb_with_weights(y, &params.awb_presets, &params.awb_weights(theta))
}

pub fn inv_brightness_with_gain(y: &RgbImage, b_gain: f64) -> RgbImage {
    y.map_values(|v| v / b_gain)
}

pub fn inv_brightness(y: &RgbImage, params: &InvIspParams, phi: f64) -> RgbImage {
    inv_brightness_with_gain(y, params.brightness_gain(phi))
}

pub fn inv_cc_with_weights(y: &RgbImage, presets: &CcmPresets, rho_d: f64, rho_n: f64) -> Result<RgbImage> {
    let inv = inv3(&presets.mix(rho_d, rho_n))?;
    Ok(y.map_pixels(|px| apply3(&inv, px)))
}

pub fn inv_cc(y: &RgbImage, params: &InvIspParams, theta: f64) -> Result<RgbImage> {
    let (d, n) = params.cc_weights(theta);
    inv_cc_with_weights(y, &params.ccm, d, n)
}

/// Intermediate images of one inverse pass.
#[derive(Debug, Clone)]
pub struct InvIspTrace {
    pub linear: RgbImage,
    pub uncorrected: RgbImage,
    pub unbrightened: RgbImage,
    pub unbalanced: RgbImage,
    pub raw: NormalizedRaw,
}

pub fn inv_isp_trace(y: &RgbImage, params: &InvIspParams, illum: Illumination) -> Result<InvIspTrace> {
    params.validate()?;
    let linear = match params.gamma {
        GammaCurve::Bt709 => gamma_invert(y),
        GammaCurve::None => y.clone(),
    };
    let uncorrected = inv_cc(&linear, params, illum.theta)?;
    let unbrightened = inv_brightness(&uncorrected, params, illum.phi);
    let unbalanced = inv_awb(&unbrightened, params, illum.theta)?;
    let raw = mosaic(&unbalanced, params.raw)?;
    Ok(InvIspTrace {
        linear,
        uncorrected,
        unbrightened,
        unbalanced,
        raw,
    })
}

/// RGB to normalized RAW; the only clamp happens at the mosaic.
pub fn inv_isp(y: &RgbImage, params: &InvIspParams, illum: Illumination) -> Result<NormalizedRaw> {
    Ok(inv_isp_trace(y, params, illum)?.raw)
}
