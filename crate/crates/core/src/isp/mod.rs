//! Unrolled ISP: demosaic → white balance → brightness → colour correction → gamma,
//! and its inverse with sampled illumination latents.

pub mod forward;
pub mod inverse;
pub mod params;
pub mod simraw;

pub use forward::{
    awb_apply, awb_estimate_grayworld, brightness_apply, brightness_estimate, cc_apply, gamma_apply, gamma_invert,
    highlight_preserving, isp_auto, isp_forward, isp_trace, FixedEstimator, GrayWorldEstimator, IspTrace,
    ParamEstimator,
};
pub use inverse::{
    inv_awb, inv_brightness, inv_cc, inv_isp, inv_isp_trace, sample_illumination, Gaussian, Illumination,
    IlluminationPrior, InvIspParams,
};
pub use params::{AwbPresets, AwbWeights, BrightnessParams, CcmPresets, GammaCurve, IspParams, Mat3};
pub use simraw::{simraw_batch, simraw_one, Manifest, ManifestRow};
