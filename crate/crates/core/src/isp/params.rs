use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Below this |det| a colour matrix is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-6;

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse by cofactor expansion.
pub fn inv3(m: &Mat3) -> Result<Mat3> {
    let det = det3(m);
    if !(det.abs() >= SINGULAR_EPS) {
        return Err(Error::SingularMatrix { det });
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Ok(adj.map(|row| row.map(|v| v / det)))
}

pub fn mul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn apply3(m: &Mat3, px: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * px[0] + row[1] * px[1] + row[2] * px[2])
}

pub fn mix3(a: &Mat3, wa: f64, b: &Mat3, wb: f64) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = wa * a[i][j] + wb * b[i][j];
        }
    }
    out
}

/// White-balance gain presets `(r_i, b_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AwbPresets(pub Vec<(f64, f64)>);

impl AwbPresets {
    pub const MAX_PRESETS: usize = 16;

    pub fn new(presets: Vec<(f64, f64)>) -> Result<Self> {
        let p = AwbPresets(presets);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidParameter("AWB preset bank is empty".into()));
        }
        if self.0.len() > Self::MAX_PRESETS {
            return Err(Error::InvalidParameter(format!(
                "at most {} AWB presets, got {}",
                Self::MAX_PRESETS,
                self.0.len()
            )));
        }
        for &(r, b) in &self.0 {
            if !(r > 0.25 && r < 4.0 && b > 0.25 && b < 4.0) {
                return Err(Error::InvalidParameter(format!(
                    "AWB preset ({r}, {b}) outside (0.25, 4.0)"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Illuminant-ordered bank spanning neutral to warm light.
    pub fn default_bank() -> Self {
        AwbPresets(vec![(1.0, 1.0), (1.6, 2.2), (2.0, 1.7), (2.4, 1.5)])
    }

    /// `(sum w_i r_i, sum w_i b_i)`.
    pub fn mix(&self, w: &AwbWeights) -> Result<(f64, f64)> {
        self.validate()?;
        if w.0.len() != self.0.len() {
            return Err(Error::InvalidParameter(format!(
                "{} AWB weights for {} presets",
                w.0.len(),
                self.0.len()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(&w.0)
            .fold((0.0, 0.0), |(r, b), (&(ri, bi), &wi)| (r + wi * ri, b + wi * bi)))
    }
}

/// Convex weights over an [`AwbPresets`] bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AwbWeights(pub Vec<f64>);

impl AwbWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let w = AwbWeights(w);
        w.validate()?;
        Ok(w)
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        AwbWeights(w)
    }

    pub fn uniform(n: usize) -> Self {
        AwbWeights(vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<()> {
        check_simplex(&self.0, "AWB weights")
    }
}

pub(crate) fn check_simplex(w: &[f64], what: &str) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} are empty")));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} must be finite and >= 0")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("{what} sum to {sum}, not 1")));
    }
    Ok(())
}

/// Daylight and night colour-correction presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmPresets {
    pub ccm_d: Mat3,
    pub ccm_n: Mat3,
}

impl CcmPresets {
    pub fn new(ccm_d: Mat3, ccm_n: Mat3) -> Result<Self> {
        let p = CcmPresets { ccm_d, ccm_n };
        p.validate()?;
        Ok(p)
    }

    pub fn identity() -> Self {
        CcmPresets {
            ccm_d: IDENTITY,
            ccm_n: IDENTITY,
        }
    }

    pub fn default_bank() -> Self {
        CcmPresets {
            ccm_d: [[1.6, -0.45, -0.15], [-0.25, 1.45, -0.2], [0.0, -0.5, 1.5]],
            ccm_n: [[1.3, -0.2, -0.1], [-0.15, 1.25, -0.1], [0.05, -0.35, 1.3]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("ccm_d", &self.ccm_d), ("ccm_n", &self.ccm_n)] {
            for row in m {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidParameter(format!(
                        "{name} row {row:?} sums to {s}, not 1"
                    )));
                }
            }
            let det = det3(m);
            if det.abs() <= SINGULAR_EPS {
                return Err(Error::SingularMatrix { det });
            }
        }
        Ok(())
    }

    pub fn mix(&self, w_d: f64, w_n: f64) -> Mat3 {
        mix3(&self.ccm_d, w_d, &self.ccm_n, w_n)
    }
}

/// Range-limited brightness gain `b_gain = beta + alpha * tanh(raw_gain)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessParams {
    pub alpha: f64,
    pub beta: f64,
    pub raw_gain: f64,
}

impl Default for BrightnessParams {
    fn default() -> Self {
        BrightnessParams {
            alpha: 0.3,
            beta: 1.0,
            raw_gain: 0.0,
        }
    }
}

impl BrightnessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "brightness alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(self.beta > self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "brightness beta {} must exceed alpha {}",
                self.beta, self.alpha
            )));
        }
        if self.raw_gain.is_nan() {
            return Err(Error::InvalidParameter("brightness raw_gain is NaN".into()));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.gain_for(self.raw_gain)
    }

    pub fn gain_for(&self, raw_gain: f64) -> f64 {
        self.beta + self.alpha * raw_gain.tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GammaCurve {
    #[default]
    Bt709,
    None,
}

/// Every parameter of the forward pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IspParams {
    pub awb_presets: AwbPresets,
    pub awb_weights: AwbWeights,
    #[serde(default)]
    pub brightness: BrightnessParams,
    pub ccm: CcmPresets,
    /// `(omega_d, omega_n)`, on the simplex.
    pub cc_weights: (f64, f64),
    #[serde(default)]
    pub gamma: GammaCurve,
}

impl Default for IspParams {
    fn default() -> Self {
        let awb_presets = AwbPresets::default_bank();
        let n = awb_presets.len();
        IspParams {
            awb_presets,
            awb_weights: AwbWeights::uniform(n),
            brightness: BrightnessParams::default(),
            ccm: CcmPresets::default_bank(),
            cc_weights: (0.5, 0.5),
            gamma: GammaCurve::Bt709,
        }
    }
}

impl IspParams {
    /// Unit gains, identity colour matrices, BT.709 gamma.
    pub fn identity() -> Self {
        IspParams {
            awb_presets: AwbPresets(vec![(1.0, 1.0)]),
            awb_weights: AwbWeights(vec![1.0]),
            brightness: BrightnessParams::default(),
            ccm: CcmPresets::identity(),
            cc_weights: (1.0, 0.0),
            gamma: GammaCurve::Bt709,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.awb_presets.validate()?;
        self.awb_weights.validate()?;
        if self.awb_weights.0.len() != self.awb_presets.len() {
            return Err(Error::InvalidParameter(format!(
                "{} AWB weights for {} presets",
                self.awb_weights.0.len(),
                self.awb_presets.len()
            )));
        }
        self.brightness.validate()?;
        self.ccm.validate()?;
        check_simplex(&[self.cc_weights.0, self.cc_weights.1], "CC weights")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: IspParams = serde_json::from_slice(&fs::read(path)?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
