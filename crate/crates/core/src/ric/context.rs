//! Per-image context model: a linear predictor from already-known samples
//! and a small set of logistic mixtures for the prediction residual.
//!
//! Scales `1..=4` are coded in 2x2 groups. The upper-left sample of each
//! group is the parent sample; the other three positions are coded in the
//! order (0,1), (1,0), (1,1), each as four channels in the order
//! g_r, g_b, r, b. A sample is predicted from
//!
//! * a bias,
//! * the bilinear upsample of all four parent planes at its position,
//! * the channels of the same location that were already coded
//!   (cross-channel terms, can be switched off),
//! * the same channel at earlier positions of the group.
//!
//! Predictor coefficients are fitted by least squares per
//! (scale, position, channel) and stored in Q16. Residual mixtures are
//! fitted by EM per (scale, channel, activity bucket).

use rayon::prelude::*;

use super::fixed::{bit_length, det_exp};
use super::model::{QComponent, QMixture, Q12, SIGMA_MAX_Q12, SIGMA_MIN_Q12, WEIGHT_ONE};
use super::pyramid::{upsample_q2, Pyramid, LEVELS};
use crate::error::{Error, Result};
use crate::raw::PlaneStack;

/// Plane indices in coding order: g_r, g_b, r, b.
pub const MPU_PLANES: [usize; 4] = [1, 2, 0, 3];
/// Coded positions inside a 2x2 group, as (dy, dx).
pub const POSITIONS: [(usize, usize); 3] = [(0, 1), (1, 0), (1, 1)];
pub const BUCKETS: usize = 8;
pub const MAX_FEATURES: usize = 1 + 4 + 3 + 2;
/// Coefficients are Q16.
pub const COEF_FRAC: u32 = 16;
pub const COEF_LIMIT: i64 = 1 << 36;
/// Mixture weights are stored in units of 1/1024.
pub const WEIGHT_UNIT: u32 = 64;
pub const SIGMA_CODE_MAX: u32 = (28 << 5) | 31;

const MIN_BUCKET_COUNT: usize = 64;
const EM_COMPONENTS: usize = 10;
const EM_SAMPLES: usize = 1024;
const EM_ITERS: usize = 30;
const RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Fixed predictor and mixtures; nothing stored in the header.
    Static,
    /// Fitted to the image; coefficients and mixtures stored in the header.
    Fitted,
}

impl Profile {
    pub fn code(self) -> u8 {
        match self {
            Profile::Static => 0,
            Profile::Fitted => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Profile::Static),
            1 => Ok(Profile::Fitted),
            _ => Err(Error::CorruptInput(format!("unknown profile {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Static => "static",
            Profile::Fitted => "fitted",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Profile::Static),
            "fitted" => Ok(Profile::Fitted),
            _ => Err(Error::InvalidParameter(format!("unknown profile {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Use already-coded channels of the same location as predictors.
    pub cross_channel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { cross_channel: true }
    }
}

/// Index of a (scale, position, channel) coefficient set.
pub fn coef_slot(scale: usize, pos: usize, k: usize) -> usize {
    ((scale - 1) * POSITIONS.len() + pos) * 4 + k
}

/// Index of a (scale, channel) mixture set.
pub fn mix_slot(scale: usize, k: usize) -> usize {
    (scale - 1) * 4 + k
}

pub fn n_features(pos: usize, k: usize, cross: bool) -> usize {
    1 + 4 + if cross { k } else { 0 } + pos.min(2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextModel {
    pub profile: Profile,
    pub cross_channel: bool,
    /// Q16 coefficients per [`coef_slot`].
    pub coeffs: Vec<Vec<i64>>,
    /// Activity bucket to mixture index, per [`mix_slot`].
    pub bucket_map: Vec<[u8; BUCKETS]>,
    /// Mixtures per [`mix_slot`].
    pub mixtures: Vec<Vec<QMixture>>,
}

impl ContextModel {
    /// Fixed model: predict each sample by its own parent upsample, with a
    /// three-component mixture whose scale grows with local activity.
    pub fn static_profile() -> Self {
        let cross = true;
        let mut coeffs = Vec::new();
        for _scale in 1..LEVELS {
            for pos in 0..POSITIONS.len() {
                for (k, &plane) in MPU_PLANES.iter().enumerate() {
                    let mut c = vec![0i64; n_features(pos, k, cross)];
                    c[1 + plane] = 1 << COEF_FRAC;
                    coeffs.push(c);
                }
            }
        }
        let bucket_mixtures: Vec<QMixture> = (0..BUCKETS)
            .map(|b| {
                let base = (1024i64 << (2 * b)).max(1229);
                QMixture {
                    components: [(16384, base / 2), (32768, base), (16384, base * 4)]
                        .into_iter()
                        .map(|(weight, sigma)| QComponent {
                            weight,
                            offset: 0,
                            sigma,
                        })
                        .collect(),
                }
            })
            .collect();
        let n = (LEVELS - 1) * 4;
        ContextModel {
            profile: Profile::Static,
            cross_channel: cross,
            coeffs,
            bucket_map: vec![[0, 1, 2, 3, 4, 5, 6, 7]; n],
            mixtures: vec![bucket_mixtures; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::CorruptInput(m));
        let sets = (LEVELS - 1) * POSITIONS.len() * 4;
        if self.coeffs.len() != sets
            || self.bucket_map.len() != (LEVELS - 1) * 4
            || self.mixtures.len() != (LEVELS - 1) * 4
        {
            return bad("context model has the wrong number of entries".into());
        }
        for scale in 1..LEVELS {
            for pos in 0..POSITIONS.len() {
                for k in 0..4 {
                    let c = &self.coeffs[coef_slot(scale, pos, k)];
                    if c.len() != n_features(pos, k, self.cross_channel) {
                        return bad(format!("coefficient set ({scale},{pos},{k}) has {} entries", c.len()));
                    }
                    if c.iter().any(|v| v.abs() > COEF_LIMIT) {
                        return bad("coefficient out of range".into());
                    }
                }
            }
        }
        for (map, mixes) in self.bucket_map.iter().zip(&self.mixtures) {
            if mixes.is_empty() || map.iter().any(|&m| m as usize >= mixes.len()) {
                return bad("bucket map points past the mixture list".into());
            }
            for m in mixes {
                m.validate()?;
            }
        }
        Ok(())
    }

    pub fn mixture(&self, scale: usize, k: usize, bucket: usize) -> &QMixture {
        let slot = mix_slot(scale, k);
        &self.mixtures[slot][self.bucket_map[slot][bucket] as usize]
    }
}

/// Gathers the predictor inputs of one sample. `child` holds the samples of
/// the current scale decoded so far; only already-coded entries are read.
/// All features are four times the underlying sample value.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn gather(
    child: &PlaneStack<u16>,
    parent: &PlaneStack<u16>,
    p: usize,
    q: usize,
    pos: usize,
    k: usize,
    cross: bool,
    out: &mut [i64; MAX_FEATURES],
) -> usize {
    let (pw, ph) = (parent.width, parent.height);
    let (dy, dx) = POSITIONS[pos];
    let (r, c) = (2 * p + dy, 2 * q + dx);
    let w = child.width;
    out[0] = 4;
    for plane in 0..4 {
        out[1 + plane] = upsample_q2(&parent.planes[plane], pw, ph, r, c);
    }
    let mut n = 5;
    if cross {
        for &plane in &MPU_PLANES[..k] {
            out[n] = 4 * child.planes[plane][r * w + c] as i64;
            n += 1;
        }
    }
    let own = &child.planes[MPU_PLANES[k]];
    for &(ey, ex) in &POSITIONS[..pos] {
        out[n] = 4 * own[(2 * p + ey) * w + 2 * q + ex] as i64;
        n += 1;
    }
    n
}

/// Prediction in Q12 symbol units, bounded to a sane range around the alphabet.
#[inline]
pub fn predict(coeffs: &[i64], feats: &[i64], alphabet_size: u32) -> i64 {
    let acc: i64 = coeffs.iter().zip(feats).map(|(a, b)| a * b).sum();
    let lim = (alphabet_size as i64) << 12;
    (acc >> 6).clamp(-lim, 2 * lim)
}

/// Local activity of the same-channel parent plane around `(p, q)`.
#[inline]
pub fn activity_bucket(parent: &[u16], pw: usize, ph: usize, p: usize, q: usize) -> usize {
    let at = |r: usize, c: usize| parent[r * pw + c] as i64;
    let (l, rr) = (q.saturating_sub(1), (q + 1).min(pw - 1));
    let (u, d) = (p.saturating_sub(1), (p + 1).min(ph - 1));
    let act = (at(p, l) - at(p, rr)).abs() + (at(u, q) - at(d, q)).abs();
    ((bit_length(act as u64) / 2) as usize).min(BUCKETS - 1)
}

/// Scale codes: a 5-bit mantissa float, `((32 + m) << e) >> 5` in Q12.
pub fn sigma_from_code(code: u32) -> i64 {
    let e = code >> 5;
    let m = (code & 31) as i64;
    ((32 + m) << e) >> 5
}

/// Nearest representable scale at or above the floor.
pub fn sigma_code(sigma_q12: f64) -> u32 {
    let first = (0..=SIGMA_CODE_MAX)
        .find(|&c| sigma_from_code(c) >= SIGMA_MIN_Q12)
        .unwrap();
    let hi = (first..=SIGMA_CODE_MAX)
        .collect::<Vec<_>>()
        .partition_point(|&c| (sigma_from_code(c) as f64) < sigma_q12) as u32
        + first;
    if hi > SIGMA_CODE_MAX {
        return SIGMA_CODE_MAX;
    }
    if hi == first {
        return first;
    }
    let (a, b) = (sigma_from_code(hi - 1) as f64, sigma_from_code(hi) as f64);
    if sigma_q12 - a <= b - sigma_q12 {
        hi - 1
    } else {
        hi
    }
}

/// Offsets are stored as multiples of this step.
pub fn offset_step(sigma: i64) -> i64 {
    (sigma >> 4).max(1)
}

/// Float mixture in symbol units: (weight, mean, logistic scale).
type FloatMix = Vec<(f64, f64, f64)>;

fn logistic_pdf(x: f64, mu: f64, s: f64) -> f64 {
    let z = ((x - mu) / s).abs();
    let e = det_exp(-z);
    e / (s * (1.0 + e) * (1.0 + e))
}

/// EM fit of a logistic mixture to residuals (symbol units).
fn em_fit(residuals: &[f64]) -> FloatMix {
    let stride = residuals.len().div_ceil(EM_SAMPLES).max(1);
    let mut xs: Vec<f64> = residuals.iter().step_by(stride).copied().collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    let s_min = SIGMA_MIN_Q12 as f64 / Q12 as f64;
    let kk = EM_COMPONENTS.min(n.div_ceil(32)).max(1);
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let s0 = ((3.0 * var).sqrt() / std::f64::consts::PI / kk as f64).max(s_min);
    let mut comps: FloatMix = (0..kk)
        .map(|k| (1.0 / kk as f64, xs[((2 * k + 1) * n) / (2 * kk)], s0))
        .collect();
    if var == 0.0 {
        return vec![(1.0, mean, s_min)];
    }
    let mut resp = vec![0.0; n * kk];
    for _ in 0..EM_ITERS {
        for (i, &x) in xs.iter().enumerate() {
            let row = &mut resp[i * kk..(i + 1) * kk];
            let mut tot = 0.0;
            for (r, &(w, mu, s)) in row.iter_mut().zip(&comps) {
                *r = w * logistic_pdf(x, mu, s);
                tot += *r;
            }
            if tot > 0.0 {
                row.iter_mut().for_each(|r| *r /= tot);
            } else {
                row.iter_mut().for_each(|r| *r = 1.0 / kk as f64);
            }
        }
        for (k, comp) in comps.iter_mut().enumerate() {
            let g: f64 = (0..n).map(|i| resp[i * kk + k]).sum();
            if g < 1e-9 {
                comp.0 = 0.0;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * kk + k] * xs[i]).sum::<f64>() / g;
            let v = (0..n)
                .map(|i| resp[i * kk + k] * (xs[i] - mu) * (xs[i] - mu))
                .sum::<f64>()
                / g;
            *comp = (g / n as f64, mu, ((3.0 * v).sqrt() / std::f64::consts::PI).max(s_min));
        }
    }
    comps
}

/// Rounds a float mixture to its stored representation.
pub fn quantize_mixture(mix: &[(f64, f64, f64)]) -> QMixture {
    let units = WEIGHT_ONE / WEIGHT_UNIT;
    let mut comps: Vec<(u32, i64, u32)> = Vec::new();
    for &(w, mu, s) in mix {
        let u = (w * units as f64).round() as u32;
        if u == 0 {
            continue;
        }
        let code = sigma_code(s * Q12 as f64);
        let step = offset_step(sigma_from_code(code));
        let off = ((mu * Q12 as f64) / step as f64).round() as i64 * step;
        match comps.iter_mut().find(|c| c.1 == off && c.2 == code) {
            Some(c) => c.0 += u,
            None => comps.push((u, off, code)),
        }
    }
    if comps.is_empty() {
        let &(_, mu, s) = mix.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
        let code = sigma_code(s * Q12 as f64);
        let step = offset_step(sigma_from_code(code));
        comps.push((units, ((mu * Q12 as f64) / step as f64).round() as i64 * step, code));
    }
    let sum: u32 = comps.iter().map(|c| c.0).sum();
    let big = (0..comps.len()).max_by_key(|&i| (comps[i].0, usize::MAX - i)).unwrap();
    comps[big].0 = (comps[big].0 as i64 + units as i64 - sum as i64) as u32;
    QMixture {
        components: comps
            .into_iter()
            .map(|(u, offset, code)| QComponent {
                weight: u * WEIGHT_UNIT,
                offset,
                sigma: sigma_from_code(code).min(SIGMA_MAX_Q12),
            })
            .collect(),
    }
}

fn solve(mut a: Vec<f64>, mut b: Vec<f64>, d: usize) -> Vec<f64> {
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
            .unwrap();
        if a[piv * d + col].abs() < 1e-300 {
            continue;
        }
        if piv != col {
            for j in 0..d {
                a.swap(piv * d + j, col * d + j);
            }
            b.swap(piv, col);
        }
        for row in col + 1..d {
            let f = a[row * d + col] / a[col * d + col];
            if f != 0.0 {
                for j in col..d {
                    a[row * d + j] -= f * a[col * d + j];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let diag = a[row * d + row];
        if diag.abs() < 1e-300 {
            continue;
        }
        let s: f64 = (row + 1..d).map(|j| a[row * d + j] * x[j]).sum();
        x[row] = (b[row] - s) / diag;
    }
    x
}

/// Least-squares coefficients on the features in sample units.
fn fit_coefficients(child: &PlaneStack<u16>, parent: &PlaneStack<u16>, pos: usize, k: usize, cross: bool) -> Vec<f64> {
    let d = n_features(pos, k, cross);
    let mut ata = vec![0.0; d * d];
    let mut aty = vec![0.0; d];
    let mut f = [0i64; MAX_FEATURES];
    let (dy, dx) = POSITIONS[pos];
    let plane = &child.planes[MPU_PLANES[k]];
    for p in 0..parent.height {
        for q in 0..parent.width {
            gather(child, parent, p, q, pos, k, cross, &mut f);
            let y = plane[(2 * p + dy) * child.width + 2 * q + dx] as f64;
            // features are 4x values; fit in value units
            let fv: [f64; MAX_FEATURES] = f.map(|v| v as f64 * 0.25);
            for i in 0..d {
                aty[i] += fv[i] * y;
                for j in i..d {
                    ata[i * d + j] += fv[i] * fv[j];
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            ata[i * d + j] = ata[j * d + i];
        }
    }
    let trace: f64 = (0..d).map(|i| ata[i * d + i]).sum();
    let ridge = RIDGE * (trace / d as f64).max(1.0);
    for i in 0..d {
        ata[i * d + i] += ridge;
    }
    solve(ata, aty, d)
}

/// Q16 rounding with the range limit applied.
pub fn quantize_coefficients(c: &[f64]) -> Vec<i64> {
    c.iter()
        .map(|v| ((v * (1u64 << COEF_FRAC) as f64).round() as i64).clamp(-COEF_LIMIT, COEF_LIMIT))
        .collect()
}

struct SlotFit {
    coeffs: [Vec<i64>; 3],
    float_coeffs: [Vec<f64>; 3],
    map: [u8; BUCKETS],
    mixtures: Vec<QMixture>,
}

fn fit_slot(pyr: &Pyramid, scale: usize, k: usize, cross: bool, alphabet_size: u32) -> SlotFit {
    let child = pyr.level(scale);
    let parent = pyr.level(scale - 1);
    let float_coeffs: [Vec<f64>; 3] = std::array::from_fn(|pos| fit_coefficients(child, parent, pos, k, cross));
    let coeffs = float_coeffs.clone().map(|c| quantize_coefficients(&c));
    let mut by_bucket: Vec<Vec<f64>> = vec![Vec::new(); BUCKETS];
    let mut f = [0i64; MAX_FEATURES];
    let plane = MPU_PLANES[k];
    for p in 0..parent.height {
        for q in 0..parent.width {
            let b = activity_bucket(&parent.planes[plane], parent.width, parent.height, p, q);
            for (pos, &(dy, dx)) in POSITIONS.iter().enumerate() {
                let n = gather(child, parent, p, q, pos, k, cross, &mut f);
                let pred = predict(&coeffs[pos], &f[..n], alphabet_size);
                let y = child.planes[plane][(2 * p + dy) * child.width + 2 * q + dx] as i64;
                by_bucket[b].push(((y << 12) - pred) as f64 / Q12 as f64);
            }
        }
    }
    let used: Vec<usize> = (0..BUCKETS)
        .filter(|&b| by_bucket[b].len() >= MIN_BUCKET_COUNT)
        .collect();
    let mut map = [0u8; BUCKETS];
    let mut groups: Vec<Vec<f64>> = Vec::new();
    if used.is_empty() {
        groups.push(by_bucket.concat());
    } else {
        for (b, slot) in map.iter_mut().enumerate() {
            // nearest used bucket, ties to the lower one
            let (i, _) = used
                .iter()
                .enumerate()
                .min_by_key(|&(_, &u)| ((u as i64 - b as i64).abs(), u))
                .unwrap();
            *slot = i as u8;
        }
        groups = vec![Vec::new(); used.len()];
        for (b, res) in by_bucket.into_iter().enumerate() {
            groups[map[b] as usize].extend(res);
        }
    }
    let mixtures = groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                QMixture::single(SIGMA_MIN_Q12)
            } else {
                quantize_mixture(&em_fit(g))
            }
        })
        .collect();
    SlotFit {
        coeffs,
        float_coeffs,
        map,
        mixtures,
    }
}

/// Float coefficients before quantization, per [`coef_slot`]; for diagnostics.
pub type FloatCoefficients = Vec<Vec<f64>>;

/// Fits the predictor and residual mixtures to a pyramid of symbols
/// (samples minus black level). Deterministic for a given input,
/// regardless of the thread count.
pub fn fit_context(pyr: &Pyramid, alphabet_size: u32, opts: FitOptions) -> ContextModel {
    fit_context_detailed(pyr, alphabet_size, opts).0
}

pub fn fit_context_detailed(pyr: &Pyramid, alphabet_size: u32, opts: FitOptions) -> (ContextModel, FloatCoefficients) {
    let tasks: Vec<(usize, usize)> = (1..LEVELS).flat_map(|s| (0..4).map(move |k| (s, k))).collect();
    let fits: Vec<SlotFit> = tasks
        .par_iter()
        .map(|&(s, k)| fit_slot(pyr, s, k, opts.cross_channel, alphabet_size))
        .collect();
    let n_sets = (LEVELS - 1) * POSITIONS.len() * 4;
    let mut coeffs = vec![Vec::new(); n_sets];
    let mut floats = vec![Vec::new(); n_sets];
    let mut bucket_map = Vec::new();
    let mut mixtures = Vec::new();
    for (&(s, k), fit) in tasks.iter().zip(fits) {
        for pos in 0..POSITIONS.len() {
            coeffs[coef_slot(s, pos, k)] = fit.coeffs[pos].clone();
            floats[coef_slot(s, pos, k)] = fit.float_coeffs[pos].clone();
        }
        bucket_map.push(fit.map);
        mixtures.push(fit.mixtures);
    }
    (
        ContextModel {
            profile: Profile::Fitted,
            cross_channel: opts.cross_channel,
            coeffs,
            bucket_map,
            mixtures,
        },
        floats,
    )
}
