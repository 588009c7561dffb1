//! Patch-mean density model `p_k(mu) = k mu^2 - k mu + k/6 + 1` and the
//! measurements built on it.
//!
//! `k > 0` is a U-shaped histogram (typical of linear RAW), `k < 0` a bell
//! (typical of display RGB). The density is nonnegative on `[0, 1]` exactly
//! when `k` lies in `[-6, 12]`.

pub mod mc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isp::forward::bt709_encode;

pub use mc::{bn_var_mc, grad_var_mc, linear_fit, spearman, BnSimConfig, BnSimTable, GradVarConfig, GradVarTable};

pub const K_MIN: f64 = -6.0;
pub const K_MAX: f64 = 12.0;
pub const FIT_BINS: usize = 64;
pub const MIN_PATCHES: usize = 100;
pub const DEFAULT_PATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KQuadModel {
    pub k: f64,
}

impl KQuadModel {
    pub fn new(k: f64) -> Result<Self> {
        if !(K_MIN..=K_MAX).contains(&k) {
            return Err(Error::InvalidParameter(format!("k = {k} outside [{K_MIN}, {K_MAX}]")));
        }
        Ok(KQuadModel { k })
    }

    pub fn density(&self, mu: f64) -> f64 {
        self.k * mu * mu - self.k * mu + self.k / 6.0 + 1.0
    }

    /// `int_0^mu p`.
    pub fn cdf(&self, mu: f64) -> f64 {
        let mu = mu.clamp(0.0, 1.0);
        self.k * (mu * mu * mu / 3.0 - mu * mu / 2.0 + mu / 6.0) + mu
    }

    /// Closed-form `int_0^1 p = k/3 - k/2 + k/6 + 1`.
    pub fn total_mass(&self) -> f64 {
        self.k / 3.0 - self.k / 2.0 + self.k / 6.0 + 1.0
    }

    /// Largest density value on `[0, 1]`, reached at an endpoint or the centre.
    pub fn envelope(&self) -> f64 {
        self.density(0.0).max(self.density(0.5))
    }

    /// `Var[mu] = 1/12 + k/180`.
    pub fn variance(&self) -> f64 {
        1.0 / 12.0 + self.k / 180.0
    }

    /// Inverse CDF by safeguarded Newton iteration.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = u;
        for _ in 0..60 {
            let f = self.cdf(x) - u;
            if f.abs() < 1e-14 {
                break;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.density(x);
            let step = x - f / d;
            x = if d > 1e-9 && step > lo && step < hi {
                step
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }
}

/// `n` draws by rejection against the uniform envelope.
pub fn sample_kquad(k: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let m = KQuadModel::new(k)?;
    let env = m.envelope();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mu: f64 = rng.random();
        let accept: f64 = rng.random::<f64>() * env;
        if accept < m.density(mu) {
            out.push(mu);
        }
    }
    Ok(out)
}

/// `n` draws by inverse CDF. Feeding the same seed to different `k` gives
/// coupled samples (common random numbers).
pub fn sample_kquad_icdf(k: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let m = KQuadModel::new(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| m.inverse_cdf(rng.random())).collect())
}

/// Result of a `k` fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFit {
    /// Clamped to `[-6, 12]`.
    pub k: f64,
    pub k_unclamped: f64,
    pub n: usize,
}

impl KFit {
    pub fn model(&self) -> KQuadModel {
        KQuadModel { k: self.k }
    }
}

/// Weighted least squares of `p_k` against the 64-bin density histogram of
/// `means` (values outside `[0, 1]` are clamped), weighted by bin counts.
/// The model is averaged over each bin, so the fit has no binning bias.
pub fn fit_k(means: &[f64]) -> Result<KFit> {
    if means.len() < MIN_PATCHES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_PATCHES} patch means, got {}",
            means.len()
        )));
    }
    let mut counts = [0u64; FIT_BINS];
    for &m in means {
        let m = if m.is_nan() { 0.0 } else { m.clamp(0.0, 1.0) };
        let b = ((m * FIT_BINS as f64) as usize).min(FIT_BINS - 1);
        counts[b] += 1;
    }
    let n = means.len() as f64;
    let width = 1.0 / FIT_BINS as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        // bin average of mu^2 - mu + 1/6
        let q = ((hi.powi(3) - lo.powi(3)) / 3.0 - (hi * hi - lo * lo) / 2.0) / width + 1.0 / 6.0;
        let h = c as f64 / (n * width);
        let w = c as f64;
        num += w * q * (h - 1.0);
        den += w * q * q;
    }
    let k_unclamped = if den > 0.0 { num / den } else { 0.0 };
    Ok(KFit {
        k: k_unclamped.clamp(K_MIN, K_MAX),
        k_unclamped,
        n: means.len(),
    })
}

/// Non-overlapping square patches; partial patches at the borders are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub patch_size: usize,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl PatchStats {
    pub fn from_plane(values: &[f64], width: usize, height: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || values.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane {width}x{height} with {} values, patch {patch_size}",
                values.len()
            )));
        }
        let (pw, ph) = (width / patch_size, height / patch_size);
        let area = (patch_size * patch_size) as f64;
        let mut means = Vec::with_capacity(pw * ph);
        let mut sigmas = Vec::with_capacity(pw * ph);
        for py in 0..ph {
            for px in 0..pw {
                let (mut s, mut s2) = (0.0, 0.0);
                for r in py * patch_size..(py + 1) * patch_size {
                    for v in &values[r * width + px * patch_size..r * width + (px + 1) * patch_size] {
                        s += v;
                        s2 += v * v;
                    }
                }
                let m = s / area;
                means.push(m);
                sigmas.push((s2 / area - m * m).max(0.0).sqrt());
            }
        }
        Ok(PatchStats {
            patch_size,
            means,
            sigmas,
        })
    }

    pub fn fit_k(&self) -> Result<KFit> {
        fit_k(&self.means)
    }
}

/// `k` of a single-plane image from its patch means.
pub fn fit_k_plane(values: &[f64], width: usize, height: usize, patch_size: usize) -> Result<KFit> {
    PatchStats::from_plane(values, width, height, patch_size)?.fit_k()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaKReport {
    pub before: KFit,
    pub after: KFit,
}

impl GammaKReport {
    pub fn k_before(&self) -> f64 {
        self.before.k
    }

    pub fn k_after(&self) -> f64 {
        self.after.k
    }
}

/// `k` before and after BT.709 gamma on a normalized plane.
pub fn gamma_k_report(values: &[f64], width: usize, height: usize, patch_size: usize) -> Result<GammaKReport> {
    let before = fit_k_plane(values, width, height, patch_size)?;
    let encoded: Vec<f64> = values.iter().map(|&v| bt709_encode(v.clamp(0.0, 1.0))).collect();
    let after = fit_k_plane(&encoded, width, height, patch_size)?;
    Ok(GammaKReport { before, after })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn density_integrates_to_one() {
        for k in -6..=12 {
            let m = KQuadModel::new(k as f64).unwrap();
            assert!((m.total_mass() - 1.0).abs() < 1e-12);
            assert!((m.cdf(1.0) - 1.0).abs() < 1e-12);
            // Simpson on 2000 panels as an independent check
            let n = 2000;
            let h = 1.0 / n as f64;
            let mut s = m.density(0.0) + m.density(1.0);
            for i in 1..n {
                s += m.density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-12);
            assert!((m.density(0.3) - m.density(0.7)).abs() < 1e-12);
        }
        assert!(KQuadModel::new(12.5).is_err());
        assert!(KQuadModel::new(-6.1).is_err());
        assert!(KQuadModel::new(12.0).unwrap().density(0.5).abs() < 1e-12);
        assert!(KQuadModel::new(-6.0).unwrap().density(0.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_cdf_inverts() {
        for k in [-6.0, -2.0, 0.0, 5.0, 12.0] {
            let m = KQuadModel::new(k).unwrap();
            for i in 0..=100 {
                let u = i as f64 / 100.0;
                assert!((m.cdf(m.inverse_cdf(u)) - u).abs() < 1e-10, "k={k} u={u}");
            }
        }
    }

    #[test]
    fn variance_formula() {
        for k in [-6.0, 0.0, 12.0] {
            let m = KQuadModel::new(k).unwrap();
            // E[(mu - 1/2)^2] = int (mu - 1/2)^2 p by Simpson
            let n = 2000;
            let h = 1.0 / n as f64;
            let f = |x: f64| (x - 0.5).powi(2) * m.density(x);
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - m.variance()).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_sampler_passes_ks() {
        let mut xs = sample_kquad(0.0, 100_000, 1).unwrap();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(d < 0.02, "{d}");
    }

    #[test]
    fn sampler_means_are_centred() {
        for k in [-6.0, -3.0, 0.0, 6.0, 12.0] {
            let xs = sample_kquad(k, 100_000, 2).unwrap();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((mean - 0.5).abs() < 0.01, "k={k} mean={mean}");
        }
    }

    #[test]
    fn histogram_matches_density() {
        for k in [-4.0, 0.0, 4.0, 8.0] {
            let m = KQuadModel::new(k).unwrap();
            let xs = sample_kquad(k, 1_000_000, 3).unwrap();
            let bins = 10;
            let mut c = vec![0usize; bins];
            for x in &xs {
                c[((x * bins as f64) as usize).min(bins - 1)] += 1;
            }
            for (b, &cnt) in c.iter().enumerate() {
                let lo = b as f64 / bins as f64;
                let expect = m.cdf(lo + 1.0 / bins as f64) - m.cdf(lo);
                let got = cnt as f64 / xs.len() as f64;
                assert!((got / expect - 1.0).abs() < 0.02, "k={k} bin={b} {got} vs {expect}");
            }
        }
    }

    #[test]
    fn fit_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let uniform: Vec<f64> = (0..100_000).map(|_| rng.random()).collect();
        assert!(fit_k(&uniform).unwrap().k.abs() < 0.5);

        let u_shaped = sample_kquad(12.0, 1_000_000, 5).unwrap();
        let f = fit_k(&u_shaped).unwrap();
        assert!((11.0..=13.0).contains(&f.k_unclamped), "{f:?}");
        assert!(f.k <= 12.0);

        let normal = Normal::new(0.5, 0.12).unwrap();
        let bell: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        assert!(fit_k(&bell).unwrap().k < 0.0);

        assert!(fit_k(&uniform[..99]).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let xs = sample_kquad(4.0, 10_000, 6).unwrap();
        assert_eq!(fit_k(&xs).unwrap(), fit_k(&xs).unwrap());
    }

    #[test]
    fn patch_stats() {
        let w = 32;
        let vals: Vec<f64> = (0..w * w).map(|i| if (i % w) < 16 { 0.2 } else { 0.6 }).collect();
        let p = PatchStats::from_plane(&vals, w, w, 16).unwrap();
        assert_eq!(p.means.len(), 4);
        assert!((p.means[0] - 0.2).abs() < 1e-12 && (p.means[1] - 0.6).abs() < 1e-12);
        assert!(p.sigmas.iter().all(|&s| s < 1e-7));
        let p = PatchStats::from_plane(&vals, w, w, 8).unwrap();
        assert_eq!(p.means.len(), 16);
        // partial patches are dropped
        assert_eq!(
            PatchStats::from_plane(&vals[..w * 20], w, 20, 16).unwrap().means.len(),
            2
        );
        assert!(PatchStats::from_plane(&vals, w, w + 1, 16).is_err());
    }
}
