//! Floating-point discretized logistic mixtures in the normalized domain.
//!
//! This is the reference form of the entropy model: symbols `0..=s` map to
//! `x = sym / s`, each symbol owns the interval `x ± 1/(2s)`, and the two
//! boundary symbols absorb the tails. The codec itself evaluates the same
//! model in fixed point (see `model`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw::Channel;

pub const SIGMA_MIN: f64 = 1e-3;
pub const K: usize = 10;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mass of `sym` under a discretized logistic with tails folded into
/// symbols `0` and `s`.
pub fn logistic_pmf(sym: u32, mu: f64, sigma: f64, s: u32) -> f64 {
    let sigma = sigma.max(SIGMA_MIN);
    let sf = s as f64;
    let x = sym as f64 / sf;
    let half = 0.5 / sf;
    let lo = if sym == 0 {
        0.0
    } else {
        sigmoid((x - half - mu) / sigma)
    };
    let hi = if sym >= s {
        1.0
    } else {
        sigmoid((x + half - mu) / sigma)
    };
    hi - lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticComponent {
    pub weight: f64,
    pub mean: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticMixture {
    pub components: Vec<LogisticComponent>,
}

impl LogisticMixture {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("mixture has no components".into()));
        }
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > 1e-9 || self.components.iter().any(|c| c.weight < 0.0) {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {sum}")));
        }
        if self.components.iter().any(|c| !(c.scale >= SIGMA_MIN)) {
            return Err(Error::InvalidParameter(format!("mixture scale below {SIGMA_MIN}")));
        }
        Ok(())
    }

    /// Weights from unnormalized logits.
    pub fn from_logits(logits: &[f64], means: &[f64], scales: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = e.iter().sum();
        LogisticMixture {
            components: e
                .iter()
                .zip(means)
                .zip(scales)
                .map(|((w, &mean), &scale)| LogisticComponent {
                    weight: w / z,
                    mean,
                    scale: scale.max(SIGMA_MIN),
                })
                .collect(),
        }
    }

    pub fn pmf_shifted(&self, sym: u32, shift: &[f64], s: u32) -> f64 {
        self.components
            .iter()
            .enumerate()
            .map(|(k, c)| c.weight * logistic_pmf(sym, c.mean + shift.get(k).copied().unwrap_or(0.0), c.scale, s))
            .sum()
    }

    pub fn pmf(&self, sym: u32, s: u32) -> f64 {
        self.pmf_shifted(sym, &[], s)
    }
}

/// Per-component cross-channel coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossChannel {
    /// g_b <- g_r
    pub alpha: Vec<f64>,
    /// r <- g_r
    pub beta: Vec<f64>,
    /// r <- g_b
    pub gamma: Vec<f64>,
    /// b <- g_r
    pub delta: Vec<f64>,
    /// b <- g_b
    pub epsilon: Vec<f64>,
    /// b <- r
    pub zeta: Vec<f64>,
}

/// One multichannel processing unit: a mixture per channel plus the chain
/// of mean shifts that conditions later channels on earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpuModel {
    pub g_r: LogisticMixture,
    pub g_b: LogisticMixture,
    pub r: LogisticMixture,
    pub b: LogisticMixture,
    pub lambda: CrossChannel,
    /// Alphabet span `saturation - black`.
    pub s: u32,
}

/// Channels of the current pixel group decoded so far (symbols).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodedGroup {
    pub g_r: Option<u32>,
    pub g_b: Option<u32>,
    pub r: Option<u32>,
}

fn need(v: Option<u32>, channel: &'static str, missing: &'static str) -> Result<f64> {
    v.map(f64::from).ok_or(Error::OrderingViolation { channel, missing })
}

fn coef(v: &[f64], k: usize) -> f64 {
    v.get(k).copied().unwrap_or(0.0)
}

/// `P(sym | Z, earlier channels)` with the mean chain
///
/// ```text
/// mu~_gb = mu_gb + alpha g_r
/// mu~_r  = mu_r  + beta g_r + gamma g_b
/// mu~_b  = mu_b  + delta g_r + epsilon g_b + zeta r
/// ```
///
/// Decoding order is g_r, g_b, r, b; asking for a channel before its
/// prerequisites is an error.
pub fn mixture_pmf(sym: u32, m: &MpuModel, channel: Channel, decoded: &DecodedGroup) -> Result<f64> {
    let s = m.s;
    let norm = |v: f64| v / s as f64;
    let l = &m.lambda;
    let (mix, shift): (&LogisticMixture, Vec<f64>) = match channel {
        Channel::Gr => (&m.g_r, vec![]),
        Channel::Gb => {
            let gr = norm(need(decoded.g_r, "g_b", "g_r")?);
            let n = m.g_b.components.len();
            (&m.g_b, (0..n).map(|k| coef(&l.alpha, k) * gr).collect())
        }
        Channel::R => {
            let gr = norm(need(decoded.g_r, "r", "g_r")?);
            let gb = norm(need(decoded.g_b, "r", "g_b")?);
            let n = m.r.components.len();
            (
                &m.r,
                (0..n).map(|k| coef(&l.beta, k) * gr + coef(&l.gamma, k) * gb).collect(),
            )
        }
        Channel::B => {
            let gr = norm(need(decoded.g_r, "b", "g_r")?);
            let gb = norm(need(decoded.g_b, "b", "g_b")?);
            let r = norm(need(decoded.r, "b", "r")?);
            let n = m.b.components.len();
            (
                &m.b,
                (0..n)
                    .map(|k| coef(&l.delta, k) * gr + coef(&l.epsilon, k) * gb + coef(&l.zeta, k) * r)
                    .collect(),
            )
        }
    };
    Ok(mix.pmf_shifted(sym, &shift, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mixture(rng: &mut ChaCha8Rng, k: usize) -> LogisticMixture {
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let means: Vec<f64> = (0..k).map(|_| rng.random_range(-0.2..1.2)).collect();
        let scales: Vec<f64> = (0..k).map(|_| rng.random_range(0.0005..0.3)).collect();
        LogisticMixture::from_logits(&logits, &means, &scales)
    }

    #[test]
    fn pmf_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = rng.random_range(1..2000);
            let mu = rng.random_range(-0.5..1.5);
            let sigma = rng.random_range(0.0..0.5);
            let total: f64 = (0..=s).map(|j| logistic_pmf(j, mu, sigma, s)).sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn pmf_is_symmetric_about_centre() {
        let s = 1000;
        let c = 400;
        let mu = c as f64 / s as f64;
        for j in 1..100 {
            let a = logistic_pmf(c - j, mu, 0.02, s);
            let b = logistic_pmf(c + j, mu, 0.02, s);
            assert!((a - b).abs() < 1e-14, "j={j}");
        }
    }

    #[test]
    fn pmf_matches_sigmoid_difference() {
        let (s, mu, sigma, sym) = (255u32, 0.5, 0.1, 128u32);
        let x = 128.0 / 255.0;
        let sig = |t: f64| 1.0 / (1.0 + (-t).exp());
        let want = sig((x + 0.5 / 255.0 - mu) / sigma) - sig((x - 0.5 / 255.0 - mu) / sigma);
        assert!((logistic_pmf(sym, mu, sigma, s) - want).abs() < 1e-15);
        // boundary symbols take the tails
        let want0 = sig((0.5 / 255.0 - mu) / sigma);
        assert!((logistic_pmf(0, mu, sigma, s) - want0).abs() < 1e-15);
    }

    fn model(rng: &mut ChaCha8Rng, k: usize, s: u32) -> MpuModel {
        MpuModel {
            g_r: random_mixture(rng, k),
            g_b: random_mixture(rng, k),
            r: random_mixture(rng, k),
            b: random_mixture(rng, k),
            lambda: CrossChannel::default(),
            s,
        }
    }

    #[test]
    fn zero_lambda_is_plain_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = model(&mut rng, K, 255);
        let d = DecodedGroup {
            g_r: Some(10),
            g_b: Some(200),
            r: Some(77),
        };
        for sym in [0, 5, 128, 255] {
            assert_eq!(mixture_pmf(sym, &m, Channel::B, &d).unwrap(), m.b.pmf(sym, 255));
            assert_eq!(mixture_pmf(sym, &m, Channel::Gr, &d).unwrap(), m.g_r.pmf(sym, 255));
        }
    }

    #[test]
    fn alpha_shifts_gb_mean() {
        let s = 1023;
        let comp = LogisticComponent {
            weight: 1.0,
            mean: 0.3,
            scale: 0.01,
        };
        let single = LogisticMixture { components: vec![comp] };
        let m = MpuModel {
            g_r: single.clone(),
            g_b: single.clone(),
            r: single.clone(),
            b: single,
            lambda: CrossChannel {
                alpha: vec![1.0],
                ..Default::default()
            },
            s,
        };
        let d = DecodedGroup {
            g_r: Some(10),
            ..Default::default()
        };
        for sym in [300, 306, 307, 320] {
            let got = mixture_pmf(sym, &m, Channel::Gb, &d).unwrap();
            let want = logistic_pmf(sym, 0.3 + 10.0 / s as f64, 0.01, s);
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn ordering_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = model(&mut rng, 2, 255);
        let none = DecodedGroup::default();
        assert!(mixture_pmf(3, &m, Channel::Gr, &none).is_ok());
        assert!(matches!(
            mixture_pmf(3, &m, Channel::Gb, &none),
            Err(Error::OrderingViolation {
                channel: "g_b",
                missing: "g_r"
            })
        ));
        let only_gr = DecodedGroup {
            g_r: Some(1),
            ..Default::default()
        };
        assert!(matches!(
            mixture_pmf(3, &m, Channel::R, &only_gr),
            Err(Error::OrderingViolation {
                channel: "r",
                missing: "g_b"
            })
        ));
        let no_r = DecodedGroup {
            g_r: Some(1),
            g_b: Some(2),
            r: None,
        };
        assert!(matches!(
            mixture_pmf(3, &m, Channel::B, &no_r),
            Err(Error::OrderingViolation {
                channel: "b",
                missing: "r"
            })
        ));
    }

    #[test]
    fn mixture_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let s = 1023;
            let mut m = model(&mut rng, K, s);
            m.lambda = CrossChannel {
                alpha: (0..K).map(|_| rng.random_range(-1.0..1.0)).collect(),
                beta: (0..K).map(|_| rng.random_range(-1.0..1.0)).collect(),
                gamma: (0..K).map(|_| rng.random_range(-1.0..1.0)).collect(),
                delta: (0..K).map(|_| rng.random_range(-1.0..1.0)).collect(),
                epsilon: (0..K).map(|_| rng.random_range(-1.0..1.0)).collect(),
                zeta: (0..K).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            m.g_b.validate().unwrap();
            let d = DecodedGroup {
                g_r: Some(100),
                g_b: Some(900),
                r: Some(512),
            };
            for ch in Channel::ALL {
                let total: f64 = (0..=s).map(|j| mixture_pmf(j, &m, ch, &d).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-12, "{ch:?}: {total}");
            }
        }
    }
}
