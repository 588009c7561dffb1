//! Monte-Carlo studies of how `k` affects training statistics.
//!
//! Every (k, repeat) task draws from its own ChaCha stream, so results do not
//! depend on the number of worker threads. In coupled mode all `k` values
//! share the same uniforms (common random numbers) and samples are produced
//! by inverse CDF, which makes differences between grid points much less
//! noisy than independent draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::KQuadModel;
use crate::error::{Error, Result};

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw(m: &KQuadModel, env: f64, coupled: bool, rng: &mut ChaCha8Rng) -> f64 {
    if coupled {
        return m.inverse_cdf(rng.random());
    }
    loop {
        let mu: f64 = rng.random();
        if rng.random::<f64>() * env < m.density(mu) {
            return mu;
        }
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn check_grid(k_grid: &[f64]) -> Result<Vec<KQuadModel>> {
    if k_grid.is_empty() {
        return Err(Error::InvalidParameter("k grid is empty".into()));
    }
    k_grid.iter().map(|&k| KQuadModel::new(k)).collect()
}

/// Least-squares line `y = slope x + intercept` and its R².
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        0.0
    };
    (slope, my - slope * mx, r2)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

/// Single-layer regression gradient study.
///
/// Each trial draws a patch mean `mu ~ p_k`, treats the `S x S` patch as
/// constant (in-patch variance neglected), initializes weights and bias from
/// `U(-eta, eta)` and a label from `U(0, label_scale)`, and records
/// `dL/dw_0 = 2/(HW) (w * (P - 0.5) + b - y) (mu - 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVarConfig {
    pub trials: usize,
    pub kernel: usize,
    pub eta: f64,
    pub label_scale: f64,
    pub seed: u64,
    pub coupled: bool,
}

impl Default for GradVarConfig {
    fn default() -> Self {
        GradVarConfig {
            trials: 20_000,
            kernel: 4,
            eta: 1e-2,
            label_scale: 1.0,
            seed: 0,
            coupled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradVarRow {
    pub k: f64,
    pub var: f64,
    /// Small-weight limit `4 E[y^2] Var[mu] / (HW)^2`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVarTable {
    pub rows: Vec<GradVarRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl GradVarTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,var_grad,predicted\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e}\n", r.k, r.var, r.predicted));
        }
        s
    }

    pub fn strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].var > w[0].var)
    }
}

pub fn grad_var_mc(k_grid: &[f64], cfg: &GradVarConfig) -> Result<GradVarTable> {
    let models = check_grid(k_grid)?;
    if cfg.trials < 2 || cfg.kernel == 0 || !(cfg.eta >= 0.0 && cfg.eta <= 1e-2) || !(cfg.label_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("bad gradient-variance config {cfg:?}")));
    }
    let hw = (cfg.kernel * cfg.kernel) as f64;
    let rows: Vec<GradVarRow> = models
        .par_iter()
        .enumerate()
        .map(|(ki, m)| {
            let mut rng = stream(cfg.seed, if cfg.coupled { 0 } else { ki as u64 });
            let env = m.envelope();
            let grads: Vec<f64> = (0..cfg.trials)
                .map(|_| {
                    let mu = draw(m, env, cfg.coupled, &mut rng);
                    let centred = mu - 0.5;
                    let mut wsum = 0.0;
                    for _ in 0..cfg.kernel * cfg.kernel {
                        wsum += rng.random_range(-1.0..=1.0) * cfg.eta;
                    }
                    let b = rng.random_range(-1.0..=1.0) * cfg.eta;
                    let label = rng.random::<f64>() * cfg.label_scale;
                    2.0 / hw * (wsum * centred + b - label) * centred
                })
                .collect();
            GradVarRow {
                k: m.k,
                var: sample_variance(&grads),
                predicted: 4.0 / (hw * hw) * cfg.label_scale.powi(2) / 3.0 * m.variance(),
            }
        })
        .collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.var).collect();
    let (slope, intercept, r2) = linear_fit(&ks, &vs);
    Ok(GradVarTable {
        rows,
        slope,
        intercept,
        r2,
    })
}

/// Cross-batch BN output variance simulation.
///
/// For each repeat a patch mean `mu*` is fixed; each of `n_batches`
/// mini-batches adds `batch_size - 1` further means. The statistic is
/// `Var_n[1 / sqrt(Var_m[P - 0.5])]`, averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnSimConfig {
    pub batch_size: usize,
    pub n_batches: usize,
    pub n_repeats: usize,
    pub k_grid: Vec<f64>,
    pub seed: u64,
    pub coupled: bool,
}

impl Default for BnSimConfig {
    fn default() -> Self {
        BnSimConfig {
            batch_size: 4,
            n_batches: 500,
            n_repeats: 500,
            k_grid: (0..=6).map(|i| 2.0 * i as f64).collect(),
            seed: 0,
            coupled: true,
        }
    }
}

impl BnSimConfig {
    /// 5000 mini-batches x 5000 repeats.
    pub fn full(self) -> Self {
        BnSimConfig {
            n_batches: 5000,
            n_repeats: 5000,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.n_batches < 2 || self.n_repeats < 1 {
            return Err(Error::InvalidParameter(format!(
                "BN simulation needs M >= 2, >= 2 batches and >= 1 repeat: {self:?}"
            )));
        }
        check_grid(&self.k_grid).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnSimRow {
    pub k: f64,
    /// `Var_n[y_BN] / A^2`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnSimTable {
    pub rows: Vec<BnSimRow>,
    pub spearman: f64,
}

impl BnSimTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,var_n_ybn_over_a2\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e}\n", r.k, r.value));
        }
        s
    }
}

fn bn_repeat(m: &KQuadModel, cfg: &BnSimConfig, id: u64) -> f64 {
    let mut rng = stream(cfg.seed, id);
    let env = m.envelope();
    let fixed = draw(m, env, cfg.coupled, &mut rng);
    let mut batch = vec![0.0; cfg.batch_size];
    let mut z = Vec::with_capacity(cfg.n_batches);
    for _ in 0..cfg.n_batches {
        batch[0] = fixed - 0.5;
        for v in batch.iter_mut().skip(1) {
            *v = draw(m, env, cfg.coupled, &mut rng) - 0.5;
        }
        let mean = batch.iter().sum::<f64>() / cfg.batch_size as f64;
        let var = batch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cfg.batch_size as f64;
        z.push(1.0 / var.max(f64::MIN_POSITIVE).sqrt());
    }
    sample_variance(&z)
}

pub fn bn_var_mc(cfg: &BnSimConfig) -> Result<BnSimTable> {
    cfg.validate()?;
    let models = check_grid(&cfg.k_grid)?;
    let reps = cfg.n_repeats as u64;
    let rows: Vec<BnSimRow> = models
        .iter()
        .enumerate()
        .map(|(ki, m)| {
            let per: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| bn_repeat(m, cfg, if cfg.coupled { r } else { ki as u64 * reps + r }))
                .collect();
            BnSimRow {
                k: m.k,
                value: per.iter().sum::<f64>() / per.len() as f64,
            }
        })
        .collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(BnSimTable {
        spearman: spearman(&ks, &vs),
        rows,
    })
}
