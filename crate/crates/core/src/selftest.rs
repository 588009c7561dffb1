//! Embedded property checks, runnable from the binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::isp::forward::{bt709_decode, bt709_encode};
use crate::raw::{demosaic, mosaic, NormalizedRaw, Pattern, PlaneStack, RawMeta};
use crate::ric::fixed::{sigmoid_table, SigmoidTable};
use crate::ric::logistic::logistic_pmf;
use crate::ric::model::{Alphabet, Conditional, QMixture, CDF_ONE, FREQ_TOTAL, Q12};
use crate::ric::pyramid::{build_pyramid, LEVELS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub all_passed: bool,
    pub checks: Vec<Check>,
}

pub fn selftest(seed: u64) -> SelftestReport {
    selftest_with_table(seed, sigmoid_table())
}

/// Same as [`selftest`] but evaluating probabilities through `table`
/// (lets a deliberately damaged table be injected).
pub fn selftest_with_table(seed: u64, table: &SigmoidTable) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = vec![
        check("pyramid_rule", pyramid_rule(&mut rng)),
        check("pmf_normalization", pmf_normalization(&mut rng, table)),
        check("gamma_roundtrip", gamma_roundtrip()),
        check("mosaic_identity", mosaic_identity(&mut rng)),
    ];
    SelftestReport {
        seed,
        all_passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn check(name: &'static str, r: std::result::Result<String, String>) -> Check {
    match r {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

type Outcome = std::result::Result<String, String>;

fn pyramid_rule(rng: &mut ChaCha8Rng) -> Outcome {
    let (w, h) = (48, 32);
    let x = PlaneStack {
        width: w,
        height: h,
        planes: std::array::from_fn(|_| (0..w * h).map(|_| rng.random()).collect()),
    };
    let pyr = build_pyramid(&x).map_err(|e| e.to_string())?;
    for i in 0..LEVELS {
        let step = 1 << (LEVELS - 1 - i);
        let l = pyr.level(i);
        for ch in 0..4 {
            for r in 0..l.height {
                for c in 0..l.width {
                    if l.planes[ch][r * l.width + c] != x.planes[ch][r * step * w + c * step] {
                        return Err(format!("level {i} plane {ch} differs at ({r}, {c})"));
                    }
                }
            }
        }
    }
    Ok(format!("{LEVELS} levels of a {w}x{h} stack"))
}

fn pmf_normalization(rng: &mut ChaCha8Rng, table: &SigmoidTable) -> Outcome {
    table.check()?;
    let span = 1023u32;
    let a = Alphabet::new(span);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let sigma = rng.random_range(1.0..200.0f64);
        let mu = rng.random_range(-50.0..span as f64 + 50.0);
        let mix = QMixture::single((sigma * Q12 as f64).round() as i64);
        let sigma = mix.components[0].sigma as f64 / Q12 as f64;
        let pred = (mu * Q12 as f64).round() as i64;
        let cond = Conditional::new(table, &mix, pred, a);
        let mu = pred as f64 / Q12 as f64;
        let mut total = 0.0;
        let mut prev_edge = 0;
        for v in 0..a.size {
            let (f1, f2) = cond.frequencies(v);
            if f1 == 0 || f2 == 0 || f1 > FREQ_TOTAL || f2 > FREQ_TOTAL {
                return Err(format!("symbol {v} has no coding mass"));
            }
            total += cond.probability(v);
            let edge = cond.edge(v + 1);
            if edge < prev_edge {
                return Err(format!("CDF decreases at {v}"));
            }
            let fixed = (edge - prev_edge) as f64 / CDF_ONE as f64;
            prev_edge = edge;
            let float = logistic_pmf(v, mu / span as f64, sigma / span as f64, span);
            worst = worst.max((fixed - float).abs());
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("probabilities sum to {total}"));
        }
    }
    if worst > 1e-5 {
        return Err(format!("fixed-point pmf deviates from the reference by {worst:e}"));
    }
    Ok(format!("20 models, max deviation {worst:.2e}"))
}

fn gamma_roundtrip() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..=10_000 {
        let v = i as f64 / 10_000.0;
        worst = worst.max((bt709_decode(bt709_encode(v)) - v).abs());
    }
    if worst > 1e-12 {
        return Err(format!("decode(encode(v)) off by {worst:e}"));
    }
    Ok(format!("max error {worst:.1e}"))
}

fn mosaic_identity(rng: &mut ChaCha8Rng) -> Outcome {
    for pattern in Pattern::ALL {
        let meta = RawMeta::new(pattern, 12, 64, 4095).map_err(|e| e.to_string())?;
        let (w, h) = (12, 10);
        let samples = (0..w * h).map(|_| rng.random::<f64>()).collect();
        let x = NormalizedRaw::new(w, h, meta, samples).map_err(|e| e.to_string())?;
        let back = mosaic(&demosaic(&x).map_err(|e| e.to_string())?, meta).map_err(|e| e.to_string())?;
        if back.samples != x.samples {
            return Err(format!("{pattern:?}: mosaic(demosaic(x)) != x"));
        }
    }
    Ok(format!("{} patterns", Pattern::ALL.len()))
}

impl SelftestReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<18} {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        s
    }
}
