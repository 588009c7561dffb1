//! Image generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rho_raw::isp::inverse::{sample_illumination, IlluminationPrior};
use rho_raw::isp::{simraw_one, InvIspParams};
use rho_raw::raw::{BayerRaw, Pattern, RawMeta, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Gradients and low-frequency waves plus a little sensor noise.
    Smooth,
    /// Uniform over `[black, saturation]`.
    Noise,
    /// Piecewise-constant 32x32 tiles with mild noise.
    Blocks,
    Constant,
}

/// Black level `2^(depth-4)`, saturation `2^depth - 1`.
pub fn meta(pattern: Pattern, depth: u8) -> RawMeta {
    RawMeta::new(pattern, depth, 1 << (depth - 4), ((1u32 << depth) - 1) as u16).unwrap()
}

pub fn synthetic(kind: Kind, m: RawMeta, w: usize, h: usize, seed: u64) -> BayerRaw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let black = m.black_lev as f64;
    let span = m.span() as f64;
    let noise = Normal::new(0.0, 2.0).unwrap();
    let level = rng.random_range(0.1..0.9);
    let tiles: Vec<f64> = (0..(w / 32 + 1) * (h / 32 + 1)).map(|_| rng.random()).collect();
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut samples = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let v = match kind {
                Kind::Noise => {
                    samples.push(rng.random_range(m.black_lev..=m.saturation_lev));
                    continue;
                }
                Kind::Constant => black + level * span,
                Kind::Smooth => {
                    let (x, y) = (c as f64 / w as f64, r as f64 / h as f64);
                    let ch = m.pattern.color_at(r, c) as f64;
                    let t =
                        0.15 + 0.35 * x + 0.2 * y + 0.15 * (std::f64::consts::TAU * (1.5 * x + y) + phase + ch).sin();
                    black + t * span + noise.sample(&mut rng)
                }
                Kind::Blocks => {
                    let t = tiles[(r / 32) * (w / 32 + 1) + c / 32];
                    black + (0.05 + 0.9 * t) * span + noise.sample(&mut rng)
                }
            };
            samples.push(v.round().clamp(black, m.saturation_lev as f64) as u16);
        }
    }
    BayerRaw::new(w, h, m, samples).unwrap()
}

/// Lattice value noise, `octaves` octaves of fBm in `[0, 1]`.
fn fbm(lattice: &[f64], n: usize, x: f64, y: f64, octaves: usize) -> f64 {
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut total = 0.0;
    let mut amp = 0.5;
    let mut freq = 4.0;
    let mut norm = 0.0;
    for o in 0..octaves {
        let (fx, fy) = (x * freq, y * freq);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (smooth(fx.fract()), smooth(fy.fract()));
        let at = |i: usize, j: usize| lattice[((j + 17 * o) % n) * n + (i + 31 * o) % n];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        total += amp * (top * (1.0 - ty) + bottom * ty);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    total / norm
}

/// A display-referred scene: sky gradient, textured ground and a few
/// coloured discs.
pub fn scene_rgb(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 257;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
    let horizon = rng.random_range(0.3..0.6);
    let discs: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.03..0.15),
                [
                    rng.random_range(0.05..0.9),
                    rng.random_range(0.05..0.9),
                    rng.random_range(0.05..0.9),
                ],
            )
        })
        .collect();
    RgbImage::from_fn(w, h, |r, c| {
        let (x, y) = (c as f64 / w as f64, r as f64 / h as f64);
        let tex = fbm(&lattice, n, x, y, 5);
        let mut px = if y < horizon {
            let t = y / horizon;
            [0.35 + 0.3 * t, 0.5 + 0.25 * t, 0.85 - 0.1 * t]
        } else {
            [0.25 + 0.4 * tex, 0.3 + 0.35 * tex, 0.12 + 0.2 * tex]
        };
        for &(cx, cy, rad, col) in &discs {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            if d < rad {
                let shade = 0.75 + 0.25 * (1.0 - d / rad);
                px = [col[0] * shade, col[1] * shade, col[2] * shade];
            }
        }
        px.map(|v| v.clamp(0.0, 1.0))
    })
}

/// Unprocesses a procedural scene into `m` and adds shot + read noise.
pub fn natural(m: RawMeta, w: usize, h: usize, seed: u64) -> BayerRaw {
    let rgb = scene_rgb(w, h, seed);
    let params = InvIspParams {
        raw: m,
        ..InvIspParams::default()
    };
    let illum = sample_illumination(
        &IlluminationPrior {
            seed,
            ..IlluminationPrior::default()
        },
        1,
    )
    .unwrap()[0];
    let clean = simraw_one(&rgb, &params, illum).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let gain = m.span() as f64 / 4096.0;
    let samples = clean
        .samples
        .iter()
        .map(|&v| {
            let signal = (v - m.black_lev) as f64;
            let sigma = (gain * signal + (2.0 * gain).powi(2)).sqrt();
            (v as f64 + sigma * std.sample(&mut rng))
                .round()
                .clamp(m.black_lev as f64, m.saturation_lev as f64) as u16
        })
        .collect();
    BayerRaw::new(w, h, m, samples).unwrap()
}
