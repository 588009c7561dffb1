//! End-to-end acceptance checks. Runs without the libtest harness and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fail.

mod common;

use std::time::{Duration, Instant};

use rayon::ThreadPoolBuilder;

use common::{meta, natural, synthetic, Kind};
use rho_raw::isp::forward::bt709_decode;
use rho_raw::isp::{
    inv_isp, isp_forward, simraw_batch, simraw_one, Illumination, IlluminationPrior, InvIspParams, Manifest,
};
use rho_raw::losses::{adv_losses, cycle_loss, var_loss, LatentPair, YuvImage};
use rho_raw::raw::{read_braw, BayerRaw, Pattern, PlaneStack, RgbImage};
use rho_raw::ric::codec::symbol_pyramid;
use rho_raw::ric::pyramid::LEVELS;
use rho_raw::ric::{decode, decode_progressive, encode, Decoded, Profile, RicStream};
use rho_raw::stats::{
    bn_var_mc, fit_k, gamma_k_report, grad_var_mc, sample_kquad, BnSimConfig, GradVarConfig, KQuadModel,
};
use rho_raw::Error;

const SIDE: usize = 512;
const TIME_PER_IMAGE: Duration = Duration::from_secs(10);

type Outcome = Result<String, String>;

struct Case {
    name: String,
    kind: Option<Kind>,
    raw: BayerRaw,
}

/// 20 synthetic and 5 natural-like 512x512 mosaics.
fn corpus() -> Vec<Case> {
    let patterns = [Pattern::Rggb, Pattern::Ryyb];
    let depths = [10u8, 12, 14];
    let kinds = [Kind::Smooth, Kind::Noise, Kind::Blocks, Kind::Constant, Kind::Smooth];
    let mut cases = Vec::new();
    for i in 0..20 {
        let (p, d, k) = (patterns[i % 2], depths[i % 3], kinds[i % 5]);
        cases.push(Case {
            name: format!("synthetic-{i:02} {k:?} {p} {d}-bit"),
            kind: Some(k),
            raw: synthetic(k, meta(p, d), SIDE, SIDE, 100 + i as u64),
        });
    }
    for (i, d) in [10u8, 12, 14, 12, 14].into_iter().enumerate() {
        let p = patterns[i % 2];
        cases.push(Case {
            name: format!("natural-{i} {p} {d}-bit"),
            kind: None,
            raw: natural(meta(p, d), SIDE, SIDE, 200 + i as u64),
        });
    }
    cases
}

fn encode_all(cases: &[Case], threads: usize) -> Vec<Vec<u8>> {
    let pool = ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        cases
            .iter()
            .map(|c| encode(&c.raw, Profile::Fitted).unwrap().bytes)
            .collect()
    })
}

fn c1_lossless(cases: &[Case], streams: &mut Vec<Vec<u8>>) -> Outcome {
    let pool = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut slowest = Duration::ZERO;
    let mut smooth_worst: f64 = f64::NEG_INFINITY;
    let mut noise_worst: f64 = 0.0;
    let mut ce_margin = f64::INFINITY;
    for c in cases {
        let depth = c.raw.meta.bit_depth as f64;
        let t0 = Instant::now();
        let enc = pool
            .install(|| encode(&c.raw, Profile::Fitted))
            .map_err(|e| format!("{}: {e}", c.name))?;
        let dec = pool
            .install(|| decode(&enc.bytes, LEVELS - 1))
            .map_err(|e| format!("{}: {e}", c.name))?;
        let took = t0.elapsed();
        slowest = slowest.max(took);
        match dec {
            Decoded::Full(x) if x == c.raw => {}
            _ => return Err(format!("{}: decoded mosaic differs", c.name)),
        }
        if took > TIME_PER_IMAGE {
            return Err(format!(
                "{}: {:.2} s > {:?}",
                c.name,
                took.as_secs_f64(),
                TIME_PER_IMAGE
            ));
        }
        let r = &enc.report;
        let bound = r.model_bits * 1.01 + 1024.0;
        if r.payload_bits as f64 > bound {
            return Err(format!("{}: payload {} bits > {bound:.0}", c.name, r.payload_bits));
        }
        ce_margin = ce_margin.min(bound - r.payload_bits as f64);
        match c.kind {
            Some(Kind::Smooth) => {
                if r.bpp >= depth {
                    return Err(format!("{}: smooth image at {:.3} bpp", c.name, r.bpp));
                }
                smooth_worst = smooth_worst.max(r.bpp - depth);
            }
            Some(Kind::Noise) => {
                let rel = (r.bpp - depth).abs() / depth;
                if rel > 0.03 {
                    return Err(format!(
                        "{}: noise at {:.3} bpp ({:.2}% off)",
                        c.name,
                        r.bpp,
                        100.0 * rel
                    ));
                }
                noise_worst = noise_worst.max(rel);
            }
            _ => {}
        }
        streams.push(enc.bytes);
    }
    Ok(format!(
        "{} images bit-exact; slowest {:.2} s; smooth bpp <= depth{:+.2}; noise within {:.2}%; min CE slack {:.0} bits",
        cases.len(),
        slowest.as_secs_f64(),
        smooth_worst,
        100.0 * noise_worst,
        ce_margin
    ))
}

fn with_black(s: &PlaneStack<u16>, black: u16) -> PlaneStack<u16> {
    PlaneStack {
        width: s.width,
        height: s.height,
        planes: s.planes.clone().map(|p| p.into_iter().map(|v| v + black).collect()),
    }
}

fn c2_progressive(cases: &[Case], streams: &[Vec<u8>]) -> Outcome {
    let mut cuts = 0;
    for (c, bytes) in cases.iter().zip(streams) {
        let pyr = symbol_pyramid(&c.raw).map_err(|e| e.to_string())?;
        let black = c.raw.meta.black_lev;
        let expect: Vec<PlaneStack<u16>> = (0..LEVELS).map(|s| with_black(pyr.level(s), black)).collect();
        for scale in 0..LEVELS - 1 {
            match decode(bytes, scale).map_err(|e| e.to_string())? {
                Decoded::Preview { scale: s, stack } if s == scale && stack == expect[scale] => {}
                _ => return Err(format!("{}: preview at scale {scale} differs from the pyramid", c.name)),
            }
        }
        let sections = RicStream::parse(bytes).map_err(|e| e.to_string())?.header.sections;
        let header_len = bytes.len() - sections.iter().map(|&s| s as usize).sum::<usize>();
        let mut start = header_len;
        for (scale, &len) in sections.iter().enumerate() {
            for cut in [start, start + len as usize / 2, start + len as usize - 1] {
                let p = decode_progressive(&bytes[..cut]).map_err(|e| format!("{}: cut {cut}: {e}", c.name))?;
                if p.truncated_at != Some(scale) || p.levels[..] != expect[..scale] {
                    return Err(format!(
                        "{}: cut at {cut} gave {} levels (truncated at {:?}), expected {scale}",
                        c.name,
                        p.levels.len(),
                        p.truncated_at
                    ));
                }
                cuts += 1;
            }
            start += len as usize;
        }
        let full = decode_progressive(bytes).map_err(|e| e.to_string())?;
        if full.truncated_at.is_some() || full.levels != expect {
            return Err(format!("{}: untruncated progressive decode differs", c.name));
        }
    }
    Ok(format!(
        "{} streams, scales 0-3 match; {cuts} truncations decode every complete scale",
        streams.len()
    ))
}

fn c3_k_model() -> Outcome {
    let t0 = Instant::now();
    let mut worst_mass: f64 = 0.0;
    for k in -6..=12 {
        let m = KQuadModel::new(k as f64).map_err(|e| e.to_string())?;
        worst_mass = worst_mass.max((m.total_mass() - 1.0).abs());
    }
    if worst_mass > 1e-12 {
        return Err(format!("integral off by {worst_mass:e}"));
    }
    let mut worst_fit: f64 = 0.0;
    for (i, k) in [-4.0, 0.0, 4.0, 8.0].into_iter().enumerate() {
        let xs = sample_kquad(k, 1_000_000, 30 + i as u64).map_err(|e| e.to_string())?;
        let f = fit_k(&xs).map_err(|e| e.to_string())?;
        if (f.k - k).abs() > 0.5 {
            return Err(format!("planted k={k} fitted {:.3}", f.k));
        }
        worst_fit = worst_fit.max((f.k - k).abs());
    }
    let took = t0.elapsed();
    if took >= Duration::from_secs(30) {
        return Err(format!("took {:.1} s", took.as_secs_f64()));
    }
    Ok(format!(
        "mass error {worst_mass:.1e}; worst fit error {worst_fit:.3}; {:.2} s",
        took.as_secs_f64()
    ))
}

fn c4_grad_var() -> Outcome {
    let t0 = Instant::now();
    let grid = [-6.0, -3.0, 0.0, 3.0, 6.0, 9.0, 12.0];
    let t = grad_var_mc(&grid, &GradVarConfig::default()).map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    if !(t.r2 > 0.95) {
        return Err(format!("R^2 = {:.4}", t.r2));
    }
    if !t.strictly_increasing() {
        return Err(format!("variance not increasing: {:?}", t.rows));
    }
    if took >= Duration::from_secs(60) {
        return Err(format!("took {:.1} s", took.as_secs_f64()));
    }
    Ok(format!(
        "R^2 = {:.4}, slope {:.3e}; {:.2} s",
        t.r2,
        t.slope,
        took.as_secs_f64()
    ))
}

fn c5_bn() -> Outcome {
    let t0 = Instant::now();
    let cfg = BnSimConfig::default();
    let t = bn_var_mc(&cfg).map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    if !(t.spearman >= 0.9) {
        return Err(format!("Spearman {:.3}", t.spearman));
    }
    if took >= Duration::from_secs(120) {
        return Err(format!("took {:.1} s", took.as_secs_f64()));
    }
    Ok(format!(
        "Spearman {:.3} over k=0..12 at {}x{}; {:.2} s",
        t.spearman,
        cfg.n_batches,
        cfg.n_repeats,
        took.as_secs_f64()
    ))
}

/// A linear-light plane whose display-domain 16x16 patch means follow
/// `p_k` for `k` drawn from `[0, 6]`.
fn u_shaped_plane(seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(0.0..=6.0);
    let patches = SIDE / 16;
    let means = sample_kquad(k, patches * patches, seed).unwrap();
    let mut plane = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            plane[r * SIDE + c] = bt709_decode(means[(r / 16) * patches + c / 16]);
        }
    }
    plane
}

fn c6_gamma() -> Outcome {
    let mut qualifying = 0;
    let mut lower = 0;
    let mut seed = 0;
    let mut pairs = Vec::new();
    while qualifying < 10 {
        if seed >= 100 {
            return Err(format!("only {qualifying} of 100 images fitted k >= 6"));
        }
        let r = gamma_k_report(&u_shaped_plane(seed), SIDE, SIDE, 16).map_err(|e| e.to_string())?;
        seed += 1;
        if r.k_before() < 6.0 {
            continue;
        }
        qualifying += 1;
        if r.k_after() < r.k_before() {
            lower += 1;
        }
        pairs.push(format!("{:.1}->{:.1}", r.k_before(), r.k_after()));
    }
    let detail = format!("{lower}/10 lower after gamma [{}]", pairs.join(" "));
    if lower >= 9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cycle_error(y: &RgbImage) -> Result<f64, String> {
    let params = InvIspParams::default();
    let fwd = params
        .consistent_forward(Illumination::NEUTRAL)
        .map_err(|e| e.to_string())?;
    let x = inv_isp(y, &params, Illumination::NEUTRAL).map_err(|e| e.to_string())?;
    let back = isp_forward(&x, &fwd).map_err(|e| e.to_string())?;
    Ok(back.max_abs_diff(y))
}

fn c7_cycle() -> Outcome {
    let mut const_worst: f64 = 0.0;
    for rgb in [
        [0.0, 0.0, 0.0],
        [0.2, 0.3, 0.4],
        [0.5, 0.5, 0.5],
        [0.7, 0.6, 0.3],
        [0.85, 0.85, 0.85],
    ] {
        let e = cycle_error(&RgbImage::filled(64, 48, rgb))?;
        if e > 1e-6 {
            return Err(format!("constant {rgb:?}: error {e:e}"));
        }
        const_worst = const_worst.max(e);
    }
    let mut smooth_worst: f64 = 0.0;
    // Edge replication costs about two pixels' worth of slope at the border,
    // so the gradients span the range over a realistic frame size.
    let (w, h) = (512, 384);
    let images = [
        RgbImage::from_fn(w, h, |r, c| {
            let (x, y) = (c as f64 / w as f64, r as f64 / h as f64);
            [0.1 + 0.7 * x, 0.2 + 0.6 * y, 0.5 - 0.3 * x * y]
        }),
        RgbImage::from_fn(w, h, |r, c| {
            let (x, y) = (c as f64 / w as f64, r as f64 / h as f64);
            let s = 0.5 + 0.5 * (std::f64::consts::PI * (x + 0.5 * y)).sin();
            [0.15 + 0.5 * s, 0.45 + 0.3 * x, 0.3 + 0.4 * y * s]
        }),
        RgbImage::from_fn(w, h, |r, c| {
            let d = ((c as f64 / w as f64 - 0.4).powi(2) + (r as f64 / h as f64 - 0.6).powi(2)).sqrt();
            [0.8 - 0.6 * d, 0.6 - 0.3 * d, 0.25 + 0.4 * d]
        }),
    ];
    for (i, y) in images.iter().enumerate() {
        let max = y.planes.iter().flatten().fold(0.0f64, |a, &v| a.max(v));
        let min = y.planes.iter().flatten().fold(1.0f64, |a, &v| a.min(v));
        assert!(min >= 0.0 && max <= 0.85);
        let e = cycle_error(y)?;
        if e > 2.0 / 255.0 {
            return Err(format!("{w}x{h} gradient {i}: error {:.5} > 2/255", e));
        }
        smooth_worst = smooth_worst.max(e);
    }
    Ok(format!(
        "constant max error {const_worst:.1e}; {w}x{h} gradient max error {smooth_worst:.5} (limit {:.5})",
        2.0 / 255.0
    ))
}

fn c8_simraw() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("scene.ppm");
    rho_raw::raw::write_ppm(&input, &common::scene_rgb(160, 120, 8)).map_err(|e| e.to_string())?;
    let params = InvIspParams::default();
    let prior = IlluminationPrior {
        seed: 8,
        ..IlluminationPrior::default()
    };
    let out = dir.path().join("out");
    let manifest = simraw_batch(&[input], &prior, &params, 5, &out).map_err(|e| e.to_string())?;
    if manifest.rows.len() != 5 {
        return Err(format!("{} rows", manifest.rows.len()));
    }
    let files: Vec<Vec<u8>> = manifest
        .rows
        .iter()
        .map(|r| std::fs::read(&r.output))
        .collect::<std::io::Result<_>>()
        .map_err(|e| e.to_string())?;
    for i in 0..files.len() {
        for j in i + 1..files.len() {
            if files[i] == files[j] {
                return Err(format!("draws {i} and {j} are identical"));
            }
        }
    }
    let reloaded = Manifest::load(out.join("manifest.json")).map_err(|e| e.to_string())?;
    for (row, bytes) in reloaded.rows.iter().zip(&files) {
        let rgb = rho_raw::raw::read_ppm(&row.input).map_err(|e| e.to_string())?;
        let again = simraw_one(
            &rgb,
            &params,
            Illumination {
                theta: row.theta,
                phi: row.phi,
            },
        )
        .map_err(|e| e.to_string())?;
        if again.to_braw_bytes() != *bytes {
            return Err(format!("replay of {} differs", row.output));
        }
        read_braw(bytes.as_slice()).map_err(|e| e.to_string())?;
    }
    Ok("5 pairwise-distinct .braw files; all replays byte-identical".into())
}

fn c9_losses() -> Outcome {
    let close = |name: &str, got: f64, want: f64| -> Result<(), String> {
        if (got - want).abs() > 1e-9 {
            Err(format!("{name}: {got} != {want}"))
        } else {
            Ok(())
        }
    };
    let y = common::scene_rgb(32, 24, 9);
    close("cycle identical", cycle_loss(&y, &y).map_err(|e| e.to_string())?, 0.0)?;
    let base = RgbImage::filled(32, 24, [0.3, 0.4, 0.5]);
    let shifted = base.map_values(|v| v + 0.1);
    close(
        "cycle +0.1",
        cycle_loss(&shifted, &base).map_err(|e| e.to_string())?,
        0.1,
    )?;

    let yuv = YuvImage::from_rgb(&y);
    let lat = LatentPair {
        theta1: 0.0,
        phi1: 0.0,
        theta2: 1.0,
        phi2: 1.0,
    };
    close(
        "var equal images",
        var_loss(&yuv, &yuv, lat).map_err(|e| e.to_string())?,
        0.0,
    )?;
    let mut moved = yuv.clone();
    moved.u.iter_mut().for_each(|u| *u += 0.2);
    let hand = LatentPair {
        theta1: 0.0,
        phi1: 0.0,
        theta2: 2.0,
        phi2: 1.0,
    };
    close(
        "var hand case",
        var_loss(&yuv, &moved, hand).map_err(|e| e.to_string())?,
        -0.1,
    )?;

    let (g, _) = adv_losses(0.5, 1.0);
    close("adv G at d_fake=1", g, 0.0)?;
    let (_, d) = adv_losses(1.0, 0.0);
    close("adv D at (1, 0)", d, 0.0)?;
    let (_, d) = adv_losses(0.8, 0.3);
    close("adv D at (0.8, 0.3)", d, 0.13)?;

    let same = LatentPair {
        theta1: 0.4,
        phi1: 0.1,
        theta2: 0.4,
        phi2: 0.1,
    };
    match var_loss(&yuv, &moved, same) {
        Err(Error::DegeneratePair { .. }) => {}
        other => return Err(format!("equal latents gave {other:?}")),
    }
    Ok("cycle, var and adv examples within 1e-9; degenerate pair rejected".into())
}

fn c10_determinism(cases: &[Case], streams: &[Vec<u8>]) -> Outcome {
    let again = encode_all(cases, 1);
    if let Some(i) = (0..cases.len()).find(|&i| again[i] != streams[i]) {
        return Err(format!("{}: second single-thread run differs", cases[i].name));
    }
    let wide = encode_all(cases, 8);
    if let Some(i) = (0..cases.len()).find(|&i| wide[i] != streams[i]) {
        return Err(format!("{}: 8-thread stream differs", cases[i].name));
    }
    Ok(format!(
        "{} streams byte-identical across two runs and 1 vs 8 threads",
        cases.len()
    ))
}

fn main() {
    let cases = corpus();
    let mut streams = Vec::new();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 lossless round trip", c1_lossless(&cases, &mut streams)));
    let complete = streams.len() == cases.len();
    results.push((
        "2 progressive decoding",
        if complete {
            c2_progressive(&cases, &streams)
        } else {
            Err("needs every stream from criterion 1".into())
        },
    ));
    results.push(("3 k-model", c3_k_model()));
    results.push(("4 gradient-variance law", c4_grad_var()));
    results.push(("5 BN-variance curve", c5_bn()));
    results.push(("6 gamma regularization", c6_gamma()));
    results.push(("7 ISP/invISP cycle", c7_cycle()));
    results.push(("8 one-to-many simRAW", c8_simraw()));
    results.push(("9 loss algebra", c9_losses()));
    results.push((
        "10 determinism",
        if complete {
            c10_determinism(&cases, &streams)
        } else {
            Err("needs every stream from criterion 1".into())
        },
    ));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
