//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 2 usage error, 3 data error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use crate::error::Error;
use crate::isp::{
    isp_auto, isp_forward, simraw::replay, simraw_batch, simraw_one, FixedEstimator, GrayWorldEstimator, Illumination,
    IlluminationPrior, InvIspParams, IspParams, Manifest,
};
use crate::losses::{loss_report, LossInputs};
use crate::raw::{normalize, read_ppm, stack, write_ppm, BayerRaw, RgbImage};
use crate::ric::{self, Decoded, EncodeOptions, Profile};
use crate::selftest::selftest;
use crate::stats::{bn_var_mc, fit_k, grad_var_mc, BnSimConfig, GradVarConfig, PatchStats, DEFAULT_PATCH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const THREADS_ENV: &str = "RHO_RAW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rho-raw",
    version,
    about = "RAW-domain ISP, statistics and lossless codec toolkit"
)]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch work (falls back to RHO_RAW_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Render the report as a plain table instead of JSON.
    #[arg(long, global = true)]
    human: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Render a .braw through the forward ISP to a PPM.
    Isp(IspArgs),
    /// Invert an RGB image to RAW for one illumination or a sampled batch.
    Invisp(InvIspArgs),
    /// Batch simRAW generation, or replay of a manifest.
    Simraw(SimRawArgs),
    /// Fit the patch-mean distribution parameter k.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo variance studies over k.
    Bnsim(BnSimArgs),
    /// Losses and histogram distances between two images.
    Losses(LossesArgs),
    /// Losslessly compress a .braw.
    Encode(EncodeArgs),
    /// Decode a stream, fully or up to a preview scale.
    Decode(DecodeArgs),
    /// Encode, decode and compare.
    Roundtrip(RoundtripArgs),
    /// Run the embedded property checks.
    Selftest,
}

#[derive(Debug, Args)]
struct IspArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    isp_params: Option<PathBuf>,
    /// Estimate white balance and brightness from the image.
    #[arg(long)]
    auto: bool,
}

#[derive(Debug, Args)]
struct InvIspArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Sample `--n` illuminations from this prior (batch mode).
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Single output (explicit illumination mode).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    theta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi: f64,
}

#[derive(Debug, Args)]
struct SimRawArgs {
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Regenerate every file of a manifest and compare byte-for-byte.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also fit k after BT.709 gamma encoding.
    #[arg(long)]
    gamma: bool,
    #[arg(long, default_value_t = DEFAULT_PATCH)]
    patch: usize,
}

#[derive(Debug, Args)]
struct BnSimArgs {
    /// `a..b` (with --k-step) or a comma list.
    #[arg(long, default_value = "0..12")]
    k: String,
    #[arg(long, default_value_t = 2.0)]
    k_step: f64,
    /// CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `bn` (batch-norm output variance) or `grad` (gradient variance).
    #[arg(long, default_value = "bn")]
    mode: String,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, default_value_t = 500)]
    batches: usize,
    #[arg(long, default_value_t = 500)]
    repeats: usize,
    /// 5000 x 5000 scale.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 20_000)]
    trials: usize,
}

#[derive(Debug, Args)]
struct LossesArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// JSON with theta1, phi1, theta2, phi2 and optional d_real, d_fake.
    #[arg(long)]
    latents: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "fitted")]
    profile: String,
    /// Disable cross-channel prediction terms.
    #[arg(long)]
    no_cross_channel: bool,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long)]
    preview: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RoundtripArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "fitted")]
    profile: String,
}

enum Failure {
    Usage(String),
    Data(Error),
    /// Command ran but its check failed; the report is still emitted.
    Check(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<Value, Failure>;

fn usage(m: impl Into<String>) -> Failure {
    Failure::Usage(m.into())
}

/// Runs the tool on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .try_init();

    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(t) => Some(t),
                Err(_) => {
                    eprintln!("error: {THREADS_ENV}={v:?} is not a thread count");
                    return EXIT_USAGE;
                }
            },
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_DATA;
        }
    };

    let result = pool.install(|| dispatch(&cli));
    let (value, code) = match result {
        Ok(v) => (v, EXIT_OK),
        Err(Failure::Check(v)) => (v, EXIT_DATA),
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            return EXIT_USAGE;
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            return EXIT_DATA;
        }
    };
    if let Err(e) = emit(&cli, &value) {
        eprintln!("error: {e}");
        return EXIT_DATA;
    }
    code
}

fn emit(cli: &Cli, v: &Value) -> std::io::Result<()> {
    let text = if cli.human {
        let mut s = String::new();
        render(v, "", &mut s);
        s
    } else {
        format!("{}\n", serde_json::to_string_pretty(v).expect("JSON values serialize"))
    };
    match &cli.report {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                render(x, &key, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                render(x, &format!("{prefix}[{i}]"), out);
            }
        }
        _ => out.push_str(&format!("{prefix:<32} {v}\n")),
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.cmd {
        Cmd::Isp(a) => cmd_isp(a),
        Cmd::Invisp(a) => cmd_invisp(a, cli.seed),
        Cmd::Simraw(a) => cmd_simraw(a, cli.seed),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Bnsim(a) => cmd_bnsim(a, cli.seed.unwrap_or(0)),
        Cmd::Losses(a) => cmd_losses(a),
        Cmd::Encode(a) => cmd_encode(a),
        Cmd::Decode(a) => cmd_decode(a),
        Cmd::Roundtrip(a) => cmd_roundtrip(a),
        Cmd::Selftest => {
            let r = selftest(cli.seed.unwrap_or(0));
            if cli.human {
                eprint!("{}", r.render());
            }
            let v = serde_json::to_value(&r).map_err(Error::from)?;
            if r.all_passed {
                Ok(v)
            } else {
                Err(Failure::Check(v))
            }
        }
    }
}

fn to_value<T: serde::Serialize>(t: &T) -> CmdResult {
    Ok(serde_json::to_value(t).map_err(Error::from)?)
}

fn load_inv_params(p: &Option<PathBuf>) -> Result<InvIspParams, Failure> {
    match p {
        Some(p) => Ok(InvIspParams::load(p)?),
        None => Ok(InvIspParams::default()),
    }
}

fn load_prior(p: &Path, seed: Option<u64>) -> Result<IlluminationPrior, Failure> {
    let mut prior = IlluminationPrior::load(p)?;
    if let Some(s) = seed {
        prior.seed = s;
    }
    Ok(prior)
}

fn cmd_isp(a: &IspArgs) -> CmdResult {
    let raw = BayerRaw::load(&a.input)?;
    let base = match &a.isp_params {
        Some(p) => IspParams::load(p)?,
        None => IspParams::default(),
    };
    let x = normalize(&raw)?;
    let (params, y) = if a.auto {
        isp_auto(&x, &base, &GrayWorldEstimator::default())?
    } else {
        isp_auto(&x, &base, &FixedEstimator(base.clone()))?
    };
    debug_assert_eq!(y, isp_forward(&x, &params)?);
    write_ppm(&a.out, &y)?;
    info!("wrote {}", a.out.display());
    Ok(json!({
        "output": a.out,
        "width": y.width,
        "height": y.height,
        "params": params,
    }))
}

fn cmd_invisp(a: &InvIspArgs, seed: Option<u64>) -> CmdResult {
    let params = load_inv_params(&a.params)?;
    match (&a.prior, &a.out_dir, &a.out) {
        (Some(prior), Some(dir), _) => {
            let prior = load_prior(prior, seed)?;
            let m = simraw_batch(std::slice::from_ref(&a.input), &prior, &params, a.n, dir)?;
            finish_manifest(m, dir)
        }
        (Some(_), None, _) => Err(usage("--prior needs --out-dir")),
        (None, _, Some(out)) => {
            let y = read_ppm(&a.input)?;
            let illum = Illumination {
                theta: a.theta,
                phi: a.phi,
            };
            let raw = simraw_one(&y, &params, illum)?;
            raw.save(out)?;
            Ok(json!({ "output": out, "theta": a.theta, "phi": a.phi, "width": raw.width, "height": raw.height }))
        }
        (None, _, None) => Err(usage("give --out (single illumination) or --prior with --out-dir")),
    }
}

fn finish_manifest(m: Manifest, dir: &Path) -> CmdResult {
    let path = dir.join("manifest.json");
    m.save(&path)?;
    let failed = !m.failures.is_empty();
    let v = json!({ "manifest": path, "generated": m.rows.len(), "failures": m.failures });
    if failed {
        Err(Failure::Check(v))
    } else {
        Ok(v)
    }
}

fn cmd_simraw(a: &SimRawArgs, seed: Option<u64>) -> CmdResult {
    let params = load_inv_params(&a.params)?;
    if let Some(path) = &a.replay {
        let m = Manifest::load(path)?;
        let mut mismatched = Vec::new();
        for row in &m.rows {
            let regenerated = replay(row, &params)?.to_braw_bytes();
            let on_disk = std::fs::read(&row.output).map_err(Error::from)?;
            if regenerated != on_disk {
                mismatched.push(row.output.clone());
            }
        }
        let v = json!({ "replayed": m.rows.len(), "identical": mismatched.is_empty(), "mismatched": mismatched });
        return if mismatched.is_empty() {
            Ok(v)
        } else {
            Err(Failure::Check(v))
        };
    }
    if a.inputs.is_empty() {
        return Err(usage("give --in images or --replay <manifest>"));
    }
    let dir = a.out_dir.as_ref().ok_or_else(|| usage("--out-dir is required"))?;
    let prior = match &a.prior {
        Some(p) => load_prior(p, seed)?,
        None => IlluminationPrior {
            seed: seed.unwrap_or(0),
            ..IlluminationPrior::default()
        },
    };
    let m = simraw_batch(&a.inputs, &prior, &params, a.n, dir)?;
    finish_manifest(m, dir)
}

fn luma_plane(y: &RgbImage) -> Vec<f64> {
    (0..y.width * y.height)
        .map(|i| 0.299 * y.planes[0][i] + 0.587 * y.planes[1][i] + 0.114 * y.planes[2][i])
        .collect()
}

fn fit_planes(planes: &[(&str, Vec<f64>)], w: usize, h: usize, patch: usize) -> Result<Value, Failure> {
    let mut per = serde_json::Map::new();
    let mut pooled = Vec::new();
    for (name, p) in planes {
        let stats = PatchStats::from_plane(p, w, h, patch)?;
        per.insert(
            name.to_string(),
            serde_json::to_value(fit_k(&stats.means)?).map_err(Error::from)?,
        );
        pooled.extend(stats.means);
    }
    Ok(json!({ "pooled": fit_k(&pooled)?, "planes": per }))
}

fn cmd_analyze(a: &AnalyzeArgs) -> CmdResult {
    let is_ppm = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let (planes, w, h): (Vec<(&str, Vec<f64>)>, usize, usize) = if is_ppm {
        let y = read_ppm(&a.input)?;
        (vec![("luma", luma_plane(&y))], y.width, y.height)
    } else {
        let x = normalize(&BayerRaw::load(&a.input)?)?;
        let s = stack(&x);
        let [r, gr, gb, b] = s.planes;
        (vec![("r", r), ("g_r", gr), ("g_b", gb), ("b", b)], s.width, s.height)
    };
    let before = fit_planes(&planes, w, h, a.patch)?;
    let mut v = json!({ "input": a.input, "patch": a.patch, "before": before });
    if a.gamma {
        let encoded: Vec<(&str, Vec<f64>)> = planes
            .iter()
            .map(|(n, p)| {
                (
                    *n,
                    p.iter()
                        .map(|&x| crate::isp::forward::bt709_encode(x.clamp(0.0, 1.0)))
                        .collect(),
                )
            })
            .collect();
        let after = fit_planes(&encoded, w, h, a.patch)?;
        v["k_before"] = v["before"]["pooled"]["k"].clone();
        v["k_after"] = after["pooled"]["k"].clone();
        v["after"] = after;
    } else {
        v["k"] = v["before"]["pooled"]["k"].clone();
    }
    Ok(v)
}

fn parse_k_grid(spec: &str, step: f64) -> Result<Vec<f64>, Failure> {
    let bad = || usage(format!("bad k grid {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + step * i as f64).collect())
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

fn cmd_bnsim(a: &BnSimArgs, seed: u64) -> CmdResult {
    let grid = parse_k_grid(&a.k, a.k_step)?;
    let (csv, v) = match a.mode.as_str() {
        "bn" => {
            let mut cfg = BnSimConfig {
                batch_size: a.batch_size,
                n_batches: a.batches,
                n_repeats: a.repeats,
                k_grid: grid,
                seed,
                coupled: true,
            };
            if a.full {
                cfg = cfg.full();
            }
            let t = bn_var_mc(&cfg)?;
            (t.to_csv(), json!({ "mode": "bn", "config": cfg, "table": t }))
        }
        "grad" => {
            let cfg = GradVarConfig {
                trials: a.trials,
                seed,
                ..GradVarConfig::default()
            };
            let t = grad_var_mc(&grid, &cfg)?;
            let inc = t.strictly_increasing();
            (
                t.to_csv(),
                json!({ "mode": "grad", "config": cfg, "table": t, "strictly_increasing": inc }),
            )
        }
        m => return Err(usage(format!("unknown mode {m:?}; use bn or grad"))),
    };
    if let Some(out) = &a.out {
        std::fs::write(out, csv).map_err(Error::from)?;
    }
    Ok(v)
}

fn read_image(p: &Path) -> Result<RgbImage, Failure> {
    Ok(read_ppm(p)?)
}

fn cmd_losses(a: &LossesArgs) -> CmdResult {
    let (x, y) = (read_image(&a.a)?, read_image(&a.b)?);
    let extra: LossInputs = match &a.latents {
        Some(p) => serde_json::from_slice(&std::fs::read(p).map_err(Error::from)?).map_err(Error::from)?,
        None => LossInputs::default(),
    };
    to_value(&loss_report(&x, &y, &extra)?)
}

fn parse_profile(s: &str) -> Result<Profile, Failure> {
    s.parse::<Profile>().map_err(|e| usage(e.to_string()))
}

fn cmd_encode(a: &EncodeArgs) -> CmdResult {
    let raw = BayerRaw::load(&a.input)?;
    let opts = EncodeOptions {
        profile: parse_profile(&a.profile)?,
        cross_channel: !a.no_cross_channel,
    };
    let enc = ric::encode_with(&raw, opts)?;
    std::fs::write(&a.out, &enc.bytes).map_err(Error::from)?;
    let r = &enc.report;
    Ok(json!({
        "output": a.out,
        "profile": opts.profile.name(),
        "bytes": r.total_bytes,
        "header_bytes": r.header_bytes,
        "section_bytes": r.section_bytes,
        "payload_bits": r.payload_bits,
        "model_bits": r.model_bits,
        "bpp": r.bpp,
    }))
}

fn cmd_decode(a: &DecodeArgs) -> CmdResult {
    if a.scale > 4 {
        return Err(usage(format!("--scale {} outside 0..4", a.scale)));
    }
    let bytes = std::fs::read(&a.input).map_err(Error::from)?;
    let decoded = ric::decode(&bytes, a.scale)?;
    let meta = ric::RicStream::parse(&bytes)?.meta();
    let (stack, raw) = match decoded {
        Decoded::Full(raw) => (raw.stack(), raw),
        Decoded::Preview { stack, .. } => {
            let raw = BayerRaw::from_stack(&stack, meta)?;
            (stack, raw)
        }
    };
    if let Some(out) = &a.out {
        raw.save(out)?;
    }
    if let Some(p) = &a.preview {
        write_ppm(p, &ric::preview_rgb(&stack, &meta))?;
    }
    Ok(json!({
        "scale": a.scale,
        "width": raw.width,
        "height": raw.height,
        "preview_width": stack.width,
        "preview_height": stack.height,
        "output": a.out,
        "preview": a.preview,
    }))
}

fn cmd_roundtrip(a: &RoundtripArgs) -> CmdResult {
    let raw = BayerRaw::load(&a.input)?;
    let profile = parse_profile(&a.profile)?;
    let t = std::time::Instant::now();
    let enc = ric::encode(&raw, profile)?;
    let encode_s = t.elapsed().as_secs_f64();
    let t = std::time::Instant::now();
    let lossless = matches!(ric::decode(&enc.bytes, 4)?, Decoded::Full(ref y) if *y == raw);
    let decode_s = t.elapsed().as_secs_f64();
    let v = json!({
        "lossless": lossless,
        "bpp": enc.report.bpp,
        "bytes": enc.report.total_bytes,
        "payload_bits": enc.report.payload_bits,
        "model_bits": enc.report.model_bits,
        "encode_seconds": encode_s,
        "decode_seconds": decode_s,
    });
    if lossless {
        Ok(v)
    } else {
        Err(Failure::Check(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_grids() {
        assert_eq!(
            parse_k_grid("0..12", 2.0).ok().unwrap(),
            vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0]
        );
        assert_eq!(parse_k_grid("-6,0,6", 1.0).ok().unwrap(), vec![-6.0, 0.0, 6.0]);
        assert!(parse_k_grid("3..1", 1.0).is_err());
        assert!(parse_k_grid("a,b", 1.0).is_err());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["rho-raw", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["rho-raw", "encode", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["rho-raw", "--help"]), EXIT_OK);
    }
}
