//! Batch simRAW generation.
//!
//! Every input RGB image gets its own seed derived from the prior seed and the
//! image's position in the batch, so the output of one image never depends on
//! how the batch is scheduled. The manifest records everything needed to
//! replay a single output.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inverse::{inv_isp, sample_illumination, Illumination, IlluminationPrior, InvIspParams};
use crate::error::{Error, Result};
use crate::raw::{denormalize, read_ppm, BayerRaw, RgbImage};

/// One generated file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub input: String,
    pub output: String,
    /// Seed of the per-image illumination stream.
    pub seed: u64,
    /// Index of this draw in that stream.
    pub draw: usize,
    pub theta: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedInput {
    pub input: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub prior: IlluminationPrior,
    pub rows: Vec<ManifestRow>,
    #[serde(default)]
    pub failures: Vec<FailedInput>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// splitmix64 finalizer; decorrelates per-image seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One simRAW from an RGB image and an explicit illumination.
pub fn simraw_one(y: &RgbImage, params: &InvIspParams, illum: Illumination) -> Result<BayerRaw> {
    denormalize(&inv_isp(y, params, illum)?)
}

/// Regenerates the file described by `row`.
pub fn replay(row: &ManifestRow, params: &InvIspParams) -> Result<BayerRaw> {
    let y = read_ppm(&row.input)?;
    simraw_one(
        &y,
        params,
        Illumination {
            theta: row.theta,
            phi: row.phi,
        },
    )
}

fn one_image(
    index: usize,
    input: &Path,
    prior: &IlluminationPrior,
    params: &InvIspParams,
    n: usize,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    let y = read_ppm(input)?;
    let seed = derive_seed(prior.seed, index as u64);
    let draws = sample_illumination(&IlluminationPrior { seed, ..*prior }, n)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("image{index}"));
    let mut rows = Vec::with_capacity(n);
    for (j, illum) in draws.into_iter().enumerate() {
        let raw = simraw_one(&y, params, illum)?;
        let out = out_dir.join(format!("{stem}_{index:04}_{j:03}.braw"));
        raw.save(&out)?;
        rows.push(ManifestRow {
            input: input.to_string_lossy().into_owned(),
            output: out.to_string_lossy().into_owned(),
            seed,
            draw: j,
            theta: illum.theta,
            phi: illum.phi,
        });
    }
    Ok(rows)
}

/// Generates `n_per_image` simRAWs for every input and writes
/// `out_dir/manifest.json`. A failing input is recorded and skipped.
pub fn simraw_batch(
    inputs: &[PathBuf],
    prior: &IlluminationPrior,
    params: &InvIspParams,
    n_per_image: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    prior.validate()?;
    params.validate()?;
    if n_per_image == 0 {
        return Err(Error::InvalidParameter("need at least one sample per image".into()));
    }
    fs::create_dir_all(out_dir)?;
    let results: Vec<Result<Vec<ManifestRow>>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, p)| one_image(i, p, prior, params, n_per_image, out_dir))
        .collect();
    let mut manifest = Manifest {
        prior: *prior,
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok(rows) => manifest.rows.extend(rows),
            Err(e) => manifest.failures.push(FailedInput {
                input: input.to_string_lossy().into_owned(),
                error: e.to_string(),
            }),
        }
    }
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}
