//! Deterministic test assets: fixture weights and labels, a small DICOM
//! series, a PGM and a labeled four-class dataset, all derived from one seed.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::dicom::{self, DicomError, SliceGeometry};
use crate::nnet::rng::SplitMix64;
use crate::nnet::gen_fixture_weights;
use crate::pgm;
use crate::registry::{install_bundle, LabelMap, RegistryError};

pub const FIXTURE_ROWS: usize = 48;
pub const FIXTURE_COLS: usize = 64;
pub const FIXTURE_SLICES: usize = 3;
pub const FIXTURE_SLOPE: f64 = 2.0;
pub const FIXTURE_INTERCEPT: f64 = 10.0;
pub const FIXTURE_SLICE_GAP: f64 = 2.5;
pub const FIXTURE_PIXEL_SPACING: [f64; 2] = [0.75, 0.5];
pub const FIXTURE_SCAN_TYPE: &str = "mri";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Dicom(#[from] DicomError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Paths written by [`gen_fixture`].
#[derive(Debug, Clone)]
pub struct FixtureLayout {
    pub root: PathBuf,
    pub models_dir: PathBuf,
    pub weights: PathBuf,
    pub labels: PathBuf,
    pub series_dir: PathBuf,
    pub slices: Vec<PathBuf>,
    /// Rescaled pixels of the first slice, 16-bit.
    pub pgm: PathBuf,
    pub dataset_dir: PathBuf,
}

/// Synthetic head phantom: an elliptical brain with a bright lesion whose
/// position depends on `variant`, plus seeded noise. Stored values stay below
/// 2048 so rescaled values fit in 16 bits.
pub fn phantom(rows: usize, cols: usize, slice: usize, variant: usize, seed: u64) -> Array2<u16> {
    let mut rng = SplitMix64::new(seed ^ ((slice as u64) << 32) ^ ((variant as u64) << 48));
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let (ry, rx) = (rows as f64 * 0.42, cols as f64 * 0.42);
    let angle = variant as f64 * std::f64::consts::FRAC_PI_2 + 0.4;
    let ly = cy + 0.45 * ry * angle.sin();
    let lx = cx + 0.45 * rx * angle.cos();
    let lesion_r = 3.0 + slice as f64;
    Array2::from_shape_fn((rows, cols), |(y, x)| {
        let (fy, fx) = (y as f64, x as f64);
        let e = ((fy - cy) / ry).powi(2) + ((fx - cx) / rx).powi(2);
        let mut v = if e <= 1.0 { 600.0 + 300.0 * (1.0 - e) } else { 20.0 };
        if (fy - ly).hypot(fx - lx) <= lesion_r {
            v += 700.0;
        }
        let noise = (rng.next_unit() * 40.0).floor();
        (v + noise) as u16
    })
}

fn slice_geometry(k: usize) -> SliceGeometry {
    SliceGeometry {
        position: [-12.0, -9.0, k as f64 * FIXTURE_SLICE_GAP],
        pixel_spacing: FIXTURE_PIXEL_SPACING,
        rescale_slope: FIXTURE_SLOPE,
        rescale_intercept: FIXTURE_INTERCEPT,
        ..SliceGeometry::axial(FIXTURE_ROWS, FIXTURE_COLS, 0.0)
    }
}

/// Stored pixels mapped through the fixture rescale, exact in u16.
pub fn rescaled(stored: &Array2<u16>) -> Array2<u16> {
    stored.mapv(|v| (FIXTURE_SLOPE * v as f64 + FIXTURE_INTERCEPT) as u16)
}

/// Write every fixture asset under `out`. Same seed, same bytes.
pub fn gen_fixture(out: &Path, seed: u64) -> Result<FixtureLayout, FixtureError> {
    fs::create_dir_all(out)?;
    let labels = LabelMap::brain_mri();
    let (weights, labels_path) = install_bundle(out, FIXTURE_SCAN_TYPE, &gen_fixture_weights(seed), &labels)?;

    let series_dir = out.join("series");
    fs::create_dir_all(&series_dir)?;
    let mut slices = Vec::new();
    let mut first = None;
    for k in 0..FIXTURE_SLICES {
        let stored = phantom(FIXTURE_ROWS, FIXTURE_COLS, k, 0, seed);
        let path = series_dir.join(format!("slice_{k:03}.dcm"));
        dicom::write_fixture_dicom(&slice_geometry(k), &stored, &path)?;
        first.get_or_insert(stored);
        slices.push(path);
    }

    let pgm_path = out.join("fixture.pgm");
    fs::write(&pgm_path, pgm::encode_pgm16(&rescaled(first.as_ref().expect("at least one slice"))))?;

    let dataset_dir = out.join("dataset");
    for (variant, class) in labels.classes().iter().enumerate() {
        let dir = dataset_dir.join(class);
        fs::create_dir_all(&dir)?;
        let img = phantom(FIXTURE_ROWS, FIXTURE_COLS, 1, variant + 1, seed);
        fs::write(dir.join("sample.pgm"), pgm::encode_pgm16(&img))?;
    }

    Ok(FixtureLayout {
        root: out.to_path_buf(),
        models_dir: out.to_path_buf(),
        weights,
        labels: labels_path,
        series_dir,
        slices,
        pgm: pgm_path,
        dataset_dir,
    })
}
