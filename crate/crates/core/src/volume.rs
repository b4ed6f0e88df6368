//! Volume assembly and multi-planar reconstruction.
//!
//! Voxels are stored `[z][y][x]`: x follows the row direction (columns),
//! y the column direction (rows), z the slice normal.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dicom::SliceGeometry;
use crate::vec3::{self, Vec3};

const DIRECTION_TOLERANCE: f64 = 1e-3;
const SPACING_TOLERANCE: f64 = 1e-6;
const POSITION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("empty series")]
    EmptySeries,
    #[error("inconsistent series: {0}")]
    InconsistentSeries(String),
    #[error("duplicate slice position at projection {0}")]
    DuplicatePosition(f64),
    #[error("{plane} index {index} out of range (extent {extent})")]
    IndexOutOfRange {
        plane: Plane,
        index: usize,
        extent: usize,
    },
    #[error("crosshair ({x}, {y}, {z}) outside volume {dims:?}")]
    PointOutOfRange {
        x: usize,
        y: usize,
        z: usize,
        dims: (usize, usize, usize),
    },
    #[error("window must be positive, got {0}")]
    BadWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Axial,
    Coronal,
    Sagittal,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Axial, Plane::Coronal, Plane::Sagittal];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Axial => "axial",
            Plane::Coronal => "coronal",
            Plane::Sagittal => "sagittal",
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown plane {0:?}; expected axial, coronal or sagittal")]
pub struct ParsePlaneError(String);

impl FromStr for Plane {
    type Err = ParsePlaneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "axial" => Ok(Plane::Axial),
            "coronal" => Ok(Plane::Coronal),
            "sagittal" => Ok(Plane::Sagittal),
            _ => Err(ParsePlaneError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    voxels: Array3<f64>,
    spacing: Vec3,
    origin: Vec3,
    row_dir: Vec3,
    col_dir: Vec3,
    normal: Vec3,
}

impl Volume {
    /// `[z][y][x]` voxel grid.
    pub fn voxels(&self) -> &Array3<f64> {
        &self.voxels
    }

    /// (nx, ny, nz)
    pub fn dims(&self) -> (usize, usize, usize) {
        let (nz, ny, nx) = self.voxels.dim();
        (nx, ny, nz)
    }

    /// (sx, sy, sz) in mm.
    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn row_dir(&self) -> Vec3 {
        self.row_dir
    }

    pub fn col_dir(&self) -> Vec3 {
        self.col_dir
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn extent(&self, plane: Plane) -> usize {
        let (nx, ny, nz) = self.dims();
        match plane {
            Plane::Axial => nz,
            Plane::Coronal => ny,
            Plane::Sagittal => nx,
        }
    }

    /// (min, max) over all voxels.
    pub fn value_range(&self) -> (f64, f64) {
        self.voxels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Window/level spanning the full data range. A constant volume gets window 1.
    pub fn full_range_window(&self) -> (f64, f64) {
        let (lo, hi) = self.value_range();
        let window = if hi > lo { hi - lo } else { 1.0 };
        (window, (lo + hi) / 2.0)
    }

    /// Orthogonal slice without resampling.
    ///
    /// axial(k) is rows=y, cols=x; coronal(j) is rows=z, cols=x;
    /// sagittal(i) is rows=z, cols=y.
    pub fn extract_slice(&self, plane: Plane, index: usize) -> Result<Array2<f64>, VolumeError> {
        let extent = self.extent(plane);
        if index >= extent {
            return Err(VolumeError::IndexOutOfRange {
                plane,
                index,
                extent,
            });
        }
        let axis = match plane {
            Plane::Axial => Axis(0),
            Plane::Coronal => Axis(1),
            Plane::Sagittal => Axis(2),
        };
        Ok(self.voxels.index_axis(axis, index).to_owned())
    }
}

fn check_consistent(reference: &SliceGeometry, other: &SliceGeometry, i: usize) -> Result<(), VolumeError> {
    let mismatch = |what: &str| {
        Err(VolumeError::InconsistentSeries(format!(
            "slice {i} {what} differs from slice 0"
        )))
    };
    if (other.rows, other.cols) != (reference.rows, reference.cols) {
        return mismatch("shape");
    }
    if vec3::max_abs_diff(other.row_dir, reference.row_dir) > DIRECTION_TOLERANCE
        || vec3::max_abs_diff(other.col_dir, reference.col_dir) > DIRECTION_TOLERANCE
    {
        return mismatch("orientation");
    }
    if (0..2).any(|k| (other.pixel_spacing[k] - reference.pixel_spacing[k]).abs() > SPACING_TOLERANCE) {
        return mismatch("pixel spacing");
    }
    Ok(())
}

fn sort_by_projection<'a>(geometries: impl Iterator<Item = &'a SliceGeometry>, normal: Vec3) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = geometries
        .enumerate()
        .map(|(i, g)| (i, vec3::dot(g.position, normal)))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    order
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Sorted (input index, projection) pairs and the slice gap.
///
/// Orders with a provisional normal, then re-derives the normal from the
/// first sorted slice so the result does not depend on input order.
fn stacking_order(geometries: &[&SliceGeometry]) -> Result<(Vec<(usize, f64)>, f64), VolumeError> {
    let reference = geometries.first().ok_or(VolumeError::EmptySeries)?;
    let provisional = sort_by_projection(geometries.iter().copied(), reference.normal());
    let normal = geometries[provisional[0].0].normal();
    let order = sort_by_projection(geometries.iter().copied(), normal);

    if let Some(&(_, p)) = order
        .windows(2)
        .find(|w| w[1].1 - w[0].1 <= POSITION_TOLERANCE)
        .map(|w| &w[1])
    {
        return Err(VolumeError::DuplicatePosition(p));
    }
    let mut gaps: Vec<f64> = order.windows(2).map(|w| w[1].1 - w[0].1).collect();
    gaps.sort_by(f64::total_cmp);
    let sz = if gaps.is_empty() { 1.0 } else { median(&gaps) };
    Ok((order, sz))
}

/// Dimensions and spacing a series would assemble to, from headers alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    /// (nx, ny, nz)
    pub dims: (usize, usize, usize),
    /// (sx, sy, sz), mm
    pub spacing: Vec3,
}

pub fn summarize_series(geometries: &[SliceGeometry]) -> Result<SeriesSummary, VolumeError> {
    let reference = geometries.first().ok_or(VolumeError::EmptySeries)?;
    for (i, g) in geometries.iter().enumerate() {
        check_consistent(reference, g, i)?;
    }
    let refs: Vec<&SliceGeometry> = geometries.iter().collect();
    let (order, sz) = stacking_order(&refs)?;
    let first = refs[order[0].0];
    Ok(SeriesSummary {
        dims: (first.cols, first.rows, geometries.len()),
        spacing: [first.pixel_spacing[1], first.pixel_spacing[0], sz],
    })
}

/// Stack slices into a volume ordered by position along the slice normal.
///
/// The slice gap is the median of adjacent projection differences (1.0 for a
/// single slice); the origin is the position of the first sorted slice.
pub fn assemble_volume(slices: &[(Array2<f64>, SliceGeometry)]) -> Result<Volume, VolumeError> {
    let (_, reference) = slices.first().ok_or(VolumeError::EmptySeries)?;
    for (i, (pixels, geometry)) in slices.iter().enumerate() {
        if pixels.dim() != (geometry.rows, geometry.cols) {
            return Err(VolumeError::InconsistentSeries(format!(
                "slice {i} pixel array {:?} disagrees with its geometry {}x{}",
                pixels.dim(),
                geometry.rows,
                geometry.cols
            )));
        }
        check_consistent(reference, geometry, i)?;
    }

    let geometries: Vec<&SliceGeometry> = slices.iter().map(|(_, g)| g).collect();
    let (order, sz) = stacking_order(&geometries)?;
    let first = &slices[order[0].0].1;

    let (rows, cols) = (first.rows, first.cols);
    let mut voxels = Array3::<f64>::zeros((order.len(), rows, cols));
    for (k, &(i, _)) in order.iter().enumerate() {
        voxels.index_axis_mut(Axis(0), k).assign(&slices[i].0);
    }

    Ok(Volume {
        voxels,
        spacing: [first.pixel_spacing[1], first.pixel_spacing[0], sz],
        origin: first.position,
        row_dir: first.row_dir,
        col_dir: first.col_dir,
        normal: first.normal(),
    })
}

/// Voxel-index location shared by the three views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrosshairPoint {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// Where a crosshair lands in one plane: which slice, and the pixel within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanePosition {
    pub index: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosshairMap {
    pub axial: PlanePosition,
    pub coronal: PlanePosition,
    pub sagittal: PlanePosition,
}

impl CrosshairMap {
    pub fn get(&self, plane: Plane) -> PlanePosition {
        match plane {
            Plane::Axial => self.axial,
            Plane::Coronal => self.coronal,
            Plane::Sagittal => self.sagittal,
        }
    }
}

impl CrosshairPoint {
    /// Inverse of the per-plane mapping.
    pub fn from_plane(plane: Plane, pos: PlanePosition) -> Self {
        match plane {
            Plane::Axial => CrosshairPoint {
                x: pos.col,
                y: pos.row,
                z: pos.index,
            },
            Plane::Coronal => CrosshairPoint {
                x: pos.col,
                y: pos.index,
                z: pos.row,
            },
            Plane::Sagittal => CrosshairPoint {
                x: pos.index,
                y: pos.col,
                z: pos.row,
            },
        }
    }
}

pub fn map_crosshair(p: CrosshairPoint, volume: &Volume) -> Result<CrosshairMap, VolumeError> {
    let dims = volume.dims();
    if p.x >= dims.0 || p.y >= dims.1 || p.z >= dims.2 {
        return Err(VolumeError::PointOutOfRange {
            x: p.x,
            y: p.y,
            z: p.z,
            dims,
        });
    }
    Ok(CrosshairMap {
        axial: PlanePosition {
            index: p.z,
            row: p.y,
            col: p.x,
        },
        coronal: PlanePosition {
            index: p.y,
            row: p.z,
            col: p.x,
        },
        sagittal: PlanePosition {
            index: p.x,
            row: p.z,
            col: p.y,
        },
    })
}

/// Linear window/level mapping to 8-bit display values.
pub fn render_window(slice: &Array2<f64>, window: f64, level: f64) -> Result<Array2<u8>, VolumeError> {
    if !(window > 0.0) || !window.is_finite() {
        return Err(VolumeError::BadWindow(window));
    }
    let low = level - window / 2.0;
    Ok(slice.mapv(|v| {
        let scaled = (255.0 * (v - low) / window).round();
        scaled.clamp(0.0, 255.0) as u8
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn axial_slice(z: f64, value: f64) -> (Array2<f64>, SliceGeometry) {
        (Array2::from_elem((2, 3), value), SliceGeometry::axial(2, 3, z))
    }

    #[test]
    fn summary_matches_assembly() {
        let slices = [axial_slice(5.0, 5.0), axial_slice(1.0, 1.0), axial_slice(3.0, 3.0)];
        let geoms: Vec<_> = slices.iter().map(|(_, g)| g.clone()).collect();
        let summary = summarize_series(&geoms).unwrap();
        let v = assemble_volume(&slices).unwrap();
        assert_eq!(summary.dims, v.dims());
        assert_eq!(summary.spacing, v.spacing());
        assert_eq!(summarize_series(&[]), Err(VolumeError::EmptySeries));
    }

    #[test]
    fn sorts_by_projection_and_takes_gap() {
        let v = assemble_volume(&[axial_slice(5.0, 5.0), axial_slice(1.0, 1.0), axial_slice(3.0, 3.0)])
            .unwrap();
        assert_eq!(v.dims(), (3, 2, 3));
        assert_eq!(v.spacing(), [1.0, 1.0, 2.0]);
        assert_eq!(v.origin(), [0.0, 0.0, 1.0]);
        for (k, expected) in [1.0, 3.0, 5.0].into_iter().enumerate() {
            assert!(v.extract_slice(Plane::Axial, k).unwrap().iter().all(|&x| x == expected));
        }
    }

    #[test]
    fn single_slice_defaults_gap() {
        let (px, g) = axial_slice(7.0, 2.0);
        let v = assemble_volume(&[(px.clone(), g)]).unwrap();
        assert_eq!(v.dims(), (3, 2, 1));
        assert_eq!(v.spacing()[2], 1.0);
        assert_eq!(v.extract_slice(Plane::Axial, 0).unwrap(), px);
    }

    #[test]
    fn median_gap_tolerates_missing_slice() {
        let slices: Vec<_> = [0.0, 2.0, 4.0, 8.0, 10.0]
            .iter()
            .map(|&z| axial_slice(z, z))
            .collect();
        let v = assemble_volume(&slices).unwrap();
        assert_eq!(v.spacing()[2], 2.0);
    }

    #[test]
    fn inconsistent_and_duplicate_series() {
        let (px, mut g) = axial_slice(1.0, 0.0);
        g.row_dir = [0.0, 1.0, 0.0];
        g.col_dir = [0.0, 0.0, -1.0];
        assert!(matches!(
            assemble_volume(&[axial_slice(0.0, 0.0), (px, g)]),
            Err(VolumeError::InconsistentSeries(_))
        ));
        let other_shape = (Array2::zeros((3, 3)), SliceGeometry::axial(3, 3, 2.0));
        assert!(matches!(
            assemble_volume(&[axial_slice(0.0, 0.0), other_shape]),
            Err(VolumeError::InconsistentSeries(_))
        ));
        assert!(matches!(
            assemble_volume(&[axial_slice(1.0, 0.0), axial_slice(1.0 + 1e-7, 0.0)]),
            Err(VolumeError::DuplicatePosition(_))
        ));
        assert_eq!(assemble_volume(&[]), Err(VolumeError::EmptySeries));
    }

    #[test]
    fn sagittal_index_bookkeeping() {
        let slices: Vec<_> = (0..3)
            .map(|z| {
                let px = Array2::from_shape_fn((3, 3), |(y, x)| (100 * z + 10 * y + x) as f64);
                (px, SliceGeometry::axial(3, 3, z as f64))
            })
            .collect();
        let v = assemble_volume(&slices).unwrap();
        let sag = v.extract_slice(Plane::Sagittal, 1).unwrap();
        assert_eq!(sag[[2, 0]], 201.0);
        let cor = v.extract_slice(Plane::Coronal, 2).unwrap();
        assert_eq!(cor[[1, 0]], 120.0);
        assert!(matches!(
            v.extract_slice(Plane::Coronal, 3),
            Err(VolumeError::IndexOutOfRange { extent: 3, .. })
        ));
    }

    #[test]
    fn crosshair_triples() {
        let slices: Vec<_> = (0..8)
            .map(|z| (Array2::zeros((6, 4)), SliceGeometry::axial(6, 4, z as f64)))
            .collect();
        let v = assemble_volume(&slices).unwrap();
        let m = map_crosshair(CrosshairPoint { x: 3, y: 5, z: 7 }, &v).unwrap();
        assert_eq!((m.axial.index, m.axial.row, m.axial.col), (7, 5, 3));
        assert_eq!((m.coronal.index, m.coronal.row, m.coronal.col), (5, 7, 3));
        assert_eq!((m.sagittal.index, m.sagittal.row, m.sagittal.col), (3, 7, 5));
        let o = map_crosshair(CrosshairPoint { x: 0, y: 0, z: 0 }, &v).unwrap();
        for plane in Plane::ALL {
            assert_eq!(o.get(plane), PlanePosition { index: 0, row: 0, col: 0 });
        }
        assert!(map_crosshair(CrosshairPoint { x: 4, y: 0, z: 0 }, &v).is_err());
    }

    #[test]
    fn window_level_rendering() {
        let s = array![[40.0, -160.0, 240.0, -1000.0, 1000.0]];
        let out = render_window(&s, 400.0, 40.0).unwrap();
        assert_eq!(out, array![[128u8, 0, 255, 0, 255]]);
        assert_eq!(
            render_window(&s, 0.0, 40.0),
            Err(VolumeError::BadWindow(0.0))
        );
        assert!(render_window(&s, -5.0, 40.0).is_err());
    }

    #[test]
    fn plane_parsing() {
        assert_eq!("Axial".parse::<Plane>().unwrap(), Plane::Axial);
        assert!("oblique".parse::<Plane>().is_err());
    }
}
