use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{tags, DataSet, DicomError, Result};
use crate::vec3::{self, Vec3};

const UNIT_TOLERANCE: f64 = 1e-3;

/// Spatial placement and intensity rescale of one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGeometry {
    /// ImagePositionPatient, mm.
    pub position: Vec3,
    /// Direction of increasing column index (first triplet of ImageOrientationPatient).
    pub row_dir: Vec3,
    /// Direction of increasing row index (second triplet).
    pub col_dir: Vec3,
    /// (spacing between rows, spacing between columns), mm.
    pub pixel_spacing: [f64; 2],
    pub rows: usize,
    pub cols: usize,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
}

impl SliceGeometry {
    /// Axial slice at height `z` with unit spacing and identity rescale.
    pub fn axial(rows: usize, cols: usize, z: f64) -> Self {
        SliceGeometry {
            position: [0.0, 0.0, z],
            row_dir: [1.0, 0.0, 0.0],
            col_dir: [0.0, 1.0, 0.0],
            pixel_spacing: [1.0, 1.0],
            rows,
            cols,
            rescale_slope: 1.0,
            rescale_intercept: 0.0,
        }
    }

    pub fn normal(&self) -> Vec3 {
        vec3::cross(self.row_dir, self.col_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(DicomError::InvalidGeometry(format!(
                "degenerate size {}x{}",
                self.rows, self.cols
            )));
        }
        if self.rows > u16::MAX as usize || self.cols > u16::MAX as usize {
            return Err(DicomError::InvalidGeometry(format!(
                "size {}x{} exceeds 16-bit dimensions",
                self.rows, self.cols
            )));
        }
        for (name, dir) in [("row", self.row_dir), ("column", self.col_dir)] {
            if (vec3::norm(dir) - 1.0).abs() > UNIT_TOLERANCE {
                return Err(DicomError::InvalidGeometry(format!(
                    "{name} direction {dir:?} is not unit length"
                )));
            }
        }
        if vec3::dot(self.row_dir, self.col_dir).abs() >= UNIT_TOLERANCE {
            return Err(DicomError::InvalidGeometry(
                "row and column directions are not orthogonal".into(),
            ));
        }
        if !(self.pixel_spacing[0] > 0.0 && self.pixel_spacing[1] > 0.0) {
            return Err(DicomError::InvalidGeometry(format!(
                "pixel spacing {:?} must be positive",
                self.pixel_spacing
            )));
        }
        if !self.rescale_slope.is_finite() || !self.rescale_intercept.is_finite() {
            return Err(DicomError::InvalidGeometry("non-finite rescale".into()));
        }
        Ok(())
    }

    /// Reads geometry from a dataset. Absent spatial tags default to an axial
    /// slice at the origin with 1 mm spacing; absent rescale tags to identity.
    pub fn from_dataset(ds: &DataSet) -> Result<Self> {
        let rows = ds.get_u16(tags::ROWS)? as usize;
        let cols = ds.get_u16(tags::COLUMNS)? as usize;
        let mut geometry = SliceGeometry::axial(rows, cols, 0.0);

        if ds.contains(tags::IMAGE_POSITION_PATIENT) {
            geometry.position = fixed::<3>(ds, tags::IMAGE_POSITION_PATIENT)?;
        }
        if ds.contains(tags::IMAGE_ORIENTATION_PATIENT) {
            let o = fixed::<6>(ds, tags::IMAGE_ORIENTATION_PATIENT)?;
            geometry.row_dir = [o[0], o[1], o[2]];
            geometry.col_dir = [o[3], o[4], o[5]];
        }
        if ds.contains(tags::PIXEL_SPACING) {
            geometry.pixel_spacing = fixed::<2>(ds, tags::PIXEL_SPACING)?;
        }
        geometry.rescale_slope = ds.get_decimal_or(tags::RESCALE_SLOPE, 1.0)?;
        geometry.rescale_intercept = ds.get_decimal_or(tags::RESCALE_INTERCEPT, 0.0)?;
        geometry.validate()?;
        Ok(geometry)
    }
}

fn fixed<const N: usize>(ds: &DataSet, tag: super::Tag) -> Result<[f64; N]> {
    let values = ds.get_decimals(tag)?;
    values.as_slice().try_into().map_err(|_| DicomError::InvalidValue {
        tag,
        reason: format!("expected {N} values, found {}", values.len()),
    })
}

/// Decode the pixel payload and apply the rescale affine map.
///
/// Output values are `slope * stored + intercept`, shape rows x cols.
pub fn extract_pixels(ds: &DataSet) -> Result<(Array2<f64>, SliceGeometry)> {
    let rows = ds.get_u16(tags::ROWS)? as usize;
    let cols = ds.get_u16(tags::COLUMNS)? as usize;
    let bits = ds.get_u16(tags::BITS_ALLOCATED)?;
    let signed = match ds.get_u16(tags::PIXEL_REPRESENTATION)? {
        0 => false,
        1 => true,
        other => {
            return Err(DicomError::InvalidValue {
                tag: tags::PIXEL_REPRESENTATION,
                reason: format!("expected 0 or 1, found {other}"),
            })
        }
    };
    if ds.contains(tags::SAMPLES_PER_PIXEL) && ds.get_u16(tags::SAMPLES_PER_PIXEL)? != 1 {
        return Err(DicomError::UnsupportedFeature(
            "only single-sample (grayscale) images".into(),
        ));
    }
    let pixel_data = ds
        .get(tags::PIXEL_DATA)
        .ok_or(DicomError::MissingTag(tags::PIXEL_DATA))?;
    let bytes_per_sample = match bits {
        8 => 1,
        16 => 2,
        other => {
            return Err(DicomError::UnsupportedFeature(format!(
                "BitsAllocated {other}"
            )))
        }
    };
    let geometry = SliceGeometry::from_dataset(ds)?;

    let expected = rows * cols * bytes_per_sample;
    let actual = pixel_data.raw.len();
    let padded = expected % 2 == 1 && actual == expected + 1;
    if actual != expected && !padded {
        return Err(DicomError::LengthMismatch { expected, actual });
    }

    let raw = &pixel_data.raw[..expected];
    let stored: Vec<f64> = match (bytes_per_sample, signed) {
        (1, false) => raw.iter().map(|&b| b as f64).collect(),
        (1, true) => raw.iter().map(|&b| b as i8 as f64).collect(),
        (_, false) => raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        (_, true) => raw
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
    };

    let slope = geometry.rescale_slope;
    let intercept = geometry.rescale_intercept;
    let values = stored.into_iter().map(|v| slope * v + intercept).collect();
    let pixels = Array2::from_shape_vec((rows, cols), values)
        .expect("pixel count checked against rows x cols");
    Ok((pixels, geometry))
}
