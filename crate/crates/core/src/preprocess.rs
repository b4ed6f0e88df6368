//! Image normalization, resizing and seeded augmentation producing the
//! model input tensor.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnet::rng::SplitMix64;

pub const MODEL_INPUT_SIZE: (usize, usize) = (224, 224);

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("bad size {0}x{1}: dimensions must be at least 1")]
    BadSize(usize, usize),
    #[error("invalid augmentation: {0}")]
    BadAugment(String),
}

/// Channel-major `[c][h][w]` float image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Vec<f32>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageTensor {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn from_gray(img: &Array2<f64>) -> Self {
        let (height, width) = img.dim();
        ImageTensor {
            data: img.iter().map(|&v| v as f32).collect(),
            channels: 1,
            height,
            width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub max_rotation_deg: f64,
    /// Whether a drawn flip may be applied at all.
    pub h_flip: bool,
    pub max_zoom_delta: f64,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn with_seed(seed: u64) -> Self {
        AugmentSpec {
            max_rotation_deg: 10.0,
            h_flip: true,
            max_zoom_delta: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.max_rotation_deg >= 0.0) {
            return Err(PreprocessError::BadAugment(format!(
                "max_rotation_deg {} must be >= 0",
                self.max_rotation_deg
            )));
        }
        if !(0.0..1.0).contains(&self.max_zoom_delta) {
            return Err(PreprocessError::BadAugment(format!(
                "max_zoom_delta {} must be in [0, 1)",
                self.max_zoom_delta
            )));
        }
        Ok(())
    }

    /// Draws rotation, flip and zoom, in that order, from the seeded stream.
    pub fn draw(&self) -> AugmentParams {
        let mut rng = SplitMix64::new(self.seed);
        let rotation_deg = (2.0 * rng.next_unit() - 1.0) * self.max_rotation_deg;
        let flip = rng.next_unit() >= 0.5 && self.h_flip;
        let zoom = 1.0 + (2.0 * rng.next_unit() - 1.0) * self.max_zoom_delta;
        AugmentParams {
            rotation_deg,
            flip,
            zoom,
        }
    }
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec::with_seed(0)
    }
}

/// Concrete transform drawn from an [`AugmentSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub flip: bool,
    pub zoom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_size: (usize, usize),
    pub normalize: bool,
    pub augment: Option<AugmentSpec>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: MODEL_INPUT_SIZE,
            normalize: true,
            augment: None,
        }
    }
}

/// Min-max rescale to [0, 1]; a constant image maps to all zeros.
pub fn normalize_intensity(img: &Array2<f64>) -> Array2<f64> {
    let (min, max) = img
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(max > min) {
        return Array2::zeros(img.dim());
    }
    let range = max - min;
    img.mapv(|v| (v - min) / range)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Source coordinate and neighbour indices under the half-pixel-centre rule.
fn source_axis(d: usize, input: usize, output: usize) -> (usize, usize, f64) {
    let scale = input as f64 / output as f64;
    let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(input - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize with pixel-centre alignment and clamped edges.
pub fn resize_bilinear(
    img: &Array2<f64>,
    out_h: usize,
    out_w: usize,
) -> Result<Array2<f64>, PreprocessError> {
    let (in_h, in_w) = img.dim();
    if out_h == 0 || out_w == 0 {
        return Err(PreprocessError::BadSize(out_h, out_w));
    }
    if in_h == 0 || in_w == 0 {
        return Err(PreprocessError::BadSize(in_h, in_w));
    }
    let cols: Vec<_> = (0..out_w).map(|x| source_axis(x, in_w, out_w)).collect();
    Ok(Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let (y0, y1, fy) = source_axis(y, in_h, out_h);
        let (x0, x1, fx) = cols[x];
        let top = lerp(img[[y0, x0]], img[[y0, x1]], fx);
        let bottom = lerp(img[[y1, x0]], img[[y1, x1]], fx);
        lerp(top, bottom, fy)
    }))
}

/// Bilinear sample where neighbours outside the image read as zero.
fn sample_or_zero(img: &Array2<f64>, sy: f64, sx: f64) -> f64 {
    let (h, w) = img.dim();
    let y0 = sy.floor();
    let x0 = sx.floor();
    let fy = sy - y0;
    let fx = sx - x0;
    let at = |y: f64, x: f64| -> f64 {
        if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
            0.0
        } else {
            img[[y as usize, x as usize]]
        }
    };
    let top = lerp(at(y0, x0), at(y0, x0 + 1.0), fx);
    let bottom = lerp(at(y0 + 1.0, x0), at(y0 + 1.0, x0 + 1.0), fx);
    lerp(top, bottom, fy)
}

/// Zoom, then rotation about the image centre, then optional horizontal flip.
pub fn apply_augment(img: &Array2<f64>, params: AugmentParams) -> Array2<f64> {
    let (h, w) = img.dim();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = params.rotation_deg.to_radians().sin_cos();
    let warped = if params.rotation_deg == 0.0 && params.zoom == 1.0 {
        img.clone()
    } else {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = (cos * dx + sin * dy) / params.zoom + cx;
            let sy = (-sin * dx + cos * dy) / params.zoom + cy;
            sample_or_zero(img, sy, sx)
        })
    };
    if params.flip {
        Array2::from_shape_fn((h, w), |(y, x)| warped[[y, w - 1 - x]])
    } else {
        warped
    }
}

pub fn augment(img: &Array2<f64>, spec: &AugmentSpec) -> Result<Array2<f64>, PreprocessError> {
    spec.validate()?;
    Ok(apply_augment(img, spec.draw()))
}

/// normalize -> resize -> optional augment, packed as a `[1][h][w]` tensor
/// with values clamped to [0, 1].
pub fn to_model_input(img: &Array2<f64>, cfg: &PreprocessConfig) -> Result<ImageTensor, PreprocessError> {
    let (th, tw) = cfg.target_size;
    let normalized = if cfg.normalize {
        normalize_intensity(img)
    } else {
        img.clone()
    };
    let mut resized = resize_bilinear(&normalized, th, tw)?;
    if let Some(spec) = &cfg.augment {
        resized = augment(&resized, spec)?;
    }
    resized.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(ImageTensor::from_gray(&resized))
}
