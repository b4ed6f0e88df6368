//! Core library for the PhyDCM brain-MRI diagnostic pipeline.
//!
//! The crate is organised bottom-up:
//!
//! * [`dicom`] parses uncompressed little-endian DICOM and writes fixtures.
//! * [`volume`] stacks slices into a volume and serves axial, coronal and
//!   sagittal views with window/level rendering.
//! * [`preprocess`] turns any slice into the 1x224x224 model input.
//! * [`nnet`] is a small deterministic inference engine for the
//!   MedViT-lite v1 classifier, plus its weight codec.
//! * [`registry`] discovers `<scan_type>_model.pdcm` / `<scan_type>_labels.json`
//!   pairs in a models directory.
//! * [`diagnose`] runs prediction end to end and manages history and CSV export.
//! * [`eval`] holds the confusion matrix, metrics and table reports.

pub mod diagnose;
pub mod dicom;
pub mod eval;
pub mod fixture;
pub mod nnet;
pub mod numfmt;
pub mod pgm;
pub mod preprocess;
pub mod registry;
pub mod vec3;
pub mod volume;

pub use diagnose::{DiagnosticRecord, QualityMetrics};
pub use dicom::{DataSet, Element, SliceGeometry, Tag, TransferSyntax, Vr};
pub use eval::{ConfusionMatrix, EvalReport};
pub use nnet::{Model, Tensor, WeightTable};
pub use preprocess::{ImageTensor, PreprocessConfig};
pub use registry::{LabelMap, ModelBundle, ModelRegistry};
pub use volume::{CrosshairPoint, Plane, Volume};

/// Version string recorded in every diagnostic record.
pub const ENGINE_VERSION: &str = concat!("phydcm-core/", env!("CARGO_PKG_VERSION"), " medvit-lite-v1");
