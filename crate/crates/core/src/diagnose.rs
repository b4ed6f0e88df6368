//! End-to-end prediction producing [`DiagnosticRecord`]s, plus the JSON
//! history file and CSV export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dicom::{self, tags, DicomError};
use crate::nnet::NnetError;
use crate::numfmt;
use crate::pgm::{self, PgmError};
use crate::preprocess::{self, ImageTensor, PreprocessConfig, PreprocessError};
use crate::registry::{LoadedModel, ModelRegistry, RegistryError};

/// Exact header of CSV exports.
pub const CSV_HEADER: &str =
    "timestamp,patient_id,patient_name,scan_type,predicted_class,confidence,p_glioma,p_meningioma,p_pituitary,p_notumor,source_path";
const CSV_CLASSES: [&str; 4] = ["glioma", "meningioma", "pituitary", "notumor"];

#[derive(Debug, Error)]
pub enum DiagnoseError {
    #[error("unknown image format: {0}")]
    UnknownFormat(PathBuf),
    #[error("no model for scan type {0:?}")]
    NoModelForScanType(String),
    #[error(transparent)]
    Dicom(#[from] DicomError),
    #[error("PGM: {0}")]
    Pgm(#[from] PgmError),
    #[error("preprocessing: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("inference: {0}")]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("corrupt history file {path}: {reason}")]
    CorruptHistory { path: PathBuf, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DiagnoseError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub mean_intensity: f64,
    pub std_intensity: f64,
    pub saturated_fraction: f64,
}

impl QualityMetrics {
    /// Mean, population standard deviation and fraction of samples at exactly
    /// 0 or 1, over a normalized tensor.
    pub fn of(tensor: &ImageTensor) -> Self {
        let n = tensor.data.len().max(1) as f64;
        let mean = tensor.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = tensor.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let saturated = tensor.data.iter().filter(|&&v| v == 0.0 || v == 1.0).count() as f64 / n;
        QualityMetrics {
            mean_intensity: mean,
            std_intensity: var.sqrt(),
            saturated_fraction: saturated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub record_id: String,
    pub timestamp: String,
    pub patient_id: Option<String>,
    pub patient_name: Option<String>,
    pub scan_type: String,
    pub source_path: String,
    pub predicted_class: String,
    pub confidence: f64,
    pub probabilities: IndexMap<String, f64>,
    pub quality: QualityMetrics,
    pub engine_version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientInfo {
    pub patient_id: Option<String>,
    pub patient_name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Dicom,
    Pgm,
}

/// DICOM by `DICM` magic or the headerless heuristic, else PGM by `P5`.
pub fn detect_format(bytes: &[u8]) -> Option<InputFormat> {
    if bytes.len() >= 132 && &bytes[128..132] == b"DICM" {
        return Some(InputFormat::Dicom);
    }
    if pgm::is_pgm(bytes) {
        return Some(InputFormat::Pgm);
    }
    if bytes.len() >= 8 {
        let group = u16::from_le_bytes([bytes[0], bytes[1]]);
        let length = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        if matches!(group, 0x0002 | 0x0008) && length <= bytes.len() - 8 {
            return Some(InputFormat::Dicom);
        }
    }
    None
}

/// Regular files in `dir` that look like DICOM, sorted by path. Only the
/// first 132 bytes of each file are read.
pub fn list_dicom_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    use std::io::Read;
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let mut head = Vec::with_capacity(132);
        fs::File::open(&path)?.take(132).read_to_end(&mut head)?;
        if detect_format(&head) == Some(InputFormat::Dicom) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// A decoded input image with whatever patient metadata it carried.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub format: InputFormat,
    pub pixels: Array2<f64>,
    pub patient: PatientInfo,
    /// DICOM Modality tag, surfaced as a scan-type hint.
    pub modality: Option<String>,
}

pub fn load_image(path: &Path) -> Result<LoadedImage> {
    let bytes = fs::read(path)?;
    match detect_format(&bytes) {
        Some(InputFormat::Dicom) => {
            let ds = dicom::parse_dicom(&bytes)?;
            let (pixels, _) = dicom::extract_pixels(&ds)?;
            let non_empty = |s: Option<String>| s.filter(|v| !v.is_empty());
            Ok(LoadedImage {
                format: InputFormat::Dicom,
                pixels,
                patient: PatientInfo {
                    patient_id: non_empty(ds.get_str(tags::PATIENT_ID)),
                    patient_name: non_empty(ds.get_str(tags::PATIENT_NAME)),
                },
                modality: non_empty(ds.get_str(tags::MODALITY)),
            })
        }
        Some(InputFormat::Pgm) => Ok(LoadedImage {
            format: InputFormat::Pgm,
            pixels: pgm::read_pgm(&bytes)?.to_f64(),
            patient: PatientInfo::default(),
            modality: None,
        }),
        None => Err(DiagnoseError::UnknownFormat(path.to_path_buf())),
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Preprocess and run the model, returning probabilities and input quality.
pub fn classify(model: &LoadedModel, pixels: &Array2<f64>) -> Result<(Vec<f32>, QualityMetrics)> {
    let tensor = preprocess::to_model_input(pixels, &PreprocessConfig::default())?;
    let quality = QualityMetrics::of(&tensor);
    let probs = model.model.forward(&tensor)?;
    Ok((probs, quality))
}

fn resolve_model(registry: &ModelRegistry, scan_type: &str) -> Result<std::sync::Arc<LoadedModel>> {
    let bundle = registry
        .get(scan_type)
        .ok_or_else(|| DiagnoseError::NoModelForScanType(scan_type.to_string()))?;
    Ok(bundle.load()?)
}

/// Classify an already-decoded image.
pub fn predict_pixels(
    pixels: &Array2<f64>,
    source_path: &str,
    scan_type: &str,
    registry: &ModelRegistry,
    patient: PatientInfo,
) -> Result<DiagnosticRecord> {
    let model = resolve_model(registry, scan_type)?;
    let (probs, quality) = classify(&model, pixels)?;
    let best = argmax(&probs);
    let probabilities: IndexMap<String, f64> = model
        .labels
        .classes()
        .iter()
        .cloned()
        .zip(probs.iter().map(|&p| p as f64))
        .collect();
    Ok(DiagnosticRecord {
        record_id: uuid::Uuid::new_v4().to_string(),
        timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        patient_id: patient.patient_id,
        patient_name: patient.patient_name,
        scan_type: scan_type.to_string(),
        source_path: source_path.to_string(),
        predicted_class: model.labels.classes()[best].clone(),
        confidence: probs[best] as f64,
        probabilities,
        quality,
        engine_version: crate::ENGINE_VERSION.to_string(),
    })
}

/// Detect the file format, preprocess, infer and build a record. Patient
/// fields given by the caller take precedence over those in the file.
pub fn predict(
    path: &Path,
    scan_type: &str,
    registry: &ModelRegistry,
    patient: PatientInfo,
) -> Result<DiagnosticRecord> {
    if registry.get(scan_type).is_none() {
        return Err(DiagnoseError::NoModelForScanType(scan_type.to_string()));
    }
    let image = load_image(path)?;
    let patient = PatientInfo {
        patient_id: patient.patient_id.or(image.patient.patient_id),
        patient_name: patient.patient_name.or(image.patient.patient_name),
    };
    predict_pixels(&image.pixels, &path.display().to_string(), scan_type, registry, patient)
}

/// Records stored in a history file; a missing file is an empty history.
pub fn read_history(path: &Path) -> Result<Vec<DiagnosticRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text).map_err(|e| DiagnoseError::CorruptHistory {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Replace the history file contents via write-to-temp and rename.
pub fn write_history(path: &Path, records: &[DiagnosticRecord]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, records).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Append one record. A corrupt existing file is left untouched.
pub fn append_history(record: &DiagnosticRecord, path: &Path) -> Result<()> {
    let mut records = read_history(path)?;
    records.push(record.clone());
    write_history(path, &records)
}

/// CSV text for `records`, header first, RFC 4180 quoting.
pub fn csv_string(records: &[DiagnosticRecord]) -> Result<String> {
    let mut out = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::CRLF)
            .from_writer(&mut out);
        w.write_record(CSV_HEADER.split(','))?;
        for r in records {
            let mut row = vec![
                r.timestamp.clone(),
                r.patient_id.clone().unwrap_or_default(),
                r.patient_name.clone().unwrap_or_default(),
                r.scan_type.clone(),
                r.predicted_class.clone(),
                numfmt::fixed(r.confidence, 6),
            ];
            row.extend(CSV_CLASSES.iter().map(|c| {
                r.probabilities
                    .get(*c)
                    .map(|&p| numfmt::fixed(p, 6))
                    .unwrap_or_default()
            }));
            row.push(r.source_path.clone());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn export_csv(records: &[DiagnosticRecord], path: &Path) -> Result<()> {
    fs::write(path, csv_string(records)?)?;
    Ok(())
}
