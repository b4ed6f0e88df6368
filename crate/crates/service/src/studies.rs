//! Study discovery and lazily assembled volumes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use phydcm_core::diagnose::{list_dicom_files, PatientInfo};
use phydcm_core::dicom::{self, tags};
use phydcm_core::volume::{assemble_volume, summarize_series, SeriesSummary, Volume};
use serde::Serialize;

/// One subdirectory of the data dir holding at least one DICOM file.
#[derive(Debug)]
pub struct Study {
    pub id: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Option<SeriesSummary>,
    /// Why the headers could not be summarized, if they could not.
    pub problem: Option<String>,
    pub modality: Option<String>,
    pub patient: PatientInfo,
    volume: OnceLock<Result<Arc<Volume>, String>>,
    assemblies: AtomicUsize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyEntry {
    pub study_id: String,
    pub source_dir: String,
    pub slice_count: usize,
    /// [nx, ny, nz]
    pub dims: Option<[usize; 3]>,
    /// [sx, sy, sz], mm
    pub spacing: Option<[f64; 3]>,
    pub scan_type_hint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Modality code to registry scan type.
fn scan_type_hint(modality: &str) -> String {
    match modality {
        "MR" => "mri".to_string(),
        other => other.to_ascii_lowercase(),
    }
}

impl Study {
    fn load(id: String, dir: PathBuf, files: Vec<PathBuf>) -> Study {
        let mut geometries = Vec::new();
        let mut problem = None;
        let mut modality = None;
        let mut patient = PatientInfo::default();
        for (i, f) in files.iter().enumerate() {
            let parsed = fs::read(f)
                .map_err(|e| e.to_string())
                .and_then(|b| dicom::parse_dicom(&b).map_err(|e| e.to_string()))
                .and_then(|ds| {
                    if i == 0 {
                        let text = |t| ds.get_str(t).filter(|s: &String| !s.is_empty());
                        modality = text(tags::MODALITY);
                        patient.patient_id = text(tags::PATIENT_ID);
                        patient.patient_name = text(tags::PATIENT_NAME);
                    }
                    dicom::SliceGeometry::from_dataset(&ds).map_err(|e| e.to_string())
                });
            match parsed {
                Ok(g) => geometries.push(g),
                Err(e) => {
                    problem = Some(format!("{}: {e}", f.display()));
                    break;
                }
            }
        }
        let summary = if problem.is_none() {
            summarize_series(&geometries).map_err(|e| problem = Some(e.to_string())).ok()
        } else {
            None
        };
        Study {
            id,
            dir,
            files,
            summary,
            problem,
            modality,
            patient,
            volume: OnceLock::new(),
            assemblies: AtomicUsize::new(0),
        }
    }

    pub fn entry(&self) -> StudyEntry {
        StudyEntry {
            study_id: self.id.clone(),
            source_dir: self.dir.display().to_string(),
            slice_count: self.files.len(),
            dims: self.summary.map(|s| [s.dims.0, s.dims.1, s.dims.2]),
            spacing: self.summary.map(|s| s.spacing),
            scan_type_hint: self.modality.as_deref().map(scan_type_hint),
            error: self.problem.clone(),
        }
    }

    /// The assembled volume. Built once, on first use, even under concurrent
    /// first requests.
    pub fn volume(&self) -> Result<Arc<Volume>, String> {
        self.volume
            .get_or_init(|| {
                self.assemblies.fetch_add(1, Ordering::SeqCst);
                log::info!("assembling study {} from {} files", self.id, self.files.len());
                let slices = self
                    .files
                    .iter()
                    .map(|f| {
                        let bytes = fs::read(f).map_err(|e| format!("{}: {e}", f.display()))?;
                        let ds = dicom::parse_dicom(&bytes).map_err(|e| format!("{}: {e}", f.display()))?;
                        dicom::extract_pixels(&ds).map_err(|e| format!("{}: {e}", f.display()))
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                assemble_volume(&slices).map(Arc::new).map_err(|e| e.to_string())
            })
            .clone()
    }

    /// How many times assembly has run; at most 1.
    pub fn assembly_count(&self) -> usize {
        self.assemblies.load(Ordering::SeqCst)
    }

    pub fn is_assembled(&self) -> bool {
        self.volume.get().is_some()
    }
}

/// Scan immediate subdirectories of `data_dir`, sorted by name.
pub fn discover(data_dir: &Path) -> std::io::Result<Vec<Arc<Study>>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut studies = Vec::new();
    for dir in dirs {
        let files = list_dicom_files(&dir)?;
        if files.is_empty() {
            continue;
        }
        let id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        studies.push(Arc::new(Study::load(id, dir, files)));
    }
    Ok(studies)
}
