//! Model discovery by naming convention and lazy loading.
//!
//! A models directory holds pairs `<scan_type>_model.pdcm` and
//! `<scan_type>_labels.json`. Unpaired halves are reported as warnings.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnet::{load_weights, Model, NnetError};

pub const MODELS_DIR_ENV: &str = "PHYDCM_MODELS_DIR";
const MODEL_SUFFIX: &str = "_model.pdcm";
const LABELS_SUFFIX: &str = "_labels.json";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("models directory not found: {0}")]
    DirNotFound(PathBuf),
    #[error("label map {path}: {reason}")]
    InvalidLabels { path: PathBuf, reason: String },
    #[error("label map has {labels} classes but the model outputs {outputs}")]
    LabelCountMismatch { labels: usize, outputs: usize },
    #[error("weights {path}: {source}")]
    Weights {
        path: PathBuf,
        #[source]
        source: NnetError,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered class names; index i names model output i.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    classes: Vec<String>,
}

impl LabelMap {
    pub fn new(classes: Vec<String>) -> Result<Self, String> {
        let mut seen = HashSet::new();
        for name in &classes {
            if name.is_empty() {
                return Err("empty class name".into());
            }
            if !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
                return Err(format!("class name {name:?} is not lowercase ASCII"));
            }
            if !seen.insert(name.as_str()) {
                return Err(format!("duplicate class name {name:?}"));
            }
        }
        if classes.is_empty() {
            return Err("no classes".into());
        }
        Ok(LabelMap { classes })
    }

    /// glioma, meningioma, pituitary, notumor.
    pub fn brain_mri() -> Self {
        LabelMap {
            classes: ["glioma", "meningioma", "pituitary", "notumor"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn read(path: &Path) -> Result<Self, RegistryError> {
        let invalid = |reason: String| RegistryError::InvalidLabels {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(path)?;
        let raw: LabelMapFile = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        LabelMap::new(raw.classes).map_err(invalid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LabelMapFile {
            classes: self.classes.clone(),
        })
        .expect("label map serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct LabelMapFile {
    classes: Vec<String>,
}

/// A loaded model together with its labels.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: Model,
    pub labels: LabelMap,
}

/// One discovered (weights, labels) pair. Loading is lazy and happens at
/// most once even under concurrent callers.
#[derive(Debug)]
pub struct ModelBundle {
    scan_type: String,
    weights_path: PathBuf,
    labels_path: PathBuf,
    loaded: Mutex<Option<Arc<LoadedModel>>>,
    disk_reads: Arc<AtomicUsize>,
}

impl ModelBundle {
    pub fn new(scan_type: impl Into<String>, weights_path: PathBuf, labels_path: PathBuf) -> Self {
        ModelBundle {
            scan_type: scan_type.into(),
            weights_path,
            labels_path,
            loaded: Mutex::new(None),
            disk_reads: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Share an external counter incremented on every weight-file read.
    pub fn with_read_counter(mut self, counter: Arc<AtomicUsize>) -> Self {
        self.disk_reads = counter;
        self
    }

    pub fn scan_type(&self) -> &str {
        &self.scan_type
    }

    pub fn weights_path(&self) -> &Path {
        &self.weights_path
    }

    pub fn labels_path(&self) -> &Path {
        &self.labels_path
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded.lock().expect("bundle lock").is_some()
    }

    pub fn disk_reads(&self) -> usize {
        self.disk_reads.load(Ordering::SeqCst)
    }

    /// Labels from the loaded model, or read from disk without touching weights.
    pub fn labels(&self) -> Result<LabelMap, RegistryError> {
        if let Some(loaded) = self.loaded.lock().expect("bundle lock").as_ref() {
            return Ok(loaded.labels.clone());
        }
        LabelMap::read(&self.labels_path)
    }

    /// Load and validate weights and labels; later calls return the same model.
    pub fn load(&self) -> Result<Arc<LoadedModel>, RegistryError> {
        let mut slot = self.loaded.lock().expect("bundle lock");
        if let Some(loaded) = slot.as_ref() {
            return Ok(Arc::clone(loaded));
        }
        let labels = LabelMap::read(&self.labels_path)?;
        self.disk_reads.fetch_add(1, Ordering::SeqCst);
        let weights = load_weights(&self.weights_path).map_err(|source| RegistryError::Weights {
            path: self.weights_path.clone(),
            source,
        })?;
        let model = Model::new(weights);
        if labels.len() != model.output_dim() {
            return Err(RegistryError::LabelCountMismatch {
                labels: labels.len(),
                outputs: model.output_dim(),
            });
        }
        log::info!("loaded {} model from {}", self.scan_type, self.weights_path.display());
        let loaded = Arc::new(LoadedModel { model, labels });
        *slot = Some(Arc::clone(&loaded));
        Ok(loaded)
    }
}

/// Bundles discovered in one models directory, sorted by scan type.
#[derive(Debug)]
pub struct ModelRegistry {
    dir: PathBuf,
    bundles: Vec<Arc<ModelBundle>>,
    warnings: Vec<String>,
}

impl ModelRegistry {
    /// Pair up model and label files; `filter` keeps a single scan type.
    pub fn scan(dir: impl AsRef<Path>, filter: Option<&str>) -> Result<Self, RegistryError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(RegistryError::DirNotFound(dir.to_path_buf()));
        }
        let mut models = BTreeMap::new();
        let mut labels = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(MODEL_SUFFIX).filter(|s| !s.is_empty()) {
                models.insert(stem.to_string(), entry.path());
            } else if let Some(stem) = name.strip_suffix(LABELS_SUFFIX).filter(|s| !s.is_empty()) {
                labels.insert(stem.to_string(), entry.path());
            }
        }

        let wanted = |stem: &str| filter.is_none_or(|f| f == stem);
        let mut bundles = Vec::new();
        let mut warnings = Vec::new();
        for (stem, weights) in &models {
            if !wanted(stem) {
                continue;
            }
            match labels.get(stem) {
                Some(label_path) => bundles.push(Arc::new(ModelBundle::new(
                    stem.clone(),
                    weights.clone(),
                    label_path.clone(),
                ))),
                None => warnings.push(format!(
                    "orphan model file {}: no {stem}{LABELS_SUFFIX}",
                    weights.display()
                )),
            }
        }
        for (stem, label_path) in &labels {
            if wanted(stem) && !models.contains_key(stem) {
                warnings.push(format!(
                    "orphan label file {}: no {stem}{MODEL_SUFFIX}",
                    label_path.display()
                ));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(ModelRegistry {
            dir: dir.to_path_buf(),
            bundles,
            warnings,
        })
    }

    /// Directory from the explicit flag, else `PHYDCM_MODELS_DIR`, else `./models`.
    pub fn resolve_dir(flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(MODELS_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("models"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn bundles(&self) -> &[Arc<ModelBundle>] {
        &self.bundles
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn get(&self, scan_type: &str) -> Option<&Arc<ModelBundle>> {
        self.bundles.iter().find(|b| b.scan_type == scan_type)
    }

    /// Load every bundle now instead of on first use.
    pub fn load_all(&self) -> Result<(), RegistryError> {
        for b in &self.bundles {
            b.load()?;
        }
        Ok(())
    }
}

/// Write a weights + labels pair using the directory naming convention.
pub fn install_bundle(
    dir: &Path,
    scan_type: &str,
    weights: &crate::nnet::WeightTable,
    labels: &LabelMap,
) -> Result<(PathBuf, PathBuf), RegistryError> {
    fs::create_dir_all(dir)?;
    let weights_path = dir.join(format!("{scan_type}{MODEL_SUFFIX}"));
    let labels_path = dir.join(format!("{scan_type}{LABELS_SUFFIX}"));
    crate::nnet::save_weights(weights, &weights_path).map_err(|source| RegistryError::Weights {
        path: weights_path.clone(),
        source,
    })?;
    fs::write(&labels_path, labels.to_json() + "\n")?;
    Ok((weights_path, labels_path))
}
