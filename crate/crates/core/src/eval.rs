//! Confusion matrices, classification metrics and Table-2 style reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnose::{self, DiagnoseError};
use crate::numfmt;
use crate::registry::ModelRegistry;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class folder {0:?} is not in the label map")]
    UnknownClassDir(String),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("confusion matrix must be {k}x{k} for {k} labels")]
    BadShape { k: usize },
    #[error("cannot merge matrices with different labels")]
    LabelMismatch,
    #[error("dataset directory {0} not found")]
    DatasetNotFound(PathBuf),
    #[error("{path}: {source}")]
    Predict {
        path: PathBuf,
        #[source]
        source: DiagnoseError,
    },
    #[error(transparent)]
    Diagnose(#[from] DiagnoseError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = labels.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(EvalError::BadShape { k });
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn add(&mut self, actual: &str, predicted: &str) -> Result<()> {
        let a = self.index_of(actual).ok_or_else(|| EvalError::UnknownClass(actual.into()))?;
        let p = self.index_of(predicted).ok_or_else(|| EvalError::UnknownClass(predicted.into()))?;
        self.record(a, p);
        Ok(())
    }

    /// Cell-wise sum, for combining shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(EvalError::LabelMismatch);
        }
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn tp(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn fp(&self, class: usize) -> u64 {
        self.col_sum(class) - self.tp(class)
    }

    pub fn fn_(&self, class: usize) -> u64 {
        self.row_sum(class) - self.tp(class)
    }

    pub fn tn(&self, class: usize) -> u64 {
        self.total() - self.tp(class) - self.fp(class) - self.fn_(class)
    }

    /// trace / total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// One-vs-rest accuracy (TP+TN)/(TP+TN+FP+FN).
    pub fn class_accuracy(&self, class: usize) -> f64 {
        ratio(self.tp(class) + self.tn(class), self.total())
    }

    /// TP/(TP+FP); 0 when nothing was predicted as `class`.
    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.tp(class), self.col_sum(class))
    }

    /// TP/(TP+FN); 0 when `class` has no samples.
    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.tp(class), self.row_sum(class))
    }

    pub fn f1(&self, class: usize) -> f64 {
        f1(self.precision(class), self.recall(class))
    }
}

/// Harmonic mean 2PR/(P+R), defined as 0 when P+R == 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub tested: u64,
    pub correct: u64,
    pub misclassified: u64,
    /// Two decimals, half away from zero, e.g. "80.39".
    pub accuracy_pct: String,
}

impl ClassRow {
    pub fn new(class: impl Into<String>, tested: u64, correct: u64) -> Self {
        assert!(correct <= tested, "correct {correct} exceeds tested {tested}");
        ClassRow {
            class: class.into(),
            tested,
            correct,
            misclassified: tested - correct,
            accuracy_pct: numfmt::percent_exact(correct, tested, 2).unwrap_or_else(|| "0.00".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassRow>,
    pub overall: ClassRow,
    pub overall_accuracy: f64,
    /// Unweighted mean over classes that have samples. Needs a full matrix.
    pub macro_avg: Option<AveragedMetrics>,
    /// Pooled TP/(TP+FP) and TP/(TP+FN); both equal overall accuracy.
    pub micro_precision: Option<f64>,
    pub micro_recall: Option<f64>,
}

impl EvalReport {
    /// Report from per-class (label, tested, correct) tallies alone.
    pub fn from_tallies<S: AsRef<str>>(tallies: &[(S, u64, u64)]) -> Self {
        let classes: Vec<ClassRow> =
            tallies.iter().map(|(c, t, k)| ClassRow::new(c.as_ref(), *t, *k)).collect();
        let tested = classes.iter().map(|r| r.tested).sum();
        let correct = classes.iter().map(|r| r.correct).sum();
        EvalReport {
            classes,
            overall: ClassRow::new("Overall", tested, correct),
            overall_accuracy: ratio(correct, tested),
            macro_avg: None,
            micro_precision: None,
            micro_recall: None,
        }
    }

    pub fn from_matrix(cm: &ConfusionMatrix) -> Self {
        let tallies: Vec<_> = (0..cm.k())
            .map(|i| (cm.labels()[i].as_str(), cm.row_sum(i), cm.tp(i)))
            .collect();
        let mut report = EvalReport::from_tallies(&tallies);

        let supported: Vec<usize> = (0..cm.k()).filter(|&i| cm.row_sum(i) > 0).collect();
        if !supported.is_empty() {
            let n = supported.len() as f64;
            let mean = |f: &dyn Fn(usize) -> f64| supported.iter().map(|&i| f(i)).sum::<f64>() / n;
            report.macro_avg = Some(AveragedMetrics {
                precision: mean(&|i| cm.precision(i)),
                recall: mean(&|i| cm.recall(i)),
                f1: mean(&|i| cm.f1(i)),
            });
        }
        let tp = cm.trace();
        let fp: u64 = (0..cm.k()).map(|i| cm.fp(i)).sum();
        let fn_: u64 = (0..cm.k()).map(|i| cm.fn_(i)).sum();
        report.micro_precision = Some(ratio(tp, tp + fp));
        report.micro_recall = Some(ratio(tp, tp + fn_));
        report
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table: Class, Tested Images, Correct Predictions,
    /// Misclassified, Accuracy %.
    pub fn render_table(&self) -> String {
        let header = ["Class", "Tested Images", "Correct Predictions", "Misclassified", "Accuracy %"];
        let rows: Vec<[String; 5]> = self
            .classes
            .iter()
            .chain(std::iter::once(&self.overall))
            .map(|r| {
                [
                    r.class.clone(),
                    r.tested.to_string(),
                    r.correct.to_string(),
                    r.misclassified.to_string(),
                    r.accuracy_pct.clone(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let mut s = format!("{:<w$}", cells[0], w = widths[0]);
            for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
                let _ = write!(s, "  {cell:>w$}");
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &rows {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

/// Accuracy as shown in a cross-dataset summary: two decimals, except whole
/// percentages which print bare ("100%").
pub fn summary_accuracy(correct: u64, tested: u64) -> String {
    if tested == 0 {
        return "n/a".into();
    }
    if (correct as u128 * 100) % tested as u128 == 0 {
        format!("{}%", correct as u128 * 100 / tested as u128)
    } else {
        format!("{}%", numfmt::percent_exact(correct, tested, 2).expect("nonzero denominator"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub accuracy: String,
}

/// One summary row per named report, from its overall tallies.
pub fn summary_table(reports: &[(&str, &EvalReport)]) -> Vec<SummaryRow> {
    reports
        .iter()
        .map(|(name, r)| SummaryRow {
            dataset: name.to_string(),
            accuracy: summary_accuracy(r.overall.correct, r.overall.tested),
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.retain(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| !n.starts_with('.'))
    });
    entries.sort();
    Ok(entries)
}

/// Predict every file under `dataset_dir/<class>/` and accumulate the matrix
/// with the folder name as the actual class.
pub fn evaluate_dir(
    dataset_dir: &Path,
    registry: &ModelRegistry,
    scan_type: &str,
) -> Result<(EvalReport, ConfusionMatrix)> {
    if !dataset_dir.is_dir() {
        return Err(EvalError::DatasetNotFound(dataset_dir.to_path_buf()));
    }
    let bundle = registry
        .get(scan_type)
        .ok_or_else(|| DiagnoseError::NoModelForScanType(scan_type.to_string()))?;
    let model = bundle.load().map_err(DiagnoseError::from)?;
    let mut cm = ConfusionMatrix::new(model.labels.classes().to_vec());

    let class_dirs: Vec<PathBuf> = sorted_entries(dataset_dir)?.into_iter().filter(|p| p.is_dir()).collect();
    for class_dir in class_dirs {
        let name = class_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let actual = cm.index_of(&name).ok_or(EvalError::UnknownClassDir(name.clone()))?;
        for file in sorted_entries(&class_dir)?.into_iter().filter(|p| p.is_file()) {
            let predicted = diagnose::load_image(&file)
                .and_then(|img| diagnose::classify(&model, &img.pixels))
                .map(|(probs, _)| diagnose::argmax(&probs))
                .map_err(|source| EvalError::Predict {
                    path: file.clone(),
                    source,
                })?;
            log::debug!("{}: actual {name}, predicted {}", file.display(), cm.labels()[predicted]);
            cm.record(actual, predicted);
        }
    }
    Ok((EvalReport::from_matrix(&cm), cm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        ["glioma", "meningioma", "pituitary", "notumor"].map(String::from).to_vec()
    }

    #[test]
    fn one_vs_rest_counts() {
        let cm = ConfusionMatrix::from_counts(
            labels(),
            vec![vec![5, 1, 0, 0], vec![2, 3, 0, 1], vec![0, 0, 4, 0], vec![1, 0, 0, 6]],
        )
        .unwrap();
        assert_eq!((cm.tp(0), cm.fp(0), cm.fn_(0), cm.tn(0)), (5, 3, 1, 14));
        assert_eq!(cm.total(), 23);
        assert_eq!(cm.precision(2), 1.0);
        assert_eq!(cm.recall(2), 1.0);
        assert_eq!(cm.class_accuracy(0), 19.0 / 23.0);
    }

    #[test]
    fn f1_edges() {
        assert_eq!(f1(1.0, 0.0), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
        assert_eq!(f1(0.6, 0.6), 0.6);
    }

    #[test]
    fn from_counts_checks_shape() {
        assert!(matches!(
            ConfusionMatrix::from_counts(labels(), vec![vec![0; 4]; 3]),
            Err(EvalError::BadShape { k: 4 })
        ));
    }

    #[test]
    fn merge_requires_same_labels() {
        let mut a = ConfusionMatrix::new(labels());
        a.add("glioma", "pituitary").unwrap();
        let b = a.clone();
        a.merge(&b).unwrap();
        assert_eq!(a.counts()[0][2], 2);
        let other = ConfusionMatrix::new(vec!["x".into()]);
        assert!(matches!(a.merge(&other), Err(EvalError::LabelMismatch)));
        assert!(matches!(a.add("nope", "glioma"), Err(EvalError::UnknownClass(_))));
    }

    #[test]
    fn table_layout() {
        let report = EvalReport::from_tallies(&[("glioma", 254, 243), ("notumor", 140, 137)]);
        let table = report.render_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("Class"));
        assert!(lines[0].ends_with("Accuracy %"));
        assert!(lines[2].ends_with("95.67"));
        assert!(lines[4].starts_with("Overall"));
        assert!(lines[4].ends_with(&report.overall.accuracy_pct));
    }

    #[test]
    fn summary_accuracy_formats() {
        assert_eq!(summary_accuracy(1500, 1500), "100%");
        assert_eq!(summary_accuracy(923, 1000), "92.30%");
        assert_eq!(summary_accuracy(1, 2), "50%");
        assert_eq!(summary_accuracy(0, 0), "n/a");
    }

    #[test]
    fn empty_matrix_is_all_zero() {
        let report = EvalReport::from_matrix(&ConfusionMatrix::new(labels()));
        assert_eq!(report.overall.accuracy_pct, "0.00");
        assert_eq!(report.macro_avg, None);
        assert_eq!(report.micro_precision, Some(0.0));
    }
}
