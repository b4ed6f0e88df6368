use phydcm_core::diagnose::{self, csv_string, predict, PatientInfo, CSV_HEADER};
use phydcm_core::eval::evaluate_dir;
use phydcm_core::fixture::{gen_fixture, FIXTURE_SCAN_TYPE};
use phydcm_core::volume::assemble_volume;
use phydcm_core::ModelRegistry;

#[test]
fn dicom_and_equivalent_pgm_give_identical_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let layout = gen_fixture(dir.path(), 0x5EED).unwrap();
    let reg = ModelRegistry::scan(&layout.models_dir, None).unwrap();
    let a = predict(&layout.slices[0], FIXTURE_SCAN_TYPE, &reg, PatientInfo::default()).unwrap();
    let b = predict(&layout.pgm, FIXTURE_SCAN_TYPE, &reg, PatientInfo::default()).unwrap();
    assert_eq!(a.probabilities, b.probabilities);
    assert_eq!(a.patient_id.as_deref(), Some("PHYDCM-0001"));
    assert_eq!(b.patient_id, None);

    let sum: f64 = a.probabilities.values().sum();
    assert!((sum - 1.0).abs() <= 1e-6);
    let max = a.probabilities.values().cloned().fold(f64::MIN, f64::max);
    assert_eq!(a.confidence, max);
    assert_eq!(a.probabilities.len(), 4);
    assert!(chrono::DateTime::parse_from_rfc3339(&a.timestamp).is_ok());
    assert!(a.timestamp.ends_with('Z'));
}

#[test]
fn caller_patient_fields_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let layout = gen_fixture(dir.path(), 1).unwrap();
    let reg = ModelRegistry::scan(&layout.models_dir, None).unwrap();
    let patient = PatientInfo {
        patient_id: Some("OVERRIDE".into()),
        patient_name: None,
    };
    let r = predict(&layout.slices[1], "mri", &reg, patient).unwrap();
    assert_eq!(r.patient_id.as_deref(), Some("OVERRIDE"));
    assert_eq!(r.patient_name.as_deref(), Some("FIXTURE^PHANTOM"));
}

#[test]
fn missing_model_and_unknown_format() {
    let dir = tempfile::tempdir().unwrap();
    let layout = gen_fixture(dir.path(), 1).unwrap();
    let reg = ModelRegistry::scan(&layout.models_dir, None).unwrap();
    assert!(matches!(
        predict(&layout.pgm, "ct", &reg, PatientInfo::default()),
        Err(diagnose::DiagnoseError::NoModelForScanType(s)) if s == "ct"
    ));
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"definitely not an image").unwrap();
    assert!(matches!(
        predict(&junk, "mri", &reg, PatientInfo::default()),
        Err(diagnose::DiagnoseError::UnknownFormat(_))
    ));
}

#[test]
fn evaluate_fixture_dataset_and_unknown_folder() {
    let dir = tempfile::tempdir().unwrap();
    let layout = gen_fixture(dir.path(), 2).unwrap();
    let reg = ModelRegistry::scan(&layout.models_dir, None).unwrap();
    let (report, cm) = evaluate_dir(&layout.dataset_dir, &reg, "mri").unwrap();
    assert_eq!(cm.total(), 4);
    assert!((0..4).all(|i| cm.row_sum(i) == 1));
    assert_eq!(report.classes.len(), 4);

    std::fs::create_dir(layout.dataset_dir.join("edema")).unwrap();
    let err = evaluate_dir(&layout.dataset_dir, &reg, "mri").unwrap_err();
    assert!(err.to_string().contains("edema"));
}

#[test]
fn fixture_series_assembles_and_history_exports() {
    let dir = tempfile::tempdir().unwrap();
    let layout = gen_fixture(dir.path(), 3).unwrap();
    let slices: Vec<_> = layout
        .slices
        .iter()
        .map(|p| phydcm_core::dicom::extract_pixels(&phydcm_core::dicom::parse_dicom(&std::fs::read(p).unwrap()).unwrap()).unwrap())
        .collect();
    let v = assemble_volume(&slices).unwrap();
    assert_eq!(v.dims(), (64, 48, 3));
    assert_eq!(v.spacing(), [0.5, 0.75, 2.5]);

    let reg = ModelRegistry::scan(&layout.models_dir, None).unwrap();
    let history = dir.path().join("h/history.json");
    for _ in 0..2 {
        let r = predict(&layout.pgm, "mri", &reg, PatientInfo::default()).unwrap();
        diagnose::append_history(&r, &history).unwrap();
    }
    let records = diagnose::read_history(&history).unwrap();
    assert_eq!(records.len(), 2);
    let csv = csv_string(&records).unwrap();
    assert!(csv.starts_with(&format!("{CSV_HEADER}\r\n")));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn fixture_generation_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let la = gen_fixture(a.path(), 0xABC).unwrap();
    let lb = gen_fixture(b.path(), 0xABC).unwrap();
    assert_eq!(std::fs::read(&la.weights).unwrap(), std::fs::read(&lb.weights).unwrap());
    for (x, y) in la.slices.iter().zip(&lb.slices) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}
