use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn phydcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phydcm"))
        .args(args)
        .env_remove("PHYDCM_MODELS_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path) -> String {
    let out = dir.join("fx");
    let o = phydcm(&["gen-fixture", "--seed", "0x5EED", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

#[test]
fn gen_fixture_then_models_lists_one_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let o = phydcm(&["models", "--models-dir", &fx, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["scan_type"], "mri");
    assert_eq!(v[0]["classes"].as_array().unwrap().len(), 4);
}

#[test]
fn gen_fixture_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (fa, fb) = (gen(a.path()), gen(b.path()));
    for f in ["mri_model.pdcm", "mri_labels.json", "fixture.pgm", "series/slice_002.dcm"] {
        assert_eq!(
            std::fs::read(Path::new(&fa).join(f)).unwrap(),
            std::fs::read(Path::new(&fb).join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn predict_summary_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let pgm = format!("{fx}/fixture.pgm");
    let o = phydcm(&["predict", "--input", &pgm, "--scan-type", "mri", "--models-dir", &fx]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert_eq!(line.lines().count(), 1);
    assert!(line.contains("confidence 0."), "{line}");

    let history = dir.path().join("h.json");
    let o = phydcm(&[
        "predict", "--input", &pgm, "--scan-type", "mri", "--models-dir", &fx, "--json",
        "--history", history.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rec: phydcm_core::DiagnosticRecord = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rec.probabilities.len(), 4);
    let saved = phydcm_core::diagnose::read_history(&history).unwrap();
    assert_eq!(saved, vec![rec]);
}

#[test]
fn predict_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let o = phydcm(&["predict", "--input", "x.pgm", "--scan-type", "mri", "--models-dir", "/no/such/dir"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
    let o = phydcm(&["predict", "--input", &format!("{fx}/fixture.pgm"), "--scan-type", "ct", "--models-dir", &fx]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(phydcm(&["predict"]).status.code(), Some(2));
    assert_eq!(phydcm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(phydcm(&["gen-fixture", "--seed", "xyz", "--out", "/tmp/x"]).status.code(), Some(2));
    let o = phydcm(&["mpr", "--series", ".", "--plane", "oblique", "--index", "0", "--out", "x.pgm"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let report = dir.path().join("report.json");
    let o = phydcm(&[
        "evaluate", "--dataset", &format!("{fx}/dataset"), "--scan-type", "mri", "--models-dir", &fx,
        "--report", report.to_str().unwrap(), "--table",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let header = table.lines().next().unwrap();
    for col in ["Class", "Tested Images", "Correct Predictions", "Misclassified", "Accuracy %"] {
        assert!(header.contains(col));
    }
    assert!(table.lines().last().unwrap().starts_with("Overall"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["classes"].as_array().unwrap().len(), 4);
    assert_eq!(v["overall"]["tested"], 4);

    std::fs::create_dir(Path::new(&fx).join("dataset/edema")).unwrap();
    let o = phydcm(&[
        "evaluate", "--dataset", &format!("{fx}/dataset"), "--scan-type", "mri", "--models-dir", &fx,
        "--report", report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("edema"));
}

#[test]
fn mpr_axial_matches_first_slice_windowed() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let out = dir.path().join("axial.pgm");
    let o = phydcm(&[
        "mpr", "--series", &format!("{fx}/series"), "--plane", "axial", "--index", "0",
        "--out", out.to_str().unwrap(), "--window", "1000", "--level", "1200",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let written = phydcm_core::pgm::read_pgm(&std::fs::read(&out).unwrap()).unwrap();

    let ds = phydcm_core::dicom::parse_dicom(&std::fs::read(format!("{fx}/series/slice_000.dcm")).unwrap()).unwrap();
    let (px, _) = phydcm_core::dicom::extract_pixels(&ds).unwrap();
    let want = phydcm_core::volume::render_window(&px, 1000.0, 1200.0).unwrap();
    assert_eq!(written.pixels, want.mapv(u16::from));

    let o = phydcm(&[
        "mpr", "--series", &format!("{fx}/series"), "--plane", "axial", "--index", "3",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mpr_default_window_is_full_range() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let out = dir.path().join("s.pgm");
    let o = phydcm(&[
        "mpr", "--series", &format!("{fx}/series"), "--plane", "sagittal", "--index", "0",
        "--out", out.to_str().unwrap(), "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let meta: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((meta["width"].as_u64(), meta["height"].as_u64()), (Some(48), Some(3)));
    assert!(meta["window"].as_f64().unwrap() > 0.0);
}

#[test]
fn serve_on_busy_port_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path());
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let o = phydcm(&["serve", "--port", &port, "--models-dir", &fx, "--data-dir", &fx]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

#[test]
fn export_writes_exact_header() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("none.json");
    let o = phydcm(&["export", "--history", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        o.stdout,
        b"timestamp,patient_id,patient_name,scan_type,predicted_class,confidence,p_glioma,p_meningioma,p_pituitary,p_notumor,source_path\r\n"
    );
}
