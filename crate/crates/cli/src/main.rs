//! `phydcm`: predict, evaluate, reslice, list models, serve and generate
//! fixtures from the command line.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phydcm_core::diagnose::{self, PatientInfo};
use phydcm_core::eval::{evaluate_dir, ConfusionMatrix, EvalReport};
use phydcm_core::volume::{assemble_volume, render_window, Plane};
use phydcm_core::{dicom, fixture, numfmt, pgm, ModelRegistry};
use serde_json::json;

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "phydcm", version, about = "Brain MRI DICOM pipeline: viewing, classification and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify one DICOM or PGM image.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        scan_type: String,
        /// Defaults to $PHYDCM_MODELS_DIR, then ./models.
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Print the full diagnostic record as JSON.
        #[arg(long)]
        json: bool,
        /// Append the record to this JSON history file.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        patient_id: Option<String>,
        #[arg(long)]
        patient_name: Option<String>,
    },
    /// Evaluate over a dataset with one folder per class.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scan_type: String,
        /// Where to write the JSON report.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Print the per-class table.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        json: bool,
    },
    /// Extract one orthogonal slice from a DICOM series as an 8-bit PGM.
    Mpr {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        plane: Plane,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the full data range.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        level: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// List discovered model bundles.
    Models {
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the local HTTP API.
    Serve {
        #[arg(long, default_value_t = phydcm_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "phydcm_history.json")]
        history: PathBuf,
    },
    /// Write CSV for a JSON history file.
    Export {
        #[arg(long)]
        history: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write deterministic fixture weights, labels, a DICOM series, a PGM and
    /// a labeled dataset.
    GenFixture {
        /// Hexadecimal seed, with or without 0x.
        #[arg(long, value_parser = parse_hex_seed)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn parse_hex_seed(s: &str) -> Result<u64, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u64::from_str_radix(digits, 16).map_err(|e| format!("invalid hex seed {s:?}: {e}"))
}

fn registry(models_dir: Option<&Path>) -> Result<ModelRegistry, Error> {
    let dir = ModelRegistry::resolve_dir(models_dir);
    let reg = ModelRegistry::scan(&dir, None)?;
    for w in reg.warnings() {
        log::warn!("{w}");
    }
    Ok(reg)
}

fn print_json(v: &impl serde::Serialize) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn report_json(report: &EvalReport, cm: &ConfusionMatrix) -> serde_json::Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["confusion_matrix"] = serde_json::to_value(cm).expect("matrix serializes");
    v
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Predict {
            input,
            scan_type,
            models_dir,
            json,
            history,
            patient_id,
            patient_name,
        } => {
            let reg = registry(models_dir.as_deref())?;
            let record = diagnose::predict(
                &input,
                &scan_type,
                &reg,
                PatientInfo {
                    patient_id,
                    patient_name,
                },
            )?;
            if let Some(path) = history {
                diagnose::append_history(&record, &path)?;
            }
            if json {
                print_json(&record)?;
            } else {
                println!(
                    "{}: {} (confidence {})",
                    input.display(),
                    record.predicted_class,
                    numfmt::fixed(record.confidence, 2)
                );
            }
        }
        Command::Evaluate {
            dataset,
            scan_type,
            report,
            models_dir,
            table,
            json,
        } => {
            let reg = registry(models_dir.as_deref())?;
            let (r, cm) = evaluate_dir(&dataset, &reg, &scan_type)?;
            let doc = report_json(&r, &cm);
            fs::write(&report, serde_json::to_string_pretty(&doc)? + "\n")?;
            if table {
                print!("{}", r.render_table());
            }
            if json {
                print_json(&doc)?;
            } else if !table {
                println!(
                    "{} of {} correct ({}%), report written to {}",
                    r.overall.correct,
                    r.overall.tested,
                    r.overall.accuracy_pct,
                    report.display()
                );
            }
        }
        Command::Mpr {
            series,
            plane,
            index,
            out,
            window,
            level,
            json,
        } => {
            let files = diagnose::list_dicom_files(&series)?;
            if files.is_empty() {
                return Err(format!("no DICOM files in {}", series.display()).into());
            }
            let slices = files
                .iter()
                .map(|f| -> Result<_, Error> { Ok(dicom::extract_pixels(&dicom::parse_dicom(&fs::read(f)?)?)?) })
                .collect::<Result<Vec<_>, _>>()?;
            let volume = assemble_volume(&slices)?;
            let slice = volume.extract_slice(plane, index)?;
            let (dw, dl) = volume.full_range_window();
            let (window, level) = (window.unwrap_or(dw), level.unwrap_or(dl));
            let bytes = render_window(&slice, window, level)?;
            fs::write(&out, pgm::encode_pgm8(&bytes))?;
            let (height, width) = bytes.dim();
            if json {
                print_json(&json!({
                    "plane": plane,
                    "index": index,
                    "width": width,
                    "height": height,
                    "window": window,
                    "level": level,
                    "out": out.display().to_string(),
                }))?;
            } else {
                println!("{plane} {index}: {width}x{height} written to {}", out.display());
            }
        }
        Command::Models { models_dir, json } => {
            let reg = registry(models_dir.as_deref())?;
            let entries: Vec<_> = reg
                .bundles()
                .iter()
                .map(|b| {
                    let classes = b.labels().map(|l| l.classes().to_vec());
                    json!({
                        "scan_type": b.scan_type(),
                        "weights": b.weights_path().display().to_string(),
                        "labels": b.labels_path().display().to_string(),
                        "classes": classes.as_ref().ok(),
                        "error": classes.as_ref().err().map(|e| e.to_string()),
                    })
                })
                .collect();
            if json {
                print_json(&entries)?;
            } else if entries.is_empty() {
                println!("no model bundles in {}", reg.dir().display());
            } else {
                for b in reg.bundles() {
                    match b.labels() {
                        Ok(l) => println!("{}\t{}", b.scan_type(), l.classes().join(",")),
                        Err(e) => println!("{}\t<{e}>", b.scan_type()),
                    }
                }
            }
        }
        Command::Serve {
            port,
            host,
            models_dir,
            data_dir,
            history,
        } => {
            let config = phydcm_service::ServiceConfig {
                models_dir: ModelRegistry::resolve_dir(models_dir.as_deref()),
                data_dir,
                history_path: history,
            };
            let addr = SocketAddr::new(host, port);
            let rt = tokio_runtime()?;
            rt.block_on(phydcm_service::serve(config, addr))?;
        }
        Command::Export { history, out } => {
            let csv = diagnose::csv_string(&diagnose::read_history(&history)?)?;
            match out {
                Some(path) => fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::GenFixture { seed, out, json } => {
            let layout = fixture::gen_fixture(&out, seed)?;
            if json {
                print_json(&json!({
                    "seed": format!("{seed:#x}"),
                    "weights": layout.weights.display().to_string(),
                    "labels": layout.labels.display().to_string(),
                    "series": layout.slices.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                    "pgm": layout.pgm.display().to_string(),
                    "dataset": layout.dataset_dir.display().to_string(),
                }))?;
            } else {
                println!("fixture (seed {seed:#x}) written to {}", out.display());
            }
        }
    }
    Ok(())
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, Error> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
