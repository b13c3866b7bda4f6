use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use tirefit::io;
use tirefit::preprocess::{Channel, SensorLog, Series};
use tirefit::rng::stream_rng;
use tirefit::simulation::{example_vehicle, simulate_log, Maneuver};
use tirefit::study::generate_synthetic;
use tirefit::TireParams;

fn tirefit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tirefit")).arg("--quiet").args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_vehicle(dir: &Path) -> PathBuf {
    let p = dir.join("vehicle.json");
    serde_json::to_writer_pretty(File::create(&p).unwrap(), &example_vehicle()).unwrap();
    p
}

fn write_log(dir: &Path, log: &SensorLog) -> PathBuf {
    let p = dir.join("log.csv");
    io::write_sensor_log(log, File::create(&p).unwrap()).unwrap();
    p
}

fn write_data(dir: &Path, level: f64, seed: u64) -> PathBuf {
    let data = generate_synthetic(&TireParams::reference(), level, 500, 0.002, 0.02, &mut stream_rng(seed, 0));
    let p = dir.join(format!("data_{level}.csv"));
    io::write_dataset(&data, File::create(&p).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_reader(File::open(p).unwrap()).unwrap()
}

fn mean(result: &Value) -> Vec<f64> {
    result["mean"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

fn short_log() -> SensorLog {
    let m = Maneuver { duration: 30.0, ..Maneuver::default() };
    simulate_log(&example_vehicle(), &Default::default(), &m, &mut stream_rng(3, 0)).unwrap()
}

#[test]
fn preprocess_writes_every_dataset() {
    let dir = TempDir::new().unwrap();
    let log = write_log(dir.path(), &short_log());
    let vehicle = write_vehicle(dir.path());
    let out_dir = dir.path().join("out");
    let out = tirefit(&["preprocess", "--log", s(&log), "--vehicle", s(&vehicle), "--out-dir", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["front_lateral", "rear_lateral", "front_longitudinal", "rear_longitudinal"] {
        assert!(out_dir.join(format!("{name}.csv")).exists(), "{name}");
        assert!(out_dir.join(format!("{name}.shifts.json")).exists(), "{name}");
    }
    for name in ["offsets.json", "report.json", "preprocess.config.json"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }

    // the produced dataset and shifts feed straight into a fit
    let result = out_dir.join("fit.json");
    let out = tirefit(&[
        "fit",
        "--data",
        s(&out_dir.join("front_lateral.csv")),
        "--shifts",
        s(&out_dir.join("front_lateral.shifts.json")),
        "--method",
        "nelder-mead",
        "--out",
        s(&result),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let d = mean(&read_json(&result))[2];
    assert!((d - 1.5).abs() < 0.05, "D = {d}");
}

#[test]
fn missing_column_is_an_input_error_naming_it() {
    let dir = TempDir::new().unwrap();
    let mut log = short_log();
    log.series.remove(&Channel::Vy);
    let log = write_log(dir.path(), &log);
    let vehicle = write_vehicle(dir.path());
    let out = tirefit(&["preprocess", "--log", s(&log), "--vehicle", s(&vehicle), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "missing_column");
    assert_eq!(err["error"]["column"], "vy_mps");
}

#[test]
fn stationary_log_is_insufficient_data() {
    let dir = TempDir::new().unwrap();
    let mut log = SensorLog::default();
    for ch in Channel::REQUIRED {
        let n = 2000;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let v = if ch == Channel::Gear { vec![1.0; n] } else { vec![0.0; n] };
        log.insert(ch, Series::new(t, v).unwrap());
    }
    let log = write_log(dir.path(), &log);
    let vehicle = write_vehicle(dir.path());
    let out = tirefit(&["preprocess", "--log", s(&log), "--vehicle", s(&vehicle), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_is_reproducible_from_seed_and_from_its_echo() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 0.3, 1);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    let args = |out: &Path| -> Vec<String> {
        ["fit", "--data", s(&data), "--seed", "7", "--steps", "400", "--out", s(out)].map(String::from).to_vec()
    };
    let run = |v: Vec<String>| tirefit(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&run(args(&a))), 0);
    assert_eq!(code(&run(args(&b))), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.posterior.csv")).unwrap(),
        std::fs::read(dir.path().join("b.posterior.csv")).unwrap()
    );

    let echo = dir.path().join("a.config.json");
    let out = tirefit(&["fit", "--config", s(&echo), "--out", s(&c)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 0.3, 2);
    let config = dir.path().join("fit.toml");
    std::fs::write(
        &config,
        format!("data = {:?}\nmethod = \"nelder-mead\"\nseed = 3\nfixed_c = 1.8\n", s(&data)),
    )
    .unwrap();
    let out_path = dir.path().join("r.json");
    let out = tirefit(&["fit", "--config", s(&config), "--fixed-c", "1.3", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(&out_path);
    assert_eq!(result["method"], "nelder-mead");
    assert_eq!(mean(&result)[1], 1.3);
    assert_eq!(read_json(&dir.path().join("r.config.json"))["config"]["seed"], 3);
}

#[test]
fn fixed_c_pins_the_svi_posterior() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 0.3, 3);
    let out_path = dir.path().join("r.json");
    let out = tirefit(&["fit", "--data", s(&data), "--fixed-c", "1.3", "--steps", "300", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(&out_path);
    assert_eq!(mean(&result)[1], 1.3);
    let cov: Vec<f64> = result["covariance"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(cov[5], 0.0);
    let mut rdr = csv::Reader::from_path(dir.path().join("r.posterior.csv")).unwrap();
    for rec in rdr.records() {
        assert_eq!(rec.unwrap()[1].parse::<f64>().unwrap(), 1.3);
    }
}

#[test]
fn single_level_study_has_one_row_per_method() {
    let dir = TempDir::new().unwrap();
    let out = tirefit(&[
        "study",
        "--levels",
        "0.02",
        "--n-points",
        "200",
        "--steps",
        "300",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("study.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), io::STUDY_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let mut methods: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    methods.sort_unstable();
    assert_eq!(methods, ["nelder-mead", "svi"]);
    assert!(dir.path().join("curves.csv").exists());
    assert!(dir.path().join("study.config.json").exists());
}

#[test]
fn malformed_config_reports_the_field() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(&config, "[study.svi]\nsteps = \"lots\"\n").unwrap();
    let out = tirefit(&["study", "--config", s(&config)]);
    assert_eq!(code(&out), 2);
    let err = stderr_json(&out);
    assert_eq!(err["error"]["field"], "study.svi.steps");

    std::fs::write(&config, "[study]\nno_such_field = 1\n").unwrap();
    assert_eq!(code(&tirefit(&["study", "--config", s(&config)])), 2);
}

#[test]
fn sobol_flags_zero_variance_points() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("s.csv");
    let out = tirefit(&["sobol", "--grid", "0,0.05", "--samples", "2000", "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&out_path).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][5], "1");
    assert_eq!(&rows[1][5], "0");
    assert!(dir.path().join("s.config.json").exists());
}

#[test]
fn both_methods_recover_peak_at_full_excitation() {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path(), 0.75, 4);
    for method in ["svi", "nelder-mead"] {
        let out_path = dir.path().join(format!("{method}.json"));
        let out = tirefit(&["fit", "--data", s(&data), "--method", method, "--out", s(&out_path)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let d = mean(&read_json(&out_path))[2];
        assert!((d - 1.5).abs() / 1.5 < 0.05, "{method}: D = {d}");
    }
}

#[test]
fn empty_dataset_is_insufficient_data() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("empty.csv");
    std::fs::write(&data, "excitation,force_coeff\n").unwrap();
    let out = tirefit(&["fit", "--data", s(&data), "--method", "nelder-mead"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_tirefit"))
        .args(["sobol", "--grid", "0.1", "--samples", "10"])
        .env("TIREFIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn percent_slip_is_converted_on_ingest() {
    let dir = TempDir::new().unwrap();
    let frac = write_data(dir.path(), 0.3, 5);
    let pct = dir.path().join("pct.csv");
    let mut data = io::read_dataset(File::open(&frac).unwrap()).unwrap();
    for s in &mut data.samples {
        s.excitation *= 100.0;
    }
    io::write_dataset(&data, File::create(&pct).unwrap()).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let nm = ["--method", "nelder-mead"];
    assert_eq!(code(&tirefit(&[&["fit", "--data", s(&frac), "--out", s(&a)][..], &nm[..]].concat())), 0);
    let out = tirefit(&[&["fit", "--data", s(&pct), "--excitation-unit", "percent", "--out", s(&b)][..], &nm[..]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (ma, mb) = (mean(&read_json(&a)), mean(&read_json(&b)));
    for k in 0..4 {
        assert!((ma[k] - mb[k]).abs() < 1e-6 * ma[k].abs().max(1.0), "{ma:?} vs {mb:?}");
    }
}
