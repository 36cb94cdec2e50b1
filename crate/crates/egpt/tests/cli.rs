use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use egpt::config::RunConfig;
use egpt::dataset::{dataset_files, read_dataset};
use egpt::error::exit;
use egpt::report::read_sweep_log;
use egpt_core::graphmetrics;

const BIN: &str = env!("CARGO_BIN_EXE_egpt");

fn egpt(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const TINY: &str = "seed = 4
[dataset]
users = 14
steps = 5
initial_degree = 2
final_degree = 8
[train]
batch_size = 8
d_h = 8
layers = 1
heads = 2
iterations = 6
";

#[test]
fn print_config_dumps_a_loadable_default() {
    let out = egpt(&["print-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
    assert!(text.contains("users = 500"));
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let o = egpt(&["generate", "--config", p(&cfg), "--out", p(out), "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = |d: &Path| dataset_files(d).unwrap().iter().map(|f| fs::read(f).unwrap()).collect::<Vec<_>>();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    assert_eq!(read_dataset(&a).unwrap().seed, 4);
}

#[test]
fn invalid_config_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nusers = 1\n");
    let o = egpt(&["generate", "--config", p(&cfg), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(i32::from(exit::CONFIG)));
    assert!(String::from_utf8_lossy(&o.stderr).contains("users"));
}

#[test]
fn missing_dataset_exits_with_io_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = egpt(&["train", "--dataset", p(&dir.path().join("absent")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(i32::from(exit::IO)));
}

#[test]
fn empty_sweep_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\ngrid = []\n");
    let o = egpt(&["sweep", "--config", p(&cfg), "--dataset", p(dir.path())]);
    assert_eq!(o.status.code(), Some(i32::from(exit::USAGE)));
}

#[test]
fn train_predict_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let data = dir.path().join("data");
    let ck = dir.path().join("ck.json");
    let runs = dir.path().join("runs");
    assert!(egpt(&["generate", "--config", p(&cfg), "--dataset", p(&data)]).status.success());
    let before: Vec<Vec<u8>> = dataset_files(&data).unwrap().iter().map(|f| fs::read(f).unwrap()).collect();

    let o = egpt(&["train", "--config", p(&cfg), "--dataset", p(&data), "--checkpoint", p(&ck), "--out", p(&runs)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(runs.join("train_report.json")).unwrap();
    // Same seed, same report apart from timing.
    let runs2 = dir.path().join("runs2");
    let o = egpt(&["train", "--config", p(&cfg), "--dataset", p(&data), "--checkpoint", p(&dir.path().join("ck2.json")), "--out", p(&runs2)]);
    assert!(o.status.success());
    let strip = |s: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("wall_clock_secs");
        v
    };
    assert_eq!(strip(&report), strip(&fs::read_to_string(runs2.join("train_report.json")).unwrap()));
    assert_eq!(fs::read(&ck).unwrap(), fs::read(dir.path().join("ck2.json")).unwrap());

    let o = egpt(&["predict", "--config", p(&cfg), "--dataset", p(&data), "--checkpoint", p(&ck), "--out", p(&runs), "--steps", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let predicted = read_dataset(&runs.join("prediction")).unwrap();
    assert_eq!(predicted.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![6, 7]);
    let mut recs = csv::Reader::from_path(runs.join("recommendations.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = recs.records().map(|r| r.unwrap()).collect();
    assert!(!rows.is_empty());
    for w in rows.windows(2) {
        if w[0][0] == w[1][0] && w[0][1] == w[1][1] {
            let (a, b): (f64, f64) = (w[0][4].parse().unwrap(), w[1][4].parse().unwrap());
            assert!(a >= b, "ranked lists must descend");
        }
    }

    let o = egpt(&["evaluate", "--config", p(&cfg), "--dataset", p(&data), "--checkpoint", p(&ck), "--out", p(&runs)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let structure = fs::read_to_string(runs.join("truth_structure.csv")).unwrap();
    let density_row = structure.lines().nth(1).unwrap();
    assert_eq!(density_row.split(',').count(), 1 + 5);
    let predicted_structure = fs::read_to_string(runs.join("predicted_structure.csv")).unwrap();
    assert_eq!(predicted_structure.lines().nth(1).unwrap().split(',').count(), 1 + 5);

    // Ground-truth tables match the in-process metrics.
    let dataset = read_dataset(&data).unwrap();
    let expected = graphmetrics::report(&dataset.snapshots).unwrap();
    let doc: egpt::report::MetricsDoc =
        serde_json::from_str(&fs::read_to_string(runs.join("truth_metrics.json")).unwrap()).unwrap();
    assert_eq!(doc, egpt::report::MetricsDoc::new(&expected));
    let parsed: Vec<f64> = density_row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(parsed, expected.density);

    // Inputs untouched by any command.
    let after: Vec<Vec<u8>> = dataset_files(&data).unwrap().iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(before, after);

    let o = egpt(&["predict", "--config", p(&cfg), "--dataset", p(&data), "--checkpoint", p(&ck), "--out", p(&runs), "--steps", "12"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("capacity"));
}

#[test]
fn undefined_metrics_are_marked_not_zeroed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nusers = 6\nsteps = 3\ninitial_degree = 1\nfinal_degree = 1\n");
    let data = dir.path().join("data");
    assert!(egpt(&["generate", "--config", p(&cfg), "--dataset", p(&data)]).status.success());
    let d = read_dataset(&data).unwrap();
    let r = graphmetrics::report(&d.snapshots).unwrap();
    // A perfect matching has no connected triples.
    assert_eq!(r.triadic_closure, vec![None; 3]);
    let written = egpt::report::write_metrics(dir.path(), "m", &r).unwrap();
    let structure = fs::read_to_string(&written[0]).unwrap();
    assert_eq!(structure.lines().nth(2).unwrap(), "triadic_closure,NA,NA,NA");
}

#[test]
fn killed_sweep_keeps_completed_rows() {
    let dir = tempfile::tempdir().unwrap();
    // One quick cell, then cells far too long to finish before the kill.
    let mut body = String::from(TINY);
    body.push_str("[[sweep.grid]]\nbatch_size = 8\nd_h = 8\nlayers = 1\nheads = 2\niterations = 3\n");
    for _ in 0..2 {
        body.push_str("[[sweep.grid]]\nbatch_size = 8\nd_h = 8\nlayers = 1\nheads = 2\niterations = 10000000\n");
    }
    let cfg = write_config(dir.path(), &body);
    let data = dir.path().join("data");
    assert!(egpt(&["generate", "--config", p(&cfg), "--dataset", p(&data)]).status.success());
    let out = dir.path().join("sweep");
    let mut child = Command::new(BIN)
        .args(["sweep", "--config", p(&cfg), "--dataset", p(&data), "--out", p(&out)])
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let log = out.join("sweep.csv");
    let start = Instant::now();
    loop {
        let rows = fs::read_to_string(&log).map(|s| s.lines().count()).unwrap_or(0);
        if rows >= 2 {
            break;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "first sweep row never appeared");
        std::thread::sleep(Duration::from_millis(20));
    }
    std::thread::sleep(Duration::from_millis(200));
    child.kill().unwrap();
    let status = child.wait().unwrap();
    assert!(!status.success(), "sweep should have been interrupted");
    let rows = read_sweep_log(&log).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, 0);
    assert!(rows[0].1.is_some());
    assert!(!out.join("sweep.json").exists());
}
