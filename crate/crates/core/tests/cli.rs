use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use onlinegraph::cli::{BatchLine, GridReport, MetricsRecord, TrackLine};
use onlinegraph::GraphSnapshot;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_onlinegraph"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const SMALL_SCENARIO: &str =
    r#"{"n_nodes": 8, "er_prob": 0.4, "t_total": 300, "t_switch": 150, "rewire_fraction": 0.4, "seed": 3}"#;
const SMALL_PARAMS: &str = r#"{"alpha": 1.0, "beta": 0.05, "gamma": 0.02}"#;

fn simulated(dir: &Path) {
    write(dir, "scenario.json", SMALL_SCENARIO);
    let out = run(&["simulate", "--config", "scenario.json", "--out", "sim"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    simulated(dir.path());
    let first = fs::read(dir.path().join("sim/signals.csv")).unwrap();
    let truth = fs::read(dir.path().join("sim/ground_truth.json")).unwrap();
    assert!(run(&["simulate", "--config", "scenario.json", "--out", "again"], dir.path()).status.success());
    assert_eq!(first, fs::read(dir.path().join("again/signals.csv")).unwrap());
    assert_eq!(truth, fs::read(dir.path().join("again/ground_truth.json")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("sim/manifest.json")).unwrap(),
        fs::read(dir.path().join("again/manifest.json")).unwrap()
    );

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,1,2,3,4,5,6,7,8");
    assert_eq!(lines.count(), 300);

    let truths: Vec<GraphSnapshot> = serde_json::from_slice(&truth).unwrap();
    assert_eq!(truths.iter().map(|s| s.t).collect::<Vec<_>>(), vec![1, 151]);

    assert!(run(&["simulate", "--config", "scenario.json", "--out", "other", "--seed", "4"], dir.path())
        .status
        .success());
    assert_ne!(
        fs::read(dir.path().join("sim/signals.csv")).unwrap(),
        fs::read(dir.path().join("other/signals.csv")).unwrap()
    );
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("other/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "bad.json",
        r#"{"n_nodes": 8, "er_prob": 0.4, "t_total": 100, "t_switch": 150, "rewire_fraction": 0.4, "seed": 3}"#,
    );
    let out = run(&["simulate", "--config", "bad.json", "--out", "sim"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_switch"));

    write(dir.path(), "typo.json", r#"{"n_nodes": 8, "er_porb": 0.4}"#);
    assert_eq!(run(&["simulate", "--config", "typo.json", "--out", "sim"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--config", "missing.json", "--out", "sim"], dir.path()).status.code(), Some(2));
}

#[test]
fn online_batch_and_track_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulated(d);
    write(d, "hp.json", SMALL_PARAMS);
    let out = run(
        &[
            "learn-online", "--signals", "sim/signals.csv", "--config", "hp.json", "--truth", "sim/ground_truth.json",
            "--out", "online", "--stride", "100",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let recs: Vec<MetricsRecord> = read_jsonl(&d.join("online/metrics.jsonl"));
    assert_eq!(recs.len(), 300);
    assert!(recs.iter().enumerate().all(|(i, r)| r.t == i as u64 + 1 && r.date == r.t.to_string()));
    assert!(recs.iter().all(|r| r.f_measure.is_some() && r.rel_dev.is_some()));
    let raw: Value = serde_json::from_str(fs::read_to_string(d.join("online/metrics.jsonl")).unwrap().lines().next().unwrap())
        .unwrap();
    for key in ["t", "objective", "f_measure", "mu", "eta", "min_degree", "rel_dev"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }

    let mut snaps: Vec<String> = fs::read_dir(d.join("online/snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    snaps.sort();
    assert_eq!(snaps, vec!["snapshot_100.json", "snapshot_200.json", "snapshot_300.json"]);
    let last: GraphSnapshot = serde_json::from_slice(&fs::read(d.join("online/snapshots/snapshot_300.json")).unwrap()).unwrap();
    let fin: GraphSnapshot = serde_json::from_slice(&fs::read(d.join("online/final.json")).unwrap()).unwrap();
    assert_eq!(last, fin);

    let out = run(
        &[
            "track", "--signals", "sim/signals.csv", "--metrics", "online/metrics.jsonl", "--config", "hp.json", "--out",
            "track.jsonl", "--batch-out", "batch.jsonl", "--truth", "sim/ground_truth.json",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<TrackLine> = read_jsonl(&d.join("track.jsonl"));
    assert_eq!(lines.len(), 300);
    assert!(lines.iter().all(|l| !l.record.violation && l.record.err <= l.record.bound));
    // the ground truth changes after t = 150 and the online iterate lags behind
    let mean_gap = |r: std::ops::Range<usize>| lines[r.clone()].iter().map(|l| l.rel_gap.unwrap()).sum::<f64>() / r.len() as f64;
    assert!(mean_gap(150..200) > mean_gap(100..150), "{} vs {}", mean_gap(150..200), mean_gap(100..150));
    let batch: Vec<BatchLine> = read_jsonl(&d.join("batch.jsonl"));
    assert_eq!(batch.len(), 300);
    assert!(batch.iter().all(|b| b.converged && b.f_measure.is_some()));
    assert!(d.join("track.jsonl.manifest.json").exists());

    let out = run(&["learn-batch", "--signals", "sim/signals.csv", "--config", "hp.json", "--out", "batch.json"], d);
    assert!(out.status.success());
    let res: Value = serde_json::from_slice(&fs::read(d.join("batch.json")).unwrap()).unwrap();
    assert_eq!(res["converged"], true);
    assert!(res["kkt_residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(res["graph"]["n"], 8);
}

#[test]
fn track_rejects_inconsistent_inputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulated(d);
    write(d, "hp.json", SMALL_PARAMS);
    assert!(run(&["learn-online", "--signals", "sim/signals.csv", "--config", "hp.json", "--out", "online"], d)
        .status
        .success());

    write(d, "other.json", r#"{"alpha": 2.0, "beta": 0.05, "gamma": 0.02}"#);
    let args = |cfg: &'static str, metrics: &'static str| {
        vec!["track", "--signals", "sim/signals.csv", "--metrics", metrics, "--config", cfg, "--out", "t.jsonl"]
    };
    let out = run(&args("other.json", "online/metrics.jsonl"), d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));

    write(d, "empty.jsonl", "");
    assert_eq!(run(&args("hp.json", "empty.jsonl"), d).status.code(), Some(2));

    let text = fs::read_to_string(d.join("online/metrics.jsonl")).unwrap();
    let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    write(d, "short.jsonl", &truncated);
    assert_eq!(run(&args("hp.json", "short.jsonl"), d).status.code(), Some(2));
}

#[test]
fn stationary_stream_error_decays() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // the same signal vector repeated: z is constant, so the batch optimum never moves
    let mut csv = String::from("t,a,b,c,d\n");
    for t in 1..=200 {
        csv.push_str(&format!("{t},0.1,1.3,-0.4,0.9\n"));
    }
    write(d, "flat.csv", &csv);
    write(d, "hp.json", r#"{"alpha": 1.0, "beta": 0.5, "gamma": 0.5}"#);
    assert!(run(&["learn-online", "--signals", "flat.csv", "--config", "hp.json", "--out", "on"], d).status.success());
    let out = run(&["track", "--signals", "flat.csv", "--metrics", "on/metrics.jsonl", "--config", "hp.json", "--out", "t.jsonl"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<TrackLine> = read_jsonl(&d.join("t.jsonl"));
    let late: Vec<&TrackLine> = lines.iter().skip(60).collect();
    assert!(late.iter().all(|l| l.record.v < 1e-8));
    assert!(lines[199].record.err < 1e-3 * lines[0].record.err.max(1e-3));
    assert!(lines.iter().skip(60).all(|l| l.record.err <= l.record.simplified_bound + 1e-12));
}

#[test]
fn learn_batch_two_node_closed_form_and_iteration_cap() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // (x_1 - x_2)^2 averages to z = 2.5
    write(d, "two.csv", "t,a,b\n1,0,1\n2,0,2\n");
    write(d, "hp.json", r#"{"alpha": 2.0, "beta": 0.5}"#);
    assert!(run(&["learn-batch", "--signals", "two.csv", "--config", "hp.json", "--out", "b.json"], d).status.success());
    let res: Value = serde_json::from_slice(&fs::read(d.join("b.json")).unwrap()).unwrap();
    let w = res["graph"]["edges"][0][2].as_f64().unwrap();
    let (z, alpha, beta) = (2.5f64, 2.0, 0.5);
    let expected = (-z + (z * z + 8.0 * beta * alpha).sqrt()) / (4.0 * beta);
    assert!((w - expected).abs() < 1e-8, "{w} vs {expected}");

    write(d, "capped.json", r#"{"alpha": 2.0, "beta": 0.5, "batch_max_iters": 1}"#);
    let out = run(&["learn-batch", "--signals", "two.csv", "--config", "capped.json", "--out", "c.json"], d);
    assert_eq!(out.status.code(), Some(0));
    let res: Value = serde_json::from_slice(&fs::read(d.join("c.json")).unwrap()).unwrap();
    assert_eq!(res["converged"], false);
}

#[test]
fn learn_online_input_errors() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulated(d);
    write(d, "hp.json", SMALL_PARAMS);
    write(d, "truth3.json", r#"[{"t": 1, "n": 3, "edges": [[1, 2, 1.0]]}]"#);
    let out = run(
        &["learn-online", "--signals", "sim/signals.csv", "--config", "hp.json", "--truth", "truth3.json", "--out", "o"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    write(d, "neg.json", r#"{"alpha": -1.0, "beta": 0.05}"#);
    assert_eq!(
        run(&["learn-online", "--signals", "sim/signals.csv", "--config", "neg.json", "--out", "o"], d).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["learn-online", "--signals", "sim/signals.csv", "--config", "hp.json", "--out", "o", "--stride", "0"], d)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["learn-online", "--signals", "sim/signals.csv", "--config", "hp.json", "--out", "o", "--transform", "fft"], d)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn grid_search_reports_argmax() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulated(d);
    write(d, "grid.json", r#"{"alpha": [0.316, 1.0], "beta": [0.05, 0.3], "gamma": 0.02, "window": 50}"#);
    let out = run(
        &["grid-search", "--signals", "sim/signals.csv", "--config", "grid.json", "--truth", "sim/ground_truth.json", "--out", "g.json"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: GridReport = serde_json::from_slice(&fs::read(d.join("g.json")).unwrap()).unwrap();
    assert_eq!(report.points.len(), 4);
    assert!(report.points.iter().any(|p| p.alpha == 0.316 && p.beta == 0.05));
    let best = report.points.iter().map(|p| p.mean_f).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.best.mean_f, best);

    write(d, "one.json", r#"{"alpha": [3.162], "beta": [0.088]}"#);
    assert!(run(
        &["grid-search", "--signals", "sim/signals.csv", "--config", "one.json", "--truth", "sim/ground_truth.json", "--out", "g1.json"],
        d,
    )
    .status
    .success());
    let report: GridReport = serde_json::from_slice(&fs::read(d.join("g1.json")).unwrap()).unwrap();
    assert_eq!((report.best.alpha, report.best.beta), (3.162, 0.088));

    write(d, "empty.json", r#"{"alpha": [], "beta": [0.1]}"#);
    let out = run(
        &["grid-search", "--signals", "sim/signals.csv", "--config", "empty.json", "--truth", "sim/ground_truth.json", "--out", "g2.json"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_transforms() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write(d, "prices.csv", "date,A,B\n2020-01-02,100,50\n2020-01-03,110,,\n2020-01-03,110,40\n2020-01-06,121,40\n");
    let out = run(&["ingest", "--signals", "prices.csv", "--transform", "gradient", "--out", "ret.csv"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let load = onlinegraph::ingest::load_csv(&d.join("ret.csv")).unwrap();
    assert_eq!(load.stream.timestamps(), &["2020-01-03", "2020-01-06"]);
    let v = load.stream.values();
    assert!((v[0][0] - 0.1).abs() < 1e-12 && (v[0][1] + 0.2).abs() < 1e-12);
    assert!((v[1][0] - 0.1).abs() < 1e-12 && v[1][1] == 0.0);

    assert!(run(&["ingest", "--signals", "prices.csv", "--transform", "log", "--out", "log.csv"], d).status.success());
    let load = onlinegraph::ingest::load_csv(&d.join("log.csv")).unwrap();
    assert!((load.stream.values()[0][0] - 100f64.ln()).abs() < 1e-12);

    write(d, "neg.csv", "date,A,B\n2020-01-02,1,-1\n");
    assert_eq!(run(&["ingest", "--signals", "neg.csv", "--transform", "log", "--out", "x.csv"], d).status.code(), Some(2));
    write(d, "empty.csv", "");
    assert_eq!(run(&["ingest", "--signals", "empty.csv", "--out", "x.csv"], d).status.code(), Some(2));
}
