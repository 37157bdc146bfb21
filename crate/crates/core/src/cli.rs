//! Command-line front end: reproducible experiment runs that read and write
//! plain CSV / JSON / JSONL files.
//!
//! Every command writes a run manifest next to its output with the SHA-256 of
//! the config and input files. Exit codes: 0 on success, 2 for bad input, 3 when
//! a checked invariant fails.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batch::solve_batch;
use crate::error::{Error, Result};
use crate::graph::{distance_vector, DistanceVector, GraphSnapshot};
use crate::ingest::{discrete_gradient, load_csv, log_transform, Returns, SignalStream};
use crate::metrics::{f_measure, relative_deviation, EdgeScores};
use crate::objective::HyperParams;
use crate::online::{run_online_with, OnlineState};
use crate::synth::{generate_scenario, Scenario, ScenarioConfig};
use crate::tracking::{collect_tracking_samples, tracking_records, TrackingRecord};

#[derive(Debug, Parser)]
#[command(name = "onlinegraph", version, about = "Learn graphs from smooth signals, in batch or online")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a two-segment synthetic scenario: signals CSV and ground-truth graphs.
    Simulate(SimulateArgs),
    /// Run the online learner over a signal CSV.
    LearnOnline(LearnOnlineArgs),
    /// Solve the batch problem on the average pairwise distances of a signal CSV.
    LearnBatch(LearnBatchArgs),
    /// Recompute per-sample batch optima for an online run and evaluate the tracking bound.
    Track(TrackArgs),
    /// Evaluate a grid of (alpha, beta) by the mean F-measure over the final steps.
    GridSearch(GridSearchArgs),
    /// Apply a transform to a signal CSV and write the result.
    Ingest(IngestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Raw,
    Log,
    /// Single-step relative changes.
    Gradient,
}

#[derive(Debug, Clone, Args)]
pub struct SignalArgs {
    /// Signal CSV: a time column followed by one column per node.
    #[arg(long)]
    pub signals: PathBuf,
    #[arg(long, value_enum, default_value_t = Transform::Raw)]
    pub transform: Transform,
    /// Use log returns instead of simple returns with `--transform gradient`.
    #[arg(long)]
    pub log_returns: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct LearnOnlineArgs {
    #[command(flatten)]
    pub input: SignalArgs,
    /// Hyperparameter JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Ground-truth snapshots (JSON array) for per-step F-measure.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write a snapshot every `stride` samples.
    #[arg(long, default_value_t = 1)]
    pub stride: u64,
}

#[derive(Debug, Clone, Args)]
pub struct LearnBatchArgs {
    #[command(flatten)]
    pub input: SignalArgs,
    #[arg(long)]
    pub config: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub input: SignalArgs,
    /// Metrics JSONL written by `learn-online` on the same signals and config.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-sample batch optimum records here.
    #[arg(long)]
    pub batch_out: Option<PathBuf>,
    /// Ground truth for the F-measure of the batch optima.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridSearchArgs {
    #[command(flatten)]
    pub input: SignalArgs,
    /// Grid JSON: `{"alpha": [...], "beta": [...]}` plus optional fixed knobs.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: SignalArgs,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Input(#[from] Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

/// One line of the `learn-online` metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// 1-based sample index.
    pub t: u64,
    /// Time stamp of the sample as it appears in the signal file.
    pub date: String,
    /// Objective at the iterate the step started from.
    pub objective: f64,
    pub mu: f64,
    pub eta: f64,
    pub min_degree: f64,
    pub clamped: bool,
    /// Detected edges in the updated graph.
    pub edges: usize,
    /// Relative change of the updated graph against the previous one.
    pub rel_dev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_measure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

/// One line of the `track` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLine {
    pub date: String,
    #[serde(flatten)]
    pub record: TrackingRecord,
    /// `|F_t(w_t) - F_t(w_t*)| / |F_t(w_t*)|`.
    pub rel_gap: Option<f64>,
}

/// One line of the optional `track --batch-out` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLine {
    pub t: u64,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_measure: Option<f64>,
}

fn default_window() -> usize {
    500
}

/// `grid-search` config. Unset knobs keep the [`HyperParams`] defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub d_floor: Option<f64>,
    #[serde(default)]
    pub edge_threshold: Option<f64>,
    /// Number of final steps averaged.
    #[serde(default = "default_window")]
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub mean_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub window: usize,
    pub points: Vec<GridPoint>,
    pub best: GridPoint,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    config_sha256: Option<String>,
    seed: Option<u64>,
    /// Input path to SHA-256 of its contents.
    inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transform: Option<Transform>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<String>>,
}

impl Manifest {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: None,
            seed: None,
            inputs: BTreeMap::new(),
            transform: None,
            nodes: None,
        }
    }

    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn load_params(path: &Path, manifest: &mut Manifest) -> Result<HyperParams> {
    let bytes = read_input(path)?;
    manifest.config_sha256 = Some(sha256_hex(&bytes));
    let p: HyperParams = parse_json(path, &bytes)?;
    p.validate().map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(p)
}

fn load_signals(args: &SignalArgs, manifest: &mut Manifest) -> Result<SignalStream> {
    manifest.input(&args.signals, &read_input(&args.signals)?);
    manifest.transform = Some(args.transform);
    let raw = load_csv(&args.signals)?.stream;
    let stream = match args.transform {
        Transform::Raw => raw,
        Transform::Log => log_transform(&raw)?,
        Transform::Gradient => {
            let kind = if args.log_returns { Returns::Log } else { Returns::Simple };
            discrete_gradient(&raw, kind)?
        }
    };
    if stream.is_empty() {
        return Err(Error::Input(format!("{} has no usable samples", args.signals.display())));
    }
    if stream.n_nodes() < 2 {
        return Err(Error::Input(format!("{} has a single node column", args.signals.display())));
    }
    manifest.nodes = Some(stream.node_names().to_vec());
    Ok(stream)
}

fn load_truth(path: &Path, n: usize, manifest: &mut Manifest) -> Result<Vec<GraphSnapshot>> {
    let bytes = read_input(path)?;
    manifest.input(path, &bytes);
    let mut truths: Vec<GraphSnapshot> = parse_json(path, &bytes)?;
    if truths.is_empty() {
        return Err(Error::Input(format!("{} holds no graphs", path.display())));
    }
    if let Some(s) = truths.iter().find(|s| s.n_nodes() != n) {
        return Err(Error::Input(format!(
            "ground truth has {} nodes, signals have {n}",
            s.n_nodes()
        )));
    }
    truths.sort_by_key(|s| s.t);
    Ok(truths)
}

fn truth_scores(truths: &[GraphSnapshot], t: u64, w: &crate::graph::EdgeVector, threshold: f64) -> Result<Option<EdgeScores>> {
    Scenario::truth_at(truths, t).map(|g| f_measure(w, &g.edges, threshold)).transpose()
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a).map_err(Into::into),
        Command::LearnOnline(a) => learn_online(&a).map_err(Into::into),
        Command::LearnBatch(a) => learn_batch(&a).map_err(Into::into),
        Command::Track(a) => track(&a),
        Command::GridSearch(a) => grid_search(&a).map_err(Into::into),
        Command::Ingest(a) => ingest(&a).map_err(Into::into),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut manifest = Manifest::new("simulate");
    let bytes = read_input(&a.config)?;
    manifest.config_sha256 = Some(sha256_hex(&bytes));
    let mut cfg: ScenarioConfig = parse_json(&a.config, &bytes)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Error::Input(format!("{}: {e}", a.config.display())))?;
    manifest.seed = Some(cfg.seed);

    let scenario = generate_scenario(&cfg)?;
    let samples: Vec<Vec<f64>> = scenario.stream.collect();
    let signals = SignalStream::from_samples(samples)?;
    fs::create_dir_all(&a.out)?;
    signals.write_csv(BufWriter::new(File::create(a.out.join("signals.csv"))?), "t")?;
    write_json(&a.out.join("ground_truth.json"), &scenario.truths)?;
    manifest.write(&a.out.join("manifest.json"))?;
    log::info!("wrote {} samples on {} nodes to {}", signals.len(), cfg.n_nodes, a.out.display());
    Ok(())
}

fn learn_online(a: &LearnOnlineArgs) -> Result<()> {
    if a.stride == 0 {
        return Err(Error::Input("--stride must be at least 1".into()));
    }
    let mut manifest = Manifest::new("learn-online");
    let p = load_params(&a.config, &mut manifest)?;
    let stream = load_signals(&a.input, &mut manifest)?;
    let n = stream.n_nodes();
    let truths = a.truth.as_deref().map(|t| load_truth(t, n, &mut manifest)).transpose()?;

    let snap_dir = a.out.join("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let mut metrics = BufWriter::new(File::create(a.out.join("metrics.jsonl"))?);
    let state = OnlineState::with_defaults(n, &p);
    let mut prev = state.w.clone();
    let stamps = stream.timestamps();
    let final_state = run_online_with(stream.values(), &p, state, |diag, state| {
        let rel_dev = match relative_deviation(&state.w, &prev) {
            Ok(v) => Some(v),
            Err(Error::UndefinedValue(_)) => None,
            Err(e) => return Err(e),
        };
        let scores = match &truths {
            Some(tr) => truth_scores(tr, diag.t, &state.w, p.edge_threshold)?,
            None => None,
        };
        let rec = MetricsRecord {
            t: diag.t,
            date: stamps[diag.t as usize - 1].clone(),
            objective: diag.objective,
            mu: diag.mu,
            eta: diag.eta,
            min_degree: diag.min_degree,
            clamped: diag.clamped,
            edges: state.w.edge_count(p.edge_threshold),
            rel_dev,
            f_measure: scores.map(|s| s.f_measure),
            precision: scores.map(|s| s.precision),
            recall: scores.map(|s| s.recall),
        };
        serde_json::to_writer(&mut metrics, &rec)?;
        metrics.write_all(b"\n")?;
        if diag.t % a.stride == 0 {
            write_json(&snap_dir.join(format!("snapshot_{}.json", diag.t)), &state.snapshot())?;
        }
        prev.clone_from(&state.w);
        Ok(())
    })?;
    metrics.flush()?;
    if final_state.clamp_events > 0 {
        log::warn!("degree floor was active on {} steps", final_state.clamp_events);
    }
    write_json(&a.out.join("final.json"), &final_state.snapshot())?;
    manifest.write(&a.out.join("manifest.json"))?;
    Ok(())
}

fn learn_batch(a: &LearnBatchArgs) -> Result<()> {
    let mut manifest = Manifest::new("learn-batch");
    let p = load_params(&a.config, &mut manifest)?;
    let stream = load_signals(&a.input, &mut manifest)?;
    let n = stream.n_nodes();
    let mut sum = vec![0.0; n * (n - 1) / 2];
    for x in stream.values() {
        for (s, d) in sum.iter_mut().zip(distance_vector(x)?.dists()) {
            *s += d;
        }
    }
    let t = stream.len() as f64;
    let z = DistanceVector::new(n, sum.into_iter().map(|s| s / t).collect())?;
    let result = solve_batch(&z, &p, &crate::graph::EdgeVector::uniform(n))?;
    write_json(&a.out, &result)?;
    manifest.write(&manifest_path(&a.out))?;
    Ok(())
}

/// Relative tolerance when matching recomputed objectives against a metrics file.
const REPLAY_RTOL: f64 = 1e-9;

fn track(a: &TrackArgs) -> std::result::Result<(), CliError> {
    let mut manifest = Manifest::new("track");
    let p = load_params(&a.config, &mut manifest)?;
    let stream = load_signals(&a.input, &mut manifest)?;
    manifest.input(&a.metrics, &read_input(&a.metrics)?);
    let logged: Vec<MetricsRecord> = read_jsonl(&a.metrics)?;
    if logged.is_empty() {
        return Err(Error::Input(format!("{} has no records", a.metrics.display())).into());
    }
    if logged.len() != stream.len() {
        return Err(Error::Input(format!(
            "metrics have {} records but the signals give {} samples",
            logged.len(),
            stream.len()
        ))
        .into());
    }
    let n = stream.n_nodes();
    let truths = a.truth.as_deref().map(|t| load_truth(t, n, &mut manifest)).transpose()?;

    let mut batch_lines = Vec::new();
    let mut batch_f = Vec::new();
    let samples = collect_tracking_samples(stream.values(), &p, OnlineState::with_defaults(n, &p), |t, b| {
        if !b.converged {
            log::warn!("batch solve at t={t} stopped after {} iterations", b.iterations);
        }
        batch_lines.push(BatchLine {
            t,
            objective: b.final_objective,
            iterations: b.iterations,
            kkt_residual: b.kkt_residual,
            converged: b.converged,
            f_measure: None,
        });
        if let Some(tr) = &truths {
            batch_f.push(truth_scores(tr, t, &b.w_star, p.edge_threshold));
        }
    })?;
    for (line, f) in batch_lines.iter_mut().zip(batch_f) {
        line.f_measure = f?.map(|s| s.f_measure);
    }

    for (rec, s) in logged.iter().zip(&samples) {
        let scale = s.objective.abs().max(1.0);
        if rec.t != s.t || (rec.objective - s.objective).abs() > REPLAY_RTOL * scale {
            return Err(Error::Input(format!(
                "metrics record t={} (objective {}) does not match the replayed run at t={} (objective {}); \
                 were they produced from the same signals, transform and config?",
                rec.t, rec.objective, s.t, s.objective
            ))
            .into());
        }
    }

    let records = tracking_records(&samples, p.beta)?;
    let lines: Vec<TrackLine> = records
        .into_iter()
        .zip(&logged)
        .map(|(record, m)| {
            let rel_gap = (record.batch_objective != 0.0)
                .then(|| (record.objective - record.batch_objective).abs() / record.batch_objective.abs());
            TrackLine { date: m.date.clone(), record, rel_gap }
        })
        .collect();
    write_jsonl(&a.out, &lines)?;
    if let Some(path) = &a.batch_out {
        write_jsonl(path, &batch_lines)?;
    }
    manifest.write(&manifest_path(&a.out))?;

    let violations: Vec<u64> = lines.iter().filter(|l| l.record.violation).map(|l| l.record.t).collect();
    if !violations.is_empty() {
        return Err(CliError::Invariant(format!(
            "tracking error exceeds its bound at {} samples (first t={})",
            violations.len(),
            violations[0]
        )));
    }
    Ok(())
}

/// Mean F-measure over the last `window` steps of an online run.
pub fn final_window_f(stream: &[Vec<f64>], truths: &[GraphSnapshot], p: &HyperParams, window: usize) -> Result<f64> {
    let n = truths[0].n_nodes();
    let start = stream.len().saturating_sub(window) as u64;
    let (mut sum, mut count) = (0.0, 0usize);
    run_online_with(stream, p, OnlineState::with_defaults(n, p), |diag, state| {
        if diag.t > start {
            if let Some(s) = truth_scores(truths, diag.t, &state.w, p.edge_threshold)? {
                sum += s.f_measure;
                count += 1;
            }
        }
        Ok(())
    })?;
    if count == 0 {
        return Err(Error::Input("no ground truth covers the final window".into()));
    }
    Ok(sum / count as f64)
}

fn grid_search(a: &GridSearchArgs) -> Result<()> {
    let mut manifest = Manifest::new("grid-search");
    let bytes = read_input(&a.config)?;
    manifest.config_sha256 = Some(sha256_hex(&bytes));
    let grid: GridConfig = parse_json(&a.config, &bytes)?;
    if grid.alpha.is_empty() || grid.beta.is_empty() {
        return Err(Error::Input("grid needs at least one alpha and one beta".into()));
    }
    if grid.window == 0 {
        return Err(Error::Input("window must be at least 1".into()));
    }
    let stream = load_signals(&a.input, &mut manifest)?;
    let truths = load_truth(&a.truth, stream.n_nodes(), &mut manifest)?;

    let mut params = Vec::new();
    for &alpha in &grid.alpha {
        for &beta in &grid.beta {
            let mut p = HyperParams::new(alpha, beta);
            p.gamma = grid.gamma.unwrap_or(p.gamma);
            p.d_floor = grid.d_floor.unwrap_or(p.d_floor);
            p.edge_threshold = grid.edge_threshold.unwrap_or(p.edge_threshold);
            p.validate().map_err(|e| Error::Input(format!("grid point ({alpha}, {beta}): {e}")))?;
            params.push(p);
        }
    }
    let points = params
        .par_iter()
        .map(|p| {
            let mean_f = final_window_f(stream.values(), &truths, p, grid.window)?;
            Ok(GridPoint { alpha: p.alpha, beta: p.beta, mean_f })
        })
        .collect::<Result<Vec<_>>>()?;
    // first maximum in grid order
    let best = points
        .iter()
        .copied()
        .reduce(|b, q| if q.mean_f > b.mean_f { q } else { b })
        .expect("grid is non-empty");
    write_json(&a.out, &GridReport { window: grid.window, points, best })?;
    manifest.write(&manifest_path(&a.out))?;
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let mut manifest = Manifest::new("ingest");
    let stream = load_signals(&a.input, &mut manifest)?;
    stream.write_csv(BufWriter::new(File::create(&a.out)?), "date")?;
    manifest.write(&manifest_path(&a.out))?;
    Ok(())
}
