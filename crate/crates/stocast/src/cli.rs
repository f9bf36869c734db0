//! Command-line front end. Every command writes a `manifest.json` beside its
//! outputs; progress goes to stdout, diagnostics to stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stocast_core::dataset::{active_cells, fit_standardization, HORIZON_HOURS};
use stocast_core::eval::{attribution_summary, draw_subset, metrics, r_squared, RegionLevel};
use stocast_core::forecast::{accumulate, decompose_errors, run_longterm, run_nowcast, Scheme, WeatherMode};
use stocast_core::net::{init_params, Architecture};
use stocast_core::rng::derive_seed;
use stocast_core::synth::{IssuePerturbation, SyntheticConfig};
use stocast_core::train::{predict_counts, train_loop, LossParams, TrainConfig, SPLIT_NAMES};

use crate::checkpoint::{load_checkpoint, save_checkpoint, TrainingMeta};
use crate::error::{Error, Result};
use crate::formats::{parse_hour, read_event_dir, read_grid, read_json, read_text, write_csv_with_header, write_json, write_panel, Grid};
use crate::pipeline::{dataset_manifest, ingest_files, materialize, read_panels, synthetic_issues, write_issues, write_synthetic, DatasetManifest};
use crate::report::{write_attributions, write_history, write_metric_table, MetricTable, RunManifest};
use crate::runs::{read_issue_dir, read_run, served_cells, summarize_run, write_run};

#[derive(Debug, Parser)]
#[command(name = "stocast", version, about = "Gridded tropical-cyclone outage forecasting")]
pub struct Cli {
    /// Worker threads; every pipeline currently runs on one.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic storms with ground truth.
    Synth(SynthArgs),
    /// Derive forecast issue files from an ingested panel.
    SynthIssues(SynthIssuesArgs),
    /// Build an event panel from raw event files.
    Ingest(IngestArgs),
    /// Train one leave-one-storm-out model.
    Train(TrainArgs),
    /// Metric table for a trained model.
    Eval(EvalArgs),
    /// Rolling nowcast or long-term forecast over one event.
    Forecast(ForecastArgs),
    /// Split forecast error into model and weather parts.
    Decompose(DecomposeArgs),
    /// Grouped Shapley attributions.
    Explain(ExplainArgs),
    /// Regional totals of a forecast run.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (JSON); the built-in four-storm setup when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthIssuesArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Event directory whose track.csv becomes the issued track.
    #[arg(long)]
    pub event: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub every_hours: usize,
    #[arg(long, default_value_t = 0.0)]
    pub wind_bias: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rain_bias: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub event: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub panels: Vec<PathBuf>,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub holdout: String,
    /// Checkpoint path; history.csv, dataset.json and manifest.json go
    /// beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub panels: Vec<PathBuf>,
    #[arg(long)]
    pub grid: PathBuf,
    /// dataset.json written by `train`.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Nowcast,
    Longterm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeatherArg {
    Ideal,
    Actual,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum)]
    pub weather: WeatherArg,
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    /// Directory of `*.issue` files (required with `--weather actual`).
    #[arg(long)]
    pub issues: Option<PathBuf>,
    /// First forecast hour (ISO-8601); six hours after the panel start by default.
    #[arg(long)]
    pub start: Option<String>,
    /// Defaults to as many six-hour steps as the panel allows.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub pgm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub nowcast_ideal: PathBuf,
    #[arg(long)]
    pub nowcast_actual: PathBuf,
    #[arg(long)]
    pub longterm_ideal: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub panels: Vec<PathBuf>,
    #[arg(long)]
    pub grid: PathBuf,
    /// dataset.json written by `train`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_background: usize,
    #[arg(long, default_value_t = 100)]
    pub n_explained: usize,
    #[arg(long, default_value_t = 64)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Town,
    County,
    City,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, value_enum)]
    pub level: LevelArg,
    #[arg(long)]
    pub residents: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Input(String::from("--threads must be at least 1")));
    }
    if cli.threads > 1 {
        eprintln!("note: --threads {} requested; pipelines run single-threaded", cli.threads);
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::SynthIssues(a) => cmd_synth_issues(&a),
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Forecast(a) => cmd_forecast(&a),
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Aggregate(a) => cmd_aggregate(&a),
    }
}

fn out_dir_of(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn finish(mut manifest: RunManifest, dir: &Path, started: Instant) -> Result<()> {
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write(dir)
}

/// Reads a JSON config strictly, naming the offending field on failure.
fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let text = read_text(path)?;
    let value = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    Ok((value, text))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("synth");
    let cfg: SyntheticConfig = match &a.config {
        Some(p) => {
            let (cfg, text) = read_config(p)?;
            manifest.hash_config(text.as_bytes());
            cfg
        }
        None => SyntheticConfig::default(),
    };
    cfg.validate()?;
    manifest.seeds.insert(String::from("seed"), cfg.seed);
    let (_, events) = write_synthetic(&cfg, &a.out)?;
    write_json(&a.out.join("synth_config.json"), &cfg)?;
    for ev in &events {
        println!("{}: {} outages", ev.event_id, ev.truth.total_outages());
        manifest.outputs.push(ev.event_id.clone());
    }
    manifest.outputs.extend(["grid.csv", "grid.json", "dem.asc", "landuse.asc", "synth_config.json"].map(String::from));
    finish(manifest, &a.out, started)
}

pub fn cmd_synth_issues(a: &SynthIssuesArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("synth-issues");
    let grid = read_grid(&a.grid)?;
    let panel = crate::formats::read_panel(&a.panel)?;
    let event = read_event_dir(&a.event)?;
    let pert = IssuePerturbation { wind_bias: a.wind_bias, rain_bias: a.rain_bias, noise_sd: a.noise, seed: a.seed };
    let issues = synthetic_issues(&panel, &event.track, a.every_hours, &pert)?;
    let paths = write_issues(&a.out, &issues, &grid)?;
    for p in [&a.panel, &a.grid] {
        manifest.hash_input(p)?;
    }
    manifest.seeds.insert(String::from("noise"), a.seed);
    manifest.outputs = paths.iter().map(|p| p.display().to_string()).collect();
    println!("{} issues written", paths.len());
    finish(manifest, &a.out, started)
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("ingest");
    let grid = read_grid(&a.grid)?;
    let event = read_event_dir(&a.event)?;
    let (panel, warnings) = ingest_files(&event, &grid)?;
    for w in &warnings {
        eprintln!("warning: {w:?}");
    }
    write_panel(&a.out, &panel)?;
    manifest.hash_input(&a.event)?;
    manifest.hash_input(&a.grid)?;
    manifest.outputs = vec![String::from("panel.json"), String::from("panel.f32")];
    println!("{}: {} cells x {} hours, {} outages", panel.event_id, panel.n_cells, panel.n_hours, panel.total_outages());
    finish(manifest, &a.out, started)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("train");
    let mut config = match &a.config {
        Some(p) => {
            let (cfg, text) = read_config::<TrainConfig>(p)?;
            manifest.hash_config(text.as_bytes());
            cfg
        }
        None => TrainConfig::default(),
    };
    if let Some(n) = a.max_epochs {
        config.max_epochs = n;
    }
    if let Some(lr) = a.lr {
        config.lr0 = lr;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let grid = read_grid(&a.grid)?;
    let panels = read_panels(&a.panels, &grid)?;
    let ids: Vec<String> = panels.iter().map(|p| p.event_id.clone()).collect();
    let active = active_cells(&grid.cells, &panels);
    let exp = stocast_core::dataset::LosoExperiment::new(&ids, &a.holdout, &active, config.seed)?;
    let splits = materialize(&exp, &panels, &grid)?;
    let stats = fit_standardization(&splits.data.train)?;
    let arch = Architecture::STOCAST;
    let mut init = init_params(arch, derive_seed(config.seed, 3));
    init.stats = stats.clone();
    let (model, history) = train_loop(&config, &splits.data.train, &splits.data.val, init, &mut |r| {
        println!(
            "epoch {} train {:.6} val {:.6} lr {:.3e}{}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.lr,
            if r.is_best { " best" } else { "" }
        );
    })?;
    let dir = out_dir_of(&a.out);
    let meta = TrainingMeta {
        holdout_event: Some(a.holdout.clone()),
        training_events: exp.training_event_ids.clone(),
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss(),
        config: config.clone(),
    };
    save_checkpoint(&model, Some(meta), &a.out)?;
    write_history(&dir.join("history.csv"), &history)?;
    write_json(&dir.join("dataset.json"), &dataset_manifest(&exp, &stats, &splits))?;
    for p in &a.panels {
        manifest.hash_input(p)?;
    }
    manifest.hash_input(&a.grid)?;
    manifest.seeds = BTreeMap::from([
        (String::from("cell_split"), config.seed),
        (String::from("sample_split"), exp.sample_seed()),
        (String::from("init"), derive_seed(config.seed, 3)),
    ]);
    let name = a.out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    manifest.outputs = vec![name.clone(), format!("{name}.params"), String::from("history.csv"), String::from("dataset.json")];
    finish(manifest, &dir, started)
}

fn six_hour_sums(rows: &[[f64; HORIZON_HOURS]]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().sum()).collect()
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("eval");
    let (model, ckpt) = load_checkpoint(&a.model, None)?;
    let grid = read_grid(&a.grid)?;
    let panels = read_panels(&a.panels, &grid)?;
    let split: DatasetManifest = read_json(&a.split)?;
    let splits = materialize(&split.experiment, &panels, &grid)?;
    let loss: LossParams = ckpt.training.as_ref().map_or_else(LossParams::default, |t| t.config.loss());
    let sets = [&splits.data.train, &splits.data.val, &splits.data.test_grid, &splits.test_event];
    let mut table = MetricTable { rows: Vec::new(), r_squared: BTreeMap::new() };
    for (name, samples) in SPLIT_NAMES.iter().zip(sets) {
        let pred = predict_counts(&model, samples);
        let obs: Vec<[f64; HORIZON_HOURS]> = samples.iter().map(|s| s.label_counts()).collect();
        let flat_p: Vec<f64> = pred.iter().flatten().copied().collect();
        let flat_o: Vec<f64> = obs.iter().flatten().copied().collect();
        let row = metrics(name, &flat_p, &flat_o, &loss)?;
        println!("{}", stocast_core::eval::describe(&row));
        table.rows.push(row);
        table.r_squared.insert(name.to_string(), r_squared(&six_hour_sums(&pred), &six_hour_sums(&obs))?);
    }
    write_metric_table(&a.out, &table)?;
    for p in [&a.model, &a.split, &a.grid] {
        manifest.hash_input(p)?;
    }
    for p in &a.panels {
        manifest.hash_input(p)?;
    }
    manifest.outputs = vec![String::from("metrics.csv"), String::from("metrics.json")];
    finish(manifest, &a.out, started)
}

pub fn cmd_forecast(a: &ForecastArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("forecast");
    let (model, _) = load_checkpoint(&a.model, None)?;
    let grid = read_grid(&a.grid)?;
    let panel = crate::formats::read_panel(&a.panel)?;
    let mode = match a.weather {
        WeatherArg::Ideal => WeatherMode::Ideal,
        WeatherArg::Actual => WeatherMode::Actual,
    };
    let issues = match (&a.issues, mode) {
        (Some(dir), _) => read_issue_dir(dir, &grid.spec)?,
        (None, WeatherMode::Actual) => {
            return Err(Error::Input(String::from("--weather actual needs --issues DIR")));
        }
        (None, WeatherMode::Ideal) => Vec::new(),
    };
    let start = match &a.start {
        Some(s) => parse_hour(s).map_err(Error::Input)?,
        None => panel.start_hour + HORIZON_HOURS as i64,
    };
    let available = (panel.end_hour() - start).max(0) as usize / HORIZON_HOURS;
    let n_iter = a.iterations.unwrap_or(available);
    let run = match a.scheme {
        SchemeArg::Nowcast => run_nowcast(&model, &grid.cells, &panel, &issues, mode, start, n_iter)?,
        SchemeArg::Longterm => run_longterm(&model, &grid.cells, &panel, &issues, mode, start, n_iter)?,
    };
    let summary = write_run(&a.out, &run, &grid.cells, &grid.spec, a.pgm)?;
    for (k, m) in summary.iteration_mae.iter().enumerate() {
        println!("iteration {k}: MAE {m:.6}");
    }
    for p in [&a.model, &a.grid, &a.panel] {
        manifest.hash_input(p)?;
    }
    if let Some(d) = &a.issues {
        manifest.hash_input(d)?;
    }
    manifest.outputs = (0..run.n_iterations).map(crate::runs::iteration_file).collect();
    manifest.outputs.push(String::from("summary.json"));
    finish(manifest, &a.out, started)
}

pub fn cmd_decompose(a: &DecomposeArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("decompose");
    let grid = read_grid(&a.grid)?;
    let ni = read_run(&a.nowcast_ideal)?;
    let na = read_run(&a.nowcast_actual)?;
    let li = read_run(&a.longterm_ideal)?;
    let cells = served_cells(&grid.cells);
    let d = decompose_errors(&ni, &na, &li, &cells)?;
    println!(
        "E_total {:.6} E_model {:.6} E_weather {:.6} E_obs {:.6} shares {:.4}/{:.4}",
        d.e_total, d.e_model, d.e_weather, d.e_obs, d.share_model, d.share_weather
    );
    write_json(&a.out, &d)?;
    let mut summary = summarize_run(&na, &grid.cells, Some(d));
    summary.iteration_mae = na.iteration_mae(&cells);
    write_json(&out_dir_of(&a.out).join("decomposition_summary.json"), &summary)?;
    for p in [&a.nowcast_ideal, &a.nowcast_actual, &a.longterm_ideal, &a.grid] {
        manifest.hash_input(p)?;
    }
    manifest.outputs = vec![a.out.display().to_string(), String::from("decomposition_summary.json")];
    finish(manifest, &out_dir_of(&a.out), started)
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("explain");
    let (model, _) = load_checkpoint(&a.model, None)?;
    let grid = read_grid(&a.grid)?;
    let panels = read_panels(&a.panels, &grid)?;
    let ds: DatasetManifest = read_json(&a.dataset)?;
    let splits = materialize(&ds.experiment, &panels, &grid)?;
    if a.n_background == 0 || a.n_explained == 0 || a.permutations == 0 {
        return Err(Error::Input(String::from("--n-background, --n-explained and --permutations must be positive")));
    }
    let bg_idx = draw_subset(splits.data.train.len(), a.n_background, derive_seed(a.seed, 1));
    let ex_idx = draw_subset(splits.test_event.len(), a.n_explained, derive_seed(a.seed, 2));
    let background: Vec<_> = bg_idx.iter().map(|&i| splits.data.train[i].clone()).collect();
    let explained: Vec<_> = ex_idx.iter().map(|&i| splits.test_event[i].clone()).collect();
    let summary = attribution_summary(&model, &background, &explained, a.permutations, derive_seed(a.seed, 3))?;
    let ids: Vec<String> = explained
        .iter()
        .map(|s| format!("{}:{}:{}", panels[s.event].event_id, s.cell_id, s.t0))
        .collect();
    write_attributions(&a.out, &summary, &ids)?;
    for (g, v) in &summary.ranked {
        println!("{g}: {v:.6}");
    }
    for p in [&a.model, &a.dataset, &a.grid] {
        manifest.hash_input(p)?;
    }
    manifest.seeds.insert(String::from("seed"), a.seed);
    manifest.outputs = ["attributions.csv", "summary.csv", "efficiency.csv"].map(String::from).to_vec();
    finish(manifest, &a.out, started)
}

pub fn cmd_aggregate(a: &AggregateArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("aggregate");
    let grid: Grid = read_grid(&a.grid)?;
    let run = read_run(&a.run)?;
    if run.n_cells != grid.cells.len() {
        return Err(Error::Input(format!("run has {} cells, grid has {}", run.n_cells, grid.cells.len())));
    }
    let acc = accumulate(&run, &grid.cells);
    let level = match a.level {
        LevelArg::Town => RegionLevel::Town,
        LevelArg::County => RegionLevel::County,
        LevelArg::City => RegionLevel::City,
    };
    let pred: Vec<(usize, f64)> = (0..run.n_cells).map(|c| (c, acc.final_predicted(c))).collect();
    let obs: Vec<(usize, f64)> = (0..run.n_cells).map(|c| (c, acc.final_observed(c))).collect();
    let pred_r = stocast_core::eval::aggregate_regions(&pred, &grid.cells, level)?;
    let obs_r = stocast_core::eval::aggregate_regions(&obs, &grid.cells, level)?;
    let path = a.out.join(format!("regions_{}.csv", level.name()));
    if a.residents {
        let rp = stocast_core::eval::affected_residents(&pred, &grid.cells)?;
        let ro = stocast_core::eval::affected_residents(&obs, &grid.cells)?;
        let rp = stocast_core::eval::aggregate_regions(&rp, &grid.cells, level)?;
        let ro = stocast_core::eval::aggregate_regions(&ro, &grid.cells, level)?;
        write_csv_with_header(
            &path,
            &["region_id", "predicted", "observed", "predicted_residents", "observed_residents"],
            pred_r.iter().map(|(k, v)| (k, v, obs_r[k], rp[k], ro[k])),
        )?;
    } else {
        write_csv_with_header(&path, &["region_id", "predicted", "observed"], pred_r.iter().map(|(k, v)| (k, v, obs_r[k])))?;
    }
    println!("{} {} regions", pred_r.len(), level.name());
    manifest.hash_input(&a.run)?;
    manifest.hash_input(&a.grid)?;
    manifest.outputs = vec![path.display().to_string()];
    finish(manifest, &a.out, started)
}

/// Maps a scheme name from a summary file for display.
pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Nowcast => "nowcast",
        Scheme::Longterm => "longterm",
    }
}
