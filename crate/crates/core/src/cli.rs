//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on validation failure, 2 on I/O failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::actions::{columns, fit_bins, BinTable, DEFAULT_BINS};
use crate::annotate::{annotate_episode, annotate_step, apply_dropout, dropout_seed, AnnotateError};
use crate::promptio::{
    self, list_episode_dirs, list_frames, load_episode, read_frame, write_annotated_dataset, write_episode,
    write_frame, AnnotatedInput, ConfigSnapshot, PromptIoError,
};
use crate::stream::{StreamError, StreamState};
use crate::tracker::{build_pyramid, oracle_track_point, track_point, TrackStatus, TrackerConfig};
use crate::types::{Frame, Point};
use crate::{bench, synth};

#[derive(Debug, Parser)]
#[command(name = "vtrace", version, about = "Visual trace annotation for robot demonstration datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file whose values override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TraceFlags {
    /// Grid points per side.
    #[arg(long, default_value_t = 40)]
    pub k: usize,
    /// Sampled active trajectories per prompt.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// History window in timesteps.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Total movement (px) a trajectory must exceed to count as active.
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate every episode under --data and write prompt records to --out.
    Annotate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        trace: TraceFlags,
        #[arg(long, default_value_t = 0.1)]
        dropout: f64,
        /// Optional bin table; when given, records carry action tokens.
        #[arg(long)]
        bins: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the streaming tracker over a frame directory.
    Stream {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        redraw_steps: usize,
        #[command(flatten)]
        trace: TraceFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Fit quantile action bins over all episode actions.
    FitActions {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Render the overlay for one timestep of one episode.
    Render {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        trace: TraceFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Compare tracking against exhaustive block matching on an episode.
    Verify {
        #[arg(long)]
        episode: PathBuf,
        #[arg(long, default_value_t = 5)]
        search_radius: usize,
        /// Maximum allowed deviation in pixels.
        #[arg(long, default_value_t = 1.0)]
        tolerance: f64,
        /// Sample points per side per frame pair.
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Measure per-step streaming and dense tracking cost.
    Bench {
        #[arg(long, default_value_t = 40)]
        sparse_steps: usize,
        #[arg(long, default_value_t = 5)]
        dense_runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset for trying the pipeline.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        episodes: usize,
        #[arg(long, default_value_t = 24)]
        frames: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<PromptIoError> for CliError {
    fn from(e: PromptIoError) -> Self {
        match e {
            PromptIoError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<AnnotateError> for CliError {
    fn from(e: AnnotateError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Builds the configuration from flags, then applies the `--config` file.
pub fn resolve_config(trace: &TraceFlags, extra: Value, config: Option<&Path>) -> Result<ConfigSnapshot, CliError> {
    let mut snap = ConfigSnapshot::default();
    snap.trace.grid_size = trace.k;
    snap.trace.sample_count = trace.m;
    snap.trace.window = trace.n;
    snap.trace.kappa = trace.kappa;
    snap.trace.seed = trace.seed;
    let mut value = serde_json::to_value(&snap).expect("config serializes");
    merge(&mut value, extra);
    if let Some(path) = config {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        merge(&mut value, patch);
    }
    let snap: ConfigSnapshot =
        serde_json::from_value(value).map_err(|e| CliError::Validation(format!("configuration: {e}")))?;
    snap.trace.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    snap.tracker.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    snap.style.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(snap)
}

fn setup_threads(common: &Common) {
    if let Some(n) = common.threads {
        // Fails only if a global pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Annotate {
            data,
            out,
            trace,
            dropout,
            bins,
            common,
        } => {
            setup_threads(&common);
            let snap = resolve_config(&trace, json!({"trace": {"dropout_prob": dropout}}), common.config.as_deref())?;
            let bins = match bins {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| io_error(&p, e))?;
                    Some(BinTable::from_json(&text).map_err(|e| CliError::Validation(e.to_string()))?)
                }
                None => None,
            };
            cmd_annotate(&data, &out, &snap, bins.as_ref())
        }
        Command::Stream {
            frames,
            out,
            redraw_steps,
            trace,
            common,
        } => {
            setup_threads(&common);
            let snap = resolve_config(
                &trace,
                json!({"trace": {"redraw_steps": redraw_steps}}),
                common.config.as_deref(),
            )?;
            cmd_stream(&frames, &out, &snap)
        }
        Command::FitActions { data, out, bins, common } => {
            setup_threads(&common);
            let n_bins = match common.config.as_deref() {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
                    let v: Value =
                        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
                    v.get("bins").and_then(Value::as_u64).map_or(bins, |b| b as usize)
                }
                None => bins,
            };
            cmd_fit_actions(&data, &out, n_bins)
        }
        Command::Render {
            episode,
            t,
            out,
            trace,
            common,
        } => {
            setup_threads(&common);
            let snap = resolve_config(&trace, json!({}), common.config.as_deref())?;
            cmd_render(&episode, t, &out, &snap)
        }
        Command::Verify {
            episode,
            search_radius,
            tolerance,
            points,
            common,
        } => {
            setup_threads(&common);
            let snap = resolve_config(&TraceFlags::defaults(), json!({}), common.config.as_deref())?;
            cmd_verify(&episode, search_radius, tolerance, points, &snap.tracker)
        }
        Command::Bench {
            sparse_steps,
            dense_runs,
            common,
        } => {
            setup_threads(&common);
            let report = bench::run(sparse_steps, dense_runs);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            println!(
                "sparse step: {:.2} ms median (budget {:.0} ms) {}",
                report.sparse_step_median_ms,
                bench::SPARSE_STEP_BUDGET_MS,
                if report.sparse_within_soft() { "ok" } else { "over budget" }
            );
            println!(
                "dense 40x40 window: {:.1} ms median (budget {:.0} ms), amortized {:.2} ms/step {}",
                report.dense_window_median_ms,
                bench::DENSE_WINDOW_BUDGET_MS,
                report.dense_amortized_ms,
                if report.dense_within_soft() { "ok" } else { "over budget" }
            );
            if report.within_hard_ceiling() {
                Ok(())
            } else {
                Err(CliError::Validation("benchmark exceeded the hard ceiling".into()))
            }
        }
        Command::Synth {
            out,
            episodes,
            frames,
            size,
            seed,
        } => cmd_synth(&out, episodes, frames, size, seed),
    }
}

impl TraceFlags {
    pub fn defaults() -> Self {
        Self {
            k: 40,
            m: 5,
            n: 6,
            kappa: 2.0,
            seed: 0,
        }
    }
}

fn cmd_annotate(data: &Path, out: &Path, snap: &ConfigSnapshot, bins: Option<&BinTable>) -> Result<(), CliError> {
    let dirs = list_episode_dirs(data)?;
    if dirs.is_empty() {
        return Err(CliError::Validation(format!("no episodes under {}", data.display())));
    }
    let results: Vec<_> = dirs
        .par_iter()
        .map(|dir| -> Result<_, CliError> {
            let ep = load_episode(dir)?;
            let ann = annotate_episode(&ep, &snap.trace, &snap.tracker, &snap.style)?;
            let steps = apply_dropout(&ann.steps, snap.trace.dropout_prob, dropout_seed(snap.trace.seed, &ep.id));
            Ok((ep, crate::AnnotatedEpisode { steps, ..ann }))
        })
        .collect();

    let mut ok = Vec::new();
    let mut failure: Option<CliError> = None;
    for (dir, r) in dirs.iter().zip(results) {
        match r {
            Ok(pair) => ok.push(pair),
            Err(e) => {
                eprintln!("skipping {}: {e}", dir.display());
                if !matches!(failure, Some(CliError::Io(_))) {
                    failure = Some(e);
                }
            }
        }
    }
    let inputs: Vec<AnnotatedInput<'_>> = ok
        .iter()
        .map(|(episode, annotation)| AnnotatedInput { episode, annotation })
        .collect();
    let manifest = write_annotated_dataset(out, &inputs, snap, bins)?;
    for e in &manifest.episodes {
        println!(
            "{}: {} steps, {} with trace, {} dense tracking calls",
            e.id, e.steps, e.traced_steps, e.dense_calls
        );
    }
    println!("config hash {}", manifest.config_hash);
    failure.map_or(Ok(()), Err)
}

fn cmd_stream(frames_dir: &Path, out: &Path, snap: &ConfigSnapshot) -> Result<(), CliError> {
    let paths = list_frames(frames_dir)?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut state = StreamState::new(snap.trace.clone(), snap.tracker.clone(), snap.style.clone())?;
    let mut lines = String::new();
    let mut traced = 0;
    for (t, path) in paths.iter().enumerate() {
        let frame = read_frame(path, t)?;
        let step = state.step(frame)?;
        if let Some(overlay) = &step.overlaid {
            write_frame(&out.join(promptio::overlay_file_name(t)), overlay)?;
            traced += 1;
        }
        let rec = json!({
            "t": t,
            "dense": step.dense,
            "trace": step.trace,
            "text": step.trace.as_ref().map(|s| promptio::format_text_trace(s, snap.text_precision.max(1))),
        });
        lines.push_str(&rec.to_string());
        lines.push('\n');
    }
    let path = out.join("stream.jsonl");
    fs::write(&path, lines).map_err(|e| io_error(&path, e))?;
    println!(
        "{} steps, {} with trace, {} dense recalibrations",
        paths.len(),
        traced,
        state.dense_calls()
    );
    Ok(())
}

fn cmd_fit_actions(data: &Path, out: &Path, n_bins: usize) -> Result<(), CliError> {
    let mut actions = Vec::new();
    for dir in list_episode_dirs(data)? {
        actions.extend(load_episode(&dir)?.actions);
    }
    let cols = columns(&actions).map_err(|e| CliError::Validation(e.to_string()))?;
    let table = fit_bins(&cols, n_bins).map_err(|e| CliError::Validation(e.to_string()))?;
    fs::write(out, table.to_json()).map_err(|e| io_error(out, e))?;
    println!("fitted {} bins over {} dimensions from {} actions", n_bins, table.dims(), actions.len());
    Ok(())
}

fn cmd_render(episode: &Path, t: usize, out: &Path, snap: &ConfigSnapshot) -> Result<(), CliError> {
    let ep = load_episode(episode)?;
    if t >= ep.len() {
        return Err(CliError::Validation(format!("t={t} is beyond the episode's {} frames", ep.len())));
    }
    let step = annotate_step(&ep, t, &snap.trace, &snap.tracker, &snap.style)?;
    let frame = step.overlaid.as_ref().unwrap_or(&ep.frames[t]);
    write_frame(out, frame)?;
    let traces = step.trace.as_ref().map_or(0, |s| s.len());
    println!("t={t}: {traces} traces drawn to {}", out.display());
    Ok(())
}

/// Deviation statistics between tracking and block matching.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub compared: usize,
    pub skipped: usize,
    pub max_dev: f64,
    pub mean_dev: f64,
}

pub fn verify_frames(frames: &[Frame], search_radius: usize, per_side: usize, cfg: &TrackerConfig) -> Result<VerifyReport, CliError> {
    let pyramids = frames
        .iter()
        .map(|f| build_pyramid(f, cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let (w, h) = (frames[0].width() as i64, frames[0].height() as i64);
    let margin = (cfg.window_half + search_radius) as i64 + 1;
    let per_side = per_side.max(1) as i64;
    let coords = |extent: i64| -> Vec<i64> {
        let span = (extent - 2 * margin).max(1);
        (0..per_side).map(|i| margin + span * (2 * i + 1) / (2 * per_side)).collect()
    };
    let (xs, ys) = (coords(w), coords(h));
    let devs: Vec<Option<f64>> = (0..frames.len() - 1)
        .into_par_iter()
        .flat_map_iter(|k| {
            let (pyramids, frames) = (&pyramids, &frames);
            let ys = ys.clone();
            let xs = xs.clone();
            ys.into_iter().flat_map(move |y| {
                let xs = xs.clone();
                xs.into_iter().map(move |x| {
                    let p = Point::new(x as f64, y as f64);
                    let (lk, status) = track_point(&pyramids[k], &pyramids[k + 1], p, cfg);
                    if status != TrackStatus::Tracked {
                        return None;
                    }
                    let oracle = oracle_track_point(&frames[k], &frames[k + 1], (x, y), cfg.window_half, search_radius).ok()?;
                    Some(lk.dist(oracle))
                })
            })
        })
        .collect();
    let compared: Vec<f64> = devs.iter().flatten().copied().collect();
    Ok(VerifyReport {
        compared: compared.len(),
        skipped: devs.len() - compared.len(),
        max_dev: compared.iter().copied().fold(0.0, f64::max),
        mean_dev: if compared.is_empty() {
            0.0
        } else {
            compared.iter().sum::<f64>() / compared.len() as f64
        },
    })
}

fn cmd_verify(episode: &Path, search_radius: usize, tolerance: f64, points: usize, cfg: &TrackerConfig) -> Result<(), CliError> {
    let ep = load_episode(episode)?;
    if ep.len() < 2 {
        return Err(CliError::Validation("episode needs at least 2 frames".into()));
    }
    let report = verify_frames(&ep.frames, search_radius, points, cfg)?;
    println!(
        "compared {} points ({} skipped): max deviation {:.3} px, mean {:.3} px",
        report.compared, report.skipped, report.max_dev, report.mean_dev
    );
    if report.max_dev > tolerance {
        return Err(CliError::Validation(format!(
            "max deviation {:.3} px exceeds tolerance {tolerance} px",
            report.max_dev
        )));
    }
    Ok(())
}

fn cmd_synth(out: &Path, episodes: usize, frames: usize, size: usize, seed: u64) -> Result<(), CliError> {
    for i in 0..episodes {
        let id = format!("episode_{i:03}");
        let ep = synth::moving_patch_episode(&id, size, size, frames, seed.wrapping_add(i as u64));
        write_episode(&out.join(&id), &ep)?;
    }
    println!("wrote {episodes} episodes to {}", out.display());
    Ok(())
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
