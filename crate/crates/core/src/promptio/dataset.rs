use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::BinTable;
use crate::annotate::AnnotatedEpisode;
use crate::overlay::OverlayStyle;
use crate::tracker::TrackerConfig;
use crate::types::{validate_episode, Episode, Frame, TraceConfig};

use super::record::{build_prompt_record, ImageRefs, PromptTemplates, RecordOptions};
use super::PromptIoError;

pub const METADATA_FILE: &str = "episode.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACES_FILE: &str = "traces.json";
pub const PROMPTS_FILE: &str = "prompts.jsonl";

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.png")
}

pub fn overlay_file_name(t: usize) -> String {
    format!("overlay_{t:05}.png")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PromptIoError + '_ {
    move |source| PromptIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeMetadata {
    instruction: String,
    actions: Vec<Vec<f64>>,
}

/// Parses `frame_NNNNN.png` into its index.
fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    (digits.len() == 5 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

pub fn decode_png(bytes: &[u8], index: usize, path: &Path) -> Result<Frame, PromptIoError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| PromptIoError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new_unchecked_size(w as usize, h as usize, img.into_raw(), index).map_err(|e| PromptIoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn encode_png(frame: &Frame) -> Vec<u8> {
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.pixels().to_vec())
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn read_frame(path: &Path, index: usize) -> Result<Frame, PromptIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_png(&bytes, index, path)
}

/// Writes through a temporary sibling and renames into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PromptIoError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<(), PromptIoError> {
    write_atomic(path, &encode_png(frame))
}

/// Sorted `frame_NNNNN.png` paths in `dir`, checked for contiguity from 0.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, PromptIoError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if let Some(idx) = entry.file_name().to_str().and_then(frame_index) {
            found.push((idx, entry.path()));
        }
    }
    found.sort();
    for (expected, (idx, _)) in found.iter().enumerate() {
        if *idx != expected {
            return Err(PromptIoError::NonContiguousFrames {
                dir: dir.to_path_buf(),
                missing: expected,
            });
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Loads an episode directory: `frame_NNNNN.png` files plus `episode.json`.
pub fn load_episode(dir: &Path) -> Result<Episode, PromptIoError> {
    let meta_path = dir.join(METADATA_FILE);
    if !meta_path.is_file() {
        return Err(PromptIoError::MissingMetadata(meta_path));
    }
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: EpisodeMetadata = serde_json::from_str(&text).map_err(|e| PromptIoError::Json {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    let paths = list_frames(dir)?;
    let frames = paths
        .iter()
        .enumerate()
        .map(|(i, p)| read_frame(p, i))
        .collect::<Result<Vec<_>, _>>()?;
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("episode")
        .to_owned();
    let episode = Episode {
        id,
        instruction: meta.instruction,
        frames,
        actions: meta.actions,
    };
    let report = validate_episode(&episode);
    if !report.is_ok() {
        return Err(PromptIoError::Validation {
            id: episode.id,
            report: report.to_string(),
        });
    }
    Ok(episode)
}

/// Writes an unannotated episode in the input layout.
pub fn write_episode(dir: &Path, episode: &Episode) -> Result<(), PromptIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (t, f) in episode.frames.iter().enumerate() {
        write_frame(&dir.join(frame_file_name(t)), f)?;
    }
    let meta = EpisodeMetadata {
        instruction: episode.instruction.clone(),
        actions: episode.actions.clone(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_atomic(&dir.join(METADATA_FILE), text.as_bytes())
}

/// Episode subdirectories of a dataset root, sorted by name.
pub fn list_episode_dirs(root: &Path) -> Result<Vec<PathBuf>, PromptIoError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if path.is_dir() && path.join(METADATA_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Every parameter that shapes annotation output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigSnapshot {
    pub trace: TraceConfig,
    pub tracker: TrackerConfig,
    pub style: OverlayStyle,
    pub templates: PromptTemplates,
    pub vocab_offset: usize,
    pub text_precision: u32,
}

impl ConfigSnapshot {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub dir: String,
    pub steps: usize,
    pub traced_steps: usize,
    pub dense_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ConfigSnapshot,
    pub action_bins: bool,
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct TraceDocTrace<'a> {
    origin: usize,
    points: Vec<[f64; 2]>,
    valid: &'a [bool],
}

#[derive(Serialize)]
struct TraceDocStep<'a> {
    t: usize,
    dropped: bool,
    history_len: usize,
    window: Option<[usize; 2]>,
    traces: Vec<TraceDocTrace<'a>>,
    text: String,
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    episode_id: &'a str,
    kappa: f64,
    seed: u64,
    config_hash: String,
    config: &'a ConfigSnapshot,
    steps: Vec<TraceDocStep<'a>>,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// An episode together with its (post-dropout) annotation.
pub struct AnnotatedInput<'a> {
    pub episode: &'a Episode,
    pub annotation: &'a AnnotatedEpisode,
}

fn write_one(
    out: &Path,
    item: &AnnotatedInput<'_>,
    config: &ConfigSnapshot,
    bins: Option<&BinTable>,
) -> Result<ManifestEntry, PromptIoError> {
    let ep = item.episode;
    let ann = item.annotation;
    let dir = out.join(&ep.id);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let opts = RecordOptions {
        templates: &config.templates,
        bins,
        vocab_offset: config.vocab_offset,
    };
    let mut lines = String::new();
    let mut steps = Vec::with_capacity(ann.steps.len());
    let mut traced = 0;
    for step in &ann.steps {
        let t = step.timestep;
        write_frame(&dir.join(frame_file_name(t)), &ep.frames[t])?;
        let refs = ImageRefs {
            original: format!("{}/{}", ep.id, frame_file_name(t)),
            overlay: format!("{}/{}", ep.id, overlay_file_name(t)),
        };
        if step.shows_trace() {
            traced += 1;
            let overlay = step.overlaid.as_ref().expect("traced steps carry an overlay");
            write_frame(&dir.join(overlay_file_name(t)), overlay)?;
        }
        let record = build_prompt_record(step, ep, &refs, &opts).map_err(|e| PromptIoError::InvalidRecord {
            episode: ep.id.clone(),
            timestep: t,
            reason: e.to_string(),
        })?;
        record.validate(&config.templates)?;
        lines.push_str(&record.to_json_line());
        lines.push('\n');

        let set = step.trace.as_ref();
        steps.push(TraceDocStep {
            t,
            dropped: step.dropped,
            history_len: step.history_len,
            window: set.map(|s| [s.window_start, s.window_end]),
            traces: set
                .map(|s| {
                    s.traces
                        .iter()
                        .map(|tr| TraceDocTrace {
                            origin: tr.origin,
                            points: tr.points.iter().map(|p| [round3(p.x), round3(p.y)]).collect(),
                            valid: &tr.valid,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            text: set
                .map(|s| super::format_text_trace(s, config.text_precision.max(1)))
                .unwrap_or_default(),
        });
    }
    write_atomic(&dir.join(PROMPTS_FILE), lines.as_bytes())?;
    let doc = TraceDoc {
        episode_id: &ep.id,
        kappa: config.trace.kappa,
        seed: config.trace.seed,
        config_hash: config.hash(),
        config,
        steps,
    };
    let text = serde_json::to_string_pretty(&doc).expect("trace document serializes");
    write_atomic(&dir.join(TRACES_FILE), text.as_bytes())?;
    Ok(ManifestEntry {
        id: ep.id.clone(),
        dir: ep.id.clone(),
        steps: ann.steps.len(),
        traced_steps: traced,
        dense_calls: ann.dense_calls(),
    })
}

/// Writes overlays, trace documents and prompt records for each episode,
/// then the manifest. Output is byte-identical for identical inputs.
pub fn write_annotated_dataset(
    out: &Path,
    episodes: &[AnnotatedInput<'_>],
    config: &ConfigSnapshot,
    bins: Option<&BinTable>,
) -> Result<Manifest, PromptIoError> {
    use rayon::prelude::*;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let entries = episodes
        .par_iter()
        .map(|item| write_one(out, item, config, bins))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        config_hash: config.hash(),
        config: config.clone(),
        action_bins: bins.is_some(),
        episodes: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

/// Reads back and validates every prompt record of an annotated episode.
pub fn read_prompt_records(
    path: &Path,
    templates: &PromptTemplates,
) -> Result<Vec<super::PromptRecord>, PromptIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| super::PromptRecord::from_json_line(l, templates))
        .collect()
}
