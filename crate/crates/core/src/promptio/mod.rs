//! Dataset I/O, prompt record assembly and text-trace formatting.

mod dataset;
mod record;
mod text;

use std::path::PathBuf;

pub use dataset::{
    decode_png, encode_png, frame_file_name, list_episode_dirs, list_frames, load_episode, overlay_file_name,
    read_frame, read_prompt_records, write_annotated_dataset, write_episode, write_frame, AnnotatedInput,
    ConfigSnapshot, Manifest, ManifestEntry, MANIFEST_FILE, METADATA_FILE, PROMPTS_FILE, TRACES_FILE,
};
pub use record::{build_prompt_record, ImageRefs, PromptRecord, PromptTemplates, RecordOptions, SEPARATOR, TRACE_HINT};
pub use text::format_text_trace;

#[derive(Debug, thiserror::Error)]
pub enum PromptIoError {
    #[error("missing episode metadata {0}")]
    MissingMetadata(PathBuf),
    #[error("non-contiguous frames in {dir}: frame {missing} is missing")]
    NonContiguousFrames { dir: PathBuf, missing: usize },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("episode {id} failed validation: {report}")]
    Validation { id: String, report: String },
    #[error("malformed JSON in {path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("invalid prompt record for {episode} at t={timestep}: {reason}")]
    InvalidRecord {
        episode: String,
        timestep: usize,
        reason: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
