use serde::{Deserialize, Serialize};

use crate::actions::{ActionsError, BinTable};
use crate::annotate::StepAnnotation;
use crate::types::Episode;

use super::PromptIoError;

pub const SEPARATOR: &str = "<sep>";

/// Substring that only the traced template contains.
pub const TRACE_HINT: &str = "overlaid with the visual trace";

/// Prompt wording. `{instruction}` is replaced with the episode instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub traced: String,
    pub plain: String,
    pub separator: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            traced: "You are given two images: the current observation and the same observation \
                     overlaid with the visual trace of the robot end effector. What action should \
                     the robot take to {instruction}?"
                .to_owned(),
            plain: "What action should the robot take to {instruction}?".to_owned(),
            separator: SEPARATOR.to_owned(),
        }
    }
}

impl PromptTemplates {
    pub fn traced_text(&self, instruction: &str) -> String {
        self.traced.replace("{instruction}", instruction)
    }

    pub fn plain_text(&self, instruction: &str) -> String {
        self.plain.replace("{instruction}", instruction)
    }

    /// The portion of the traced template absent from the plain one, used
    /// to check that trace-free records carry no hint.
    pub fn hint(&self) -> &str {
        if self.traced.contains(TRACE_HINT) && !self.plain.contains(TRACE_HINT) {
            TRACE_HINT
        } else {
            ""
        }
    }
}

/// File references for one step's images, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRefs {
    pub original: String,
    pub overlay: String,
}

/// One model input: two images joined by a separator, plus the text prompt
/// and the tokenized action target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub episode_id: String,
    pub timestep: usize,
    pub original_image: String,
    pub prompt_image: String,
    pub separator: String,
    pub instruction: String,
    pub prompt_text: String,
    pub trace_present: bool,
    pub action_tokens: Option<Vec<usize>>,
    pub vocab_offset: usize,
}

impl PromptRecord {
    pub fn validate(&self, templates: &PromptTemplates) -> Result<(), PromptIoError> {
        let bad = |m: &str| {
            Err(PromptIoError::InvalidRecord {
                episode: self.episode_id.clone(),
                timestep: self.timestep,
                reason: m.to_owned(),
            })
        };
        if self.separator != templates.separator {
            return bad("separator differs from the configured marker");
        }
        if self.trace_present {
            if self.prompt_image == self.original_image {
                return bad("traced record must reference two distinct images");
            }
            if self.prompt_text != templates.traced_text(&self.instruction) {
                return bad("traced record does not use the traced template");
            }
        } else {
            if self.prompt_image != self.original_image {
                return bad("trace-free record must reuse the original image");
            }
            let hint = templates.hint();
            if !hint.is_empty() && self.prompt_text.contains(hint) {
                return bad("trace-free record contains the trace hint");
            }
            if self.prompt_text != templates.plain_text(&self.instruction) {
                return bad("trace-free record does not use the plain template");
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str, templates: &PromptTemplates) -> Result<Self, PromptIoError> {
        let rec: PromptRecord = serde_json::from_str(line).map_err(|e| PromptIoError::Json {
            path: "<record>".into(),
            message: e.to_string(),
        })?;
        rec.validate(templates)?;
        Ok(rec)
    }
}

pub struct RecordOptions<'a> {
    pub templates: &'a PromptTemplates,
    pub bins: Option<&'a BinTable>,
    pub vocab_offset: usize,
}

pub fn build_prompt_record(
    step: &StepAnnotation,
    episode: &Episode,
    paths: &ImageRefs,
    opts: &RecordOptions<'_>,
) -> Result<PromptRecord, ActionsError> {
    let traced = step.shows_trace();
    let action_tokens = match (opts.bins, episode.actions.get(step.timestep)) {
        (Some(bins), Some(action)) => Some(bins.encode(action)?),
        _ => None,
    };
    Ok(PromptRecord {
        episode_id: episode.id.clone(),
        timestep: step.timestep,
        original_image: paths.original.clone(),
        prompt_image: if traced {
            paths.overlay.clone()
        } else {
            paths.original.clone()
        },
        separator: opts.templates.separator.clone(),
        instruction: episode.instruction.clone(),
        prompt_text: if traced {
            opts.templates.traced_text(&episode.instruction)
        } else {
            opts.templates.plain_text(&episode.instruction)
        },
        trace_present: traced,
        action_tokens,
        vocab_offset: opts.vocab_offset,
    })
}
