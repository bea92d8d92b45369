//! Records exchanged between subcommands, one JSON object per line.

use serde::{Deserialize, Serialize};

use vlogvis_core::annotation::BinaryLabel;
use vlogvis_core::evaluation::Split;
use vlogvis_core::transcript::{CaptionCue, Transcript, TranscriptError};

/// `ingest` output: a manifest entry with its parsed captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub channel: String,
    pub duration_s: f64,
    pub frames_dir: String,
    pub fps: f64,
    pub words: u64,
    pub cues: Vec<CaptionCue>,
}

impl VideoRecord {
    pub fn transcript(&self) -> Result<Transcript, TranscriptError> {
        Transcript::new(&self.video_id, self.duration_s, self.cues.clone())
    }
}

/// `extract` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action_id: String,
    pub video_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub time_s: f64,
    pub sentence_index: usize,
    /// Half-open token offsets of the action within `sentence`.
    pub span: (usize, usize),
    pub sentence: Vec<String>,
}

/// `motion-filter` side report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub miniclip_id: String,
    /// Median consecutive-frame correlation; absent when fewer than two
    /// frames could be sampled.
    pub score: Option<f64>,
    pub kept: bool,
}

/// `aggregate` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub miniclip_id: String,
    pub action_id: String,
    pub label: BinaryLabel,
}

/// `features` output: everything the classifiers need for one labeled pair
/// apart from the video feature rows, which stay in their own files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub miniclip_id: String,
    pub action_id: String,
    pub video_id: String,
    pub channel: String,
    pub split: Split,
    pub text: String,
    pub tokens: Vec<String>,
    pub label: bool,
    pub action: Vec<f64>,
    #[serde(default)]
    pub pos: Vec<f64>,
    #[serde(default)]
    pub context_s: Vec<f64>,
    #[serde(default)]
    pub context_a: Vec<f64>,
    #[serde(default)]
    pub concreteness: Option<f64>,
    #[serde(default)]
    pub object_wup: Option<f64>,
    #[serde(default)]
    pub object_cosine: Option<f64>,
}

/// Linear-classifier input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub action_id: String,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Precomputed contextual action vector, overriding the pooled embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub action_id: String,
    pub vector: Vec<f64>,
}
