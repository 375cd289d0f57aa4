//! Sound classification: a spectrogram transformer over log-Mel patches
//! and a nearest-centroid baseline.

mod ast;
mod centroid;
mod weights;

pub use ast::{patchify, AstConfig, AstModel, Patches, LAYER_NORM_EPS};
pub use centroid::{centroid_train, centroid_train_with_labels, CentroidModel, DEFAULT_TEMPERATURE};
pub use weights::{AstWeights, Tensor, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::signal::{mel_features, AudioBuffer, SignalError, AST_MEL_BANDS};

/// Scores are kept this far inside `(0, 1)`.
pub const SCORE_EPS: f64 = 1e-12;

const ESC50_LABELS: &str = include_str!("esc50_labels.txt");

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {0} holds a non-finite value")]
    NonFinite(String),
    #[error("weight file: {0}")]
    Format(String),
    #[error("input has {found} Mel bands, model expects {expected}")]
    BandMismatch { expected: usize, found: usize },
    #[error("input needs {needed} patches, positional table holds {available}")]
    InputTooLong { needed: usize, available: usize },
    #[error("no training examples")]
    NoExamples,
    #[error("label {0} has no training examples")]
    EmptyClass(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub scores: Vec<LabelScore>,
    pub label: String,
    pub label_index: usize,
    #[serde(default)]
    pub timestamp_s: Option<f64>,
}

impl ClassScores {
    /// Builds scores from per-label values in `(0, 1)` and the logits that
    /// rank them; the first maximal logit wins.
    pub(crate) fn from_parts(labels: &[String], logits: &[f64], scores: &[f64]) -> Self {
        let mut best = 0;
        for (i, l) in logits.iter().enumerate() {
            if *l > logits[best] {
                best = i;
            }
        }
        Self {
            scores: labels
                .iter()
                .zip(scores)
                .map(|(label, &s)| LabelScore {
                    label: label.clone(),
                    score: s.clamp(SCORE_EPS, 1.0 - SCORE_EPS),
                })
                .collect(),
            label: labels[best].clone(),
            label_index: best,
            timestamp_s: None,
        }
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp_s = Some(t);
        self
    }

    pub fn top_score(&self) -> f64 {
        self.scores[self.label_index].score
    }

    pub fn score_of(&self, label: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.label == label).map(|s| s.score)
    }
}

/// One label per line; blank lines and surrounding whitespace are ignored.
pub fn parse_labels(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<String>, ClassifyError> {
    Ok(parse_labels(&std::fs::read_to_string(path)?))
}

/// The 50 ESC-50 environmental sound classes.
pub fn esc50_labels() -> Vec<String> {
    parse_labels(ESC50_LABELS)
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Transformer(Box<AstModel>),
    Centroid(CentroidModel),
}

impl Classifier {
    pub fn labels(&self) -> &[String] {
        match self {
            Classifier::Transformer(m) => &m.config().labels,
            Classifier::Centroid(m) => &m.labels,
        }
    }

    /// Log-Mel features of a mono buffer, then the model.
    pub fn classify(&self, buf: &AudioBuffer) -> Result<ClassScores, ClassifyError> {
        buf.require_mono()?;
        match self {
            Classifier::Transformer(m) => {
                let mel = mel_features(buf, m.config().n_mels)?;
                m.classify(&mel)
            }
            Classifier::Centroid(m) => m.classify(&mel_features(buf, m.n_mels)?),
        }
    }
}

/// Log-Mel features with the transformer's band count.
pub fn default_features(buf: &AudioBuffer) -> Result<crate::signal::MelSpectrogram, ClassifyError> {
    Ok(mel_features(buf, AST_MEL_BANDS)?)
}
