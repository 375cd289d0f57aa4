use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassScores, ClassifyError};
use crate::signal::MelSpectrogram;

/// Softmax temperature over cosine distances, which live in `[0, 2]`.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Nearest-centroid classifier over time-averaged log-Mel vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub labels: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub n_mels: usize,
    pub temperature: f64,
}

/// Time-averaged log-Mel vector with its band mean removed, so the cosine
/// compares spectral shape rather than overall level.
fn feature(mel: &MelSpectrogram) -> Vec<f64> {
    let v = mel.time_mean();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - mean).collect()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

/// Trains on labelled examples; labels are sorted so ties resolve
/// alphabetically.
pub fn centroid_train(examples: &[(MelSpectrogram, String)]) -> Result<CentroidModel, ClassifyError> {
    let mut labels: Vec<String> = examples.iter().map(|(_, l)| l.clone()).collect();
    labels.sort();
    labels.dedup();
    centroid_train_with_labels(&labels, examples)
}

/// Trains with a fixed label order; every label needs an example.
pub fn centroid_train_with_labels(
    labels: &[String],
    examples: &[(MelSpectrogram, String)],
) -> Result<CentroidModel, ClassifyError> {
    if examples.is_empty() || labels.is_empty() {
        return Err(ClassifyError::NoExamples);
    }
    let n_mels = examples[0].0.n_mels();
    let mut sums = vec![vec![0.0; n_mels]; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    for (mel, label) in examples {
        if mel.n_mels() != n_mels {
            return Err(ClassifyError::BandMismatch {
                expected: n_mels,
                found: mel.n_mels(),
            });
        }
        let k = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ClassifyError::UnknownLabel(label.clone()))?;
        for (s, f) in sums[k].iter_mut().zip(feature(mel)) {
            *s += f;
        }
        counts[k] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(ClassifyError::EmptyClass(labels[k].clone()));
    }
    let centroids = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    Ok(CentroidModel {
        labels: labels.to_vec(),
        centroids,
        n_mels,
        temperature: DEFAULT_TEMPERATURE,
    })
}

impl CentroidModel {
    /// Cosine distance to every centroid, in label order.
    pub fn distances(&self, mel: &MelSpectrogram) -> Result<Vec<f64>, ClassifyError> {
        if mel.n_mels() != self.n_mels {
            return Err(ClassifyError::BandMismatch {
                expected: self.n_mels,
                found: mel.n_mels(),
            });
        }
        let f = feature(mel);
        Ok(self.centroids.iter().map(|c| cosine_distance(&f, c)).collect())
    }

    /// Softmax over `−distance / temperature`; the nearest centroid wins and
    /// ties go to the earlier label.
    pub fn classify(&self, mel: &MelSpectrogram) -> Result<ClassScores, ClassifyError> {
        let logits: Vec<f64> = self
            .distances(mel)?
            .iter()
            .map(|d| -d / self.temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        let scores: Vec<f64> = exp.iter().map(|e| e / z).collect();
        Ok(ClassScores::from_parts(&self.labels, &logits, &scores))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let model: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if model.labels.is_empty()
            || model.labels.len() != model.centroids.len()
            || model.centroids.iter().any(|c| c.len() != model.n_mels)
            || !(model.temperature > 0.0)
        {
            return Err(ClassifyError::InvalidConfig("inconsistent centroid model".into()));
        }
        Ok(model)
    }
}
