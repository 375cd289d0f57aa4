//! Blind source separation. PCA whitening feeds FastICA for time-domain
//! unmixing; NMF factorises magnitude spectrograms; separated sources are
//! matched back to microphones by cross-correlation.

mod assign;
mod ica;
mod nmf;
mod pca;

pub use assign::{assign_sources, ASSIGNMENT_MARGIN};
pub use ica::{fast_ica, IcaOptions, SeparatedSources, GAUSSIAN_LOGCOSH};
pub use nmf::{nmf, nmf_objective, nmf_separate, nmf_spectrogram, nmf_update, NmfFactors};
pub use pca::{pca_whiten, pca_whiten_matrix, Retain, WhitenedData};

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::signal::{write_wav, AudioBuffer, SignalError, WavEncoding};

#[derive(Debug, thiserror::Error)]
pub enum BssError {
    #[error("need at least two channels, have {0}")]
    TooFewChannels(usize),
    #[error("{frames} frames is too few for {channels} channels")]
    TooFewFrames { frames: usize, channels: usize },
    #[error("invalid retain setting: {0}")]
    InvalidRetain(String),
    #[error("need at least two retained components, have {0}")]
    TooFewComponents(usize),
    #[error("matrix entry ({row}, {col}) is negative or not finite")]
    InvalidEntry { row: usize, col: usize },
    #[error("rank {rank} must be in 1..{limit}")]
    InvalidRank { rank: usize, limit: usize },
    #[error("{0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows of a matrix as nested vectors, for JSON dumps.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Channel-major buffer as a `channels × frames` matrix.
pub fn buffer_matrix(buf: &AudioBuffer) -> DMatrix<f64> {
    DMatrix::from_fn(buf.num_channels(), buf.num_frames(), |r, c| buf.channel(r)[c])
}

/// Writes each separated source to `dir/source_<k>.wav`, peak-normalised
/// to 0.99.
pub fn write_sources(
    dir: &Path,
    sep: &SeparatedSources,
    sample_rate: u32,
) -> Result<Vec<PathBuf>, BssError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (k, row) in sep.sources.row_iter().enumerate() {
        let peak = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 0.99 / peak } else { 0.0 };
        let samples = row.iter().map(|v| v * scale).collect();
        let path = dir.join(format!("source_{k}.wav"));
        write_wav(&path, &AudioBuffer::mono(samples, sample_rate)?, WavEncoding::Float32)?;
        paths.push(path);
    }
    Ok(paths)
}
