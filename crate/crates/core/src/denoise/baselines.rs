//! Profile-driven baselines: Wiener gain, spectral gate, magnitude subtraction.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DenoiseError;
use crate::signal::Spectrogram;

/// Frames averaged for a profile when no noise-only clip is given.
pub const DEFAULT_PROFILE_FRAMES: usize = 10;

pub const DEFAULT_GATE_FACTOR: f64 = 1.5;

/// Mean noise magnitude per frequency bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub magnitudes: Vec<f64>,
    pub frames: usize,
}

impl NoiseProfile {
    pub fn zeros(bins: usize) -> Self {
        Self {
            magnitudes: vec![0.0; bins],
            frames: 0,
        }
    }

    /// Averages the first `frames` frames (all of them if fewer).
    pub fn from_leading_frames(spec: &Spectrogram, frames: usize) -> Result<Self, DenoiseError> {
        let used = frames.min(spec.num_frames());
        if used == 0 {
            return Err(DenoiseError::EmptySpectrogram);
        }
        let mut magnitudes = vec![0.0; spec.num_bins()];
        for row in &spec.frames()[..used] {
            for (acc, c) in magnitudes.iter_mut().zip(row) {
                *acc += c.norm();
            }
        }
        magnitudes.iter_mut().for_each(|m| *m /= used as f64);
        Ok(Self {
            magnitudes,
            frames: used,
        })
    }

    /// Averages every frame of a noise-only recording.
    pub fn from_noise_clip(spec: &Spectrogram) -> Result<Self, DenoiseError> {
        Self::from_leading_frames(spec, spec.num_frames())
    }

    fn check(&self, spec: &Spectrogram) -> Result<(), DenoiseError> {
        if self.magnitudes.len() != spec.num_bins() {
            return Err(DenoiseError::ProfileMismatch {
                profile: self.magnitudes.len(),
                spectrogram: spec.num_bins(),
            });
        }
        Ok(())
    }
}

/// Per-cell gain `S / (S + N²)` with `S = max(|X|² − N², 0)`.
pub fn denoise_wiener(
    spec: &Spectrogram,
    profile: &NoiseProfile,
) -> Result<Spectrogram, DenoiseError> {
    profile.check(spec)?;
    Ok(spec.map_cells(|_, k, c| {
        let noise = profile.magnitudes[k] * profile.magnitudes[k];
        let signal = (c.norm_sqr() - noise).max(0.0);
        if signal + noise == 0.0 {
            return c;
        }
        c * (signal / (signal + noise))
    }))
}

/// Zeroes cells below `factor` times the profile magnitude.
pub fn denoise_spectral_gate(
    spec: &Spectrogram,
    profile: &NoiseProfile,
    factor: f64,
) -> Result<Spectrogram, DenoiseError> {
    profile.check(spec)?;
    Ok(spec.map_cells(|_, k, c| {
        if c.norm() < factor * profile.magnitudes[k] {
            Complex64::default()
        } else {
            c
        }
    }))
}

/// Magnitude `max(|X| − N, 0)` with the original phase.
pub fn denoise_spectral_subtract(
    spec: &Spectrogram,
    profile: &NoiseProfile,
) -> Result<Spectrogram, DenoiseError> {
    profile.check(spec)?;
    Ok(spec.map_cells(|_, k, c| {
        let mag = c.norm();
        if mag == 0.0 {
            return c;
        }
        c * ((mag - profile.magnitudes[k]).max(0.0) / mag)
    }))
}
