//! Spectral noise removal: the Otsu hard mask, three profile-based
//! baselines and a PSNR benchmark over all four.

mod baselines;
mod bench;
mod otsu;

pub use baselines::{
    denoise_spectral_gate, denoise_spectral_subtract, denoise_wiener, NoiseProfile,
    DEFAULT_GATE_FACTOR, DEFAULT_PROFILE_FRAMES,
};
pub use bench::{benchmark_denoisers, BenchmarkEntry, BenchmarkReport};
pub use otsu::{
    denoise_otsu, magnitude_db, otsu_threshold, MagnitudeHistogram, OtsuOutcome, OtsuThreshold,
    DEFAULT_HISTOGRAM_BINS,
};

use serde::{Deserialize, Serialize};

use crate::signal::{istft, stft, AudioBuffer, FrameParams, SignalError, Spectrogram};

#[derive(Debug, thiserror::Error)]
pub enum DenoiseError {
    #[error("magnitude histogram has fewer than two non-empty bins")]
    DegenerateHistogram,
    #[error("spectrogram has no frames")]
    EmptySpectrogram,
    #[error("noise profile has {profile} bins, spectrogram has {spectrogram}")]
    ProfileMismatch { profile: usize, spectrogram: usize },
    #[error("noise clip has {clip} channels, input has {input}")]
    NoiseClipChannels { clip: usize, input: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum DenoiseMethod {
    #[default]
    Otsu,
    Wiener,
    SpectralGate {
        #[serde(default = "default_gate")]
        factor: f64,
    },
    SpectralSubtract,
    None,
}

fn default_gate() -> f64 {
    DEFAULT_GATE_FACTOR
}

impl DenoiseMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DenoiseMethod::Otsu => "fft_otsu",
            DenoiseMethod::Wiener => "wiener",
            DenoiseMethod::SpectralGate { .. } => "spectral_gate",
            DenoiseMethod::SpectralSubtract => "spectral_subtract",
            DenoiseMethod::None => "none",
        }
    }

    fn needs_profile(&self) -> bool {
        matches!(
            self,
            DenoiseMethod::Wiener
                | DenoiseMethod::SpectralGate { .. }
                | DenoiseMethod::SpectralSubtract
        )
    }

    /// Applies the method to one spectrogram.
    pub fn apply(
        &self,
        spec: &Spectrogram,
        profile: Option<&NoiseProfile>,
    ) -> Result<(Spectrogram, Option<String>), DenoiseError> {
        let owned;
        let profile = match profile {
            Some(p) => p,
            None if self.needs_profile() => {
                owned = NoiseProfile::from_leading_frames(spec, DEFAULT_PROFILE_FRAMES)?;
                &owned
            }
            None => &NoiseProfile {
                magnitudes: Vec::new(),
                frames: 0,
            },
        };
        Ok(match self {
            DenoiseMethod::Otsu => {
                let out = denoise_otsu(spec)?;
                (out.spectrogram, out.warning)
            }
            DenoiseMethod::Wiener => (denoise_wiener(spec, profile)?, None),
            DenoiseMethod::SpectralGate { factor } => {
                (denoise_spectral_gate(spec, profile, *factor)?, None)
            }
            DenoiseMethod::SpectralSubtract => (denoise_spectral_subtract(spec, profile)?, None),
            DenoiseMethod::None => (spec.clone(), None),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DenoisedAudio {
    pub audio: AudioBuffer,
    pub warnings: Vec<String>,
}

fn padded_len(len: usize, params: &FrameParams) -> usize {
    if len <= params.window_len {
        return params.window_len;
    }
    let hops = (len - params.window_len).div_ceil(params.hop);
    params.window_len + hops * params.hop
}

/// Denoises every channel through STFT → method → inverse STFT.
///
/// The signal is zero-padded so the frames cover every sample, then cropped
/// back to its original length. `noise_clip` supplies the profile (one
/// channel per input channel, or mono for all); without it the leading
/// frames of each channel are used.
pub fn denoise_buffer(
    buf: &AudioBuffer,
    method: DenoiseMethod,
    noise_clip: Option<&AudioBuffer>,
    params: &FrameParams,
) -> Result<DenoisedAudio, DenoiseError> {
    if let Some(clip) = noise_clip {
        clip.require_rate(buf.sample_rate())?;
        if clip.num_channels() != 1 && clip.num_channels() != buf.num_channels() {
            return Err(DenoiseError::NoiseClipChannels {
                clip: clip.num_channels(),
                input: buf.num_channels(),
            });
        }
    }
    let len = buf.num_frames();
    let padded = padded_len(len, params);
    let mut warnings = Vec::new();
    let mut channels = Vec::with_capacity(buf.num_channels());
    for (i, ch) in buf.channels().iter().enumerate() {
        let mut x = ch.clone();
        x.resize(padded, 0.0);
        let spec = stft(&AudioBuffer::mono(x, buf.sample_rate())?, params)?;
        let profile = match noise_clip {
            Some(clip) if method.needs_profile() => {
                let idx = if clip.num_channels() == 1 { 0 } else { i };
                let noise = stft(&clip.extract_channel(idx)?, params)?;
                Some(NoiseProfile::from_noise_clip(&noise)?)
            }
            _ => None,
        };
        let (out, warning) = method.apply(&spec, profile.as_ref())?;
        if let Some(w) = warning {
            warnings.push(format!("channel {i}: {w}"));
        }
        let mut y = istft(&out)?.into_channels().remove(0);
        y.truncate(len);
        channels.push(y);
    }
    Ok(DenoisedAudio {
        audio: AudioBuffer::new(channels, buf.sample_rate())?,
        warnings,
    })
}
