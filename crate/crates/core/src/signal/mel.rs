//! Log-Mel filterbank features.

use serde::{Deserialize, Serialize};

use super::stft::{stft, FrameParams};
use super::{AudioBuffer, SignalError};

/// Added to band energies before the logarithm.
pub const LOG_FLOOR_EPS: f64 = 1e-10;

/// Band count used by the transformer front-end.
pub const AST_MEL_BANDS: usize = 128;

pub const MIN_MEL_SAMPLE_RATE: u32 = 8_000;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale between `f_min` and `f_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(
        n_mels: usize,
        fft_size: usize,
        sample_rate: u32,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self, SignalError> {
        let bins = fft_size / 2 + 1;
        if n_mels == 0 || n_mels > bins {
            return Err(SignalError::TooManyMelBands { n_mels, bins });
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(SignalError::InvalidMelRange { f_min, f_max });
        }
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut row: Vec<f64> = (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - lo) / (center - lo);
                    let falling = (hi - f) / (hi - center);
                    rising.min(falling).max(0.0)
                })
                .collect();
            // Low bands can be narrower than one FFT bin; they fall back to the
            // bin nearest their centre so every band carries energy.
            if row.iter().all(|&w| w == 0.0) {
                let k = ((center / bin_hz).round() as usize).min(bins - 1);
                row[k] = 1.0;
            }
            weights.push(row);
        }
        Ok(Self {
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Band energies for one power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// `None` means the Nyquist frequency.
    pub f_max: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: AST_MEL_BANDS,
            f_min: 0.0,
            f_max: None,
        }
    }
}

/// Log-Mel energies stored band-major: `values[band][frame]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    values: Vec<Vec<f64>>,
    n_mels: usize,
}

impl MelSpectrogram {
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self, SignalError> {
        let n_mels = values.len();
        if n_mels == 0 {
            return Err(SignalError::InvalidMelShape("no bands".into()));
        }
        let frames = values[0].len();
        if values.iter().any(|row| row.len() != frames) {
            return Err(SignalError::InvalidMelShape("ragged bands".into()));
        }
        Ok(Self { values, n_mels })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn num_frames(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band][frame]
    }

    /// Per-band average over time.
    pub fn time_mean(&self) -> Vec<f64> {
        let frames = self.num_frames().max(1) as f64;
        self.values
            .iter()
            .map(|row| row.iter().sum::<f64>() / frames)
            .collect()
    }
}

/// Log-Mel features with the default 25 ms / 10 ms Hamming framing.
pub fn mel_features(buf: &AudioBuffer, n_mels: usize) -> Result<MelSpectrogram, SignalError> {
    mel_features_with(
        buf,
        &FrameParams::speech_default(buf.sample_rate()),
        &MelConfig {
            n_mels,
            ..MelConfig::default()
        },
    )
}

pub fn mel_features_with(
    buf: &AudioBuffer,
    params: &FrameParams,
    config: &MelConfig,
) -> Result<MelSpectrogram, SignalError> {
    let rate = buf.sample_rate();
    if rate < MIN_MEL_SAMPLE_RATE {
        return Err(SignalError::RateTooLow {
            minimum: MIN_MEL_SAMPLE_RATE,
            found: rate,
        });
    }
    let f_max = config.f_max.unwrap_or(rate as f64 / 2.0);
    let bank = MelFilterbank::new(config.n_mels, params.fft_size, rate, config.f_min, f_max)?;
    let spec = stft(buf, params)?;
    let mut values = vec![Vec::with_capacity(spec.num_frames()); config.n_mels];
    for frame in spec.frames() {
        let power: Vec<f64> = frame.iter().map(|c| c.norm_sqr()).collect();
        for (band, e) in bank.apply(&power).into_iter().enumerate() {
            values[band].push((e + LOG_FLOOR_EPS).ln());
        }
    }
    MelSpectrogram::from_values(values)
}
