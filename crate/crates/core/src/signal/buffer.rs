use serde::{Deserialize, Serialize};

use super::SignalError;

/// Default capture rate for every stage of the pipeline.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multi-channel block of real samples, stored channel-major.
///
/// All channels have the same length and every sample is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self, SignalError> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidSampleRate);
        }
        if channels.is_empty() {
            return Err(SignalError::NoChannels);
        }
        let frames = channels[0].len();
        if channels.iter().any(|c| c.len() != frames) {
            return Err(SignalError::RaggedChannels);
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(SignalError::NonFinite);
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, SignalError> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silent(channels: usize, frames: usize, sample_rate: u32) -> Result<Self, SignalError> {
        Self::new(vec![vec![0.0; frames]; channels], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_frames(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.num_frames() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Copies one channel out as a mono buffer.
    pub fn extract_channel(&self, index: usize) -> Result<AudioBuffer, SignalError> {
        let ch = self
            .channels
            .get(index)
            .ok_or(SignalError::ChannelOutOfRange {
                index,
                channels: self.channels.len(),
            })?;
        Ok(AudioBuffer {
            channels: vec![ch.clone()],
            sample_rate: self.sample_rate,
        })
    }

    /// Returns frames `[start, end)` of every channel.
    pub fn slice_frames(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.num_frames());
        let start = start.min(end);
        AudioBuffer {
            channels: self
                .channels
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sum of squared samples over all channels.
    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|x| x * x).sum()
    }

    pub fn rms(&self) -> f64 {
        let n = (self.num_channels() * self.num_frames()).max(1);
        (self.energy() / n as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn require_mono(&self) -> Result<&[f64], SignalError> {
        if self.channels.len() != 1 {
            return Err(SignalError::ExpectedMono(self.channels.len()));
        }
        Ok(&self.channels[0])
    }

    pub fn require_rate(&self, expected: u32) -> Result<(), SignalError> {
        if self.sample_rate != expected {
            return Err(SignalError::RateMismatch {
                expected,
                found: self.sample_rate,
            });
        }
        Ok(())
    }

    /// Checks that `other` has the same rate, channel count and length.
    pub fn require_same_shape(&self, other: &AudioBuffer) -> Result<(), SignalError> {
        other.require_rate(self.sample_rate)?;
        if self.num_channels() != other.num_channels() || self.num_frames() != other.num_frames()
        {
            return Err(SignalError::ShapeMismatch {
                left: (self.num_channels(), self.num_frames()),
                right: (other.num_channels(), other.num_frames()),
            });
        }
        Ok(())
    }

    /// Applies `f` to each channel independently and reassembles the result.
    pub fn map_channels<F, E>(&self, mut f: F) -> Result<AudioBuffer, E>
    where
        F: FnMut(&AudioBuffer) -> Result<AudioBuffer, E>,
        E: From<SignalError>,
    {
        let mut out = Vec::with_capacity(self.num_channels());
        for i in 0..self.num_channels() {
            let mono = self.extract_channel(i)?;
            let processed = f(&mono)?;
            out.push(processed.require_mono()?.to_vec());
        }
        Ok(AudioBuffer::new(out, self.sample_rate)?)
    }

    /// Element-wise difference `self - other`.
    pub fn difference(&self, other: &AudioBuffer) -> Result<AudioBuffer, SignalError> {
        self.require_same_shape(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        AudioBuffer::new(channels, self.sample_rate)
    }
}
