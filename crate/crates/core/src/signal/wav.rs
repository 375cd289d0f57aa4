//! WAV ingestion and export: 16-bit PCM or 32-bit float, 1 to 8 channels.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, SignalError};

pub const MAX_WAV_CHANNELS: u16 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, SignalError> {
    let reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > MAX_WAV_CHANNELS {
        return Err(SignalError::UnsupportedWav(format!(
            "{} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(SignalError::UnsupportedWav(format!("{fmt:?} {bits}-bit")));
        }
    };
    let n_ch = spec.channels as usize;
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &v) in frame.iter().enumerate() {
            channels[c].push(v);
        }
    }
    AudioBuffer::new(channels, spec.sample_rate)
}

pub fn write_wav(
    path: impl AsRef<Path>,
    buf: &AudioBuffer,
    encoding: WavEncoding,
) -> Result<(), SignalError> {
    if buf.num_channels() > MAX_WAV_CHANNELS as usize {
        return Err(SignalError::UnsupportedWav(format!(
            "{} channels",
            buf.num_channels()
        )));
    }
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: buf.num_channels() as u16,
        sample_rate: buf.sample_rate(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for i in 0..buf.num_frames() {
        for ch in buf.channels() {
            match encoding {
                WavEncoding::Pcm16 => {
                    let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v)?;
                }
                WavEncoding::Float32 => writer.write_sample(ch[i] as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
