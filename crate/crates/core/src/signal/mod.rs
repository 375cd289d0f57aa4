//! Audio buffers, framing transforms, log-Mel features and PSNR.

mod buffer;
pub mod mel;
pub mod metrics;
pub mod stft;
pub mod wav;

pub use buffer::{AudioBuffer, DEFAULT_SAMPLE_RATE};
pub use mel::{
    hz_to_mel, mel_features, mel_features_with, mel_to_hz, MelConfig, MelFilterbank,
    MelSpectrogram, AST_MEL_BANDS, LOG_FLOOR_EPS, MIN_MEL_SAMPLE_RATE,
};
pub use metrics::{psnr, PSNR_IDENTICAL};
pub use stft::{istft, stft, FrameParams, Spectrogram, WindowKind};
pub use wav::{read_wav, write_wav, WavEncoding};

#[derive(Debug, thiserror::Error)]
pub enum SignalError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("buffer has no channels")]
    NoChannels,
    #[error("channels differ in length")]
    RaggedChannels,
    #[error("non-finite sample")]
    NonFinite,
    #[error("channel {index} out of range ({channels} channels)")]
    ChannelOutOfRange { index: usize, channels: usize },
    #[error("expected a mono buffer, found {0} channels")]
    ExpectedMono(usize),
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    RateMismatch { expected: u32, found: u32 },
    #[error("sample rate {found} Hz below minimum {minimum} Hz")]
    RateTooLow { minimum: u32, found: u32 },
    #[error("shape mismatch: {left:?} vs {right:?} (channels, frames)")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("signal of {found} samples is shorter than one window of {needed}")]
    TooShort { needed: usize, found: usize },
    #[error("invalid frame parameters: {0}")]
    InvalidFrameParams(String),
    #[error("window sum vanishes at sample {sample}")]
    DegenerateWindowSum { sample: usize },
    #[error("{n_mels} mel bands exceed {bins} spectrum bins")]
    TooManyMelBands { n_mels: usize, bins: usize },
    #[error("invalid mel range {f_min}..{f_max} Hz")]
    InvalidMelRange { f_min: f64, f_max: f64 },
    #[error("invalid mel spectrogram: {0}")]
    InvalidMelShape(String),
    #[error("unsupported WAV layout: {0}")]
    UnsupportedWav(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}
