//! Windowed short-time Fourier transform and its overlap-add inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioBuffer, SignalError};

/// Window-sum values below this are treated as uncovered.
const WINDOW_SUM_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hamming,
    /// Periodic Hann.
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64;
                match self {
                    // symmetric Hamming, as used by speech front-ends
                    WindowKind::Hamming if len > 1 => 0.54 - 0.46 * (phase / (n - 1.0)).cos(),
                    WindowKind::Hamming => 1.0,
                    WindowKind::Hann => 0.5 - 0.5 * (phase / n).cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Frame layout in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameParams {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub fft_size: usize,
}

impl FrameParams {
    pub fn new(
        window_len: usize,
        hop: usize,
        window: WindowKind,
        fft_size: usize,
    ) -> Result<Self, SignalError> {
        let params = Self {
            window_len,
            hop,
            window,
            fft_size,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds params from durations in seconds; `fft_size` is the next power
    /// of two at or above the window length.
    pub fn from_durations(
        sample_rate: u32,
        window_s: f64,
        hop_s: f64,
        window: WindowKind,
    ) -> Result<Self, SignalError> {
        if !(window_s > 0.0 && hop_s > 0.0) {
            return Err(SignalError::InvalidFrameParams(
                "durations must be positive".into(),
            ));
        }
        let window_len = (window_s * sample_rate as f64).round() as usize;
        let hop = (hop_s * sample_rate as f64).round() as usize;
        Self::new(window_len, hop, window, window_len.max(1).next_power_of_two())
    }

    /// 25 ms Hamming window every 10 ms.
    pub fn speech_default(sample_rate: u32) -> Self {
        Self::from_durations(sample_rate, 0.025, 0.010, WindowKind::Hamming)
            .expect("default frame params are valid for any positive rate")
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidFrameParams(m.to_string()));
        if self.window_len == 0 || self.hop == 0 {
            return bad("window and hop must be non-zero");
        }
        if self.hop > self.window_len {
            return bad("hop longer than window");
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.window_len {
            return bad("fft_size must be a power of two no shorter than the window");
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples, `None` if shorter than one window.
    pub fn num_frames(&self, len: usize) -> Option<usize> {
        (len >= self.window_len).then(|| (len - self.window_len) / self.hop + 1)
    }
}

/// Complex STFT, one row of `num_bins` coefficients per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: Vec<Vec<Complex64>>,
    params: FrameParams,
    sample_rate: u32,
    signal_len: usize,
}

impl Spectrogram {
    pub fn from_frames(
        frames: Vec<Vec<Complex64>>,
        params: FrameParams,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self, SignalError> {
        params.validate()?;
        if frames.iter().any(|f| f.len() != params.num_bins()) {
            return Err(SignalError::InvalidFrameParams(
                "frame width does not match fft_size/2+1".into(),
            ));
        }
        let covered = frames
            .len()
            .checked_sub(1)
            .map_or(0, |n| n * params.hop + params.window_len);
        if signal_len < covered {
            return Err(SignalError::InvalidFrameParams(
                "signal length shorter than the frames cover".into(),
            ));
        }
        Ok(Self {
            frames,
            params,
            sample_rate,
            signal_len,
        })
    }

    pub fn frames(&self) -> &[Vec<Complex64>] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.frames
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.params.num_bins()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same layout with every coefficient passed through `f`.
    pub fn map_cells<F>(&self, mut f: F) -> Spectrogram
    where
        F: FnMut(usize, usize, Complex64) -> Complex64,
    {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(t, row)| row.iter().enumerate().map(|(k, &c)| f(t, k, c)).collect())
            .collect();
        Spectrogram {
            frames,
            ..self.clone_layout()
        }
    }

    fn clone_layout(&self) -> Spectrogram {
        Spectrogram {
            frames: Vec::new(),
            params: self.params,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        }
    }

    /// Energy of one frame via Parseval on the one-sided spectrum.
    pub fn frame_energy(&self, frame: usize) -> f64 {
        let row = &self.frames[frame];
        let n = self.params.fft_size;
        let last = row.len() - 1;
        let sum: f64 = row
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = if k == 0 || k == last { 1.0 } else { 2.0 };
                w * c.norm_sqr()
            })
            .sum();
        sum / n as f64
    }
}

fn planner_pair(size: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(size), planner.plan_fft_inverse(size))
}

/// Short-time Fourier transform of a mono buffer.
pub fn stft(buf: &AudioBuffer, params: &FrameParams) -> Result<Spectrogram, SignalError> {
    params.validate()?;
    let x = buf.require_mono()?;
    let n_frames = params.num_frames(x.len()).ok_or(SignalError::TooShort {
        needed: params.window_len,
        found: x.len(),
    })?;
    let window = params.window.coefficients(params.window_len);
    let (fft, _) = planner_pair(params.fft_size);
    let bins = params.num_bins();
    let mut scratch = vec![Complex64::default(); params.fft_size];
    let frames = (0..n_frames)
        .map(|t| {
            let start = t * params.hop;
            scratch.fill(Complex64::default());
            for (slot, (&s, &w)) in scratch
                .iter_mut()
                .zip(x[start..start + params.window_len].iter().zip(&window))
            {
                *slot = Complex64::new(s * w, 0.0);
            }
            fft.process(&mut scratch);
            scratch[..bins].to_vec()
        })
        .collect();
    Spectrogram::from_frames(frames, *params, buf.sample_rate(), x.len())
}

/// Weighted overlap-add inverse: each frame is re-windowed and the sum is
/// normalised by the accumulated squared window.
///
/// Samples past the last frame are zero.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer, SignalError> {
    let params = spec.params;
    let window = params.window.coefficients(params.window_len);
    let n = params.fft_size;
    let bins = params.num_bins();
    let mut out = vec![0.0; spec.signal_len];
    let mut norm = vec![0.0; spec.signal_len];
    let (_, ifft) = planner_pair(n);
    let mut scratch = vec![Complex64::default(); n];
    for (t, row) in spec.frames.iter().enumerate() {
        scratch[..bins].copy_from_slice(row);
        // Hermitian completion; DC and Nyquist imaginary parts are dropped
        scratch[0].im = 0.0;
        scratch[n / 2].im = 0.0;
        for k in 1..n / 2 {
            scratch[n - k] = row[k].conj();
        }
        ifft.process(&mut scratch);
        let start = t * params.hop;
        for (i, &w) in window.iter().enumerate() {
            out[start + i] += w * scratch[i].re / n as f64;
            norm[start + i] += w * w;
        }
    }
    let covered = spec
        .frames
        .len()
        .checked_sub(1)
        .map_or(0, |last| last * params.hop + params.window_len);
    for i in 0..covered {
        if norm[i] < WINDOW_SUM_FLOOR {
            return Err(SignalError::DegenerateWindowSum { sample: i });
        }
        out[i] /= norm[i];
    }
    AudioBuffer::mono(out, spec.sample_rate)
}
