//! Free-field acoustic scene rendering with exact ground truth.
//!
//! Each source reaches each microphone after `‖x − p‖ / c` seconds with
//! gain `1 / ‖x − p‖`. Fractional delays are exact: tones are evaluated
//! analytically and other signals are shifted in the frequency domain.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Deserializer, Serialize};

use crate::localize::{
    azimuth_of, distance, LocalizeError, MicArrayGeometry, PairDelay, Point, TdoaSet,
};
use crate::signal::{read_wav, write_wav, AudioBuffer, SignalError, WavEncoding, DEFAULT_SAMPLE_RATE};

/// Sources closer than this to a microphone are rejected.
pub const MIN_SOURCE_MIC_DISTANCE_M: f64 = 1e-6;

const NOISE_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("source {source_index} is co-located with microphone {mic}")]
    CoLocated { source_index: usize, mic: usize },
    #[error("scene file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    Tone { freq_hz: f64 },
    WhiteNoise,
    Wav { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Metres; a two-element position lies in the array plane.
    #[serde(deserialize_with = "point_2d_or_3d")]
    pub position: Point,
    pub signal: SignalKind,
    /// Tone amplitude, noise standard deviation, or WAV gain, at 1 m.
    #[serde(default = "unit")]
    pub level: f64,
}

impl SourceSpec {
    /// Source at `distance_m` and `azimuth_deg` from the array centroid, in
    /// the array plane.
    pub fn polar(
        geom: &MicArrayGeometry,
        distance_m: f64,
        azimuth_deg: f64,
        signal: SignalKind,
    ) -> Self {
        let c = geom.centroid();
        let a = azimuth_deg.to_radians();
        Self {
            position: [c[0] + distance_m * a.cos(), c[1] + distance_m * a.sin(), c[2]],
            signal,
            level: 1.0,
        }
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }
}

fn unit() -> f64 {
    1.0
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

fn point_2d_or_3d<'de, D: Deserializer<'de>>(d: D) -> Result<Point, D::Error> {
    let v = Vec::<f64>::deserialize(d)?;
    match v.as_slice() {
        [x, y] => Ok([*x, *y, 0.0]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(serde::de::Error::custom(format!(
            "position needs 2 or 3 coordinates, got {}",
            v.len()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "MicArrayGeometry::default_square")]
    pub geometry: MicArrayGeometry,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    /// Per-channel SNR of added white Gaussian noise; `None` renders clean.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(geometry: MicArrayGeometry, duration_s: f64, sample_rate: u32) -> Self {
        Self {
            geometry,
            sources: Vec::new(),
            noise_snr_db: None,
            duration_s,
            sample_rate,
            seed: 0,
        }
    }

    pub fn with_source(mut self, source: SourceSpec) -> Self {
        self.sources.push(source);
        self
    }

    pub fn with_noise(mut self, snr_db: f64) -> Self {
        self.noise_snr_db = Some(snr_db);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SceneError> {
        let spec: SceneSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a scene file; relative WAV paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let mut spec = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut spec.sources {
            if let SignalKind::Wav { path } = &mut s.signal {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(spec)
    }

    pub fn num_frames(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(SceneError::InvalidSpec(format!(
                "duration {} s must be positive",
                self.duration_s
            )));
        }
        if self.sample_rate == 0 {
            return Err(SignalError::InvalidSampleRate.into());
        }
        if self.num_frames() == 0 {
            return Err(SceneError::InvalidSpec("scene is shorter than one sample".into()));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(SceneError::InvalidSpec(format!("noise SNR {snr} dB")));
            }
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for (k, s) in self.sources.iter().enumerate() {
            if s.position.iter().any(|v| !v.is_finite()) {
                return Err(SceneError::InvalidSpec(format!("source {k} position")));
            }
            if !(s.level.is_finite() && s.level >= 0.0) {
                return Err(SceneError::InvalidSpec(format!("source {k} level {}", s.level)));
            }
            if let SignalKind::Tone { freq_hz } = s.signal {
                if !(freq_hz > 0.0 && freq_hz < nyquist) {
                    return Err(SceneError::InvalidSpec(format!(
                        "source {k} tone {freq_hz} Hz outside (0, {nyquist})"
                    )));
                }
            }
            for (m, p) in self.geometry.positions().iter().enumerate() {
                if distance(p, &s.position) < MIN_SOURCE_MIC_DISTANCE_M {
                    return Err(SceneError::CoLocated { source_index: k, mic: m });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTruth {
    pub position: Point,
    /// Degrees from the array centroid, counter-clockwise from +x.
    pub azimuth_deg: f64,
    /// Metres from the array centroid.
    pub distance_m: f64,
    /// Propagation delay to each microphone, seconds.
    pub delays_s: Vec<f64>,
    /// `1 / distance` gain to each microphone.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub speed_of_sound: f64,
    pub mic_positions: Vec<Point>,
    pub noise_snr_db: Option<f64>,
    pub sources: Vec<SourceTruth>,
}

impl GroundTruth {
    pub fn from_spec(spec: &SceneSpec) -> Self {
        let g = &spec.geometry;
        let c = g.centroid();
        let sources = spec
            .sources
            .iter()
            .map(|s| {
                let dists: Vec<f64> = g.positions().iter().map(|p| distance(p, &s.position)).collect();
                SourceTruth {
                    position: s.position,
                    azimuth_deg: azimuth_of(s.position[0] - c[0], s.position[1] - c[1]),
                    distance_m: distance(&c, &s.position),
                    delays_s: dists.iter().map(|d| d / g.speed_of_sound()).collect(),
                    gains: dists.iter().map(|d| 1.0 / d).collect(),
                }
            })
            .collect();
        Self {
            sample_rate: spec.sample_rate,
            duration_s: spec.duration_s,
            speed_of_sound: g.speed_of_sound(),
            mic_positions: g.positions().to_vec(),
            noise_snr_db: spec.noise_snr_db,
            sources,
        }
    }

    /// Exact inter-microphone delays `t_j − t_i` for one source.
    pub fn tdoa(&self, source: usize) -> TdoaSet {
        let d = &self.sources[source].delays_s;
        let n = d.len();
        let pairs = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| PairDelay {
                i,
                j,
                delay_s: d[j] - d[i],
                peak: 1.0,
            })
            .collect();
        TdoaSet {
            pairs,
            sample_rate: self.sample_rate,
        }
    }
}

/// Delays `x` by `delay` samples via a linear phase ramp over `len` points.
/// `x` is zero-padded to `len` first; the shift is circular within `len`.
pub fn fractional_delay(x: &[f64], delay: f64, len: usize) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let spectrum = forward(&mut planner, x, len);
    delay_spectrum(&mut planner, &spectrum, delay)
}

fn forward(planner: &mut FftPlanner<f64>, x: &[f64], len: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..len)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    planner.plan_fft_forward(len).process(&mut buf);
    buf
}

fn delay_spectrum(planner: &mut FftPlanner<f64>, spectrum: &[Complex64], delay: f64) -> Vec<f64> {
    let n = spectrum.len();
    let mut buf: Vec<Complex64> = spectrum
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            if 2 * k == n {
                // Nyquist: keep the output real
                return x * (std::f64::consts::PI * delay).cos();
            }
            let f = if 2 * k < n { k as f64 } else { k as f64 - n as f64 };
            x * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * delay / n as f64)
        })
        .collect();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

enum Prepared {
    Tone { freq_hz: f64 },
    Spectrum(Vec<Complex64>),
}

/// Renders the scene. Output is bit-identical for identical specs.
pub fn render_scene(spec: &SceneSpec) -> Result<(AudioBuffer, GroundTruth), SceneError> {
    spec.validate()?;
    let truth = GroundTruth::from_spec(spec);
    let n = spec.num_frames();
    let fs = spec.sample_rate as f64;
    let mut planner = FftPlanner::new();
    let prepared = spec
        .sources
        .iter()
        .zip(&truth.sources)
        .enumerate()
        .map(|(k, (s, t))| -> Result<Prepared, SceneError> {
            Ok(match &s.signal {
                SignalKind::Tone { freq_hz } => Prepared::Tone { freq_hz: *freq_hz },
                SignalKind::WhiteNoise => {
                    let x = gaussian(&mut rng(spec.seed, k as u64), n);
                    Prepared::Spectrum(forward(&mut planner, &x, n))
                }
                SignalKind::Wav { path } => {
                    let wav = read_wav(path)?;
                    wav.require_rate(spec.sample_rate)?;
                    let x = wav.require_mono()?;
                    let max_delay = t.delays_s.iter().fold(0.0f64, |a, &d| a.max(d)) * fs;
                    // enough room that the shift never wraps into the capture
                    let len = n + max_delay.ceil() as usize + 1;
                    let x: Vec<f64> = x.iter().take(n).copied().collect();
                    Prepared::Spectrum(forward(&mut planner, &x, len))
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut channels: Vec<Vec<f64>> = (0..spec.geometry.num_mics())
        .into_par_iter()
        .map(|m| {
            let mut planner = FftPlanner::new();
            let mut out = vec![0.0; n];
            for ((s, t), p) in spec.sources.iter().zip(&truth.sources).zip(&prepared) {
                let gain = s.level * t.gains[m];
                let delay = t.delays_s[m];
                match p {
                    Prepared::Tone { freq_hz } => {
                        let w = 2.0 * std::f64::consts::PI * freq_hz;
                        for (i, o) in out.iter_mut().enumerate() {
                            *o += gain * (w * (i as f64 / fs - delay)).sin();
                        }
                    }
                    Prepared::Spectrum(x) => {
                        let y = delay_spectrum(&mut planner, x, delay * fs);
                        for (o, v) in out.iter_mut().zip(y) {
                            *o += gain * v;
                        }
                    }
                }
            }
            out
        })
        .collect();

    if let Some(snr_db) = spec.noise_snr_db {
        for (m, ch) in channels.iter_mut().enumerate() {
            let power = ch.iter().map(|v| v * v).sum::<f64>() / n as f64;
            if power == 0.0 {
                continue;
            }
            let noise = gaussian(&mut rng(spec.seed, NOISE_STREAM_BASE + m as u64), n);
            let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let scale = (power / 10f64.powf(snr_db / 10.0) / noise_power).sqrt();
            for (o, v) in ch.iter_mut().zip(noise) {
                *o += scale * v;
            }
        }
    }
    Ok((AudioBuffer::new(channels, spec.sample_rate)?, truth))
}

/// `capture.wav` → `capture.truth.json`.
pub fn sidecar_path(wav_path: &Path) -> PathBuf {
    wav_path.with_extension("truth.json")
}

/// Writes the capture as a float WAV and the ground truth beside it.
pub fn write_scene(
    wav_path: &Path,
    capture: &AudioBuffer,
    truth: &GroundTruth,
) -> Result<PathBuf, SceneError> {
    write_wav(wav_path, capture, WavEncoding::Float32)?;
    let sidecar = sidecar_path(wav_path);
    std::fs::write(&sidecar, serde_json::to_string_pretty(truth)?)?;
    Ok(sidecar)
}

#[cfg(test)]
mod tests;
