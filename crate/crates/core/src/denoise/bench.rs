use std::thread;

use serde::{Deserialize, Serialize};

use super::{denoise_buffer, DenoiseError, DenoiseMethod, DEFAULT_GATE_FACTOR};
use crate::signal::metrics::db_json;
use crate::signal::{psnr, AudioBuffer, FrameParams, PSNR_IDENTICAL};

/// Reference PSNR column reported for each algorithm (dB).
pub const REFERENCE_PSNR_DB: [(&str, f64); 4] = [
    ("wiener", 36.791),
    ("spectral_gate", 55.235),
    ("spectral_subtract", 57.116),
    ("fft_otsu", 57.529),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub algorithm: String,
    #[serde(with = "db_json::option")]
    pub psnr_db: Option<f64>,
    pub reference_db: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// PSNR of the untouched noisy input.
    #[serde(with = "db_json")]
    pub noisy_psnr_db: f64,
    /// Sorted best first; failed entries last.
    pub entries: Vec<BenchmarkEntry>,
}

impl BenchmarkReport {
    pub fn entry(&self, algorithm: &str) -> Option<&BenchmarkEntry> {
        self.entries.iter().find(|e| e.algorithm == algorithm)
    }

    /// Plain-text table with the reference column.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>12} {:>12}\n",
            "algorithm", "psnr_db", "reference_db"
        );
        out.push_str(&format!(
            "{:<20} {:>12.3} {:>12}\n",
            "noisy_input", self.noisy_psnr_db, "-"
        ));
        for e in &self.entries {
            let v = match (e.psnr_db, &e.error) {
                (Some(v), _) => format!("{v:.3}"),
                (None, Some(err)) => format!("error: {err}"),
                (None, None) => "-".into(),
            };
            out.push_str(&format!(
                "{:<20} {:>12} {:>12.3}\n",
                e.algorithm, v, e.reference_db
            ));
        }
        out
    }
}

fn reference_for(name: &str) -> f64 {
    REFERENCE_PSNR_DB
        .iter()
        .find(|(n, _)| *n == name)
        .map(|r| r.1)
        .unwrap_or(f64::NAN)
}

/// Runs all four denoisers on `noisy` and scores each against `clean`.
///
/// `noise_clip` feeds the profile-based baselines; when absent the residual
/// `noisy − clean` is used. A noisy input identical to `clean` carries no
/// noise, so every entry is the identical-signal sentinel. Per-algorithm
/// failures are recorded in the entry rather than aborting the run.
pub fn benchmark_denoisers(
    clean: &AudioBuffer,
    noisy: &AudioBuffer,
    noise_clip: Option<&AudioBuffer>,
) -> Result<BenchmarkReport, DenoiseError> {
    clean.require_same_shape(noisy)?;
    let methods = [
        DenoiseMethod::Otsu,
        DenoiseMethod::Wiener,
        DenoiseMethod::SpectralGate {
            factor: DEFAULT_GATE_FACTOR,
        },
        DenoiseMethod::SpectralSubtract,
    ];
    let noisy_psnr_db = psnr(clean, noisy)?;
    let mut entries: Vec<BenchmarkEntry> = if clean == noisy {
        methods
            .iter()
            .map(|m| BenchmarkEntry {
                algorithm: m.name().into(),
                psnr_db: Some(PSNR_IDENTICAL),
                reference_db: reference_for(m.name()),
                error: None,
            })
            .collect()
    } else {
        let residual;
        let noise = match noise_clip {
            Some(n) => n,
            None => {
                residual = noisy.difference(clean)?;
                &residual
            }
        };
        let params = FrameParams::speech_default(clean.sample_rate());
        thread::scope(|scope| {
            let handles: Vec<_> = methods
                .iter()
                .map(|&m| {
                    scope.spawn(move || {
                        denoise_buffer(noisy, m, Some(noise), &params)
                            .and_then(|d| Ok(psnr(clean, &d.audio)?))
                    })
                })
                .collect();
            methods
                .iter()
                .zip(handles)
                .map(|(m, h)| {
                    let result = h.join().expect("denoiser thread panicked");
                    let (psnr_db, error) = match result {
                        Ok(v) => (Some(v), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    BenchmarkEntry {
                        algorithm: m.name().into(),
                        psnr_db,
                        reference_db: reference_for(m.name()),
                        error,
                    }
                })
                .collect()
        })
    };
    entries.sort_by(|a, b| {
        let key = |e: &BenchmarkEntry| e.psnr_db.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a))
    });
    Ok(BenchmarkReport {
        noisy_psnr_db,
        entries,
    })
}
