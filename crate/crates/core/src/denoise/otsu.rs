//! Otsu threshold selection over a dB-magnitude histogram and the hard
//! spectral mask built on it.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DenoiseError;
use crate::signal::Spectrogram;

pub const DEFAULT_HISTOGRAM_BINS: usize = 256;

/// Magnitudes are floored here before conversion to dB, so exact zeros sit at -240 dB.
pub const MAGNITUDE_FLOOR: f64 = 1e-12;

/// Between-class variances within this relative distance count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

pub fn magnitude_db(c: Complex64) -> f64 {
    20.0 * c.norm().max(MAGNITUDE_FLOOR).log10()
}

/// Counts of time-frequency cells per quantised dB level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeHistogram {
    pub counts: Vec<u64>,
    pub min_db: f64,
    pub max_db: f64,
}

impl MagnitudeHistogram {
    pub fn from_counts(counts: Vec<u64>, min_db: f64, max_db: f64) -> Self {
        Self {
            counts,
            min_db,
            max_db,
        }
    }

    /// Histogram of every cell of `spec` over its observed dB range.
    pub fn from_spectrogram(spec: &Spectrogram, n_bins: usize) -> Self {
        let (min_db, max_db) = spec
            .frames()
            .iter()
            .flatten()
            .map(|&c| magnitude_db(c))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let mut hist = Self {
            counts: vec![0; n_bins.max(1)],
            min_db,
            max_db,
        };
        for &c in spec.frames().iter().flatten() {
            let b = hist.bin_of(magnitude_db(c));
            hist.counts[b] += 1;
        }
        hist
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width_db(&self) -> f64 {
        (self.max_db - self.min_db) / self.n_bins() as f64
    }

    pub fn bin_of(&self, db: f64) -> usize {
        let span = self.max_db - self.min_db;
        if !(span > 0.0) {
            return 0;
        }
        let pos = ((db - self.min_db) / span * self.n_bins() as f64).floor();
        (pos.max(0.0) as usize).min(self.n_bins() - 1)
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtsuThreshold {
    /// Last histogram bin of the background class.
    pub bin: usize,
    /// Upper dB edge of `bin`.
    pub level_db: f64,
    pub between_class_variance: f64,
}

/// Picks the split maximising `ω0·ω1·(μ0 − μ1)²`; the smallest such bin wins ties.
pub fn otsu_threshold(hist: &MagnitudeHistogram) -> Result<OtsuThreshold, DenoiseError> {
    if hist.nonempty_bins() < 2 {
        return Err(DenoiseError::DegenerateHistogram);
    }
    let total = hist.total() as f64;
    let total_sum: f64 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut n0 = 0.0;
    let mut s0 = 0.0;
    let mut best = (0usize, 0.0f64);
    for (k, &c) in hist.counts.iter().enumerate().take(hist.n_bins() - 1) {
        n0 += c as f64;
        s0 += k as f64 * c as f64;
        let n1 = total - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let mu0 = s0 / n0;
        let mu1 = (total_sum - s0) / n1;
        let var = (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if var > best.1 * (1.0 + TIE_TOLERANCE) {
            best = (k, var);
        }
    }
    let (bin, between_class_variance) = best;
    Ok(OtsuThreshold {
        bin,
        level_db: hist.min_db + (bin + 1) as f64 * hist.bin_width_db(),
        between_class_variance,
    })
}

#[derive(Debug, Clone)]
pub struct OtsuOutcome {
    pub spectrogram: Spectrogram,
    /// `None` when the histogram was degenerate and the input passed through.
    pub threshold: Option<OtsuThreshold>,
    pub warning: Option<String>,
}

/// Hard mask: cells whose dB magnitude falls at or below the Otsu bin are
/// zeroed, the rest are copied unchanged.
pub fn denoise_otsu(spec: &Spectrogram) -> Result<OtsuOutcome, DenoiseError> {
    if spec.is_empty() {
        return Err(DenoiseError::EmptySpectrogram);
    }
    let hist = MagnitudeHistogram::from_spectrogram(spec, DEFAULT_HISTOGRAM_BINS);
    let threshold = match otsu_threshold(&hist) {
        Ok(t) => t,
        Err(DenoiseError::DegenerateHistogram) => {
            log::warn!("degenerate magnitude histogram; spectrogram left unchanged");
            return Ok(OtsuOutcome {
                spectrogram: spec.clone(),
                threshold: None,
                warning: Some("degenerate magnitude histogram".into()),
            });
        }
        Err(e) => return Err(e),
    };
    let masked = spec.map_cells(|_, _, c| {
        if hist.bin_of(magnitude_db(c)) <= threshold.bin {
            Complex64::default()
        } else {
            c
        }
    });
    Ok(OtsuOutcome {
        spectrogram: masked,
        threshold: Some(threshold),
        warning: None,
    })
}
