use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gcc::{gcc_phat_slices, refine_with, CrossSpectrum};
use super::{LocalizeError, MicArrayGeometry};
use crate::signal::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDelay {
    pub i: usize,
    pub j: usize,
    /// `t_j − t_i`, seconds.
    pub delay_s: f64,
    pub peak: f64,
}

/// Delays for every mic pair `i < j`; the reverse direction is derived by
/// negation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdoaSet {
    pub pairs: Vec<PairDelay>,
    pub sample_rate: u32,
}

impl TdoaSet {
    pub fn delay(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return Some(0.0);
        }
        let (lo, hi, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        self.pairs
            .iter()
            .find(|p| p.i == lo && p.j == hi)
            .map(|p| sign * p.delay_s)
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate as f64
    }

    /// Exact delays for a point source, for tests and simulation checks.
    pub fn from_source(geom: &MicArrayGeometry, source: &[f64; 3], sample_rate: u32) -> Self {
        Self {
            pairs: geom
                .pairs()
                .map(|(i, j)| PairDelay {
                    i,
                    j,
                    delay_s: geom.model_delay(source, i, j),
                    peak: 1.0,
                })
                .collect(),
            sample_rate,
        }
    }

    pub fn mean_peak(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.peak).sum::<f64>() / self.pairs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdoaOptions {
    /// Follow the GCC-PHAT peak with the sub-sample correlation refinement.
    pub refine: bool,
}

impl Default for TdoaOptions {
    fn default() -> Self {
        Self { refine: true }
    }
}

/// Pairwise delays for every channel pair, each searched within its
/// physical bound `baseline / c` plus one sample.
pub fn estimate_tdoa(
    buf: &AudioBuffer,
    geom: &MicArrayGeometry,
    opts: TdoaOptions,
) -> Result<TdoaSet, LocalizeError> {
    if buf.num_channels() != geom.num_mics() {
        return Err(LocalizeError::ChannelMismatch {
            channels: buf.num_channels(),
            mics: geom.num_mics(),
        });
    }
    let rate = buf.sample_rate();
    let period = 1.0 / rate as f64;
    let pairs: Vec<(usize, usize)> = geom.pairs().collect();
    let pairs = pairs
        .par_iter()
        .map(|&(i, j)| {
            let bound = geom.baseline(i, j) / geom.speed_of_sound() + period;
            let (a, b) = (buf.channel(i), buf.channel(j));
            let coarse = gcc_phat_slices(a, b, rate, bound)?;
            let delay_s = if opts.refine {
                let cross = CrossSpectrum::new(a, b);
                refine_with(&cross, coarse.delay_s * rate as f64, bound * rate as f64) * period
            } else {
                coarse.delay_s
            };
            Ok(PairDelay {
                i,
                j,
                delay_s,
                peak: coarse.peak,
            })
        })
        .collect::<Result<Vec<_>, LocalizeError>>()?;
    Ok(TdoaSet {
        pairs,
        sample_rate: rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_channels_give_zero_delays() {
        let x: Vec<f64> = (0..2048).map(|n| ((n * 7919) % 113) as f64 / 56.0 - 1.0).collect();
        let buf = AudioBuffer::new(vec![x; 4], 16_000).unwrap();
        let set = estimate_tdoa(
            &buf,
            &MicArrayGeometry::default_square(),
            TdoaOptions::default(),
        )
        .unwrap();
        assert_eq!(set.pairs.len(), 6);
        assert!(set.pairs.iter().all(|p| p.delay_s.abs() < 1e-9));
    }

    #[test]
    fn reverse_lookup_is_negated() {
        let g = MicArrayGeometry::default_square();
        let set = TdoaSet::from_source(&g, &[1.0, 0.5, 0.0], 16_000);
        assert_eq!(set.delay(2, 0), set.delay(0, 2).map(|d| -d));
        assert_eq!(set.delay(1, 1), Some(0.0));
        assert_eq!(set.delay(0, 9), None);
    }

    #[test]
    fn channel_count_must_match() {
        let buf = AudioBuffer::silent(3, 1000, 16_000).unwrap();
        assert!(matches!(
            estimate_tdoa(&buf, &MicArrayGeometry::default_square(), TdoaOptions::default()),
            Err(LocalizeError::ChannelMismatch { .. })
        ));
    }
}
