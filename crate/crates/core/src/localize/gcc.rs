//! Pairwise delay estimation: GCC-PHAT with a parabolic peak, and a
//! frequency-domain sub-sample refinement.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::LocalizeError;
use crate::signal::{AudioBuffer, WindowKind};

/// Floor on the cross-spectrum magnitude in the PHAT denominator.
pub const PHAT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GccResult {
    /// How far `b` lags `a`, seconds.
    pub delay_s: f64,
    /// Normalised correlation at the integer peak.
    pub peak: f64,
}

fn fft_in_place(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    plan.process(data);
}

fn spectrum(x: &[f64], size: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(size, Complex64::default());
    fft_in_place(&mut buf, false);
    buf
}

/// GCC-PHAT delay of `b` relative to `a`, searched within `±max_lag_s`.
///
/// Swapping the arguments negates the delay exactly.
pub fn gcc_phat(a: &AudioBuffer, b: &AudioBuffer, max_lag_s: f64) -> Result<GccResult, LocalizeError> {
    let rate = a.sample_rate();
    b.require_rate(rate)?;
    gcc_phat_slices(a.require_mono()?, b.require_mono()?, rate, max_lag_s)
}

pub fn gcc_phat_slices(
    a: &[f64],
    b: &[f64],
    sample_rate: u32,
    max_lag_s: f64,
) -> Result<GccResult, LocalizeError> {
    if a.len() != b.len() {
        return Err(LocalizeError::LengthMismatch(a.len(), b.len()));
    }
    let duration = a.len() as f64 / sample_rate as f64;
    if !(max_lag_s >= 0.0 && max_lag_s < duration / 2.0) {
        return Err(LocalizeError::InvalidMaxLag {
            max_lag_s,
            duration_s: duration,
        });
    }
    if a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0) {
        return Err(LocalizeError::UndefinedCorrelation);
    }
    // fixed argument order so (a, b) and (b, a) share one computation
    let order = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    match order {
        Ordering::Greater => {
            let r = gcc_phat_ordered(b, a, sample_rate, max_lag_s);
            Ok(GccResult {
                delay_s: -r.delay_s,
                ..r
            })
        }
        Ordering::Equal => {
            let r = gcc_phat_ordered(a, b, sample_rate, max_lag_s);
            Ok(GccResult { delay_s: 0.0, ..r })
        }
        Ordering::Less => Ok(gcc_phat_ordered(a, b, sample_rate, max_lag_s)),
    }
}

fn gcc_phat_ordered(a: &[f64], b: &[f64], sample_rate: u32, max_lag_s: f64) -> GccResult {
    let size = (2 * a.len()).next_power_of_two();
    let fa = spectrum(a, size);
    let fb = spectrum(b, size);
    let mut cross: Vec<Complex64> = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| {
            let c = x.conj() * y;
            c / c.norm().max(PHAT_FLOOR)
        })
        .collect();
    fft_in_place(&mut cross, true);
    let corr = |lag: isize| cross[lag.rem_euclid(size as isize) as usize].re / size as f64;

    let max_lag = (max_lag_s * sample_rate as f64).floor() as isize;
    let (best, peak) = (-max_lag..=max_lag)
        .map(|k| (k, corr(k)))
        .fold((0isize, f64::NEG_INFINITY), |acc, (k, v)| {
            if v > acc.1 {
                (k, v)
            } else {
                acc
            }
        });
    let (ym, y0, yp) = (corr(best - 1), peak, corr(best + 1));
    let denom = ym - 2.0 * y0 + yp;
    let offset = if denom < 0.0 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    GccResult {
        delay_s: (best as f64 + offset) / sample_rate as f64,
        peak,
    }
}

/// Cross-spectrum of two Hann-tapered blocks, bins `1..size/2`, as
/// `(angular frequency in rad/sample, conj(A)·B)`.
pub(crate) struct CrossSpectrum {
    terms: Vec<(f64, Complex64)>,
}

impl CrossSpectrum {
    pub(crate) fn new(a: &[f64], b: &[f64]) -> Self {
        let size = a.len().next_power_of_two();
        let window = WindowKind::Hann.coefficients(a.len());
        let taper = |x: &[f64]| -> Vec<f64> { x.iter().zip(&window).map(|(v, w)| v * w).collect() };
        let fa = spectrum(&taper(a), size);
        let fb = spectrum(&taper(b), size);
        let terms = (1..size / 2)
            .map(|k| (2.0 * PI * k as f64 / size as f64, fa[k].conj() * fb[k]))
            .collect();
        Self { terms }
    }

    /// Band-limited cross-correlation at fractional lag `tau` (samples),
    /// with first and second derivatives.
    fn correlation(&self, tau: f64) -> (f64, f64, f64) {
        self.terms.iter().fold((0.0, 0.0, 0.0), |(r, d1, d2), &(w, c)| {
            let rot = c * Complex64::from_polar(1.0, w * tau);
            (r + rot.re, d1 - w * rot.im, d2 - w * w * rot.re)
        })
    }

    /// Newton ascent on the correlation from `start`; `None` if it leaves
    /// `±bound` or fails to settle.
    fn ascend(&self, start: f64, bound: f64) -> Option<(f64, f64)> {
        let mut tau = start;
        for _ in 0..50 {
            let (_, d1, d2) = self.correlation(tau);
            if !(d2 < 0.0) {
                return None;
            }
            let step = (d1 / d2).clamp(-0.5, 0.5);
            tau -= step;
            if tau.abs() > bound {
                return None;
            }
            if step.abs() < 1e-12 {
                break;
            }
        }
        Some((tau, self.correlation(tau).0))
    }
}

/// Sub-sample delay (samples) maximising the cross-correlation evaluated
/// in the frequency domain.
///
/// Newton ascent runs from `coarse` and from the best integer lag within
/// `±bound`; the higher correlation wins. Returns `coarse` when neither
/// start converges inside the bound.
pub fn refine_delay(a: &[f64], b: &[f64], coarse: f64, bound: f64) -> f64 {
    let cross = CrossSpectrum::new(a, b);
    refine_with(&cross, coarse, bound)
}

pub(crate) fn refine_with(cross: &CrossSpectrum, coarse: f64, bound: f64) -> f64 {
    let whole = bound.floor() as isize;
    let integer_best = (-whole..=whole)
        .map(|k| (k as f64, cross.correlation(k as f64).0))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|x| x.0)
        .unwrap_or(0.0);
    [coarse, integer_best]
        .into_iter()
        .filter_map(|s| cross.ascend(s, bound))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|x| x.0)
        .unwrap_or(coarse)
}
