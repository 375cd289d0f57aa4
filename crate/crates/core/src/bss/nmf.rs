use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use super::{matrix_rows, BssError};
use crate::signal::{istft, stft, AudioBuffer, FrameParams, Spectrogram};

#[derive(Debug, Clone)]
pub struct NmfFactors {
    /// `rows × rank` basis.
    pub w: DMatrix<f64>,
    /// `rank × cols` activations.
    pub h: DMatrix<f64>,
    /// `‖V − WH‖²` before the first update and after each one.
    pub objective: Vec<f64>,
}

#[derive(Serialize)]
struct FactorDump {
    rank: usize,
    w: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    objective: Vec<f64>,
}

impl NmfFactors {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.w * &self.h
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(FactorDump {
            rank: self.rank(),
            w: matrix_rows(&self.w),
            h: matrix_rows(&self.h),
            objective: self.objective.clone(),
        })
        .expect("plain numeric data serialises")
    }
}

pub fn nmf_objective(v: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (v - w * h).norm_squared()
}

fn ratio_update(x: &mut DMatrix<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>) {
    for ((x, &n), &d) in x.iter_mut().zip(num.iter()).zip(den.iter()) {
        // 0/0 keeps the old value; entries with a zero denominator cannot
        // lower the objective by moving
        if d > 0.0 {
            *x *= n / d;
        }
    }
}

/// One multiplicative Euclidean update, `H` first, then `W`.
pub fn nmf_update(v: &DMatrix<f64>, w: &mut DMatrix<f64>, h: &mut DMatrix<f64>) {
    let wt = w.transpose();
    let num = &wt * v;
    let den = &wt * &*w * &*h;
    ratio_update(h, &num, &den);
    let ht = h.transpose();
    let num = v * &ht;
    let den = &*w * (&*h * &ht);
    ratio_update(w, &num, &den);
}

/// Factorises non-negative `V ≈ WH` with `iters` multiplicative updates.
///
/// Factors start uniform random, scaled to the data mean. Rows and columns
/// of `V` that are entirely zero start, and stay, zero.
pub fn nmf(v: &DMatrix<f64>, rank: usize, iters: usize, seed: u64) -> Result<NmfFactors, BssError> {
    let (rows, cols) = v.shape();
    let limit = rows.min(cols);
    if rank == 0 || rank >= limit {
        return Err(BssError::InvalidRank { rank, limit });
    }
    if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(BssError::InvalidEntry {
            row: i % rows,
            col: i / rows,
        });
    }
    let total: f64 = v.sum();
    if total == 0.0 {
        return Ok(NmfFactors {
            w: DMatrix::zeros(rows, rank),
            h: DMatrix::zeros(rank, cols),
            objective: vec![0.0],
        });
    }
    let scale = (total / (rows * cols) as f64 / rank as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero_row: Vec<bool> = v.row_iter().map(|r| r.iter().all(|&x| x == 0.0)).collect();
    let zero_col: Vec<bool> = v.column_iter().map(|c| c.iter().all(|&x| x == 0.0)).collect();
    let mut w = DMatrix::from_fn(rows, rank, |r, _| {
        let u: f64 = rng.random();
        if zero_row[r] { 0.0 } else { scale * u }
    });
    let mut h = DMatrix::from_fn(rank, cols, |_, c| {
        let u: f64 = rng.random();
        if zero_col[c] { 0.0 } else { scale * u }
    });
    let mut objective = Vec::with_capacity(iters + 1);
    objective.push(nmf_objective(v, &w, &h));
    for _ in 0..iters {
        nmf_update(v, &mut w, &mut h);
        objective.push(nmf_objective(v, &w, &h));
    }
    Ok(NmfFactors { w, h, objective })
}

/// NMF of a magnitude spectrogram arranged `bins × frames`.
pub fn nmf_spectrogram(
    spec: &Spectrogram,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<NmfFactors, BssError> {
    let v = DMatrix::from_fn(spec.num_bins(), spec.num_frames(), |k, t| {
        spec.frames()[t][k].norm()
    });
    nmf(&v, rank, iters, seed)
}

/// Splits a mono signal into `rank` parts, one per NMF component, by soft
/// masking its spectrogram with each component's share of `WH`.
pub fn nmf_separate(
    buf: &AudioBuffer,
    params: &FrameParams,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<(Vec<AudioBuffer>, NmfFactors), BssError> {
    buf.require_mono()?;
    let spec = stft(buf, params)?;
    let factors = nmf_spectrogram(&spec, rank, iters, seed)?;
    let total = factors.reconstruction();
    let mut parts = Vec::with_capacity(rank);
    for r in 0..rank {
        let part = spec.map_cells(|t, k, c| {
            let all = total[(k, t)];
            if all > 0.0 {
                c * (factors.w[(k, r)] * factors.h[(r, t)] / all)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mut samples = istft(&part)?.into_channels().remove(0);
        samples.resize(buf.num_frames(), 0.0);
        parts.push(AudioBuffer::mono(samples, buf.sample_rate())?);
    }
    Ok((parts, factors))
}
