use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BssError, WhitenedData};

/// `E[log cosh ν]` for standard normal `ν`.
pub const GAUSSIAN_LOGCOSH: f64 = 0.374_567_207_5;

/// A source whose log-cosh statistic sits within this many standard errors
/// of the Gaussian value is indistinguishable from noise.
const MIN_NON_GAUSSIANITY_Z: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeparatedSources {
    /// `sources × frames`, unit variance.
    pub sources: DMatrix<f64>,
    /// `sources × channels`; applied to mean-removed input.
    pub unmixing: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Standard-error distance of each source's log-cosh statistic from
    /// the Gaussian value.
    pub non_gaussianity: Vec<f64>,
    pub low_confidence: bool,
    /// Microphone per source, once assigned.
    pub assignment: Vec<Option<usize>>,
    /// `sources × mics` normalised correlation peaks.
    pub scores: Vec<Vec<f64>>,
}

impl SeparatedSources {
    pub fn num_sources(&self) -> usize {
        self.sources.nrows()
    }

    pub fn is_assigned(&self) -> bool {
        self.assignment.iter().any(Option::is_some)
    }
}

/// `(W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose() * w
}

fn z_score(row: impl Iterator<Item = f64> + Clone, t: usize) -> f64 {
    let g: Vec<f64> = row.map(|y| y.cosh().ln()).collect();
    let mean = g.iter().sum::<f64>() / t as f64;
    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
    let se = (var / t as f64).sqrt().max(1e-300);
    (mean - GAUSSIAN_LOGCOSH).abs() / se
}

/// Symmetric FastICA with the tanh contrast.
///
/// Starts from a fixed-seed random orthogonal matrix. Stops when every
/// unmixing row turns by less than `tol` (as `1 − |⟨w_new, w_old⟩|`);
/// otherwise returns the last iterate with `converged = false`.
pub fn fast_ica(white: &WhitenedData, opts: IcaOptions) -> Result<SeparatedSources, BssError> {
    let z = &white.components;
    let (k, t) = z.shape();
    if k < 2 {
        return Err(BssError::TooFewComponents(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w = symmetric_decorrelation(&DMatrix::from_fn(k, k, |_, _| {
        StandardNormal.sample(&mut rng)
    }));
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let g = (&w * z).map(f64::tanh);
        let mean_dg: Vec<f64> = g
            .row_iter()
            .map(|r| r.iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64)
            .collect();
        let mut next = &g * z.transpose() / t as f64;
        for r in 0..k {
            for c in 0..k {
                next[(r, c)] -= mean_dg[r] * w[(r, c)];
            }
        }
        let next = symmetric_decorrelation(&next);
        let change = (&next * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0f64, f64::max);
        w = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let sources = &w * z;
    let non_gaussianity: Vec<f64> = sources
        .row_iter()
        .map(|r| z_score(r.iter().copied(), t))
        .collect();
    let low_confidence = non_gaussianity.iter().any(|&s| s < MIN_NON_GAUSSIANITY_Z);
    if !converged {
        log::warn!("FastICA stopped after {iterations} iterations without converging");
    }
    Ok(SeparatedSources {
        unmixing: &w * &white.whitening,
        sources,
        converged,
        iterations,
        non_gaussianity,
        low_confidence,
        assignment: vec![None; k],
        scores: Vec::new(),
    })
}
