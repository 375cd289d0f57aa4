use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{buffer_matrix, BssError};
use crate::signal::AudioBuffer;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retain {
    Count(usize),
    /// Smallest count whose explained variance reaches this fraction.
    Fraction(f64),
}

impl Default for Retain {
    fn default() -> Self {
        Retain::Fraction(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct WhitenedData {
    /// `retained × frames`, uncorrelated with unit variance.
    pub components: DMatrix<f64>,
    /// `retained × channels`; applied to mean-removed input.
    pub whitening: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub retained: usize,
    /// Variance fraction carried by each retained component, descending.
    pub explained_variance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl WhitenedData {
    pub fn covariance(&self) -> DMatrix<f64> {
        let t = self.components.ncols() as f64;
        &self.components * self.components.transpose() / t
    }
}

pub fn pca_whiten(buf: &AudioBuffer, retain: Retain) -> Result<WhitenedData, BssError> {
    pca_whiten_matrix(&buffer_matrix(buf), retain)
}

/// Whitens a `channels × frames` matrix.
pub fn pca_whiten_matrix(x: &DMatrix<f64>, retain: Retain) -> Result<WhitenedData, BssError> {
    let (ch, t) = x.shape();
    if ch < 2 {
        return Err(BssError::TooFewChannels(ch));
    }
    if t <= ch {
        return Err(BssError::TooFewFrames {
            frames: t,
            channels: ch,
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(BssError::InvalidEntry {
            row: i % ch,
            col: i / ch,
        });
    }
    let requested = match retain {
        Retain::Count(k) if (1..=ch).contains(&k) => k,
        Retain::Fraction(f) if f > 0.0 && f <= 1.0 => ch,
        other => return Err(BssError::InvalidRetain(format!("{other:?} for {ch} channels"))),
    };

    let mean: Vec<f64> = x.row_iter().map(|r| r.sum() / t as f64).collect();
    let centered = DMatrix::from_fn(ch, t, |r, c| x[(r, c)] - mean[r]);
    let cov = &centered * centered.transpose() / t as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..ch).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();

    let rank = values
        .iter()
        .take_while(|&&v| v > 0.0 && v > values[0] * RANK_TOL)
        .count();
    let mut keep = match retain {
        Retain::Count(_) => requested,
        Retain::Fraction(f) => {
            let mut acc = 0.0;
            let mut k = 0;
            for v in &values {
                k += 1;
                acc += v;
                if acc >= f * total * (1.0 - 1e-12) {
                    break;
                }
            }
            k
        }
    };
    let mut warnings = Vec::new();
    if keep > rank {
        warnings.push(format!(
            "covariance has rank {rank}; retaining {rank} of {keep} requested components"
        ));
        log::warn!("{}", warnings[0]);
        keep = rank;
    }

    let mut whitening = DMatrix::zeros(keep, ch);
    for (row, &i) in order.iter().take(keep).enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        for c in 0..ch {
            whitening[(row, c)] = eig.eigenvectors[(c, i)] * scale;
        }
    }
    let components = &whitening * &centered;
    let explained_variance = values
        .iter()
        .take(keep)
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(WhitenedData {
        components,
        whitening,
        mean,
        retained: keep,
        explained_variance,
        warnings,
    })
}
