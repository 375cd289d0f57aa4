//! Near-field multilateration: a polar grid search followed by Nelder–Mead
//! refinement of the RMS delay residual, with a plane-wave fallback.

use serde::{Deserialize, Serialize};

use super::doa::{azimuth_of, doa_far_field, plane_wave_residual};
use super::geometry::distance;
use super::{Distance, LocalizeError, MicArrayGeometry, SourceEstimate, TdoaSet};
use crate::optim::{nelder_mead, NelderMeadOptions};

pub const GRID_AZIMUTHS: usize = 36;
pub const GRID_RADII: usize = 20;

/// A finite-distance fit must cut the plane-wave residual by this fraction.
pub const FAR_FIELD_IMPROVEMENT: f64 = 0.10;

/// Residuals above this many sample periods mark the estimate low-confidence.
pub const REJECT_RESIDUAL_SAMPLES: f64 = 0.5;

/// Fits closer than this to a microphone are singular.
pub const MIC_PROXIMITY_M: f64 = 0.01;

/// Radial search range, metres from the array centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub min_m: f64,
    pub max_m: f64,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            min_m: 0.1,
            max_m: 5.0,
        }
    }
}

struct Model<'a> {
    tdoa: &'a TdoaSet,
    geom: &'a MicArrayGeometry,
    center: [f64; 3],
    bounds: SearchBounds,
}

impl Model<'_> {
    fn position(&self, azimuth_rad: f64, log_r: f64) -> [f64; 3] {
        let r = log_r.exp().clamp(self.bounds.min_m, self.bounds.max_m);
        [
            self.center[0] + r * azimuth_rad.cos(),
            self.center[1] + r * azimuth_rad.sin(),
            self.center[2],
        ]
    }

    fn residual_at(&self, x: &[f64; 3]) -> f64 {
        let sum: f64 = self
            .tdoa
            .pairs
            .iter()
            .map(|p| (p.delay_s - self.geom.model_delay(x, p.i, p.j)).powi(2))
            .sum();
        (sum / self.tdoa.pairs.len() as f64).sqrt()
    }

    fn residual(&self, params: &[f64]) -> f64 {
        self.residual_at(&self.position(params[0], params[1]))
    }
}

/// RMS delay residual for a candidate source position.
pub fn multilateration_residual(tdoa: &TdoaSet, geom: &MicArrayGeometry, x: &[f64; 3]) -> f64 {
    let sum: f64 = tdoa
        .pairs
        .iter()
        .map(|p| (p.delay_s - geom.model_delay(x, p.i, p.j)).powi(2))
        .sum();
    (sum / tdoa.pairs.len().max(1) as f64).sqrt()
}

fn tight() -> NelderMeadOptions {
    NelderMeadOptions {
        max_iters: 4000,
        x_tol: 1e-11,
        f_tol: 1e-18,
    }
}

/// Best plane-wave azimuth (degrees) and its residual, refined from the
/// least-squares direction or a coarse azimuth scan.
fn best_plane_wave(tdoa: &TdoaSet, geom: &MicArrayGeometry) -> (f64, f64) {
    let mut starts: Vec<f64> = (0..GRID_AZIMUTHS)
        .map(|k| k as f64 * 360.0 / GRID_AZIMUTHS as f64)
        .collect();
    if let Ok(d) = doa_far_field(tdoa, geom) {
        starts.push(d.azimuth_deg);
    }
    let (seed, _) = starts
        .iter()
        .map(|&a| (a, plane_wave_residual(tdoa, geom, a)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty start list");
    let m = nelder_mead(
        |p| plane_wave_residual(tdoa, geom, p[0]),
        &[seed],
        &[2.0],
        tight(),
    );
    log::trace!("plane-wave fit: {} iterations", m.iterations);
    (azimuth_of(m.x[0].to_radians().cos(), m.x[0].to_radians().sin()), m.value)
}

/// Source position minimising the RMS delay residual, reported as azimuth
/// and distance from the array centroid.
///
/// The distance is replaced by [`Distance::FarField`] when the finite fit
/// does not beat the plane-wave fit by [`FAR_FIELD_IMPROVEMENT`] or lands
/// on the outer search bound. High residuals, fits on top of a microphone
/// and fits pinned to the inner bound are flagged low-confidence rather
/// than rejected.
pub fn distance_multilateration(
    tdoa: &TdoaSet,
    geom: &MicArrayGeometry,
    bounds: SearchBounds,
) -> Result<SourceEstimate, LocalizeError> {
    if geom.num_mics() < 3 {
        return Err(LocalizeError::TooFewMics(geom.num_mics()));
    }
    if !(bounds.min_m > 0.0 && bounds.max_m > bounds.min_m) {
        return Err(LocalizeError::InvalidBounds(bounds.min_m, bounds.max_m));
    }
    if tdoa.pairs.is_empty() {
        return Err(LocalizeError::TooFewPairs(0));
    }
    if tdoa
        .pairs
        .iter()
        .all(|p| p.delay_s.abs() < 1e-3 * tdoa.sample_period())
    {
        return Err(LocalizeError::IndeterminateDirection);
    }
    let model = Model {
        tdoa,
        geom,
        center: geom.centroid(),
        bounds,
    };
    let (lo, hi) = (bounds.min_m.ln(), bounds.max_m.ln());
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity(GRID_AZIMUTHS * GRID_RADII);
    for a in 0..GRID_AZIMUTHS {
        let az = (a as f64 * 360.0 / GRID_AZIMUTHS as f64).to_radians();
        for r in 0..GRID_RADII {
            let log_r = lo + (hi - lo) * r as f64 / (GRID_RADII - 1) as f64;
            grid.push((az, log_r, model.residual(&[az, log_r])));
        }
    }
    grid.sort_by(|x, y| x.2.total_cmp(&y.2));
    let step_r = (hi - lo) / (GRID_RADII - 1) as f64;
    let best = grid
        .iter()
        .take(3)
        .map(|&(az, log_r, _)| {
            nelder_mead(
                |p| model.residual(p),
                &[az, log_r],
                &[(360.0 / GRID_AZIMUTHS as f64).to_radians() / 2.0, step_r / 2.0],
                tight(),
            )
        })
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .expect("grid is non-empty");

    let position = model.position(best.x[0], best.x[1]);
    let r = best.x[1].exp().clamp(bounds.min_m, bounds.max_m);
    let (plane_azimuth, plane_residual) = best_plane_wave(tdoa, geom);
    let on_outer_bound = r >= bounds.max_m * 0.98;
    let far_field =
        on_outer_bound || best.value > (1.0 - FAR_FIELD_IMPROVEMENT) * plane_residual;

    let near_mic = geom
        .positions()
        .iter()
        .any(|p| distance(p, &position) < MIC_PROXIMITY_M);
    let (azimuth_deg, residual_s, dist) = if far_field {
        (plane_azimuth, plane_residual, Distance::FarField)
    } else {
        (
            azimuth_of(position[0] - model.center[0], position[1] - model.center[1]),
            best.value,
            Distance::Meters(r),
        )
    };
    let on_inner_bound = !far_field && r <= bounds.min_m * 1.02;
    let low_confidence = near_mic
        || on_inner_bound
        || residual_s > REJECT_RESIDUAL_SAMPLES * tdoa.sample_period();
    Ok(SourceEstimate {
        azimuth_deg,
        distance: dist,
        tdoa: tdoa.clone(),
        residual_s,
        plane_wave_residual_s: plane_residual,
        low_confidence,
    })
}
