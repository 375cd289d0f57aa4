use serde::{Deserialize, Serialize};

use super::{LocalizeError, MicArrayGeometry, TdoaSet};

/// Fitted slowness below this fraction of `1/c` means no usable direction.
pub const MIN_SLOWNESS_FRACTION: f64 = 0.2;

/// Relative eigenvalue below which the pair baselines are treated as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

pub fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

pub fn azimuth_of(x: f64, y: f64) -> f64 {
    normalize_degrees(y.atan2(x).to_degrees())
}

/// Smallest absolute angular difference in degrees.
pub fn angle_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    pub azimuth_deg: f64,
    /// RMS of measured minus plane-wave delays, seconds.
    pub residual_s: f64,
    /// Mirror candidate when a collinear array cannot tell the two sides apart.
    pub mirror_deg: Option<f64>,
}

impl DirectionEstimate {
    pub fn is_ambiguous(&self) -> bool {
        self.mirror_deg.is_some()
    }
}

/// Plane-wave RMS residual for azimuth `deg` in the array plane.
pub fn plane_wave_residual(tdoa: &TdoaSet, geom: &MicArrayGeometry, deg: f64) -> f64 {
    let u = [deg.to_radians().cos(), deg.to_radians().sin(), 0.0];
    let sum: f64 = tdoa
        .pairs
        .iter()
        .map(|p| (p.delay_s - geom.plane_wave_delay(&u, p.i, p.j)).powi(2))
        .sum();
    (sum / tdoa.pairs.len().max(1) as f64).sqrt()
}

/// Least-squares in-plane slowness vector `v` with `τ_ij ≈ (p_i − p_j)·v`,
/// normalised to a unit direction.
pub fn doa_far_field(
    tdoa: &TdoaSet,
    geom: &MicArrayGeometry,
) -> Result<DirectionEstimate, LocalizeError> {
    if tdoa.pairs.len() < 2 && geom.num_mics() > 2 {
        return Err(LocalizeError::TooFewPairs(tdoa.pairs.len()));
    }
    let c = geom.speed_of_sound();
    let (mut sxx, mut sxy, mut syy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &tdoa.pairs {
        let (pi, pj) = (geom.position(p.i), geom.position(p.j));
        let (dx, dy) = (pi[0] - pj[0], pi[1] - pj[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        bx += dx * p.delay_s;
        by += dy * p.delay_s;
    }
    let trace = sxx + syy;
    if trace == 0.0 {
        return Err(LocalizeError::TooFewPairs(0));
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() > COLLINEAR_TOL * trace * trace {
        let vx = (syy * bx - sxy * by) / det;
        let vy = (sxx * by - sxy * bx) / det;
        let speed_fraction = (vx * vx + vy * vy).sqrt() * c;
        if speed_fraction < MIN_SLOWNESS_FRACTION {
            return Err(LocalizeError::IndeterminateDirection);
        }
        let azimuth_deg = azimuth_of(vx, vy);
        return Ok(DirectionEstimate {
            azimuth_deg,
            residual_s: plane_wave_residual(tdoa, geom, azimuth_deg),
            mirror_deg: None,
        });
    }
    // collinear: only the component along the array axis is observable
    let axis_angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (ex, ey) = (axis_angle.cos(), axis_angle.sin());
    let along = (ex * bx + ey * by) / (ex * ex * sxx + 2.0 * ex * ey * sxy + ey * ey * syy);
    let cos_theta = (along * c).clamp(-1.0, 1.0);
    let theta = cos_theta.acos().to_degrees();
    let base = axis_angle.to_degrees();
    let first = normalize_degrees(base + theta);
    let second = normalize_degrees(base - theta);
    Ok(DirectionEstimate {
        azimuth_deg: first,
        residual_s: plane_wave_residual(tdoa, geom, first),
        mirror_deg: Some(second),
    })
}
