//! Sound source localisation from microphone-array captures: pairwise
//! GCC-PHAT delays, far-field direction of arrival and near-field
//! multilateration for distance.

mod doa;
mod gcc;
mod geometry;
mod multilat;
mod tdoa;

pub use doa::{
    angle_error, azimuth_of, doa_far_field, normalize_degrees, plane_wave_residual,
    DirectionEstimate,
};
pub use gcc::{gcc_phat, gcc_phat_slices, refine_delay, GccResult, PHAT_FLOOR};
pub use geometry::{
    distance, MicArrayGeometry, Point, DEFAULT_ARRAY_SIDE, DEFAULT_SPEED_OF_SOUND,
};
pub use multilat::{
    distance_multilateration, multilateration_residual, SearchBounds, FAR_FIELD_IMPROVEMENT,
};
pub use tdoa::{estimate_tdoa, PairDelay, TdoaOptions, TdoaSet};

use serde::{Deserialize, Serialize};

use crate::signal::{AudioBuffer, SignalError};

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("{channels} channels for {mics} microphones")]
    ChannelMismatch { channels: usize, mics: usize },
    #[error("signals differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("max lag {max_lag_s} s must be below half the duration {duration_s} s")]
    InvalidMaxLag { max_lag_s: f64, duration_s: f64 },
    #[error("correlation undefined for an all-zero channel")]
    UndefinedCorrelation,
    #[error("direction indeterminate: delays are near zero")]
    IndeterminateDirection,
    #[error("need at least two independent pairs, have {0}")]
    TooFewPairs(usize),
    #[error("multilateration needs at least three microphones, have {0}")]
    TooFewMics(usize),
    #[error("invalid search bounds {0}..{1} m")]
    InvalidBounds(f64, f64),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Source range, or a marker that it is too far for the array to resolve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Meters(f64),
    FarField,
}

impl Distance {
    pub fn meters(&self) -> Option<f64> {
        match self {
            Distance::Meters(m) => Some(*m),
            Distance::FarField => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEstimate {
    /// Degrees in `[0, 360)`, counter-clockwise from +x.
    pub azimuth_deg: f64,
    pub distance: Distance,
    pub tdoa: TdoaSet,
    /// RMS delay residual of the reported fit, seconds.
    pub residual_s: f64,
    pub plane_wave_residual_s: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LocalizeOptions {
    pub tdoa: TdoaOptions,
    pub bounds: SearchBounds,
}

/// Delays, then multilateration, for one multi-channel block.
pub fn localize(
    buf: &AudioBuffer,
    geom: &MicArrayGeometry,
    opts: &LocalizeOptions,
) -> Result<SourceEstimate, LocalizeError> {
    let tdoa = estimate_tdoa(buf, geom, opts.tdoa)?;
    distance_multilateration(&tdoa, geom, opts.bounds)
}
