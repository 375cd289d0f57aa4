//! Maps source estimates to stimulation pad commands, with an
//! unconditional intensity ceiling and a perceived-strength model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::localize::{Distance, SourceEstimate};

/// Safety ceiling on any commanded intensity, mA-equivalent.
pub const MAX_INTENSITY: f64 = 12.5;

/// Level used when the source is too far to range.
pub const FAR_FIELD_INTENSITY: f64 = 6.0;

/// Distance that maps to full intensity.
pub const DEFAULT_REFERENCE_M: f64 = 2.0;

/// Measured `(current, rating)` anchors for perceived stimulation on a
/// 0–10 scale.
pub const STIMULATION_ANCHORS: [(f64, f64); 3] = [(0.0, 0.0), (6.0, 5.0), (12.5, 10.0)];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ActuateError {
    #[error("distance {0} m must be positive")]
    InvalidDistance(f64),
    #[error("reference distance {0} m must be positive and finite")]
    InvalidReference(f64),
    #[error("current {0} mA outside [0, 12.5]")]
    CurrentOutOfRange(f64),
    #[error("azimuth {0} is not finite")]
    InvalidAzimuth(f64),
    #[error("invalid pad layout: {0}")]
    InvalidLayout(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntensityLevels {
    /// Snap to the nearest of 0, 6 and 12.5.
    #[default]
    Discrete,
    Continuous,
}

pub const DISCRETE_LEVELS: [f64; 3] = [0.0, 6.0, 12.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PadLayout {
    pub pads: usize,
    pub offset_deg: f64,
    pub levels: IntensityLevels,
    pub reference_m: f64,
}

impl Default for PadLayout {
    fn default() -> Self {
        Self {
            pads: 8,
            offset_deg: 0.0,
            levels: IntensityLevels::Discrete,
            reference_m: DEFAULT_REFERENCE_M,
        }
    }
}

impl PadLayout {
    pub fn validate(&self) -> Result<(), ActuateError> {
        if self.pads < 2 {
            return Err(ActuateError::InvalidLayout(format!("{} pads", self.pads)));
        }
        if !(0.0..360.0).contains(&self.offset_deg) {
            return Err(ActuateError::InvalidLayout(format!(
                "offset {} outside [0, 360)",
                self.offset_deg
            )));
        }
        if !(self.reference_m.is_finite() && self.reference_m > 0.0) {
            return Err(ActuateError::InvalidReference(self.reference_m));
        }
        Ok(())
    }

    pub fn sector_deg(&self) -> f64 {
        360.0 / self.pads as f64
    }

    fn quantize(&self, intensity: f64) -> f64 {
        match self.levels {
            IntensityLevels::Continuous => intensity,
            IntensityLevels::Discrete => DISCRETE_LEVELS
                .iter()
                .copied()
                .min_by(|a, b| (a - intensity).abs().total_cmp(&(b - intensity).abs()))
                .expect("non-empty level set"),
        }
    }
}

/// Pad whose sector contains the azimuth; sectors are half-open, so a
/// boundary belongs to the upper one.
pub fn select_pad(azimuth_deg: f64, layout: &PadLayout) -> Result<usize, ActuateError> {
    if !azimuth_deg.is_finite() {
        return Err(ActuateError::InvalidAzimuth(azimuth_deg));
    }
    let a = (azimuth_deg + layout.offset_deg).rem_euclid(360.0);
    Ok(((a / layout.sector_deg()).floor() as usize) % layout.pads)
}

/// Inverse-square intensity, full scale at `reference_m` and closer.
pub fn intensity_from_distance(distance: Distance, reference_m: f64) -> Result<f64, ActuateError> {
    if !(reference_m.is_finite() && reference_m > 0.0) {
        return Err(ActuateError::InvalidReference(reference_m));
    }
    match distance {
        Distance::FarField => Ok(FAR_FIELD_INTENSITY),
        Distance::Meters(d) if d > 0.0 => {
            Ok((MAX_INTENSITY * (reference_m / d).powi(2)).clamp(0.0, MAX_INTENSITY))
        }
        Distance::Meters(d) => Err(ActuateError::InvalidDistance(d)),
    }
}

/// Expected 0–10 rating for a current, linear between the anchors.
pub fn perceived_stimulation(current: f64) -> Result<f64, ActuateError> {
    if !(0.0..=MAX_INTENSITY).contains(&current) {
        return Err(ActuateError::CurrentOutOfRange(current));
    }
    for w in STIMULATION_ANCHORS.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if current <= x1 {
            if current == x1 {
                return Ok(y1);
            }
            return Ok(y0 + (y1 - y0) * (current - x0) / (x1 - x0));
        }
    }
    unreachable!("range checked above")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadCommand {
    pub timestamp_s: f64,
    pub pad: usize,
    /// mA-equivalent, never above [`MAX_INTENSITY`].
    pub intensity: f64,
    pub source_azimuth: f64,
    pub source_distance: Distance,
    pub label: Option<String>,
}

impl PadCommand {
    /// The intensity is clamped into `[0, MAX_INTENSITY]` here whatever the
    /// caller passes; NaN becomes zero.
    pub fn new(
        timestamp_s: f64,
        pad: usize,
        intensity: f64,
        source_azimuth: f64,
        source_distance: Distance,
        label: Option<String>,
    ) -> Self {
        let intensity = if intensity.is_nan() {
            0.0
        } else {
            intensity.clamp(0.0, MAX_INTENSITY)
        };
        Self {
            timestamp_s,
            pad,
            intensity,
            source_azimuth,
            source_distance,
            label,
        }
    }
}

/// Command for one source, or `None` when the mapped intensity is zero.
pub fn command_for(
    estimate: &SourceEstimate,
    layout: &PadLayout,
    timestamp_s: f64,
    label: Option<String>,
) -> Result<Option<PadCommand>, ActuateError> {
    layout.validate()?;
    let pad = select_pad(estimate.azimuth_deg, layout)?;
    let intensity = layout.quantize(intensity_from_distance(estimate.distance, layout.reference_m)?);
    if intensity <= 0.0 {
        return Ok(None);
    }
    Ok(Some(PadCommand::new(
        timestamp_s,
        pad,
        intensity,
        estimate.azimuth_deg,
        estimate.distance,
        label,
    )))
}

/// Ordered, line-delimited JSON log of pad commands.
pub struct PadEventLog<W: Write> {
    out: W,
    last_timestamp: f64,
    written: usize,
}

impl<W: Write> PadEventLog<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            last_timestamp: f64::NEG_INFINITY,
            written: 0,
        }
    }

    /// Appends one record. Commands must arrive in timestamp order.
    pub fn emit(&mut self, cmd: &PadCommand) -> std::io::Result<()> {
        if cmd.timestamp_s < self.last_timestamp {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!(
                    "command at {} s after one at {} s",
                    cmd.timestamp_s, self.last_timestamp
                ),
            ));
        }
        serde_json::to_writer(&mut self.out, cmd)?;
        self.out.write_all(b"\n")?;
        self.last_timestamp = cmd.timestamp_s;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localize::TdoaSet;
    use proptest::prelude::*;

    fn estimate(azimuth_deg: f64, distance: Distance) -> SourceEstimate {
        SourceEstimate {
            azimuth_deg,
            distance,
            tdoa: TdoaSet {
                pairs: Vec::new(),
                sample_rate: 16_000,
            },
            residual_s: 0.0,
            plane_wave_residual_s: 0.0,
            low_confidence: false,
        }
    }

    #[test]
    fn pad_selection_examples() {
        let l = PadLayout::default();
        assert_eq!(select_pad(0.0, &l).unwrap(), 0);
        assert_eq!(select_pad(359.9, &l).unwrap(), 7);
        assert_eq!(select_pad(45.0, &l).unwrap(), 1);
        assert_eq!(select_pad(44.999, &l).unwrap(), 0);
        let shifted = PadLayout {
            offset_deg: 22.5,
            ..l.clone()
        };
        assert_eq!(select_pad(340.0, &shifted).unwrap(), 0);
        assert!(select_pad(f64::NAN, &l).is_err());
    }

    #[test]
    fn sectors_are_equal_and_contiguous() {
        for pads in [2usize, 3, 8, 12] {
            let l = PadLayout {
                pads,
                ..PadLayout::default()
            };
            let mut counts = vec![0usize; pads];
            let mut last = 0;
            for k in 0..36_000 {
                let p = select_pad(k as f64 / 100.0, &l).unwrap();
                assert!(p == last || p == last + 1, "non-contiguous at {k}");
                last = p;
                counts[p] += 1;
            }
            // each sector covers 36000 / pads grid points, up to one boundary point
            for c in counts {
                assert!((c as f64 - 36_000.0 / pads as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity_from_distance(Distance::Meters(2.0), 2.0).unwrap(), 12.5);
        assert_eq!(intensity_from_distance(Distance::Meters(4.0), 2.0).unwrap(), 3.125);
        assert_eq!(intensity_from_distance(Distance::Meters(0.5), 2.0).unwrap(), 12.5);
        assert_eq!(intensity_from_distance(Distance::Meters(f64::INFINITY), 2.0).unwrap(), 0.0);
        assert!(intensity_from_distance(Distance::Meters(1e12), 2.0).unwrap() < 1e-20);
        assert_eq!(intensity_from_distance(Distance::FarField, 2.0).unwrap(), 6.0);
        for bad in [0.0, -1.0, f64::NAN, f64::NEG_INFINITY] {
            assert!(intensity_from_distance(Distance::Meters(bad), 2.0).is_err());
        }
    }

    /// Volunteer ratings (0–10) at 0, 6 and 12.5 mA, ten volunteers in each
    /// of three environments.
    const RATINGS: [[[u8; 3]; 3]; 10] = [
        [[0, 5, 10], [0, 6, 10], [0, 5, 10]],
        [[0, 6, 10], [1, 6, 10], [1, 6, 10]],
        [[0, 5, 10], [0, 5, 10], [1, 5, 10]],
        [[0, 5, 10], [0, 5, 10], [0, 5, 10]],
        [[0, 6, 10], [0, 5, 10], [1, 5, 10]],
        [[0, 5, 10], [0, 5, 9], [0, 6, 10]],
        [[0, 6, 10], [0, 5, 10], [0, 5, 10]],
        [[0, 6, 10], [0, 5, 10], [0, 6, 9]],
        [[0, 6, 10], [0, 5, 10], [0, 6, 10]],
        [[0, 6, 10], [0, 5, 10], [0, 6, 10]],
    ];

    fn pooled_median(level: usize) -> f64 {
        let mut v: Vec<u8> = RATINGS.iter().flat_map(|env| env.iter().map(|r| r[level])).collect();
        v.sort();
        (v[v.len() / 2 - 1] as f64 + v[v.len() / 2] as f64) / 2.0
    }

    #[test]
    fn anchors_are_pooled_median_ratings() {
        for (level, (current, rating)) in STIMULATION_ANCHORS.iter().enumerate() {
            assert_eq!(pooled_median(level), *rating);
            assert_eq!(perceived_stimulation(*current).unwrap(), *rating);
        }
        assert_eq!(perceived_stimulation(3.0).unwrap(), 2.5);
        assert!(perceived_stimulation(12.6).is_err());
        assert!(perceived_stimulation(-0.1).is_err());
        assert!(perceived_stimulation(f64::NAN).is_err());
    }

    #[test]
    fn discrete_layout_snaps_levels() {
        let l = PadLayout::default();
        let near = command_for(&estimate(10.0, Distance::Meters(1.0)), &l, 0.0, None).unwrap().unwrap();
        assert_eq!(near.intensity, 12.5);
        let four = command_for(&estimate(10.0, Distance::Meters(4.0)), &l, 0.0, None).unwrap().unwrap();
        assert_eq!(four.intensity, 6.0);
        assert!(command_for(&estimate(10.0, Distance::Meters(20.0)), &l, 0.0, None).unwrap().is_none());
        let far = command_for(&estimate(100.0, Distance::FarField), &l, 0.0, None).unwrap().unwrap();
        assert_eq!((far.pad, far.intensity), (2, 6.0));
    }

    #[test]
    fn event_log_is_ordered_jsonl() {
        let mut log = PadEventLog::new(Vec::new());
        let c = |t: f64| PadCommand::new(t, 1, 6.0, 50.0, Distance::Meters(2.5), Some("dog".into()));
        log.emit(&c(0.0)).unwrap();
        log.emit(&c(0.205)).unwrap();
        assert!(log.emit(&c(0.1)).is_err());
        assert_eq!(log.written(), 2);
        let text = String::from_utf8(log.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let back: PadCommand = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(back, c(0.205));
        assert!(lines[0].contains("\"label\":\"dog\""));
    }

    proptest! {
        #[test]
        fn commands_never_exceed_ceiling(
            az in proptest::num::f64::ANY,
            d in proptest::num::f64::ANY,
            far in any::<bool>(),
            continuous in any::<bool>(),
            reference in 0.01f64..100.0,
        ) {
            let layout = PadLayout {
                levels: if continuous { IntensityLevels::Continuous } else { IntensityLevels::Discrete },
                reference_m: reference,
                ..PadLayout::default()
            };
            let dist = if far { Distance::FarField } else { Distance::Meters(d) };
            if let Ok(Some(cmd)) = command_for(&estimate(az, dist), &layout, 0.0, None) {
                prop_assert!(cmd.intensity <= MAX_INTENSITY && cmd.intensity >= 0.0);
                prop_assert!(cmd.pad < layout.pads);
            }
            let raw = PadCommand::new(0.0, 0, d, 0.0, dist, None);
            prop_assert!(raw.intensity <= MAX_INTENSITY);
        }

        #[test]
        fn perception_is_monotone(a in 0.0f64..=12.5, b in 0.0f64..=12.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(perceived_stimulation(lo).unwrap() <= perceived_stimulation(hi).unwrap());
        }
    }
}
