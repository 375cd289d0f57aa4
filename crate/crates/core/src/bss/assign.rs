use super::{BssError, SeparatedSources};
use crate::localize::TdoaSet;
use crate::signal::AudioBuffer;

/// A source is assigned only when its best microphone beats the runner-up
/// by this much normalised correlation.
pub const ASSIGNMENT_MARGIN: f64 = 0.2;

fn centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - m).collect()
}

fn peak_correlation(s: &[f64], x: &[f64], max_lag: usize) -> f64 {
    let n = s.len() as isize;
    let mut best = 0.0f64;
    for lag in -(max_lag as isize)..=max_lag as isize {
        let lo = lag.max(0);
        let hi = (n + lag).min(n);
        let sum: f64 = (lo..hi).map(|i| x[i as usize] * s[(i - lag) as usize]).sum();
        best = best.max(sum.abs());
    }
    best
}

/// Matches each separated source to the microphone where it is strongest.
///
/// A source's raw score at a microphone is the peak of its cross-correlation
/// with that channel over lags within the largest observed inter-microphone
/// delay, which for a unit-norm source is its amplitude there. Scores are
/// then normalised by the source's largest peak, so the strongest
/// microphone scores 1. Sources whose runner-up scores within
/// [`ASSIGNMENT_MARGIN`] of 1 stay unassigned; the rest are matched
/// greedily, best score first, one source per microphone.
pub fn assign_sources(
    mut sep: SeparatedSources,
    buf: &AudioBuffer,
    tdoa: &TdoaSet,
) -> Result<SeparatedSources, BssError> {
    if sep.sources.ncols() != buf.num_frames() {
        return Err(BssError::ShapeMismatch(format!(
            "{} source frames for a {}-frame capture",
            sep.sources.ncols(),
            buf.num_frames()
        )));
    }
    if sep.unmixing.ncols() != buf.num_channels() {
        return Err(BssError::ShapeMismatch(format!(
            "unmixing expects {} channels, capture has {}",
            sep.unmixing.ncols(),
            buf.num_channels()
        )));
    }
    let max_delay = tdoa.pairs.iter().fold(0.0f64, |m, p| m.max(p.delay_s.abs()));
    let max_lag = (max_delay * buf.sample_rate() as f64).ceil() as usize + 1;
    let channels: Vec<Vec<f64>> = buf.channels().iter().map(|c| centered(c)).collect();

    let scores: Vec<Vec<f64>> = sep
        .sources
        .row_iter()
        .map(|row| {
            let s: Vec<f64> = row.iter().copied().collect();
            let peaks: Vec<f64> = channels
                .iter()
                .map(|x| peak_correlation(&s, x, max_lag))
                .collect();
            let top = peaks.iter().copied().fold(0.0, f64::max);
            if top > 0.0 {
                peaks.iter().map(|p| p / top).collect()
            } else {
                vec![0.0; peaks.len()]
            }
        })
        .collect();

    let mut candidates = Vec::new();
    for (s, row) in scores.iter().enumerate() {
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let runner_up = sorted.get(1).copied().unwrap_or(0.0);
        if sorted[0] - runner_up >= ASSIGNMENT_MARGIN {
            candidates.extend(row.iter().enumerate().map(|(m, &v)| (v, s, m)));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut assignment = vec![None; sep.num_sources()];
    let mut taken = vec![false; buf.num_channels()];
    for (_, s, m) in candidates {
        if assignment[s].is_none() && !taken[m] {
            assignment[s] = Some(m);
            taken[m] = true;
        }
    }
    if assignment.iter().all(Option::is_none) {
        log::warn!("no separated source cleared the assignment margin");
    }
    sep.assignment = assignment;
    sep.scores = scores;
    Ok(sep)
}
